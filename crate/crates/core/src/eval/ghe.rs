use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionSource {
    pub name: String,
    /// Fraction of generation, in [0, 1].
    pub share: f64,
    /// kg CO2e per kWh.
    pub intensity: f64,
}

/// Generation mix of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionMix {
    #[serde(default)]
    pub region: String,
    #[serde(default)]
    pub note: String,
    pub sources: Vec<EmissionSource>,
}

impl EmissionMix {
    pub fn new(sources: Vec<EmissionSource>) -> Result<Self> {
        let mix = EmissionMix {
            region: String::new(),
            note: String::new(),
            sources,
        };
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Validation("emission mix has no sources".into()));
        }
        for s in &self.sources {
            if !(0.0..=1.0).contains(&s.share) {
                return Err(Error::Validation(format!("share of {} is {}", s.name, s.share)));
            }
            if !(s.intensity >= 0.0 && s.intensity.is_finite()) {
                return Err(Error::Validation(format!(
                    "intensity of {} is {}",
                    s.name, s.intensity
                )));
            }
        }
        let total: f64 = self.sources.iter().map(|s| s.share).sum();
        if (total - 1.0).abs() > SHARE_TOLERANCE {
            return Err(Error::Validation(format!("shares sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mix: EmissionMix = serde_json::from_str(text)?;
        mix.validate()?;
        Ok(mix)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&crate::error::read_text(path)?)
    }

    /// Bundled mixes: `AU`, `US`, `DE`.
    pub fn preset(region: &str) -> Result<Self> {
        let text = match region.to_ascii_uppercase().as_str() {
            "AU" => include_str!("../../data/emissions/au.json"),
            "US" => include_str!("../../data/emissions/us.json"),
            "DE" => include_str!("../../data/emissions/de.json"),
            other => return Err(Error::Validation(format!("no bundled mix for {other:?}"))),
        };
        Self::from_json(text)
    }

    /// Share-weighted intensity, kg CO2e per kWh.
    pub fn intensity(&self) -> f64 {
        self.sources.iter().map(|s| s.intensity * s.share).sum()
    }
}

/// Emissions of `energy_kwh` drawn from `mix`, in kg CO2e.
pub fn ghe(energy_kwh: f64, mix: &EmissionMix) -> Result<f64> {
    if !(energy_kwh >= 0.0 && energy_kwh.is_finite()) {
        return Err(Error::Domain(format!("energy {energy_kwh} kWh")));
    }
    mix.validate()?;
    Ok(energy_kwh * mix.intensity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn src(share: f64, intensity: f64) -> EmissionSource {
        EmissionSource {
            name: "s".into(),
            share,
            intensity,
        }
    }

    #[test]
    fn hand_values() {
        let one = EmissionMix::new(vec![src(1.0, 0.5)]).unwrap();
        assert_eq!(ghe(2.0, &one).unwrap(), 1.0);
        assert_eq!(ghe(0.0, &one).unwrap(), 0.0);
        let two = EmissionMix::new(vec![src(0.6, 0.82), src(0.4, 0.011)]).unwrap();
        assert!((ghe(10.0, &two).unwrap() - 4.964).abs() < 1e-12);
    }

    #[test]
    fn invalid_mixes() {
        assert!(EmissionMix::new(vec![src(0.5, 1.0)]).is_err());
        assert!(EmissionMix::new(vec![src(1.0, -1.0)]).is_err());
        assert!(EmissionMix::new(vec![]).is_err());
        let ok = EmissionMix::new(vec![src(1.0, 1.0)]).unwrap();
        assert!(ghe(-1.0, &ok).is_err());
    }

    #[test]
    fn presets_load() {
        for r in ["AU", "us", "De"] {
            let m = EmissionMix::preset(r).unwrap();
            assert!(m.intensity() > 0.0);
        }
        assert!(EmissionMix::preset("FR").is_err());
    }

    proptest! {
        #[test]
        fn linear_in_energy_and_intensity(ec in 0.0..1e3f64, k in 0.0..10.0f64, u1 in 0.0..2.0f64, u2 in 0.0..2.0f64, p in 0.0..1.0f64) {
            let mix = EmissionMix::new(vec![src(p, u1), src(1.0 - p, u2)]).unwrap();
            let base = ghe(ec, &mix).unwrap();
            let scaled_energy = ghe(ec * k, &mix).unwrap();
            prop_assert!((scaled_energy - k * base).abs() <= 1e-9 * (1.0 + scaled_energy.abs()));
            let bumped = EmissionMix::new(vec![src(p, u1 * k), src(1.0 - p, u2)]).unwrap();
            let expect = ec * (u1 * k * p + u2 * (1.0 - p));
            prop_assert!((ghe(ec, &bumped).unwrap() - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }
}
