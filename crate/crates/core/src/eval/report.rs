use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{first_crossing, ghe, EmissionMix, Speedup};
use crate::envsim::JOULES_PER_KWH;
use crate::error::{Error, Result};
use crate::runtime::{MetricsRow, METRICS_FILE};

/// Scheduling-overhead samples written next to the metrics.
pub const SCO_FILE: &str = "sco.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub n: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Two-sided Student t interval for the mean.
pub fn t_interval(samples: &[f64], level: f64) -> Result<ConfidenceInterval> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "a confidence interval needs at least 2 samples, got {n}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("confidence level {level}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let half = t * (var / n as f64).sqrt();
    Ok(ConfidenceInterval {
        n,
        mean,
        lower: mean - half,
        upper: mean + half,
        level,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoRow {
    sample: usize,
    time_a_s: f64,
}

/// Metrics and overhead samples of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub name: String,
    pub rows: Vec<MetricsRow>,
    /// Seconds per scheduling decision, one entry per measurement.
    pub sco: Vec<f64>,
}

impl RunReport {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(METRICS_FILE);
        if !path.is_file() {
            return Err(Error::Validation(format!(
                "{}: no {METRICS_FILE}",
                dir.display()
            )));
        }
        let rows = csv::Reader::from_path(&path)?
            .deserialize()
            .collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
        if rows.is_empty() {
            return Err(Error::Validation(format!("{}: no rows", path.display())));
        }
        if rows.windows(2).any(|w| w[1].iteration <= w[0].iteration) {
            return Err(Error::Validation(format!(
                "{}: iterations are not increasing",
                path.display()
            )));
        }
        let sco_path = dir.join(SCO_FILE);
        let sco = if sco_path.is_file() {
            csv::Reader::from_path(&sco_path)?
                .deserialize()
                .map(|r| r.map(|r: ScoRow| r.time_a_s))
                .collect::<std::result::Result<_, _>>()?
        } else {
            Vec::new()
        };
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(RunReport { name, rows, sco })
    }

    pub fn write_sco(dir: &Path, samples: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(SCO_FILE))?;
        for (sample, &time_a_s) in samples.iter().enumerate() {
            w.serialize(ScoRow { sample, time_a_s })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows carrying a greedy evaluation.
    fn evaluated(&self) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(|r| r.eval_j.is_some())
    }

    fn last_eval(&self) -> Option<&MetricsRow> {
        self.evaluated().last()
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Target J for the speedup table; no table without it.
    pub threshold: Option<f64>,
    pub mixes: Vec<EmissionMix>,
    pub charts: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            threshold: None,
            mixes: ["AU", "US", "DE"]
                .iter()
                .map(|r| EmissionMix::preset(r).expect("bundled mix"))
                .collect(),
            charts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub runs: Vec<String>,
    pub files: Vec<PathBuf>,
}

type Metric = (&'static str, fn(&MetricsRow) -> Option<f64>);

const METRICS: [Metric; 4] = [
    ("T", |r| r.eval_t),
    ("E", |r| r.eval_e),
    ("F", |r| r.eval_f),
    ("J", |r| r.eval_j),
];

/// Loads every run directory and writes comparison tables (and charts)
/// into `out`. All unreadable runs are reported together.
pub fn report(runs: &[PathBuf], out: &Path, options: &ReportOptions) -> Result<ReportSummary> {
    if runs.is_empty() {
        return Err(Error::Precondition("no run directories given".into()));
    }
    let mut loaded = Vec::new();
    let mut problems = Vec::new();
    for dir in runs {
        match RunReport::load(dir) {
            Ok(r) => loaded.push(r),
            Err(e) => problems.push(format!("{}: {e}", dir.display())),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    fs::create_dir_all(out)?;
    let mut files = Vec::new();

    let path = out.join("costs.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "technique", "iteration", "wall_clock_s", "mean_reward", "loss_total", "T", "E", "F", "J",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for run in &loaded {
        for r in &run.rows {
            w.write_record([
                run.name.clone(),
                r.iteration.to_string(),
                r.wall_clock_s.to_string(),
                r.mean_reward.to_string(),
                r.loss_total.to_string(),
                opt(r.eval_t),
                opt(r.eval_e),
                opt(r.eval_f),
                opt(r.eval_j),
            ])?;
        }
    }
    w.flush()?;
    files.push(path);

    let path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["technique", "metric", "final", "best"])?;
    for run in &loaded {
        for (name, get) in METRICS {
            let series: Vec<f64> = run.rows.iter().filter_map(get).collect();
            let (last, best) = match series.last() {
                Some(&l) => (l.to_string(), series.iter().cloned().fold(f64::INFINITY, f64::min).to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([run.name.as_str(), name, &last, &best])?;
        }
    }
    w.flush()?;
    files.push(path);

    let path = out.join("ghe.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["technique", "region", "energy_kwh", "kg_co2e"])?;
    for run in &loaded {
        let Some(e) = run.last_eval().and_then(|r| r.eval_e) else {
            continue;
        };
        let kwh = e / JOULES_PER_KWH;
        for mix in &options.mixes {
            w.write_record([
                run.name.clone(),
                mix.region.clone(),
                kwh.to_string(),
                ghe(kwh, mix)?.to_string(),
            ])?;
        }
    }
    w.flush()?;
    files.push(path);

    if let Some(threshold) = options.threshold {
        let path = out.join("speedup.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["technique", "reference", "threshold", "time_s", "speedup"])?;
        let curve = |r: &RunReport| -> Vec<(f64, f64)> {
            r.evaluated().map(|m| (m.wall_clock_s, m.eval_j.expect("evaluated"))).collect()
        };
        let reference = &loaded[0];
        let ref_curve = curve(reference);
        for run in &loaded {
            let c = curve(run);
            let (time, spu) = if c.is_empty() || ref_curve.is_empty() {
                (String::new(), "no evaluations".to_string())
            } else {
                let time = first_crossing(&c, threshold)?;
                let spu = match super::speedup(&ref_curve, &c, threshold)? {
                    Speedup::Ratio { speedup, .. } => speedup.to_string(),
                    Speedup::NotReached { .. } => "not reached".to_string(),
                };
                (time.map(|t| t.to_string()).unwrap_or_default(), spu)
            };
            w.write_record([
                run.name.clone(),
                reference.name.clone(),
                threshold.to_string(),
                time,
                spu,
            ])?;
        }
        w.flush()?;
        files.push(path);
    }

    let path = out.join("sco.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["technique", "n", "mean_s", "ci95_lower_s", "ci95_upper_s"])?;
    for run in &loaded {
        if run.sco.len() < 2 {
            continue;
        }
        let ci = t_interval(&run.sco, 0.95)?;
        w.write_record([
            run.name.clone(),
            ci.n.to_string(),
            ci.mean.to_string(),
            ci.lower.to_string(),
            ci.upper.to_string(),
        ])?;
    }
    w.flush()?;
    files.push(path);

    if options.charts {
        for (name, get) in METRICS {
            let path = out.join(format!("cost_{name}.svg"));
            chart(&path, name, &loaded, get)?;
            files.push(path);
        }
    }
    Ok(ReportSummary {
        runs: loaded.into_iter().map(|r| r.name).collect(),
        files,
    })
}

fn chart(path: &Path, metric: &str, runs: &[RunReport], get: fn(&MetricsRow) -> Option<f64>) -> Result<()> {
    let series: Vec<(String, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|r| {
            let pts = r
                .rows
                .iter()
                .filter_map(|m| get(m).map(|v| (m.iteration as f64, v)))
                .collect();
            (r.name.clone(), pts)
        })
        .collect();
    let all = series.iter().flat_map(|s| s.1.iter());
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-9);
    let plot_err = |e: &dyn std::fmt::Display| Error::Format(format!("chart {}: {e}", path.display()));
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut ctx = ChartBuilder::on(&root)
        .caption(format!("{metric} vs iteration"), ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
        .map_err(|e| plot_err(&e))?;
    ctx.configure_mesh()
        .x_desc("iteration")
        .y_desc(metric)
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (i, (name, pts)) in series.into_iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        ctx.draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(name)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
    }
    ctx.configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}
