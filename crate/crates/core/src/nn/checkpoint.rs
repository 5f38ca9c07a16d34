use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{NetworkConfig, ParameterSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ESCHKPT\0";
const FORMAT: u64 = 1;
const HEADER: usize = 8 + 5 * 8;

/// Decoded parameter checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_digest: u64,
    pub version: u64,
    pub values: Vec<f64>,
}

impl Checkpoint {
    /// Rebuilds a parameter set, refusing a config that does not match the
    /// stored digest or parameter count.
    pub fn into_params(self, config: &NetworkConfig) -> Result<ParameterSet> {
        if config.digest() != self.config_digest {
            return Err(Error::Validation(format!(
                "checkpoint config digest {:016x} does not match {:016x}",
                self.config_digest,
                config.digest()
            )));
        }
        let params = ParameterSet {
            config: config.clone(),
            values: self.values,
            version: self.version,
        };
        if params.values.len() != params.layout().total {
            return Err(Error::Shape(format!(
                "checkpoint holds {} values, config needs {}",
                params.values.len(),
                params.layout().total
            )));
        }
        params.check_finite()?;
        Ok(params)
    }
}

pub(crate) fn digest64(bytes: &[u8]) -> u64 {
    let h = Sha256::digest(bytes);
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

pub(crate) fn encode(params: &ParameterSet) -> Vec<u8> {
    let body: Vec<u8> = params.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let mut out = Vec::with_capacity(HEADER + body.len());
    out.extend_from_slice(MAGIC);
    for field in [
        FORMAT,
        params.config.digest(),
        params.version,
        params.values.len() as u64,
        digest64(&body),
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    out.extend_from_slice(&body);
    out
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a parameter checkpoint".into()));
    }
    let field =
        |i: usize| u64::from_le_bytes(bytes[8 + i * 8..16 + i * 8].try_into().expect("8 bytes"));
    if field(0) != FORMAT {
        return Err(Error::Format(format!(
            "unsupported checkpoint format {}",
            field(0)
        )));
    }
    let count = field(3) as usize;
    let body = &bytes[HEADER..];
    if body.len() != count.checked_mul(8).unwrap_or(usize::MAX) {
        return Err(Error::Format(format!(
            "checkpoint body is {} bytes, header promises {count} values",
            body.len()
        )));
    }
    let found = digest64(body);
    if found != field(4) {
        return Err(Error::Checksum {
            expected: field(4),
            found,
        });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Checkpoint {
        config_digest: field(1),
        version: field(2),
        values,
    })
}

/// Writes via a temporary file and rename so readers never observe a
/// partial checkpoint.
pub fn write_checkpoint(path: impl AsRef<Path>, params: &ParameterSet) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(params))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}
