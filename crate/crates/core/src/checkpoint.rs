//! Binary model checkpoints.
//!
//! Layout: 8 magic bytes, a little-endian u64 header length, a JSON header,
//! then every parameter matrix in declared order as little-endian f64.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArchSpec, ModelBundle};
use crate::train::TrainConfig;

pub const MAGIC: &[u8; 8] = b"ADADRUG\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub genes: usize,
    pub latent: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub specs: ArchSpec,
    pub dims: Dims,
    pub seed: u64,
    pub training_step: u64,
    pub weighting: bool,
    pub train_config: TrainConfig,
    /// Total number of f64 values that follow.
    pub n_values: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelBundle,
    pub config: TrainConfig,
    pub step: u64,
}

fn corrupt(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn to_bytes(model: &ModelBundle, config: &TrainConfig, step: u64) -> Result<Vec<u8>> {
    let spec = model.spec();
    let header = Header {
        format_version: FORMAT_VERSION,
        dims: Dims {
            genes: spec.genes(),
            latent: spec.latent(),
        },
        specs: spec,
        seed: config.seed,
        training_step: step,
        weighting: model.weighting,
        train_config: config.clone(),
        n_values: model.param_count(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * header.n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        for v in p.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a checkpoint (bad magic bytes)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[16..];
    let len = usize::try_from(len)
        .ok()
        .filter(|&l| l <= body.len())
        .ok_or_else(|| corrupt(path, "header length exceeds file size"))?;
    let raw: serde_json::Value = serde_json::from_slice(&body[..len])
        .map_err(|e| corrupt(path, format!("corrupted header: {e}")))?;
    match raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
    {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(corrupt(
                path,
                format!("format version {v} is not supported (expected {FORMAT_VERSION})"),
            ))
        }
        None => return Err(corrupt(path, "corrupted header: missing format_version")),
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| corrupt(path, format!("corrupted header: {e}")))?;
    header
        .specs
        .validate()
        .map_err(|e| corrupt(path, format!("invalid architecture: {e}")))?;
    if header.dims.genes != header.specs.genes() || header.dims.latent != header.specs.latent() {
        return Err(corrupt(path, "dims disagree with the architecture"));
    }

    let mut model = ModelBundle::zeros(&header.specs)?;
    model.weighting = header.weighting;
    let expected = model.param_count();
    if header.n_values != expected {
        return Err(corrupt(
            path,
            "parameter count disagrees with the architecture",
        ));
    }
    let data = &body[len..];
    if data.len() != 8 * expected {
        return Err(corrupt(
            path,
            format!(
                "truncated or padded parameter block: {} bytes, expected {}",
                data.len(),
                8 * expected
            ),
        ));
    }
    let mut chunks = data.chunks_exact(8);
    for p in model.params_mut() {
        for v in p.as_mut_slice() {
            *v = f64::from_le_bytes(chunks.next().unwrap().try_into().unwrap());
        }
    }
    Ok(Checkpoint {
        model,
        config: header.train_config,
        step: header.training_step,
    })
}

pub fn save_checkpoint(
    model: &ModelBundle,
    config: &TrainConfig,
    step: u64,
    path: &Path,
) -> Result<()> {
    let bytes = to_bytes(model, config, step)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ModelBundle, TrainConfig) {
        let cfg = TrainConfig {
            latent_dim: 3,
            ae_hidden: 5,
            head_hidden: 4,
            seed: 11,
            ..Default::default()
        };
        (ModelBundle::init(&cfg.arch(6), cfg.seed).unwrap(), cfg)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (m, cfg) = small();
        let bytes = to_bytes(&m, &cfg, 17).unwrap();
        let back = from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.config, cfg);
        assert_eq!(back.step, 17);
    }

    #[test]
    fn truncation_detected() {
        let (m, cfg) = small();
        let bytes = to_bytes(&m, &cfg, 0).unwrap();
        let err = from_bytes(&bytes[..bytes.len() - 3], Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        assert!(from_bytes(&bytes[..12], Path::new("x")).is_err());
    }

    #[test]
    fn version_mismatch_detected() {
        let (m, cfg) = small();
        let bytes = to_bytes(&m, &cfg, 0).unwrap();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[16..16 + len]).unwrap();
        let patched = header.replace("\"format_version\":1", "\"format_version\":9");
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(patched.len() as u64).to_le_bytes());
        out.extend_from_slice(patched.as_bytes());
        out.extend_from_slice(&bytes[16 + len..]);
        let err = from_bytes(&out, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
    }

    #[test]
    fn corrupted_header_detected() {
        let (m, cfg) = small();
        let mut bytes = to_bytes(&m, &cfg, 0).unwrap();
        bytes[17] = b'!';
        let err = from_bytes(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("corrupted header"), "{err}");
        assert!(from_bytes(b"garbage bytes here", Path::new("x")).is_err());
    }
}
