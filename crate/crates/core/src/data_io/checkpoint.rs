//! Single-file JSON checkpoints with a bit-exact parameter payload.
//!
//! Parameters are stored as IEEE-754 binary64 little-endian bytes, base64
//! encoded, next to a human-readable header describing the architecture.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::curves::{CurveKind, CurveSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, MlpConfig, WeightVector};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const PAYLOAD_ENCODING: &str = "base64-f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub batch_norm: bool,
    pub l2_coeff: f64,
}

impl From<&MlpConfig> for Architecture {
    fn from(c: &MlpConfig) -> Self {
        Architecture {
            layer_sizes: c.layer_sizes.clone(),
            activation: c.activation,
            batch_norm: c.batch_norm,
            l2_coeff: c.l2_coeff,
        }
    }
}

impl Architecture {
    pub fn to_config(&self) -> Result<MlpConfig> {
        let config = MlpConfig {
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation,
            batch_norm: self.batch_norm,
            l2_coeff: self.l2_coeff,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub architecture: Architecture,
    pub seed: Option<u64>,
    pub param_count: usize,
    pub encoding: String,
    pub payload: String,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(payload: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| Error::CheckpointPayload(e.to_string()))?;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != expected {
        return Err(Error::CheckpointCount {
            expected,
            found: bytes.len() / 8,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn check_header(version: u32, encoding: &str) -> Result<()> {
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    if encoding != PAYLOAD_ENCODING {
        return Err(Error::CheckpointPayload(format!(
            "unsupported payload encoding '{encoding}'"
        )));
    }
    Ok(())
}

fn check_count(config: &MlpConfig, declared: usize) -> Result<()> {
    let expected = config.layout().param_count();
    if declared != expected {
        return Err(Error::CheckpointCount {
            expected,
            found: declared,
        });
    }
    Ok(())
}

impl CheckpointFile {
    pub fn new(w: &WeightVector, config: &MlpConfig, seed: Option<u64>) -> Self {
        CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            architecture: config.into(),
            seed,
            param_count: w.len(),
            encoding: PAYLOAD_ENCODING.to_string(),
            payload: encode(w.values()),
        }
    }

    /// Validates the header against the payload and rebuilds the weights.
    pub fn weights(&self) -> Result<(WeightVector, MlpConfig)> {
        check_header(self.format_version, &self.encoding)?;
        let config = self.architecture.to_config()?;
        check_count(&config, self.param_count)?;
        let values = decode(&self.payload, self.param_count)?;
        Ok((WeightVector::from_values(config.layout(), values)?, config))
    }
}

pub fn save_checkpoint(
    w: &WeightVector,
    config: &MlpConfig,
    seed: Option<u64>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let file = CheckpointFile::new(w, config, seed);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(WeightVector, MlpConfig, CheckpointFile)> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    let (w, config) = file.weights()?;
    Ok((w, config, file))
}

/// A trained curve: control points `ŵ₁, w₁ … w_n, ŵ₂` in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveFile {
    pub format_version: u32,
    pub architecture: Architecture,
    pub curve_kind: CurveKind,
    pub seed: Option<u64>,
    pub param_count: usize,
    pub encoding: String,
    pub control_points: Vec<String>,
}

pub fn save_curve(
    spec: &CurveSpec,
    config: &MlpConfig,
    seed: Option<u64>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let file = CurveFile {
        format_version: CHECKPOINT_VERSION,
        architecture: config.into(),
        curve_kind: spec.kind(),
        seed,
        param_count: spec.start().len(),
        encoding: PAYLOAD_ENCODING.to_string(),
        control_points: spec.control_points().map(|p| encode(p.values())).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_curve(path: impl AsRef<Path>) -> Result<(CurveSpec, MlpConfig)> {
    let text = std::fs::read_to_string(path)?;
    let file: CurveFile = serde_json::from_str(&text)?;
    check_header(file.format_version, &file.encoding)?;
    let config = file.architecture.to_config()?;
    check_count(&config, file.param_count)?;
    if file.control_points.len() < 2 {
        return Err(Error::CheckpointPayload(
            "a curve needs at least its two endpoints".into(),
        ));
    }
    let layout = config.layout();
    let mut points = file
        .control_points
        .iter()
        .map(|p| WeightVector::from_values(layout.clone(), decode(p, file.param_count)?))
        .collect::<Result<Vec<_>>>()?;
    let end = points.pop().expect("two points");
    let start = points.remove(0);
    Ok((CurveSpec::new(file.curve_kind, start, end, points)?, config))
}
