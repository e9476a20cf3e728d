//! JSON run configuration shared by every subcommand.
//!
//! Each subcommand reads the sections it needs and ignores the rest, so one
//! file can drive a whole experiment. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use modeconnect::curve_train::{CurveTrainConfig, DEFAULT_GRID};
use modeconnect::curves::CurveKind;
use modeconnect::data_io::SyntheticKind;
use modeconnect::eval::PlaneGridConfig;
use modeconnect::fge::{FgeRunConfig, PretrainConfig};
use modeconnect::nn::MlpConfig;
use modeconnect::train::TrainConfig;
use modeconnect::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; `--seed` takes precedence.
    pub seed: Option<u64>,
    pub data: Option<DataConfig>,
    pub net: Option<NetConfig>,
    pub train: Option<TrainConfig>,
    pub curve: Option<CurveConfig>,
    pub plane: Option<PlaneGridConfig>,
    pub fge: Option<FgeConfig>,
    pub trivial: Option<TrivialConfig>,
    pub sweep: Option<SweepSection>,
    pub ensemble: Option<EnsembleConfig>,
    /// Default output path of the subcommand; `--out` takes precedence.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        kind: SyntheticKind,
        noise: f64,
        train_size: usize,
        test_size: usize,
        #[serde(default)]
        heldout_size: Option<usize>,
        /// Fixes the data independently of the root seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        heldout: Option<PathBuf>,
        label_column: String,
        #[serde(default)]
        class_count: Option<usize>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        heldout_images: Option<PathBuf>,
        #[serde(default)]
        heldout_labels: Option<PathBuf>,
    },
}

/// Hidden part of the architecture; input and output widths come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(default)]
    pub l2_coeff: f64,
}

impl NetConfig {
    pub fn build(&self, inputs: usize, classes: usize) -> Result<MlpConfig> {
        let mut sizes = vec![inputs];
        sizes.extend(&self.hidden);
        sizes.push(classes);
        MlpConfig::new(sizes, self.batch_norm, self.l2_coeff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub kind: CurveKind,
    #[serde(default = "default_bends")]
    pub n_bends: usize,
    pub train: Option<CurveTrainConfig>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Scale of the Gaussian jitter added to the initial bends.
    #[serde(default)]
    pub jitter: Option<f64>,
}

fn default_bends() -> usize {
    1
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgeConfig {
    pub pretrain: PretrainConfig,
    pub run: FgeRunConfig,
    #[serde(default)]
    pub include_pretrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrivialConfig {
    pub t_grid: Vec<f64>,
}

impl Default for TrivialConfig {
    fn default() -> Self {
        TrivialConfig {
            t_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of equally spaced interior points when ensembling along a curve.
    #[serde(default)]
    pub curve_points: Option<usize>,
}

impl RunConfig {
    /// Reads `path` (if any), applies `key.path=value` overrides, then
    /// deserializes and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value =
            match path {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p).map_err(|e| {
                    Error::InvalidConfig(format!("cannot read {}: {e}", p.display()))
                })?)?,
                None => Value::Object(Default::default()),
            };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every section present, before any data is touched.
    pub fn validate(&self) -> Result<()> {
        if let Some(DataConfig::Synthetic {
            noise,
            train_size,
            test_size,
            ..
        }) = &self.data
        {
            if !(*noise >= 0.0 && noise.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "data.noise must be ≥ 0, got {noise}"
                )));
            }
            if *train_size < 4 || *test_size < 4 {
                return Err(Error::InvalidConfig(
                    "synthetic splits need at least 4 rows".into(),
                ));
            }
        }
        if let Some(train) = &self.train {
            train.validate()?;
            no_seed("train", train.seed)?;
        }
        if let Some(curve) = &self.curve {
            if curve.grid_size < 2 {
                return Err(Error::InvalidConfig(
                    "curve.grid_size must be at least 2".into(),
                ));
            }
            if let Some(j) = curve.jitter {
                if !(j >= 0.0 && j.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "curve.jitter must be ≥ 0, got {j}"
                    )));
                }
            }
            if let Some(t) = &curve.train {
                t.validate()?;
                no_seed("curve.train", t.seed)?;
            }
        }
        if let Some(plane) = &self.plane {
            if plane.resolution < 2 || !(plane.margin >= 0.0 && plane.margin.is_finite()) {
                return Err(Error::InvalidConfig(
                    "plane needs resolution ≥ 2 and a non-negative margin".into(),
                ));
            }
        }
        if let Some(fge) = &self.fge {
            fge.run.validate()?;
            no_seed("fge.run", fge.run.seed)?;
            no_seed("fge.pretrain", fge.pretrain.seed)?;
            if fge.pretrain.batch_size == 0 || fge.pretrain.lr.is_nan() || fge.pretrain.lr <= 0.0 {
                return Err(Error::InvalidConfig(
                    "fge.pretrain needs a positive batch size and learning rate".into(),
                ));
            }
        }
        if let Some(trivial) = &self.trivial {
            check_t_grid(&trivial.t_grid)?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.factors.is_empty()
                || sweep.factors.iter().any(|&k| !(k > 0.0 && k.is_finite()))
            {
                return Err(Error::InvalidConfig(
                    "sweep.factors must be a non-empty list of positive numbers".into(),
                ));
            }
        }
        if let Some(EnsembleConfig {
            curve_points: Some(0),
        }) = &self.ensemble
        {
            return Err(Error::InvalidConfig(
                "ensemble.curve_points must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("missing '{name}' section")))
    }
}

pub fn check_t_grid(ts: &[f64]) -> Result<()> {
    if ts.is_empty() {
        return Err(Error::InvalidConfig("t grid is empty".into()));
    }
    match ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        Some(t) => Err(Error::InvalidConfig(format!("t = {t} lies outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Module seeds are derived from the root seed; a hand-set value would be
/// silently replaced, so it is refused instead.
fn no_seed(section: &str, seed: u64) -> Result<()> {
    if seed != 0 {
        return Err(Error::InvalidConfig(format!(
            "{section}.seed is derived from the root seed; set `seed` or --seed instead"
        )));
    }
    Ok(())
}

/// `a.b.c=value`, where `value` is JSON or, failing that, a bare string.
fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override '{assignment}' is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "override key '{key}' has an empty part"
            )));
        }
        let map = match node {
            Value::Object(map) => map,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "override '{key}': '{}' is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, text).unwrap();
        RunConfig::load(Some(&path), &[])
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse(r#"{"sed": 1}"#),
            Err(Error::InvalidConfig(_))
        ));
        let nested = r#"{"net": {"hidden": [4], "dropout": 0.1}}"#;
        assert!(matches!(parse(nested), Err(Error::InvalidConfig(_))));
        let data = r#"{"data": {"source": "synthetic", "kind": "two_spirals", "noise": 0.1,
            "train_size": 10, "test_size": 10, "color": 1}}"#;
        assert!(matches!(parse(data), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn schedule_and_grid_errors_are_caught_early() {
        let fge = |a1: f64, a2: f64, c: usize| {
            format!(
                r#"{{"fge": {{"pretrain": {{"epochs": 1, "batch_size": 4, "lr": 0.1}},
                "run": {{"n_iterations": 8, "batch_size": 4,
                "schedule": {{"alpha1": {a1}, "alpha2": {a2}, "cycle": {c}}}}}}}}}"#
            )
        };
        assert!(parse(&fge(0.1, 0.01, 4)).is_ok());
        assert!(parse(&fge(0.01, 0.01, 4)).is_err());
        assert!(parse(&fge(0.1, 0.01, 3)).is_err());
        assert!(parse(r#"{"trivial": {"t_grid": [0.5, 1.5]}}"#).is_err());
    }

    #[test]
    fn nested_seeds_are_refused() {
        let text = r#"{"train": {"epochs": 1, "batch_size": 4, "seed": 3,
            "schedule": {"type": "constant", "lr": 0.1}}}"#;
        assert!(matches!(parse(text), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let overrides = [
            "seed=7".to_string(),
            "net.hidden=[3,3]".to_string(),
            "curve.kind=bezier".to_string(),
        ];
        let config = RunConfig::load(None, &overrides).unwrap();
        assert_eq!(config.seed, Some(7));
        assert_eq!(config.net.unwrap().hidden, vec![3, 3]);
        assert_eq!(config.curve.unwrap().kind, CurveKind::Bezier);
        assert!(RunConfig::load(None, &["seed".to_string()]).is_err());
        assert!(RunConfig::load(None, &["seed=1".into(), "seed.x=2".into()]).is_err());
    }
}
