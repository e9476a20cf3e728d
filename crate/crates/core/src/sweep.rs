//! Curve quality as a function of network width.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve_train::{loss_profile, train_curve, CurveTrainConfig, DEFAULT_GRID};
use crate::curves::{polyline_length, CurveKind, CurveSpec};
use crate::data_io::{Dataset, TabularReport};
use crate::error::{Error, Result};
use crate::nn::{init_params, MlpConfig, WeightVector};
use crate::rng::{derive_seed, stream};
use crate::train::{train_model, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Hidden widths at `K = 1`.
    pub hidden: Vec<usize>,
    pub factors: Vec<f64>,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(default)]
    pub l2_coeff: f64,
    pub train: TrainConfig,
    pub curve: CurveTrainConfig,
    #[serde(default = "default_kind")]
    pub kind: CurveKind,
    #[serde(default = "default_bends")]
    pub n_bends: usize,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
}

fn default_kind() -> CurveKind {
    CurveKind::Bezier
}

fn default_bends() -> usize {
    1
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep needs at least one hidden layer".into(),
            ));
        }
        if self.factors.is_empty() || self.factors.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidConfig(
                "width factors must be a non-empty list of positive numbers".into(),
            ));
        }
        if self.kind == CurveKind::Segment || self.n_bends == 0 {
            return Err(Error::NothingToTrain);
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidConfig("grid_size must be at least 2".into()));
        }
        self.train.validate()?;
        self.curve.validate()
    }

    /// Hidden widths scaled by `factor`, rounded, at least 1.
    pub fn widths(&self, factor: f64) -> Vec<usize> {
        self.hidden
            .iter()
            .map(|&h| ((h as f64 * factor).round() as usize).max(1))
            .collect()
    }

    pub fn net_config(&self, factor: f64, data: &Dataset) -> Result<MlpConfig> {
        let mut sizes = vec![data.feature_dim()];
        sizes.extend(self.widths(factor));
        sizes.push(data.class_count());
        MlpConfig::new(sizes, self.batch_norm, self.l2_coeff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub factor: f64,
    pub hidden: Vec<usize>,
    pub param_count: usize,
    /// Larger of the two endpoint training losses.
    pub endpoint_loss: f64,
    pub worst_curve_loss: f64,
    pub excess_loss: f64,
    pub segment_worst_loss: f64,
    pub length_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl TabularReport for SweepReport {
    fn columns(&self) -> Vec<&'static str> {
        vec![
            "factor",
            "param_count",
            "worst_curve_loss",
            "endpoint_loss",
            "excess_loss",
            "segment_worst_loss",
            "length_ratio",
        ]
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.factor,
                    r.param_count as f64,
                    r.worst_curve_loss,
                    r.endpoint_loss,
                    r.excess_loss,
                    r.segment_worst_loss,
                    r.length_ratio,
                ]
            })
            .collect()
    }
}

/// Two independently trained endpoints; initialization and batch order come
/// from fixed sub-streams of `seed`.
pub fn train_endpoint_pair(
    config: &MlpConfig,
    data: &Dataset,
    train: &TrainConfig,
    seed: u64,
) -> Result<(WeightVector, WeightVector)> {
    let run = |init_stream, train_stream| {
        let init = init_params(config, derive_seed(seed, init_stream));
        let cfg = TrainConfig {
            seed: derive_seed(seed, train_stream),
            ..train.clone()
        };
        train_model(&init, config, data, &cfg).map(|(w, _)| w)
    };
    let (a, b) = rayon::join(
        || run(stream::INIT_A, stream::TRAIN_A),
        || run(stream::INIT_B, stream::TRAIN_B),
    );
    Ok((a?, b?))
}

/// One row per width factor, in the order given; rows run concurrently.
pub fn run_sweep(cfg: &SweepConfig, data: &Dataset, seed: u64) -> Result<SweepReport> {
    cfg.validate()?;
    let rows = cfg
        .factors
        .par_iter()
        .map(|&factor| sweep_row(cfg, data, seed, factor))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

fn sweep_row(cfg: &SweepConfig, data: &Dataset, seed: u64, factor: f64) -> Result<SweepRow> {
    let config = cfg.net_config(factor, data)?;
    let (a, b) = train_endpoint_pair(&config, data, &cfg.train, seed)?;
    let segment = CurveSpec::segment(a.clone(), b.clone())?;
    let init = CurveSpec::with_initial_bends(cfg.kind, a, b, cfg.n_bends, None)?;
    let curve_cfg = CurveTrainConfig {
        seed: derive_seed(seed, stream::CURVE),
        ..cfg.curve.clone()
    };
    let (curve, _) = train_curve(&init, &config, data, &curve_cfg)?;
    let curve_losses = loss_profile(&curve, &config, data, cfg.grid_size)?;
    let segment_losses = loss_profile(&segment, &config, data, cfg.grid_size)?;
    let endpoint_loss = curve_losses[0].max(curve_losses[cfg.grid_size - 1]);
    let worst = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst_curve_loss = worst(&curve_losses);
    let chord = curve.start().distance(curve.end());
    if chord == 0.0 {
        return Err(Error::CoincidentEndpoints);
    }
    Ok(SweepRow {
        factor,
        hidden: cfg.widths(factor),
        param_count: config.layout().param_count(),
        endpoint_loss,
        worst_curve_loss,
        excess_loss: worst_curve_loss - endpoint_loss,
        segment_worst_loss: worst(&segment_losses),
        length_ratio: polyline_length(&curve, cfg.grid_size)? / chord,
    })
}

/// Number of adjacent pairs where `values` goes up.
pub fn count_increases(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}
