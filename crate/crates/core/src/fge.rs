//! Fast Geometric Ensembling: a short triangular learning-rate cycle with a
//! checkpoint collected at every cycle minimum.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{Dataset, TabularReport};
use crate::error::{Error, Result};
use crate::eval::{
    ensemble_predict, mean_pairwise_disagreement, point_metrics, EnsembleMember, PointMetrics,
};
use crate::nn::{loss_and_grad, MlpConfig, WeightVector};
use crate::rng::derive_seed;
use crate::train::{
    ensure_finite, train_model, LossHistory, LrSchedule, MiniBatcher, Sgd, TrainConfig,
};

/// Triangular schedule going `α₁ → α₂ → α₁` every `cycle` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclicLrSchedule {
    pub alpha1: f64,
    pub alpha2: f64,
    pub cycle: usize,
}

impl CyclicLrSchedule {
    pub fn new(alpha1: f64, alpha2: f64, cycle: usize) -> Result<Self> {
        let s = CyclicLrSchedule {
            alpha1,
            alpha2,
            cycle,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1.is_finite() && self.alpha2 > 0.0 && self.alpha1 > self.alpha2) {
            return Err(Error::InvalidConfig(format!(
                "cyclic schedule needs alpha1 > alpha2 > 0, got alpha1 = {}, alpha2 = {}",
                self.alpha1, self.alpha2
            )));
        }
        if self.cycle == 0 || !self.cycle.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "cycle length must be a positive even number, got {}",
                self.cycle
            )));
        }
        Ok(())
    }

    /// Position `t(i) ∈ (0, 1]` of iteration `i ≥ 1` inside its cycle.
    pub fn phase(&self, iteration: usize) -> f64 {
        assert!(iteration >= 1, "iterations are 1-based");
        ((iteration - 1) % self.cycle + 1) as f64 / self.cycle as f64
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        let t = self.phase(iteration);
        if t <= 0.5 {
            (1.0 - 2.0 * t) * self.alpha1 + 2.0 * t * self.alpha2
        } else {
            (2.0 - 2.0 * t) * self.alpha2 + (2.0 * t - 1.0) * self.alpha1
        }
    }

    pub fn is_collection(&self, iteration: usize) -> bool {
        iteration % self.cycle == self.cycle / 2
    }

    /// Iterations `≤ n` at which a checkpoint is taken.
    pub fn collection_points(&self, n_iterations: usize) -> Vec<usize> {
        (self.cycle / 2..=n_iterations)
            .step_by(self.cycle)
            .filter(|&i| i >= 1)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgeRunConfig {
    pub n_iterations: usize,
    pub schedule: CyclicLrSchedule,
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}

impl FgeRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.n_iterations < self.schedule.cycle / 2 {
            return Err(Error::EmptyEnsemble(format!(
                "{} iterations never reach the first collection point at iteration {}",
                self.n_iterations,
                self.schedule.cycle / 2
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Standard SGD training of the network FGE starts from; the learning rate
/// drops by 10 at half and three quarters of the budget.
pub fn pretrain(
    init: &WeightVector,
    config: &MlpConfig,
    data: &Dataset,
    cfg: &PretrainConfig,
) -> Result<(WeightVector, LossHistory)> {
    train_model(
        init,
        config,
        data,
        &TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            schedule: LrSchedule::standard(cfg.lr),
            momentum: cfg.momentum,
            seed: cfg.seed,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgeCheckpoint {
    pub iteration: usize,
    pub weights: WeightVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgeRun {
    pub checkpoints: Vec<FgeCheckpoint>,
    pub history: LossHistory,
}

pub fn fge_run(
    start: &WeightVector,
    config: &MlpConfig,
    data: &Dataset,
    cfg: &FgeRunConfig,
) -> Result<FgeRun> {
    cfg.validate()?;
    let mut w = start.clone();
    let mut batcher = MiniBatcher::new(data.len(), cfg.batch_size, cfg.seed)?;
    let mut opt = Sgd::new(cfg.momentum, w.len());
    let mut history = LossHistory::default();
    let mut checkpoints = Vec::new();
    for iteration in 1..=cfg.n_iterations {
        let rows = batcher.next_batch().to_vec();
        let batch = data.gather(&rows);
        let (loss, grad) = loss_and_grad(&w, config, batch.view())?;
        ensure_finite(loss, "FGE")?;
        let lr = cfg.schedule.lr_at(iteration);
        opt.step(w.values_mut(), grad.values(), lr);
        history.push(iteration, None, lr, loss);
        if cfg.schedule.is_collection(iteration) {
            checkpoints.push(FgeCheckpoint {
                iteration,
                weights: w.clone(),
            });
        }
    }
    Ok(FgeRun {
        checkpoints,
        history,
    })
}

/// Independent FGE runs from several starting points, run concurrently.
/// Run `k` uses the batch seed derived from `cfg.seed` and `k`; the
/// checkpoints are returned in start order.
pub fn fge_multi_start(
    starts: &[WeightVector],
    config: &MlpConfig,
    data: &Dataset,
    cfg: &FgeRunConfig,
) -> Result<Vec<FgeRun>> {
    if starts.is_empty() {
        return Err(Error::EmptyEnsemble(
            "multi-start FGE needs a starting point".into(),
        ));
    }
    starts
        .par_iter()
        .enumerate()
        .map(|(k, start)| {
            let run_cfg = FgeRunConfig {
                seed: derive_seed(cfg.seed, k as u64),
                ..cfg.clone()
            };
            fge_run(start, config, data, &run_cfg)
        })
        .collect()
}

/// Ensemble members for the collected checkpoints, optionally preceded by
/// the pretrained network.
pub fn fge_members(
    pretrained: Option<&WeightVector>,
    checkpoints: &[FgeCheckpoint],
    config: &MlpConfig,
    train_set: &Dataset,
) -> Result<Vec<EnsembleMember>> {
    pretrained
        .into_iter()
        .chain(checkpoints.iter().map(|c| &c.weights))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|w| EnsembleMember::prepare((*w).clone(), config, train_set))
        .collect()
}

/// Summary of an FGE ensemble on a test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgeSummary {
    pub checkpoint_iterations: Vec<usize>,
    pub include_pretrained: bool,
    pub pretrained_test_error: f64,
    pub pretrained_test_nll: f64,
    pub checkpoint_test_errors: Vec<f64>,
    pub ensemble_test_error: f64,
    pub ensemble_test_nll: f64,
    /// Mean over checkpoint pairs, pretrained network excluded.
    pub mean_pairwise_disagreement: f64,
    /// Mean weight-space distance between consecutive checkpoints.
    pub mean_step_distance: f64,
    pub pretrained_to_first_distance: f64,
}

pub fn fge_summary(
    pretrained: &WeightVector,
    checkpoints: &[FgeCheckpoint],
    include_pretrained: bool,
    config: &MlpConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<FgeSummary> {
    if checkpoints.is_empty() {
        return Err(Error::EmptyEnsemble(
            "no FGE checkpoints were collected".into(),
        ));
    }
    let members = fge_members(
        include_pretrained.then_some(pretrained),
        checkpoints,
        config,
        train_set,
    )?;
    let single = point_metrics(pretrained, config, train_set, test_set)?;
    let ensemble = ensemble_predict(&members, config, test_set)?;
    let ck_members = &members[usize::from(include_pretrained)..];
    let checkpoint_test_errors = ck_members
        .par_iter()
        .map(|m| {
            crate::nn::predict_eval(&m.weights, config, test_set.batch(), m.stats.as_ref())
                .map(|p| p.error_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let steps: Vec<f64> = checkpoints
        .windows(2)
        .map(|p| p[0].weights.distance(&p[1].weights))
        .collect();
    Ok(FgeSummary {
        checkpoint_iterations: checkpoints.iter().map(|c| c.iteration).collect(),
        include_pretrained,
        pretrained_test_error: single.test_error,
        pretrained_test_nll: single.test_loss,
        checkpoint_test_errors,
        ensemble_test_error: ensemble.error_rate,
        ensemble_test_nll: ensemble.mean_nll,
        mean_pairwise_disagreement: mean_pairwise_disagreement(
            ck_members,
            config,
            test_set.features().view(),
        )?,
        mean_step_distance: if steps.is_empty() {
            0.0
        } else {
            steps.iter().sum::<f64>() / steps.len() as f64
        },
        pretrained_to_first_distance: pretrained.distance(&checkpoints[0].weights),
    })
}

/// JSON manifest of an FGE run and the files it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgeManifest {
    pub schedule: CyclicLrSchedule,
    pub n_iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub pretrain_epochs: usize,
    pub include_pretrained: bool,
    pub pretrained: PathBuf,
    pub checkpoints: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub iteration: usize,
    pub path: PathBuf,
}

/// Loss and error along the polygonal chain through consecutive checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    /// Chain position; knot `k` sits at position `k`.
    pub position: Vec<f64>,
    pub knot: Vec<bool>,
    pub train_loss: Vec<f64>,
    pub train_error: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub test_error: Vec<f64>,
}

impl ChainReport {
    pub fn max_train_loss(&self) -> f64 {
        self.train_loss
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TabularReport for ChainReport {
    fn columns(&self) -> Vec<&'static str> {
        vec![
            "position",
            "knot",
            "train_loss",
            "train_error",
            "test_loss",
            "test_error",
        ]
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.position.len())
            .map(|i| {
                vec![
                    self.position[i],
                    f64::from(u8::from(self.knot[i])),
                    self.train_loss[i],
                    self.train_error[i],
                    self.test_loss[i],
                    self.test_error[i],
                ]
            })
            .collect()
    }
}

pub fn fge_chain_report(
    checkpoints: &[WeightVector],
    config: &MlpConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    points_per_segment: usize,
) -> Result<ChainReport> {
    if checkpoints.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a chain needs at least 2 checkpoints, got {}",
            checkpoints.len()
        )));
    }
    if points_per_segment == 0 {
        return Err(Error::InvalidArgument(
            "points_per_segment must be positive".into(),
        ));
    }
    for w in &checkpoints[1..] {
        checkpoints[0].check_layout(w)?;
    }
    let segments = checkpoints.len() - 1;
    let mut nodes: Vec<(usize, usize)> = (0..segments)
        .flat_map(|s| (0..points_per_segment).map(move |k| (s, k)))
        .collect();
    nodes.push((segments, 0));
    let evaluated = nodes
        .par_iter()
        .map(|&(s, k)| {
            let point = if k == 0 {
                checkpoints[s].clone()
            } else {
                let u = k as f64 / points_per_segment as f64;
                let mut p = checkpoints[s].clone();
                p.scale(1.0 - u);
                p.axpy(u, &checkpoints[s + 1]);
                p
            };
            point_metrics(&point, config, train_set, test_set)
        })
        .collect::<Result<Vec<PointMetrics>>>()?;
    Ok(ChainReport {
        position: nodes
            .iter()
            .map(|&(s, k)| s as f64 + k as f64 / points_per_segment as f64)
            .collect(),
        knot: nodes.iter().map(|&(_, k)| k == 0).collect(),
        train_loss: evaluated.iter().map(|m| m.train_loss).collect(),
        train_error: evaluated.iter().map(|m| m.train_error).collect(),
        test_loss: evaluated.iter().map(|m| m.test_loss).collect(),
        test_error: evaluated.iter().map(|m| m.test_error).collect(),
    })
}
