//! Single-model SGD training shared by endpoint training and FGE pretraining.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{Dataset, TabularReport};
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, MlpConfig, WeightVector};

/// Learning rate as a function of the 1-based iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        lr: f64,
    },
    /// `lr` divided by `factor` after each fraction of the run in `milestones`.
    Step {
        lr: f64,
        milestones: Vec<f64>,
        factor: f64,
    },
}

impl LrSchedule {
    /// Constant, then divided by 10 at 50% and again at 75% of the run.
    pub fn standard(lr: f64) -> Self {
        LrSchedule::Step {
            lr,
            milestones: vec![0.5, 0.75],
            factor: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let base = match self {
            LrSchedule::Constant { lr } => *lr,
            LrSchedule::Step {
                lr,
                milestones,
                factor,
            } => {
                if factor.is_nan() || *factor < 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "step decay factor must be at least 1, got {factor}"
                    )));
                }
                if milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
                    return Err(Error::InvalidConfig(
                        "step milestones are fractions of the run in [0, 1]".into(),
                    ));
                }
                *lr
            }
        };
        if !(base >= 0.0 && base.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {base}"
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant { lr } => *lr,
            LrSchedule::Step {
                lr,
                milestones,
                factor,
            } => {
                let progress = (iteration.saturating_sub(1)) as f64 / total.max(1) as f64;
                let passed = milestones.iter().filter(|&&m| progress >= m).count();
                lr / factor.powi(passed as i32)
            }
        }
    }
}

/// Heavy-ball SGD: `v ← μ v + g`, `w ← w − α v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(momentum: f64, len: usize) -> Self {
        Sgd {
            momentum,
            velocity: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

/// Endless stream of shuffled mini-batches, reshuffled every epoch.
#[derive(Debug)]
pub struct MiniBatcher {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl MiniBatcher {
    pub fn new(rows: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptyBatch);
        }
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(&mut rng);
        Ok(MiniBatcher {
            order,
            cursor: 0,
            batch_size: batch_size.min(rows),
            rng,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Row indices of the next batch; the last batch of an epoch may be short.
    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor = (start + self.batch_size).min(self.order.len());
        &self.order[start..self.cursor]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        self.schedule.validate()
    }
}

/// One training record per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub iteration: Vec<usize>,
    /// Curve parameter sampled for the step; absent for single-model training.
    pub t: Vec<Option<f64>>,
    pub lr: Vec<f64>,
    pub loss: Vec<f64>,
}

impl LossHistory {
    pub fn push(&mut self, iteration: usize, t: Option<f64>, lr: f64, loss: f64) {
        self.iteration.push(iteration);
        self.t.push(t);
        self.lr.push(lr);
        self.loss.push(loss);
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }
}

impl LossHistory {
    fn has_t(&self) -> bool {
        self.t.iter().any(Option::is_some)
    }
}

/// The `t` column is present only for curve training.
impl TabularReport for LossHistory {
    fn columns(&self) -> Vec<&'static str> {
        if self.has_t() {
            vec!["iteration", "t", "lr", "loss"]
        } else {
            vec!["iteration", "lr", "loss"]
        }
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        let has_t = self.has_t();
        (0..self.len())
            .map(|i| {
                let mut row = vec![self.iteration[i] as f64];
                if has_t {
                    row.push(self.t[i].unwrap_or(f64::NAN));
                }
                row.extend([self.lr[i], self.loss[i]]);
                row
            })
            .collect()
    }
}

pub(crate) fn ensure_finite(loss: f64, context: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{context}: loss became {loss}")))
    }
}

/// SGD on the regularized loss for `cfg.epochs` passes over `data`.
pub fn train_model(
    init: &WeightVector,
    config: &MlpConfig,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(WeightVector, LossHistory)> {
    cfg.validate()?;
    let mut w = init.clone();
    let mut batcher = MiniBatcher::new(data.len(), cfg.batch_size, cfg.seed)?;
    let total = cfg.epochs * batcher.batches_per_epoch();
    let mut opt = Sgd::new(cfg.momentum, w.len());
    let mut history = LossHistory::default();
    for iteration in 1..=total {
        let rows = batcher.next_batch().to_vec();
        let batch = data.gather(&rows);
        let (loss, grad) = loss_and_grad(&w, config, batch.view())?;
        ensure_finite(loss, "model training")?;
        let lr = cfg.schedule.lr_at(iteration, total);
        opt.step(w.values_mut(), grad.values(), lr);
        history.push(iteration, None, lr, loss);
    }
    Ok((w, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{gen_synthetic, SyntheticKind};
    use crate::nn::{init_params, predict_eval};

    #[test]
    fn step_schedule_decays_at_milestones() {
        let s = LrSchedule::standard(0.1);
        assert_eq!(s.lr_at(1, 100), 0.1);
        assert_eq!(s.lr_at(50, 100), 0.1);
        assert!((s.lr_at(51, 100) - 0.01).abs() < 1e-18);
        assert!((s.lr_at(76, 100) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn batcher_covers_every_row_each_epoch() {
        let mut b = MiniBatcher::new(10, 3, 1).unwrap();
        assert_eq!(b.batches_per_epoch(), 4);
        for _ in 0..3 {
            let mut seen: Vec<usize> = (0..4).flat_map(|_| b.next_batch().to_vec()).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn noiseless_blobs_are_fit_exactly() {
        let data = gen_synthetic(SyntheticKind::GaussianBlobs, 150, 0.0, 3).unwrap();
        let config = MlpConfig::new(vec![2, 16, 3], false, 1e-4).unwrap();
        let init = init_params(&config, 1);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            schedule: LrSchedule::standard(0.05),
            momentum: 0.9,
            seed: 2,
        };
        let (w, history) = train_model(&init, &config, &data, &cfg).unwrap();
        let pred = predict_eval(&w, &config, data.batch(), None).unwrap();
        assert_eq!(pred.error_rate, 0.0);
        assert_eq!(history.len(), 20 * 10);
        let (again, _) = train_model(&init, &config, &data, &cfg).unwrap();
        assert_eq!(again, w);
    }

    #[test]
    fn zero_epochs_leave_weights_alone() {
        let data = gen_synthetic(SyntheticKind::GaussianBlobs, 30, 0.1, 3).unwrap();
        let config = MlpConfig::new(vec![2, 4, 3], false, 0.0).unwrap();
        let init = init_params(&config, 1);
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 8,
            schedule: LrSchedule::Constant { lr: 0.1 },
            momentum: 0.9,
            seed: 0,
        };
        assert_eq!(train_model(&init, &config, &data, &cfg).unwrap().0, init);
    }
}
