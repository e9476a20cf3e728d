//! Training the bends of a curve and estimating the curve losses.
//!
//! Training minimizes the expected loss under `t ~ U(0, 1)`: each step samples
//! one `t̃`, evaluates the loss gradient at `φ_θ(t̃)` on a mini-batch and pushes
//! it to the bends through the curve coefficients. The arclength-weighted loss
//! (uniform distribution on the curve) is only estimated, never optimized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{backprop_to_bends, t_grid, CurveSpec};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::nn::{full_loss, loss_and_grad, stats_if_needed, MlpConfig, ParamKind, WeightVector};
use crate::train::{ensure_finite, LossHistory, LrSchedule, MiniBatcher, Sgd};

/// Grid size used by the curve metrics and the loss estimators.
pub const DEFAULT_GRID: usize = 121;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: LrSchedule,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Adds `λ‖θ‖²` on the weight blocks of every bend. The pointwise loss
    /// already regularizes `φ_θ(t)`, so this is off by default.
    #[serde(default)]
    pub weight_decay_on_bends: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}

impl CurveTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "curve training needs at least one iteration".into(),
            ));
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
        self.learning_rate.validate()
    }
}

/// A (possibly stochastic) loss evaluated at single points of weight space.
pub trait PointObjective {
    fn loss_and_grad(&mut self, point: &WeightVector) -> Result<(f64, WeightVector)>;
}

/// Regularized network loss on shuffled mini-batches of a dataset.
pub struct MiniBatchObjective<'a> {
    config: &'a MlpConfig,
    data: &'a Dataset,
    batcher: MiniBatcher,
}

impl<'a> MiniBatchObjective<'a> {
    pub fn new(
        config: &'a MlpConfig,
        data: &'a Dataset,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(MiniBatchObjective {
            config,
            data,
            batcher: MiniBatcher::new(data.len(), batch_size, seed)?,
        })
    }
}

impl PointObjective for MiniBatchObjective<'_> {
    fn loss_and_grad(&mut self, point: &WeightVector) -> Result<(f64, WeightVector)> {
        let rows = self.batcher.next_batch().to_vec();
        let batch = self.data.gather(&rows);
        loss_and_grad(point, self.config, batch.view())
    }
}

/// Bend gradients of `L(φ_θ(t))` for one objective evaluation.
pub fn stochastic_bend_gradient<O: PointObjective + ?Sized>(
    spec: &CurveSpec,
    objective: &mut O,
    t: f64,
) -> Result<(f64, Vec<WeightVector>)> {
    let point = spec.point_at(t)?;
    let (loss, grad_phi) = objective.loss_and_grad(&point)?;
    Ok((loss, backprop_to_bends(spec, t, &grad_phi)?))
}

/// Trains the bends of `spec` against any point objective.
pub fn train_curve_on<O: PointObjective + ?Sized>(
    spec: &CurveSpec,
    objective: &mut O,
    cfg: &CurveTrainConfig,
    l2_coeff: f64,
) -> Result<(CurveSpec, LossHistory)> {
    if spec.n_bends() == 0 {
        return Err(Error::NothingToTrain);
    }
    cfg.validate()?;
    let mut spec = spec.clone();
    let mut t_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizers: Vec<Sgd> = spec
        .bends()
        .iter()
        .map(|b| Sgd::new(cfg.momentum, b.len()))
        .collect();
    let mut history = LossHistory::default();
    for iteration in 1..=cfg.iterations {
        let t: f64 = t_rng.random();
        let (loss, mut grads) = stochastic_bend_gradient(&spec, objective, t)?;
        ensure_finite(loss, "curve training")?;
        if cfg.weight_decay_on_bends && l2_coeff > 0.0 {
            for (grad, bend) in grads.iter_mut().zip(spec.bends()) {
                add_weight_decay(grad, bend, l2_coeff);
            }
        }
        let lr = cfg.learning_rate.lr_at(iteration, cfg.iterations);
        for ((bend, grad), opt) in spec.bends_mut().iter_mut().zip(&grads).zip(&mut optimizers) {
            opt.step(bend.values_mut(), grad.values(), lr);
        }
        history.push(iteration, Some(t), lr, loss);
    }
    Ok((spec, history))
}

fn add_weight_decay(grad: &mut WeightVector, bend: &WeightVector, l2_coeff: f64) {
    let blocks: Vec<_> = bend
        .layout()
        .blocks()
        .iter()
        .filter(|b| b.kind == ParamKind::Weight)
        .map(|b| b.range())
        .collect();
    for range in blocks {
        for i in range {
            grad.values_mut()[i] += 2.0 * l2_coeff * bend.values()[i];
        }
    }
}

/// Mini-batch curve training on the regularized network loss.
///
/// Batch-normalized layers use per-batch statistics at `φ_θ(t̃)`. Endpoints
/// are returned untouched.
pub fn train_curve(
    spec: &CurveSpec,
    net_config: &MlpConfig,
    train_set: &Dataset,
    cfg: &CurveTrainConfig,
) -> Result<(CurveSpec, LossHistory)> {
    if spec.n_bends() == 0 {
        return Err(Error::NothingToTrain);
    }
    cfg.validate()?;
    let batch_seed = crate::rng::derive_seed(cfg.seed, 1);
    let mut objective = MiniBatchObjective::new(net_config, train_set, cfg.batch_size, batch_seed)?;
    train_curve_on(spec, &mut objective, cfg, net_config.l2_coeff)
}

/// Full-dataset regularized loss at `φ_θ(t)`, with BN statistics recomputed
/// on `data` for that point.
pub fn loss_at(spec: &CurveSpec, net_config: &MlpConfig, data: &Dataset, t: f64) -> Result<f64> {
    let point = spec.point_at(t)?;
    let stats = stats_if_needed(&point, net_config, data.features().view())?;
    full_loss(&point, net_config, data.batch(), stats.as_ref())
}

/// Losses on an equally spaced grid, evaluated in parallel, in grid order.
pub fn loss_profile(
    spec: &CurveSpec,
    net_config: &MlpConfig,
    data: &Dataset,
    grid_size: usize,
) -> Result<Vec<f64>> {
    t_grid(grid_size)
        .into_par_iter()
        .map(|t| loss_at(spec, net_config, data, t))
        .collect()
}

fn check_grid(grid_size: usize) -> Result<()> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrature needs at least 2 grid points, got {grid_size}"
        )));
    }
    Ok(())
}

/// Trapezoidal rule on an equally spaced grid over `[0, 1]`.
pub fn trapezoid(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let h = 1.0 / (n - 1) as f64;
            let interior: f64 = values[1..n - 1].iter().sum();
            h * (interior + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// `∫ f(t) w(t) dt / ∫ w(t) dt` by the trapezoidal rule; falls back to the
/// unweighted integral when the weights integrate to zero.
pub fn weighted_trapezoid(values: &[f64], weights: &[f64]) -> f64 {
    let den = trapezoid(weights);
    if den > 0.0 {
        let products: Vec<f64> = values.iter().zip(weights).map(|(v, w)| v * w).collect();
        trapezoid(&products) / den
    } else {
        trapezoid(values)
    }
}

/// `‖φ′(t)‖` on the grid.
pub fn speed_profile(spec: &CurveSpec, grid_size: usize) -> Result<Vec<f64>> {
    t_grid(grid_size)
        .into_iter()
        .map(|t| spec.speed_at(t))
        .collect()
}

/// Grid estimate of `∫₀¹ L(φ_θ(t)) dt`.
pub fn loss_uniform_t(
    spec: &CurveSpec,
    net_config: &MlpConfig,
    dataset: &Dataset,
    grid_size: usize,
) -> Result<f64> {
    check_grid(grid_size)?;
    Ok(trapezoid(&loss_profile(
        spec, net_config, dataset, grid_size,
    )?))
}

/// Grid estimate of the loss averaged uniformly over the curve,
/// `∫ L ‖φ′‖ dt / ∫ ‖φ′‖ dt`.
pub fn loss_uniform_curve(
    spec: &CurveSpec,
    net_config: &MlpConfig,
    dataset: &Dataset,
    grid_size: usize,
) -> Result<f64> {
    check_grid(grid_size)?;
    let losses = loss_profile(spec, net_config, dataset, grid_size)?;
    let speeds = speed_profile(spec, grid_size)?;
    Ok(weighted_trapezoid(&losses, &speeds))
}

/// Exact gradient, with respect to the bends, of the grid estimate
/// [`loss_uniform_t`] (full-batch, train-mode statistics).
pub fn grid_bend_gradient(
    spec: &CurveSpec,
    net_config: &MlpConfig,
    dataset: &Dataset,
    grid_size: usize,
) -> Result<Vec<WeightVector>> {
    check_grid(grid_size)?;
    let h = 1.0 / (grid_size - 1) as f64;
    let per_point = t_grid(grid_size)
        .into_par_iter()
        .enumerate()
        .map(|(k, t)| {
            let (_, g) = loss_and_grad(&spec.point_at(t)?, net_config, dataset.batch())?;
            let weight = if k == 0 || k + 1 == grid_size {
                0.5 * h
            } else {
                h
            };
            Ok((weight, backprop_to_bends(spec, t, &g)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total: Vec<WeightVector> = spec
        .bends()
        .iter()
        .map(|b| WeightVector::zeros(b.layout().clone()))
        .collect();
    for (weight, grads) in per_point {
        for (acc, g) in total.iter_mut().zip(&grads) {
            acc.axpy(weight, g);
        }
    }
    Ok(total)
}
