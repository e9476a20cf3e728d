//! Evaluation along curves, in planes of weight space, and of ensembles.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve_train::{trapezoid, weighted_trapezoid};
use crate::curves::{polyline_length, t_grid, CurveKind, CurveSpec};
use crate::data_io::{Dataset, TabularReport};
use crate::error::{Error, Result};
use crate::nn::{
    argmax, eval_logits, full_loss, predict_eval, softmax, stats_if_needed, BatchNormStats,
    MlpConfig, Prediction, WeightVector,
};

/// Min, max and the two averages of a metric along a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub min: f64,
    pub max: f64,
    /// Average under the uniform distribution on the curve (arclength weighted).
    pub int: f64,
    /// Average under the uniform distribution on `t`.
    pub mean: f64,
}

impl MetricSummary {
    pub fn new(values: &[f64], speeds: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // quadrature can overshoot the range by rounding; clamp to it
        let int = weighted_trapezoid(values, speeds).clamp(min, max);
        let mean = trapezoid(values).clamp(min, max);
        MetricSummary {
            min,
            max,
            int,
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAggregates {
    pub train_loss: MetricSummary,
    pub train_error: MetricSummary,
    pub test_loss: MetricSummary,
    pub test_error: MetricSummary,
}

/// Metrics on an equally spaced `t` grid.
///
/// `train_loss` is the regularized training objective; `test_loss` is the
/// plain mean negative log-likelihood. Errors are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEvalReport {
    pub kind: CurveKind,
    pub t: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub train_error: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub test_error: Vec<f64>,
    /// `‖φ′(t)‖`, the weights of the `int` averages.
    pub speed: Vec<f64>,
    pub aggregates: CurveAggregates,
    pub curve_length: f64,
    /// `None` when the endpoints coincide.
    pub length_ratio: Option<f64>,
}

impl TabularReport for CurveEvalReport {
    fn columns(&self) -> Vec<&'static str> {
        vec!["t", "train_loss", "train_error", "test_loss", "test_error"]
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.t.len())
            .map(|i| {
                vec![
                    self.t[i],
                    self.train_loss[i],
                    self.train_error[i],
                    self.test_loss[i],
                    self.test_error[i],
                ]
            })
            .collect()
    }
}

/// Metrics of one network, with BN statistics taken from the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub train_loss: f64,
    pub train_error: f64,
    pub test_loss: f64,
    pub test_error: f64,
}

pub fn point_metrics(
    w: &WeightVector,
    config: &MlpConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<PointMetrics> {
    let stats = stats_if_needed(w, config, train_set.features().view())?;
    let train = predict_eval(w, config, train_set.batch(), stats.as_ref())?;
    let test = predict_eval(w, config, test_set.batch(), stats.as_ref())?;
    Ok(PointMetrics {
        train_loss: train.mean_nll + config.l2_coeff * w.weight_sq_norm(),
        train_error: train.error_rate,
        test_loss: test.mean_nll,
        test_error: test.error_rate,
    })
}

pub fn curve_report(
    spec: &CurveSpec,
    config: &MlpConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    grid_size: usize,
) -> Result<CurveEvalReport> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "curve reports need at least 2 grid points, got {grid_size}"
        )));
    }
    let t = t_grid(grid_size);
    let metrics = t
        .par_iter()
        .map(|&t| point_metrics(&spec.point_at(t)?, config, train_set, test_set))
        .collect::<Result<Vec<_>>>()?;
    let speed = t
        .iter()
        .map(|&t| spec.speed_at(t))
        .collect::<Result<Vec<_>>>()?;
    let column = |f: fn(&PointMetrics) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
    let train_loss = column(|m| m.train_loss);
    let train_error = column(|m| m.train_error);
    let test_loss = column(|m| m.test_loss);
    let test_error = column(|m| m.test_error);
    for (name, values) in [("train loss", &train_loss), ("test loss", &test_loss)] {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} at t = {}", t[i])));
        }
    }
    let aggregates = CurveAggregates {
        train_loss: MetricSummary::new(&train_loss, &speed),
        train_error: MetricSummary::new(&train_error, &speed),
        test_loss: MetricSummary::new(&test_loss, &speed),
        test_error: MetricSummary::new(&test_error, &speed),
    };
    let curve_length = polyline_length(spec, grid_size)?;
    let chord = spec.start().distance(spec.end());
    Ok(CurveEvalReport {
        kind: spec.kind(),
        t,
        train_loss,
        train_error,
        test_loss,
        test_error,
        speed,
        aggregates,
        curve_length,
        length_ratio: (chord > 0.0).then(|| curve_length / chord),
    })
}

/// Orthonormal basis of the plane through three weight vectors, anchored at the first.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneBasis {
    pub origin: WeightVector,
    pub u: WeightVector,
    pub v: WeightVector,
}

impl PlaneBasis {
    /// Gram–Schmidt on `w₂ − w₁` and `w₃ − w₁`.
    pub fn new(w1: &WeightVector, w2: &WeightVector, w3: &WeightVector) -> Result<Self> {
        w1.check_layout(w2)?;
        w1.check_layout(w3)?;
        let u = w2.sub(w1);
        let u_norm = u.norm();
        if u_norm == 0.0 {
            return Err(Error::Collinear("w1 and w2 coincide".into()));
        }
        let d3 = w3.sub(w1);
        let mut v = d3.clone();
        v.axpy(-d3.dot(&u) / (u_norm * u_norm), &u);
        let v_norm = v.norm();
        if v_norm <= 1e-12 * d3.norm().max(u_norm) {
            return Err(Error::Collinear(format!(
                "w3 lies on the line through w1 and w2 (residual {v_norm:e})"
            )));
        }
        let mut u_hat = u;
        u_hat.scale(1.0 / u_norm);
        let mut v_hat = v;
        v_hat.scale(1.0 / v_norm);
        Ok(PlaneBasis {
            origin: w1.clone(),
            u: u_hat,
            v: v_hat,
        })
    }

    /// Plane coordinates of the orthogonal projection of `w`.
    pub fn project(&self, w: &WeightVector) -> (f64, f64) {
        let d = w.sub(&self.origin);
        (d.dot(&self.u), d.dot(&self.v))
    }

    /// `w₁ + x û + y v̂`
    pub fn point(&self, x: f64, y: f64) -> WeightVector {
        let mut p = self.origin.clone();
        p.axpy(x, &self.u);
        p.axpy(y, &self.v);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneGridConfig {
    /// Points per axis.
    pub resolution: usize,
    /// Padding around the three anchors, as a fraction of their extent.
    pub margin: f64,
    #[serde(default = "default_true")]
    pub with_error: bool,
}

fn default_true() -> bool {
    true
}

impl Default for PlaneGridConfig {
    fn default() -> Self {
        PlaneGridConfig {
            resolution: 21,
            margin: 0.2,
            with_error: true,
        }
    }
}

/// Loss (and optionally error) over a Cartesian grid in a plane of weight space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    /// Plane coordinates of `w₁`, `w₂`, `w₃`.
    pub anchors: [(f64, f64); 3],
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over `(y, x)`: cell `(i, j)` is `xs[j], ys[i]`.
    pub loss: Vec<f64>,
    pub error: Option<Vec<f64>>,
    #[serde(skip)]
    pub basis: Option<PlaneBasis>,
}

impl TabularReport for PlaneGrid {
    fn columns(&self) -> Vec<&'static str> {
        if self.error.is_some() {
            vec!["x", "y", "loss", "error"]
        } else {
            vec!["x", "y", "loss"]
        }
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.loss.len());
        for (i, &y) in self.ys.iter().enumerate() {
            for (j, &x) in self.xs.iter().enumerate() {
                let k = i * self.xs.len() + j;
                let mut row = vec![x, y, self.loss[k]];
                if let Some(err) = &self.error {
                    row.push(err[k]);
                }
                rows.push(row);
            }
        }
        rows
    }
}

fn axis(values: [f64; 3], margin: f64, resolution: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = margin * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    (0..resolution)
        .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
        .collect()
}

/// Evaluates the regularized training loss at every grid point of the plane
/// through `w₁, w₂, w₃` (BN statistics recomputed per point).
pub fn plane_grid(
    w1: &WeightVector,
    w2: &WeightVector,
    w3: &WeightVector,
    config: &MlpConfig,
    data: &Dataset,
    grid: &PlaneGridConfig,
) -> Result<PlaneGrid> {
    if grid.resolution < 2 {
        return Err(Error::InvalidArgument(
            "plane resolution must be at least 2".into(),
        ));
    }
    if !(grid.margin >= 0.0 && grid.margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bad plane margin {}",
            grid.margin
        )));
    }
    let basis = PlaneBasis::new(w1, w2, w3)?;
    let anchors = [basis.project(w1), basis.project(w2), basis.project(w3)];
    let xs = axis(anchors.map(|a| a.0), grid.margin, grid.resolution);
    let ys = axis(anchors.map(|a| a.1), grid.margin, grid.resolution);
    let cells: Vec<(f64, f64)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(x, y)| plane_cell(&basis, x, y, config, data, grid.with_error))
        .collect::<Result<Vec<_>>>()?;
    let loss = values.iter().map(|v| v.0).collect();
    let error = grid
        .with_error
        .then(|| values.iter().map(|v| v.1).collect());
    Ok(PlaneGrid {
        anchors,
        xs,
        ys,
        loss,
        error,
        basis: Some(basis),
    })
}

/// Loss and error of the network at plane coordinates `(x, y)`.
pub fn plane_cell(
    basis: &PlaneBasis,
    x: f64,
    y: f64,
    config: &MlpConfig,
    data: &Dataset,
    with_error: bool,
) -> Result<(f64, f64)> {
    let point = basis.point(x, y);
    let stats = stats_if_needed(&point, config, data.features().view())?;
    let loss = full_loss(&point, config, data.batch(), stats.as_ref())?;
    let error = if with_error {
        predict_eval(&point, config, data.batch(), stats.as_ref())?.error_rate
    } else {
        f64::NAN
    };
    Ok((loss, error))
}

/// A network ready for evaluation; `stats` is required exactly when BN is on.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub weights: WeightVector,
    pub stats: Option<BatchNormStats>,
}

impl EnsembleMember {
    /// Computes BN statistics on `train_set` when the network needs them.
    pub fn prepare(weights: WeightVector, config: &MlpConfig, train_set: &Dataset) -> Result<Self> {
        let stats = stats_if_needed(&weights, config, train_set.features().view())?;
        Ok(EnsembleMember { weights, stats })
    }

    pub fn logits(&self, config: &MlpConfig, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        eval_logits(&self.weights, config, inputs, self.stats.as_ref())
    }
}

/// Averages `softmax(logits / T)` over the members.
pub fn average_probabilities(logit_sets: &[Array2<f64>], temperature: f64) -> Result<Array2<f64>> {
    let first = logit_sets
        .first()
        .ok_or_else(|| Error::EmptyEnsemble("no logits to average".into()))?;
    let mut total = Array2::<f64>::zeros(first.raw_dim());
    for logits in logit_sets {
        if logits.raw_dim() != first.raw_dim() {
            return Err(Error::DimensionMismatch {
                what: "ensemble logits",
                expected: first.len(),
                found: logits.len(),
            });
        }
        total += &softmax((logits / temperature).view());
    }
    total /= logit_sets.len() as f64;
    Ok(total)
}

/// Probability-averaging ensemble with an optional shared temperature.
pub fn ensemble_predict_scaled(
    members: &[EnsembleMember],
    config: &MlpConfig,
    data: &Dataset,
    temperature: f64,
) -> Result<Prediction> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble(
            "at least one model is required".into(),
        ));
    }
    let logits = members
        .par_iter()
        .map(|m| m.logits(config, data.features().view()))
        .collect::<Result<Vec<_>>>()?;
    let probs = average_probabilities(&logits, temperature)?;
    Ok(Prediction::from_probabilities(probs, data.labels()))
}

pub fn ensemble_predict(
    members: &[EnsembleMember],
    config: &MlpConfig,
    data: &Dataset,
) -> Result<Prediction> {
    ensemble_predict_scaled(members, config, data, 1.0)
}

/// Ensemble of `φ(0)` and `φ(t)`.
pub fn curve_point_ensemble(
    spec: &CurveSpec,
    config: &MlpConfig,
    train_set: &Dataset,
    data: &Dataset,
    t: f64,
) -> Result<Prediction> {
    let members = vec![
        EnsembleMember::prepare(spec.point_at(0.0)?, config, train_set)?,
        EnsembleMember::prepare(spec.point_at(t)?, config, train_set)?,
    ];
    ensemble_predict(&members, config, data)
}

/// Members at `count` equally spaced points of the curve; with
/// `interior_only` the endpoints are excluded from the grid.
pub fn curve_ensemble_members(
    spec: &CurveSpec,
    config: &MlpConfig,
    train_set: &Dataset,
    count: usize,
    interior_only: bool,
) -> Result<Vec<EnsembleMember>> {
    if count == 0 {
        return Err(Error::EmptyEnsemble(
            "curve ensemble needs at least one point".into(),
        ));
    }
    let ts: Vec<f64> = if interior_only {
        (1..=count).map(|k| k as f64 / (count + 1) as f64).collect()
    } else {
        t_grid(count)
    };
    ts.par_iter()
        .map(|&t| EnsembleMember::prepare(spec.point_at(t)?, config, train_set))
        .collect()
}

/// Fraction of rows on which the two networks predict different labels.
pub fn disagreement(
    a: &EnsembleMember,
    b: &EnsembleMember,
    config: &MlpConfig,
    inputs: ArrayView2<'_, f64>,
) -> Result<f64> {
    a.weights.check_layout(&b.weights)?;
    if inputs.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let la = a.logits(config, inputs)?;
    let lb = b.logits(config, inputs)?;
    let differ = la
        .rows()
        .into_iter()
        .zip(lb.rows())
        .filter(|(x, y)| argmax(*x) != argmax(*y))
        .count();
    Ok(differ as f64 / inputs.nrows() as f64)
}

/// Mean disagreement over all unordered pairs; zero for fewer than two members.
pub fn mean_pairwise_disagreement(
    members: &[EnsembleMember],
    config: &MlpConfig,
    inputs: ArrayView2<'_, f64>,
) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = (0..members.len())
        .flat_map(|i| (i + 1..members.len()).map(move |j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let values = pairs
        .par_iter()
        .map(|&(i, j)| disagreement(&members[i], &members[j], config, inputs))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub const TEMPERATURE_MIN: f64 = 0.05;
pub const TEMPERATURE_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub nll_at_one: f64,
    pub nll_fitted: f64,
    /// Set when every logit row is constant and no temperature is identifiable.
    pub degenerate: bool,
}

/// Held-out NLL of the probability-averaged ensemble at temperature `T`.
pub fn ensemble_nll(logit_sets: &[Array2<f64>], labels: &[usize], temperature: f64) -> Result<f64> {
    let probs = average_probabilities(logit_sets, temperature)?;
    if probs.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "temperature labels",
            expected: probs.nrows(),
            found: labels.len(),
        });
    }
    let total: f64 = probs
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| -row[y].ln())
        .sum();
    // `+ 0.0` turns the -0.0 of a perfect fit into 0.0
    Ok(total / labels.len() as f64 + 0.0)
}

/// Single shared temperature minimizing held-out ensemble NLL, found by
/// golden-section search on `ln T ∈ [ln 0.05, ln 20]`.
pub fn fit_temperature(logit_sets: &[Array2<f64>], labels: &[usize]) -> Result<TemperatureFit> {
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let nll_at_one = ensemble_nll(logit_sets, labels, 1.0)?;
    let degenerate = logit_sets
        .iter()
        .all(|l| l.rows().into_iter().all(|r| r.iter().all(|&v| v == r[0])));
    if degenerate {
        return Ok(TemperatureFit {
            temperature: 1.0,
            nll_at_one,
            nll_fitted: nll_at_one,
            degenerate: true,
        });
    }
    let objective = |log_t: f64| ensemble_nll(logit_sets, labels, log_t.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (TEMPERATURE_MIN.ln(), TEMPERATURE_MAX.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    while b - a > 1e-9 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d)?;
        }
    }
    let log_t = 0.5 * (a + b);
    let nll_fitted = objective(log_t)?;
    if !nll_fitted.is_finite() {
        return Err(Error::NonFinite("temperature objective".into()));
    }
    Ok(TemperatureFit {
        temperature: log_t.exp(),
        nll_at_one,
        nll_fitted,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::Split;
    use crate::nn::init_params;
    use ndarray::array;

    fn plane_vec(x: f64, y: f64) -> WeightVector {
        let layout = MlpConfig::new(vec![1, 2], false, 0.0).unwrap().layout();
        WeightVector::from_values(layout, vec![x, y, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn hand_gram_schmidt() {
        let (w1, w2, w3) = (
            plane_vec(0.0, 0.0),
            plane_vec(2.0, 0.0),
            plane_vec(1.0, 1.0),
        );
        let basis = PlaneBasis::new(&w1, &w2, &w3).unwrap();
        assert_eq!(basis.u.values(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(basis.v.values(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(basis.project(&w1), (0.0, 0.0));
        assert_eq!(basis.project(&w2), (2.0, 0.0));
        assert_eq!(basis.project(&w3), (1.0, 1.0));
    }

    #[test]
    fn collinear_points_are_rejected() {
        let (w1, w2, w3) = (
            plane_vec(0.0, 0.0),
            plane_vec(2.0, 0.0),
            plane_vec(5.0, 0.0),
        );
        assert!(matches!(
            PlaneBasis::new(&w1, &w2, &w3),
            Err(Error::Collinear(_))
        ));
        assert!(matches!(
            PlaneBasis::new(&w1, &w1, &w3),
            Err(Error::Collinear(_))
        ));
    }

    #[test]
    fn summary_of_constant_metric() {
        let s = MetricSummary::new(&[0.3; 5], &[1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!((s.min, s.max, s.int, s.mean), (0.3, 0.3, 0.3, 0.3));
    }

    fn toy_data() -> Dataset {
        Dataset::new(
            array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.5]],
            vec![0, 1, 1, 0],
            2,
            Split::Test,
        )
        .unwrap()
    }

    #[test]
    fn ensembles_of_copies_match_single_model() {
        let config = MlpConfig::new(vec![2, 4, 2], false, 0.0).unwrap();
        let data = toy_data();
        let w = init_params(&config, 3);
        let single = predict_eval(&w, &config, data.batch(), None).unwrap();
        let member = EnsembleMember::prepare(w, &config, &data).unwrap();
        let one = ensemble_predict(std::slice::from_ref(&member), &config, &data).unwrap();
        let three = ensemble_predict(&vec![member; 3], &config, &data).unwrap();
        assert_eq!(one.error_rate, single.error_rate);
        assert!((one.mean_nll - single.mean_nll).abs() < 1e-15);
        assert_eq!(three.error_rate, single.error_rate);
        assert!((three.mean_nll - single.mean_nll).abs() < 1e-14);
        assert!(ensemble_predict(&[], &config, &data).is_err());
    }

    #[test]
    fn disagreement_basics() {
        let config = MlpConfig::new(vec![2, 4, 2], false, 0.0).unwrap();
        let data = toy_data();
        let a = EnsembleMember::prepare(init_params(&config, 1), &config, &data).unwrap();
        let b = EnsembleMember::prepare(init_params(&config, 2), &config, &data).unwrap();
        let x = data.features().view();
        assert_eq!(disagreement(&a, &a, &config, x).unwrap(), 0.0);
        assert_eq!(
            disagreement(&a, &b, &config, x).unwrap(),
            disagreement(&b, &a, &config, x).unwrap()
        );
    }

    #[test]
    fn calibrated_logits_fit_unit_temperature() {
        // model predicts (0.7, 0.3) everywhere and 70% of labels are class 0
        let row = [0.7f64.ln(), 0.3f64.ln()];
        let logits = Array2::from_shape_fn((10, 2), |(_, j)| row[j]);
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 7)).collect();
        let fit = fit_temperature(std::slice::from_ref(&logits), &labels).unwrap();
        assert!((fit.temperature - 1.0).abs() < 1e-6, "{}", fit.temperature);
        assert!(fit.nll_fitted <= fit.nll_at_one + 1e-15);

        let tripled = fit_temperature(&[&logits * 3.0], &labels).unwrap();
        assert!((tripled.temperature - 3.0 * fit.temperature).abs() < 1e-5);
    }

    #[test]
    fn constant_logits_are_degenerate() {
        let logits = Array2::from_elem((4, 3), 0.5);
        let fit = fit_temperature(&[logits], &[0, 1, 2, 0]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.temperature, 1.0);
    }

    #[test]
    fn high_temperature_flattens_probabilities() {
        let logits = array![[5.0, -2.0, 1.0]];
        let p = average_probabilities(&[logits], 1e9).unwrap();
        for &v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-8);
        }
    }
}
