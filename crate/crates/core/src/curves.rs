//! Parametric curves in weight space.
//!
//! Every supported curve is an affine combination of its control points
//! `ŵ₁, w₁ … w_n, ŵ₂` with coefficients that depend only on `t`, so a point
//! costs `O(|net|)` and the Jacobian with respect to bend `i` is the scalar
//! coefficient of that bend times the identity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Segment,
    Polychain,
    Bezier,
}

impl std::fmt::Display for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CurveKind::Segment => "segment",
            CurveKind::Polychain => "polychain",
            CurveKind::Bezier => "bezier",
        })
    }
}

impl std::str::FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment" => Ok(CurveKind::Segment),
            "polychain" => Ok(CurveKind::Polychain),
            "bezier" => Ok(CurveKind::Bezier),
            other => Err(Error::InvalidArgument(format!(
                "unknown curve kind '{other}' (expected segment, polychain or bezier)"
            ))),
        }
    }
}

/// Coefficients of `(ŵ₁, w₁ … w_n, ŵ₂)` at one value of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveCoefficients {
    pub t: f64,
    pub coeffs: Vec<f64>,
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("t = {t} is outside [0, 1]")))
    }
}

fn check_bend_count(kind: CurveKind, n_bends: usize) -> Result<()> {
    match (kind, n_bends) {
        (CurveKind::Segment, 0) => Ok(()),
        (CurveKind::Segment, n) => Err(Error::InvalidArgument(format!(
            "a segment has no bends, got {n}"
        ))),
        (_, 0) => Err(Error::InvalidArgument(format!(
            "a {kind} needs at least one bend"
        ))),
        _ => Ok(()),
    }
}

/// Polychain segment holding `t` and the local parameter within it.
/// Knots belong to the segment on their left.
fn polychain_segment(n_bends: usize, t: f64) -> (usize, f64) {
    let scaled = t * (n_bends + 1) as f64;
    let index = (scaled.ceil() as usize).saturating_sub(1).min(n_bends);
    (index, scaled - index as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein(degree: usize, t: f64) -> Vec<f64> {
    (0..=degree)
        .map(|i| binomial(degree, i) * t.powi(i as i32) * (1.0 - t).powi((degree - i) as i32))
        .collect()
}

pub fn coefficients(kind: CurveKind, n_bends: usize, t: f64) -> Result<CurveCoefficients> {
    check_t(t)?;
    check_bend_count(kind, n_bends)?;
    let coeffs = match kind {
        CurveKind::Segment | CurveKind::Polychain => {
            let (index, s) = polychain_segment(n_bends, t);
            let mut coeffs = vec![0.0; n_bends + 2];
            coeffs[index] = 1.0 - s;
            coeffs[index + 1] = s;
            coeffs
        }
        CurveKind::Bezier => bernstein(n_bends + 1, t),
    };
    Ok(CurveCoefficients { t, coeffs })
}

/// Coefficients of `dφ/dt`, so that `φ′(t) = Σ dᵢ pᵢ` over the control points.
pub fn derivative_coefficients(kind: CurveKind, n_bends: usize, t: f64) -> Result<Vec<f64>> {
    check_t(t)?;
    check_bend_count(kind, n_bends)?;
    let mut out = vec![0.0; n_bends + 2];
    match kind {
        CurveKind::Segment | CurveKind::Polychain => {
            let (index, _) = polychain_segment(n_bends, t);
            let rate = (n_bends + 1) as f64;
            out[index] = -rate;
            out[index + 1] = rate;
        }
        CurveKind::Bezier => {
            let degree = n_bends + 1;
            let lower = bernstein(degree - 1, t);
            for (i, slot) in out.iter_mut().enumerate() {
                let left = if i > 0 { lower[i - 1] } else { 0.0 };
                let right = if i < degree { lower[i] } else { 0.0 };
                *slot = degree as f64 * (left - right);
            }
        }
    }
    Ok(out)
}

/// `count` equally spaced values covering `[0, 1]` with exact endpoints.
pub fn t_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

/// A curve `φ_θ` with fixed endpoints and trainable bends.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    kind: CurveKind,
    start: WeightVector,
    end: WeightVector,
    bends: Vec<WeightVector>,
}

impl CurveSpec {
    pub fn new(
        kind: CurveKind,
        start: WeightVector,
        end: WeightVector,
        bends: Vec<WeightVector>,
    ) -> Result<Self> {
        check_bend_count(kind, bends.len())?;
        start.check_layout(&end)?;
        for bend in &bends {
            start.check_layout(bend)?;
        }
        Ok(CurveSpec {
            kind,
            start,
            end,
            bends,
        })
    }

    pub fn segment(start: WeightVector, end: WeightVector) -> Result<Self> {
        CurveSpec::new(CurveKind::Segment, start, end, Vec::new())
    }

    /// Curve with bends spread evenly over the segment between the endpoints.
    pub fn with_initial_bends(
        kind: CurveKind,
        start: WeightVector,
        end: WeightVector,
        n_bends: usize,
        jitter: Option<Jitter>,
    ) -> Result<Self> {
        let bends = if kind == CurveKind::Segment {
            Vec::new()
        } else {
            init_bends(&start, &end, n_bends, jitter)?
        };
        CurveSpec::new(kind, start, end, bends)
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn start(&self) -> &WeightVector {
        &self.start
    }

    pub fn end(&self) -> &WeightVector {
        &self.end
    }

    pub fn bends(&self) -> &[WeightVector] {
        &self.bends
    }

    pub fn bends_mut(&mut self) -> &mut [WeightVector] {
        &mut self.bends
    }

    pub fn n_bends(&self) -> usize {
        self.bends.len()
    }

    /// `ŵ₁, w₁ … w_n, ŵ₂` in coefficient order.
    pub fn control_points(&self) -> impl Iterator<Item = &WeightVector> {
        std::iter::once(&self.start)
            .chain(self.bends.iter())
            .chain(std::iter::once(&self.end))
    }

    pub fn coefficients(&self, t: f64) -> Result<CurveCoefficients> {
        coefficients(self.kind, self.n_bends(), t)
    }

    fn combine(&self, coeffs: &[f64]) -> WeightVector {
        // Zero coefficients are skipped and the first term is a pure scaling,
        // which keeps endpoint evaluations bit-exact. Coefficients sum to one,
        // so identical control points give that point back exactly.
        let active: Vec<(f64, &WeightVector)> = coeffs
            .iter()
            .zip(self.control_points())
            .filter(|(c, _)| **c != 0.0)
            .map(|(&c, p)| (c, p))
            .collect();
        let Some(&(c0, p0)) = active.first() else {
            return WeightVector::zeros(self.start.layout().clone());
        };
        if active[1..].iter().all(|(_, p)| p.values() == p0.values()) {
            return p0.clone();
        }
        let mut out = p0.clone();
        if c0 != 1.0 {
            out.scale(c0);
        }
        for &(c, p) in &active[1..] {
            out.axpy(c, p);
        }
        out
    }

    pub fn point_at(&self, t: f64) -> Result<WeightVector> {
        Ok(self.combine(&self.coefficients(t)?.coeffs))
    }

    pub fn velocity_at(&self, t: f64) -> Result<WeightVector> {
        let d = derivative_coefficients(self.kind, self.n_bends(), t)?;
        let mut out = WeightVector::zeros(self.start.layout().clone());
        for (&c, p) in d.iter().zip(self.control_points()) {
            if c != 0.0 {
                out.axpy(c, p);
            }
        }
        Ok(out)
    }

    /// `‖φ′(t)‖` from the analytic parametrization.
    pub fn speed_at(&self, t: f64) -> Result<f64> {
        Ok(self.velocity_at(t)?.norm())
    }
}

/// Map `∂L/∂φ` at `φ_θ(t)` to `∂L/∂wᵢ` for every bend.
pub fn backprop_to_bends(
    spec: &CurveSpec,
    t: f64,
    grad_phi: &WeightVector,
) -> Result<Vec<WeightVector>> {
    spec.start.check_layout(grad_phi)?;
    let coeffs = spec.coefficients(t)?.coeffs;
    Ok(coeffs[1..=spec.n_bends()]
        .iter()
        .map(|&c| {
            let mut g = grad_phi.clone();
            g.scale(c);
            g
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcLength {
    pub length: f64,
    /// Curve length over the endpoint distance.
    pub ratio: f64,
}

/// Length of the polyline through `grid_size` equally spaced points of the curve.
pub fn polyline_length(spec: &CurveSpec, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "arclength needs at least 2 grid points, got {grid_size}"
        )));
    }
    let points = t_grid(grid_size)
        .into_iter()
        .map(|t| spec.point_at(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(points.windows(2).map(|p| p[0].distance(&p[1])).sum())
}

pub fn arclength(spec: &CurveSpec, grid_size: usize) -> Result<ArcLength> {
    let length = polyline_length(spec, grid_size)?;
    let chord = spec.start.distance(&spec.end);
    if chord == 0.0 {
        return Err(Error::CoincidentEndpoints);
    }
    Ok(ArcLength {
        length,
        ratio: length / chord,
    })
}

/// Gaussian perturbation applied to freshly placed bends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub seed: u64,
    /// Per-coordinate standard deviation.
    pub scale: f64,
}

/// Bends at fractions `k / (n + 1)` of the segment `ŵ₁ → ŵ₂`.
pub fn init_bends(
    start: &WeightVector,
    end: &WeightVector,
    n: usize,
    jitter: Option<Jitter>,
) -> Result<Vec<WeightVector>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "at least one bend is required".into(),
        ));
    }
    start.check_layout(end)?;
    let mut rng = jitter.map(|j| ChaCha8Rng::seed_from_u64(j.seed));
    (1..=n)
        .map(|k| {
            let f = k as f64 / (n + 1) as f64;
            let mut bend = start.clone();
            bend.scale(1.0 - f);
            bend.axpy(f, end);
            if let (Some(j), Some(rng)) = (jitter, rng.as_mut()) {
                let normal = Normal::new(0.0, j.scale).map_err(|e| {
                    Error::InvalidArgument(format!("jitter scale {}: {e}", j.scale))
                })?;
                bend.values_mut()
                    .iter_mut()
                    .for_each(|v| *v += normal.sample(rng));
            }
            Ok(bend)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, loss_and_grad, Batch, Layout, MlpConfig};
    use ndarray::Array2;
    use std::sync::Arc;

    fn plane_layout() -> Arc<Layout> {
        // the first two coordinates are the 1x2 weight matrix; the biases stay zero
        let config = MlpConfig::new(vec![1, 2], false, 0.0).unwrap();
        let layout = config.layout();
        assert_eq!(layout.param_count(), 4);
        layout
    }

    fn vec2(layout: &Arc<Layout>, x: f64, y: f64) -> WeightVector {
        WeightVector::from_values(layout.clone(), vec![x, y, 0.0, 0.0]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn polychain_one_bend_quarter() {
        let c = coefficients(CurveKind::Polychain, 1, 0.25).unwrap();
        assert_eq!(c.coeffs, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn quadratic_bezier_midpoint() {
        let c = coefficients(CurveKind::Bezier, 1, 0.5).unwrap();
        assert_eq!(c.coeffs, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn endpoint_coefficients() {
        for (kind, n) in [
            (CurveKind::Segment, 0),
            (CurveKind::Polychain, 1),
            (CurveKind::Polychain, 3),
            (CurveKind::Bezier, 1),
            (CurveKind::Bezier, 4),
        ] {
            let at0 = coefficients(kind, n, 0.0).unwrap().coeffs;
            let at1 = coefficients(kind, n, 1.0).unwrap().coeffs;
            let mut e0 = vec![0.0; n + 2];
            e0[0] = 1.0;
            let mut e1 = vec![0.0; n + 2];
            e1[n + 1] = 1.0;
            assert_eq!(at0, e0, "{kind} n={n}");
            assert_eq!(at1, e1, "{kind} n={n}");
        }
    }

    #[test]
    fn coefficients_reject_bad_inputs() {
        assert!(coefficients(CurveKind::Bezier, 1, -0.1).is_err());
        assert!(coefficients(CurveKind::Bezier, 1, 1.5).is_err());
        assert!(coefficients(CurveKind::Polychain, 0, 0.5).is_err());
        assert!(coefficients(CurveKind::Segment, 2, 0.5).is_err());
        assert_eq!(
            coefficients(CurveKind::Segment, 0, 0.3).unwrap().coeffs,
            vec![0.7, 0.3]
        );
    }

    #[test]
    fn point_at_hits_endpoints_and_bend() {
        let layout = plane_layout();
        let a = vec2(&layout, 0.3, -1.7);
        let b = vec2(&layout, 2.1, 0.9);
        let theta = vec2(&layout, 1.0, 1.0);
        for kind in [CurveKind::Polychain, CurveKind::Bezier] {
            let spec = CurveSpec::new(kind, a.clone(), b.clone(), vec![theta.clone()]).unwrap();
            assert_eq!(spec.point_at(0.0).unwrap(), a);
            assert_eq!(spec.point_at(1.0).unwrap(), b);
        }
        let poly = CurveSpec::new(
            CurveKind::Polychain,
            a.clone(),
            b.clone(),
            vec![theta.clone()],
        )
        .unwrap();
        assert_eq!(poly.point_at(0.5).unwrap(), theta);
    }

    #[test]
    fn quadratic_bezier_in_plane() {
        let layout = plane_layout();
        let spec = CurveSpec::new(
            CurveKind::Bezier,
            vec2(&layout, 0.0, 0.0),
            vec2(&layout, 2.0, 0.0),
            vec![vec2(&layout, 1.0, 1.0)],
        )
        .unwrap();
        let p = spec.point_at(0.5).unwrap();
        assert!(close(&p.values()[..2], &[1.0, 0.5], 1e-15));
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let a = init_params(&MlpConfig::new(vec![2, 3, 2], false, 0.0).unwrap(), 0);
        let b = init_params(&MlpConfig::new(vec![2, 4, 2], false, 0.0).unwrap(), 0);
        assert!(matches!(
            CurveSpec::segment(a, b),
            Err(Error::LayoutMismatch)
        ));
    }

    #[test]
    fn bend_gradient_is_scaled_copy() {
        let layout = plane_layout();
        let spec = CurveSpec::new(
            CurveKind::Polychain,
            vec2(&layout, 0.0, 0.0),
            vec2(&layout, 2.0, 0.0),
            vec![vec2(&layout, 1.0, 1.0)],
        )
        .unwrap();
        let g = vec2(&layout, 3.0, -4.0);
        let out = backprop_to_bends(&spec, 0.25, &g).unwrap();
        assert_eq!(out[0].values(), &[1.5, -2.0, 0.0, 0.0]);
        let out = backprop_to_bends(&spec, 0.0, &g).unwrap();
        assert!(out[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let config = MlpConfig::new(vec![2, 3, 2], false, 0.01).unwrap();
        let inputs = Array2::from_shape_fn((6, 2), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin());
        let labels = vec![0, 1, 1, 0, 1, 0];
        let batch = Batch::new(inputs.view(), &labels).unwrap();
        let start = init_params(&config, 1);
        let end = init_params(&config, 2);
        for kind in [CurveKind::Polychain, CurveKind::Bezier] {
            let spec = CurveSpec::with_initial_bends(
                kind,
                start.clone(),
                end.clone(),
                2,
                Some(Jitter {
                    seed: 5,
                    scale: 0.3,
                }),
            )
            .unwrap();
            let t = 0.41;
            let (_, grad_phi) = loss_and_grad(&spec.point_at(t).unwrap(), &config, batch).unwrap();
            let grads = backprop_to_bends(&spec, t, &grad_phi).unwrap();
            let h = 1e-5;
            for (b, grad) in grads.iter().enumerate() {
                for i in 0..grad.len() {
                    let eval = |delta: f64| {
                        let mut s = spec.clone();
                        s.bends_mut()[b].values_mut()[i] += delta;
                        loss_and_grad(&s.point_at(t).unwrap(), &config, batch)
                            .unwrap()
                            .0
                    };
                    let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                    let a = grad.values()[i];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
                    assert!(rel < 1e-5, "{kind} bend {b} coord {i}: {a} vs {numeric}");
                }
            }
        }
    }

    #[test]
    fn arclength_examples() {
        let layout = plane_layout();
        let a = vec2(&layout, 0.0, 0.0);
        let b = vec2(&layout, 2.0, 0.0);
        let right = CurveSpec::new(
            CurveKind::Polychain,
            a.clone(),
            b.clone(),
            vec![vec2(&layout, 1.0, 1.0)],
        )
        .unwrap();
        let arc = arclength(&right, 121).unwrap();
        assert!((arc.length - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((arc.ratio - 2f64.sqrt()).abs() < 1e-12);

        let straight = CurveSpec::new(
            CurveKind::Polychain,
            a.clone(),
            b.clone(),
            vec![vec2(&layout, 1.0, 0.0)],
        )
        .unwrap();
        assert!((arclength(&straight, 121).unwrap().ratio - 1.0).abs() < 1e-12);

        let degenerate = CurveSpec::segment(a.clone(), a.clone()).unwrap();
        assert!(matches!(
            arclength(&degenerate, 121),
            Err(Error::CoincidentEndpoints)
        ));
        assert!(arclength(&right, 1).is_err());
    }

    #[test]
    fn init_bends_spacing() {
        let layout = plane_layout();
        let a = vec2(&layout, 0.0, 4.0);
        let b = vec2(&layout, 8.0, 0.0);
        let one = init_bends(&a, &b, 1, None).unwrap();
        assert_eq!(one[0].values(), &[4.0, 2.0, 0.0, 0.0]);
        let three = init_bends(&a, &b, 3, None).unwrap();
        assert_eq!(three[0].values(), &[2.0, 3.0, 0.0, 0.0]);
        assert_eq!(three[1].values(), &[4.0, 2.0, 0.0, 0.0]);
        assert_eq!(three[2].values(), &[6.0, 1.0, 0.0, 0.0]);
        assert_eq!(three, init_bends(&a, &b, 3, None).unwrap());
        let j = Some(Jitter {
            seed: 3,
            scale: 0.1,
        });
        assert_eq!(
            init_bends(&a, &b, 2, j).unwrap(),
            init_bends(&a, &b, 2, j).unwrap()
        );
        assert_ne!(
            init_bends(&a, &b, 2, j).unwrap(),
            init_bends(&a, &b, 2, None).unwrap()
        );
        assert!(init_bends(&a, &b, 0, None).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let config = MlpConfig::new(vec![2, 3, 2], false, 0.0).unwrap();
        let start = init_params(&config, 1);
        let end = init_params(&config, 2);
        for kind in [CurveKind::Polychain, CurveKind::Bezier] {
            let spec = CurveSpec::with_initial_bends(
                kind,
                start.clone(),
                end.clone(),
                3,
                Some(Jitter {
                    seed: 9,
                    scale: 0.5,
                }),
            )
            .unwrap();
            // interior points away from polychain knots
            for t in [0.1, 0.37, 0.62, 0.9] {
                let h = 1e-6;
                let fd = spec
                    .point_at(t + h)
                    .unwrap()
                    .sub(&spec.point_at(t - h).unwrap());
                let v = spec.velocity_at(t).unwrap();
                for (a, b) in v.values().iter().zip(fd.values()) {
                    assert!(
                        (a - b / (2.0 * h)).abs() < 1e-6 * a.abs().max(1.0),
                        "{kind}"
                    );
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kind_strategy() -> impl Strategy<Value = (CurveKind, usize)> {
            prop_oneof![
                Just((CurveKind::Segment, 0usize)),
                (1usize..6).prop_map(|n| (CurveKind::Polychain, n)),
                (1usize..6).prop_map(|n| (CurveKind::Bezier, n)),
            ]
        }

        proptest! {
            #[test]
            fn coefficients_are_affine((kind, n) in kind_strategy(), t in 0.0f64..=1.0) {
                let c = coefficients(kind, n, t).unwrap().coeffs;
                prop_assert!((c.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
                if kind != CurveKind::Bezier {
                    prop_assert!(c.iter().filter(|v| **v != 0.0).count() <= 2);
                }
            }

            #[test]
            fn polychain_is_continuous_at_knots(n in 1usize..6, seed in any::<u64>()) {
                let config = MlpConfig::new(vec![2, 3, 2], false, 0.0).unwrap();
                let spec = CurveSpec::with_initial_bends(
                    CurveKind::Polychain,
                    init_params(&config, seed),
                    init_params(&config, seed.wrapping_add(1)),
                    n,
                    Some(Jitter { seed, scale: 1.0 }),
                ).unwrap();
                for k in 1..=n {
                    let knot = k as f64 / (n + 1) as f64;
                    let left = spec.point_at(knot).unwrap();
                    let right = spec.point_at((knot + 1e-15).min(1.0)).unwrap();
                    prop_assert!(left.distance(&right) <= 1e-12 * (1.0 + left.norm()));
                    let bend = &spec.bends()[k - 1];
                    prop_assert!(left.distance(bend) <= 1e-12 * (1.0 + bend.norm()));
                }
            }

            #[test]
            fn bezier_is_never_shorter_than_chord(
                n in 1usize..4,
                seed in any::<u64>(),
                grid in 2usize..50,
            ) {
                let config = MlpConfig::new(vec![2, 2, 2], false, 0.0).unwrap();
                let spec = CurveSpec::with_initial_bends(
                    CurveKind::Bezier,
                    init_params(&config, seed),
                    init_params(&config, seed.wrapping_add(7)),
                    n,
                    Some(Jitter { seed, scale: 0.5 }),
                ).unwrap();
                prop_assert!(arclength(&spec, grid).unwrap().ratio >= 1.0 - 1e-12);
                let end = spec.point_at(1.0).unwrap();
                prop_assert!(end.distance(spec.end()) <= 1e-14);
            }
        }
    }
}
