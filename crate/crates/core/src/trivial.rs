//! The rescaling path of a ReLU network through the origin of weight space.
//!
//! Scaling layer `i` weights by `t` and its bias by `tⁱ` multiplies the
//! logits by `tⁿ`, so predictions are unchanged for every `t > 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{Dataset, TabularReport};
use crate::error::{Error, Result};
use crate::nn::{argmax, eval_logits, predict_eval, MlpConfig, ParamKind, WeightVector};

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "t must lie in [0, 1], got {t}"
        )))
    }
}

pub fn trivial_point(w: &WeightVector, config: &MlpConfig, t: f64) -> Result<WeightVector> {
    if config.batch_norm {
        return Err(Error::BatchNormUnsupported);
    }
    check_t(t)?;
    let layout = config.layout();
    if **w.layout() != *layout {
        return Err(Error::LayoutMismatch);
    }
    let mut out = w.clone();
    if t == 1.0 {
        return Ok(out);
    }
    for block in layout.blocks() {
        let factor = match block.kind {
            ParamKind::Weight => t,
            ParamKind::Bias => t.powi(block.layer as i32 + 1),
            ParamKind::BnScale | ParamKind::BnShift => unreachable!("batch norm rejected above"),
        };
        for v in &mut out.values_mut()[block.range()] {
            *v *= factor;
        }
    }
    Ok(out)
}

/// `ŵ₁ → 0 → ŵ₂` as two rescaling halves; `s = 1/2` is the origin, where
/// every prediction collapses to the lowest class index.
pub fn trivial_path_point(
    w1: &WeightVector,
    w2: &WeightVector,
    config: &MlpConfig,
    s: f64,
) -> Result<WeightVector> {
    check_t(s)?;
    w1.check_layout(w2)?;
    if s <= 0.5 {
        trivial_point(w1, config, 1.0 - 2.0 * s)
    } else {
        trivial_point(w2, config, 2.0 * s - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrivialReport {
    pub t: Vec<f64>,
    pub error: Vec<f64>,
    /// Mean NLL; shrinking logits makes the network less confident.
    pub loss: Vec<f64>,
    pub argmax_invariant: bool,
    /// Largest `max|z(t) − tⁿ z(1)| / max|tⁿ z(1)|` over the grid.
    pub logit_ratio_error: f64,
}

impl TabularReport for TrivialReport {
    fn columns(&self) -> Vec<&'static str> {
        vec!["t", "error", "loss"]
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.t.len())
            .map(|i| vec![self.t[i], self.error[i], self.loss[i]])
            .collect()
    }
}

pub fn trivial_check(
    w: &WeightVector,
    config: &MlpConfig,
    data: &Dataset,
    t_grid: &[f64],
) -> Result<TrivialReport> {
    if let Some(&t) = t_grid.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "trivial check needs t in (0, 1], got {t}"
        )));
    }
    let inputs = data.features().view();
    let base = eval_logits(w, config, inputs, None)?;
    let base_labels: Vec<usize> = base.rows().into_iter().map(argmax).collect();
    let depth = config.num_layers() as i32;
    let per_t = t_grid
        .par_iter()
        .map(|&t| {
            let p = trivial_point(w, config, t)?;
            let logits = eval_logits(&p, config, inputs, None)?;
            let scale = t.powi(depth);
            let expected = &base * scale;
            let diff = (&logits - &expected)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let size = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let ratio_error = if size > 0.0 { diff / size } else { diff };
            let same = logits
                .rows()
                .into_iter()
                .zip(&base_labels)
                .all(|(row, &y)| argmax(row) == y);
            let pred = predict_eval(&p, config, data.batch(), None)?;
            Ok((same, ratio_error, pred.error_rate, pred.mean_nll))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrivialReport {
        t: t_grid.to_vec(),
        error: per_t.iter().map(|r| r.2).collect(),
        loss: per_t.iter().map(|r| r.3).collect(),
        argmax_invariant: per_t.iter().all(|r| r.0),
        logit_ratio_error: per_t.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{gen_synthetic, SyntheticKind};
    use crate::nn::init_params;

    fn net() -> (MlpConfig, WeightVector) {
        let config = MlpConfig::new(vec![2, 5, 3], false, 0.0).unwrap();
        let w = init_params(&config, 8);
        (config, w)
    }

    #[test]
    fn endpoints_of_the_path() {
        let (config, w) = net();
        assert_eq!(trivial_point(&w, &config, 1.0).unwrap(), w);
        let zero = trivial_point(&w, &config, 0.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let w2 = init_params(&config, 9);
        assert_eq!(trivial_path_point(&w, &w2, &config, 0.0).unwrap(), w);
        assert_eq!(trivial_path_point(&w, &w2, &config, 1.0).unwrap(), w2);
        assert_eq!(trivial_path_point(&w, &w2, &config, 0.5).unwrap(), zero);
    }

    #[test]
    fn two_layers_at_half_quarter_the_logits() {
        let (config, mut w) = net();
        for v in w.values_mut() {
            *v += 0.3;
        }
        let data = gen_synthetic(SyntheticKind::GaussianBlobs, 30, 0.5, 1).unwrap();
        let x = data.features().view();
        let full = eval_logits(&w, &config, x, None).unwrap();
        let half =
            eval_logits(&trivial_point(&w, &config, 0.5).unwrap(), &config, x, None).unwrap();
        for (a, b) in half.iter().zip(full.iter()) {
            assert!((a - 0.25 * b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn batch_norm_and_bad_grids_are_rejected() {
        let config = MlpConfig::new(vec![2, 5, 3], true, 0.0).unwrap();
        let w = init_params(&config, 1);
        assert!(matches!(
            trivial_point(&w, &config, 0.5),
            Err(Error::BatchNormUnsupported)
        ));
        let (config, w) = net();
        let data = gen_synthetic(SyntheticKind::GaussianBlobs, 12, 0.5, 1).unwrap();
        assert!(trivial_check(&w, &config, &data, &[0.0, 0.5]).is_err());
        assert!(trivial_check(&w, &config, &data, &[1.5]).is_err());
    }

    #[test]
    fn random_nets_keep_their_predictions() {
        let data = gen_synthetic(SyntheticKind::TwoSpirals, 60, 0.1, 1).unwrap();
        let config = MlpConfig::new(vec![2, 7, 6, 2], false, 0.0).unwrap();
        let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        for seed in 0..5 {
            let report = trivial_check(&init_params(&config, seed), &config, &data, &grid).unwrap();
            assert!(report.argmax_invariant);
            assert!(report.logit_ratio_error < 1e-9);
            assert!(report.error.iter().all(|&e| e == report.error[9]));
        }
    }
}
