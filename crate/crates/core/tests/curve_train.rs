use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use modeconnect::curve_train::{
    grid_bend_gradient, loss_at, loss_uniform_t, stochastic_bend_gradient, train_curve,
    CurveTrainConfig, PointObjective,
};
use modeconnect::curves::{CurveKind, CurveSpec, Jitter};
use modeconnect::data_io::{gen_synthetic, Dataset, SyntheticKind};
use modeconnect::nn::{init_params, loss_and_grad, MlpConfig, WeightVector};
use modeconnect::train::LrSchedule;
use modeconnect::Result;

struct FullBatch<'a> {
    config: &'a MlpConfig,
    data: &'a Dataset,
}

impl PointObjective for FullBatch<'_> {
    fn loss_and_grad(&mut self, point: &WeightVector) -> Result<(f64, WeightVector)> {
        loss_and_grad(point, self.config, self.data.batch())
    }
}

fn setup() -> (MlpConfig, Dataset, CurveSpec) {
    let data = gen_synthetic(SyntheticKind::GaussianBlobs, 90, 0.7, 5).unwrap();
    let config = MlpConfig::new(vec![2, 6, 3], false, 1e-3).unwrap();
    let spec = CurveSpec::with_initial_bends(
        CurveKind::Bezier,
        init_params(&config, 1),
        init_params(&config, 2),
        2,
        Some(Jitter {
            seed: 3,
            scale: 0.3,
        }),
    )
    .unwrap();
    (config, data, spec)
}

#[test]
fn single_sample_gradients_are_unbiased() {
    let (config, data, spec) = setup();
    let target = grid_bend_gradient(&spec, &config, &data, 241).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let directions: Vec<Vec<WeightVector>> = (0..3)
        .map(|k| {
            spec.bends()
                .iter()
                .enumerate()
                .map(|(b, _)| init_params(&config, 100 + 10 * k + b as u64))
                .collect()
        })
        .collect();
    let project = |g: &[WeightVector], d: &[WeightVector]| -> f64 {
        g.iter().zip(d).map(|(a, b)| a.dot(b)).sum()
    };
    let mut objective = FullBatch {
        config: &config,
        data: &data,
    };
    let draws = 10_000;
    let mut samples = vec![Vec::with_capacity(draws); directions.len()];
    for _ in 0..draws {
        let t: f64 = rng.random();
        let (_, grads) = stochastic_bend_gradient(&spec, &mut objective, t).unwrap();
        for (s, d) in samples.iter_mut().zip(&directions) {
            s.push(project(&grads, d));
        }
    }
    for (s, d) in samples.iter().zip(&directions) {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let expected = project(&target, d);
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean {mean} vs grid {expected}, se {se}"
        );
    }
}

#[test]
fn grid_estimate_matches_monte_carlo() {
    let (config, data, spec) = setup();
    let grid = loss_uniform_t(&spec, &config, &data, 121).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| loss_at(&spec, &config, &data, rng.random()).unwrap())
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let se = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!(
        (mean - grid).abs() <= 3.0 * se,
        "{mean} vs {grid} (se {se})"
    );
}

#[test]
fn training_does_not_increase_the_curve_loss() {
    let data = gen_synthetic(SyntheticKind::GaussianBlobs, 120, 0.3, 6).unwrap();
    let config = MlpConfig::new(vec![2, 8, 3], false, 1e-4).unwrap();
    let init = CurveSpec::with_initial_bends(
        CurveKind::Polychain,
        init_params(&config, 1),
        init_params(&config, 2),
        1,
        None,
    )
    .unwrap();
    let cfg = CurveTrainConfig {
        iterations: 400,
        batch_size: 32,
        learning_rate: LrSchedule::Constant { lr: 0.05 },
        momentum: 0.9,
        weight_decay_on_bends: false,
        seed: 4,
    };
    let (trained, history) = train_curve(&init, &config, &data, &cfg).unwrap();
    assert_eq!(history.len(), 400);
    assert!(history
        .t
        .iter()
        .all(|t| t.is_some_and(|t| (0.0..=1.0).contains(&t))));
    let before = loss_uniform_t(&init, &config, &data, 121).unwrap();
    let after = loss_uniform_t(&trained, &config, &data, 121).unwrap();
    assert!(after <= before, "{after} > {before}");
}
