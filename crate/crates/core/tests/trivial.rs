use modeconnect::data_io::{gen_synthetic, SyntheticKind};
use modeconnect::nn::{init_params, predict_eval, MlpConfig};
use modeconnect::train::{train_model, LrSchedule, TrainConfig};
use modeconnect::trivial::trivial_check;

#[test]
fn shrinking_a_fitted_net_raises_its_loss_but_not_its_error() {
    let data = gen_synthetic(SyntheticKind::GaussianBlobs, 150, 0.3, 8).unwrap();
    let config = MlpConfig::new(vec![2, 16, 16, 3], false, 1e-4).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 16,
        schedule: LrSchedule::standard(0.05),
        momentum: 0.9,
        seed: 1,
    };
    let (w, _) = train_model(&init_params(&config, 2), &config, &data, &cfg).unwrap();
    assert!(
        predict_eval(&w, &config, data.batch(), None)
            .unwrap()
            .error_rate
            < 0.05
    );
    let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let report = trivial_check(&w, &config, &data, &grid).unwrap();
    assert!(report.argmax_invariant);
    assert!(report.logit_ratio_error < 1e-9);
    assert!(report.error.iter().all(|&e| e == report.error[9]));
    assert!(report.loss[4] >= report.loss[9]);
    assert!(report.loss.windows(2).all(|p| p[0] >= p[1]));
}
