use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use modeconnect::curve_train::{loss_profile, train_curve, CurveTrainConfig, DEFAULT_GRID};
use modeconnect::curves::{CurveKind, CurveSpec, Jitter};
use modeconnect::data_io::{
    load_checkpoint, load_curve, save_checkpoint, save_curve, write_report, Dataset, ReportFormat,
    TabularReport,
};
use modeconnect::eval::{
    curve_ensemble_members, curve_report, ensemble_predict_scaled, fit_temperature,
    mean_pairwise_disagreement, plane_grid, point_metrics, EnsembleMember, TemperatureFit,
};
use modeconnect::fge::{
    fge_run, fge_summary, pretrain, FgeManifest, FgeRunConfig, ManifestEntry, PretrainConfig,
};
use modeconnect::nn::{init_params, predict_eval, MlpConfig, WeightVector};
use modeconnect::rng::{derive_seed, stream};
use modeconnect::sweep::{run_sweep, SweepConfig};
use modeconnect::train::{train_model, TrainConfig};
use modeconnect::trivial::trivial_check;
use modeconnect::{Error, Result};

use crate::config::{check_t_grid, RunConfig};
use crate::data::{self, Splits};

/// Which of the fixed init/train sub-stream pairs a `train` run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Replica {
    A,
    B,
    C,
}

impl Replica {
    fn streams(self) -> (u64, u64) {
        match self {
            Replica::A => (stream::INIT_A, stream::TRAIN_A),
            Replica::B => (stream::INIT_B, stream::TRAIN_B),
            Replica::C => (stream::INIT_C, stream::TRAIN_C),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
}

impl Context {
    fn splits(&self) -> Result<Splits> {
        data::load(RunConfig::require(&self.config.data, "data")?, self.seed).map_err(|e| match e {
            Error::Io(io) => Error::InvalidArgument(format!("cannot read data: {io}")),
            other => other,
        })
    }

    fn output(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.config.output.clone()).ok_or_else(|| {
            Error::InvalidConfig("no output path: pass --out or set 'output'".into())
        })
    }

    fn net(&self, data: &Dataset) -> Result<MlpConfig> {
        RunConfig::require(&self.config.net, "net")?.build(data.feature_dim(), data.class_count())
    }

    fn curve_train(&self) -> Result<CurveTrainConfig> {
        let curve = RunConfig::require(&self.config.curve, "curve")?;
        let cfg = RunConfig::require(&curve.train, "curve.train")?;
        Ok(CurveTrainConfig {
            seed: derive_seed(self.seed, stream::CURVE),
            ..cfg.clone()
        })
    }
}

fn check_fits(config: &MlpConfig, data: &Dataset) -> Result<()> {
    let sizes = &config.layer_sizes;
    let (inputs, classes) = (sizes[0], sizes[sizes.len() - 1]);
    if inputs != data.feature_dim() || classes != data.class_count() {
        return Err(Error::InvalidArgument(format!(
            "network maps {inputs} features to {classes} classes but the data has {} features and {} classes",
            data.feature_dim(),
            data.class_count()
        )));
    }
    Ok(())
}

fn load_same_arch(paths: &[PathBuf]) -> Result<(Vec<WeightVector>, MlpConfig)> {
    let mut weights = Vec::with_capacity(paths.len());
    let mut config: Option<MlpConfig> = None;
    for p in paths {
        let (w, c, _) = load_checkpoint(p).map_err(|e| in_file(p, e))?;
        match &config {
            Some(first) if *first != c => {
                return Err(Error::InvalidArgument(format!(
                    "{} has a different architecture from {}",
                    p.display(),
                    paths[0].display()
                )))
            }
            Some(_) => {}
            None => config = Some(c),
        }
        weights.push(w);
    }
    let config = config.ok_or_else(|| Error::EmptyEnsemble("no checkpoints given".into()))?;
    Ok((weights, config))
}

/// Attaches the input file to parse errors. An unreadable input is bad
/// user input, not a run-time failure.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Json(j) => Error::Format {
            path: path.to_path_buf(),
            message: j.to_string(),
        },
        Error::Io(io) => Error::InvalidArgument(format!("cannot read {}: {io}", path.display())),
        other => other,
    }
}

fn ensure_finite_report<R: TabularReport>(report: &R, what: &str) -> Result<()> {
    if report.rows().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}

fn write_table<R: TabularReport + Serialize>(report: &R, what: &str, path: &Path) -> Result<()> {
    ensure_finite_report(report, what)?;
    write_report(report, path, ReportFormat::from_path(path))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn train(
    ctx: &Context,
    replica: Replica,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
) -> Result<()> {
    let out = ctx.output(out)?;
    let cfg = RunConfig::require(&ctx.config.train, "train")?;
    let data = ctx.splits()?;
    let net = ctx.net(&data.train)?;
    let (init_stream, train_stream) = replica.streams();
    let init = init_params(&net, derive_seed(ctx.seed, init_stream));
    let cfg = TrainConfig {
        seed: derive_seed(ctx.seed, train_stream),
        ..cfg.clone()
    };
    let (w, hist) = train_model(&init, &net, &data.train, &cfg)?;
    save_checkpoint(&w, &net, Some(ctx.seed), &out)?;
    if let Some(h) = history {
        write_table(&hist, "training history", &h)?;
    }
    let m = point_metrics(&w, &net, &data.train, &data.test)?;
    println!(
        "wrote {}: train loss {:.6}, train error {:.4}, test error {:.4}",
        out.display(),
        m.train_loss,
        m.train_error,
        m.test_error
    );
    Ok(())
}

pub fn connect(
    ctx: &Context,
    a: &Path,
    b: &Path,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
) -> Result<()> {
    let curve = RunConfig::require(&ctx.config.curve, "curve")?;
    if curve.kind == CurveKind::Segment || curve.n_bends == 0 {
        return Err(Error::NothingToTrain);
    }
    let out = ctx.output(out)?;
    let cfg = ctx.curve_train()?;
    let (ends, net) = load_same_arch(&[a.to_path_buf(), b.to_path_buf()])?;
    let data = ctx.splits()?;
    check_fits(&net, &data.train)?;
    let [start, end]: [WeightVector; 2] = ends.try_into().expect("two endpoints");
    let jitter = curve.jitter.map(|scale| Jitter {
        seed: derive_seed(ctx.seed, stream::CURVE_JITTER),
        scale,
    });
    let init = CurveSpec::with_initial_bends(curve.kind, start, end, curve.n_bends, jitter)?;
    let (trained, hist) = train_curve(&init, &net, &data.train, &cfg)?;
    save_curve(&trained, &net, Some(ctx.seed), &out)?;
    if let Some(h) = history {
        write_table(&hist, "curve training history", &h)?;
    }
    let losses = loss_profile(&trained, &net, &data.train, curve.grid_size)?;
    let worst = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "wrote {}: endpoint losses {:.6} / {:.6}, worst train loss on curve {:.6}",
        out.display(),
        losses[0],
        losses[losses.len() - 1],
        worst
    );
    Ok(())
}

pub enum CurveSource {
    Curve(PathBuf),
    Segment(PathBuf, PathBuf),
}

fn load_curve_source(source: &CurveSource) -> Result<(CurveSpec, MlpConfig)> {
    match source {
        CurveSource::Curve(p) => load_curve(p).map_err(|e| in_file(p, e)),
        CurveSource::Segment(a, b) => {
            let (ends, net) = load_same_arch(&[a.clone(), b.clone()])?;
            let [start, end]: [WeightVector; 2] = ends.try_into().expect("two endpoints");
            Ok((CurveSpec::segment(start, end)?, net))
        }
    }
}

pub fn curve_eval(
    ctx: &Context,
    source: &CurveSource,
    grid: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = ctx.output(out)?;
    let grid = grid
        .or(ctx.config.curve.as_ref().map(|c| c.grid_size))
        .unwrap_or(DEFAULT_GRID);
    let (spec, net) = load_curve_source(source)?;
    let data = ctx.splits()?;
    check_fits(&net, &data.train)?;
    let report = curve_report(&spec, &net, &data.train, &data.test, grid)?;
    write_table(&report, "curve report", &out)?;
    let ends = report.train_loss[0].max(report.train_loss[grid - 1]);
    println!(
        "wrote {}: {:?}, {grid} points, max train loss {:.6} (endpoints {:.6}), max test error {:.4}",
        out.display(),
        report.kind,
        report.aggregates.train_loss.max,
        ends,
        report.aggregates.test_error.max
    );
    Ok(())
}

pub fn plane(
    ctx: &Context,
    anchors: &[PathBuf; 3],
    resolution: Option<usize>,
    margin: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = ctx.output(out)?;
    let mut cfg = ctx.config.plane.unwrap_or_default();
    if let Some(r) = resolution {
        cfg.resolution = r;
    }
    if let Some(m) = margin {
        cfg.margin = m;
    }
    if cfg.resolution < 2 || !(cfg.margin >= 0.0 && cfg.margin.is_finite()) {
        return Err(Error::InvalidConfig(
            "plane needs resolution ≥ 2 and a non-negative margin".into(),
        ));
    }
    let (w, net) = load_same_arch(anchors)?;
    let data = ctx.splits()?;
    check_fits(&net, &data.train)?;
    let grid = plane_grid(&w[0], &w[1], &w[2], &net, &data.train, &cfg)?;
    write_table(&grid, "plane grid", &out)?;
    println!(
        "wrote {}: {}×{} grid, loss range {:.6}..{:.6}",
        out.display(),
        cfg.resolution,
        cfg.resolution,
        grid.loss.iter().copied().fold(f64::INFINITY, f64::min),
        grid.loss.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(())
}

pub fn fge(ctx: &Context, out_dir: Option<PathBuf>) -> Result<()> {
    let dir = ctx.output(out_dir)?;
    let fge = RunConfig::require(&ctx.config.fge, "fge")?;
    let data = ctx.splits()?;
    let net = ctx.net(&data.train)?;
    std::fs::create_dir_all(&dir)?;

    let init = init_params(&net, derive_seed(ctx.seed, stream::INIT_A));
    let pre_cfg = PretrainConfig {
        seed: derive_seed(ctx.seed, stream::TRAIN_A),
        ..fge.pretrain.clone()
    };
    let (pretrained, _) = pretrain(&init, &net, &data.train, &pre_cfg)?;
    let run_cfg = FgeRunConfig {
        seed: derive_seed(ctx.seed, stream::FGE),
        ..fge.run.clone()
    };
    let run = fge_run(&pretrained, &net, &data.train, &run_cfg)?;

    let pretrained_name = PathBuf::from("pretrained.json");
    save_checkpoint(
        &pretrained,
        &net,
        Some(ctx.seed),
        dir.join(&pretrained_name),
    )?;
    let mut entries = Vec::with_capacity(run.checkpoints.len());
    for c in &run.checkpoints {
        let name = PathBuf::from(format!("fge_{:06}.json", c.iteration));
        save_checkpoint(&c.weights, &net, Some(ctx.seed), dir.join(&name))?;
        entries.push(ManifestEntry {
            iteration: c.iteration,
            path: name,
        });
    }
    let manifest = FgeManifest {
        schedule: fge.run.schedule,
        n_iterations: fge.run.n_iterations,
        batch_size: fge.run.batch_size,
        seed: ctx.seed,
        pretrain_epochs: fge.pretrain.epochs,
        include_pretrained: fge.include_pretrained,
        pretrained: pretrained_name,
        checkpoints: entries,
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    write_table(&run.history, "FGE history", &dir.join("history.csv"))?;

    let summary = fge_summary(
        &pretrained,
        &run.checkpoints,
        fge.include_pretrained,
        &net,
        &data.train,
        &data.test,
    )?;
    if !summary.ensemble_test_nll.is_finite() {
        return Err(Error::NonFinite("FGE ensemble NLL".into()));
    }
    write_json(&summary, &dir.join("summary.json"))?;
    println!(
        "wrote {}: {} checkpoints, test error pretrained {:.4}, ensemble {:.4}",
        dir.display(),
        run.checkpoints.len(),
        summary.pretrained_test_error,
        summary.ensemble_test_error
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EnsembleReport {
    pub members: usize,
    pub member_test_errors: Vec<f64>,
    pub test_error: f64,
    pub test_nll: f64,
    pub mean_pairwise_disagreement: f64,
    pub temperature: Option<TemperatureFit>,
    pub scaled_test_error: Option<f64>,
    pub scaled_test_nll: Option<f64>,
}

pub struct EnsembleSources {
    pub checkpoints: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub curve: Option<PathBuf>,
}

fn manifest_paths(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e.into()))?;
    let manifest: FgeManifest = serde_json::from_str(&text).map_err(|e| in_file(path, e.into()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut paths = Vec::new();
    if manifest.include_pretrained {
        paths.push(base.join(&manifest.pretrained));
    }
    paths.extend(manifest.checkpoints.iter().map(|e| base.join(&e.path)));
    Ok(paths)
}

pub fn ensemble(
    ctx: &Context,
    sources: &EnsembleSources,
    temperature_fit: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = ctx.output(out)?;
    let mut paths = sources.checkpoints.clone();
    if let Some(m) = &sources.manifest {
        paths.extend(manifest_paths(m)?);
    }
    let data = ctx.splits()?;
    if temperature_fit {
        data.heldout()?;
    }
    let (mut members, net) = match &sources.curve {
        Some(c) => {
            let (spec, net) = load_curve(c).map_err(|e| in_file(c, e))?;
            check_fits(&net, &data.train)?;
            let count = ctx
                .config
                .ensemble
                .as_ref()
                .and_then(|e| e.curve_points)
                .unwrap_or(50);
            (
                curve_ensemble_members(&spec, &net, &data.train, count, true)?,
                Some(net),
            )
        }
        None => (Vec::new(), None),
    };
    let net = if paths.is_empty() {
        net.ok_or_else(|| Error::EmptyEnsemble("give checkpoints, --manifest, or --curve".into()))?
    } else {
        let (weights, ck_net) = load_same_arch(&paths)?;
        if net.as_ref().is_some_and(|n| *n != ck_net) {
            return Err(Error::InvalidArgument(
                "curve and checkpoints have different architectures".into(),
            ));
        }
        check_fits(&ck_net, &data.train)?;
        for w in weights {
            members.push(EnsembleMember::prepare(w, &ck_net, &data.train)?);
        }
        ck_net
    };

    let member_test_errors = members
        .iter()
        .map(|m| {
            predict_eval(&m.weights, &net, data.test.batch(), m.stats.as_ref())
                .map(|p| p.error_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let plain = ensemble_predict_scaled(&members, &net, &data.test, 1.0)?;
    let mut report = EnsembleReport {
        members: members.len(),
        member_test_errors,
        test_error: plain.error_rate,
        test_nll: plain.mean_nll,
        mean_pairwise_disagreement: mean_pairwise_disagreement(
            &members,
            &net,
            data.test.features().view(),
        )?,
        temperature: None,
        scaled_test_error: None,
        scaled_test_nll: None,
    };
    if temperature_fit {
        let heldout = data.heldout()?;
        let logits = members
            .iter()
            .map(|m| m.logits(&net, heldout.features().view()))
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_temperature(&logits, heldout.labels())?;
        let scaled = ensemble_predict_scaled(&members, &net, &data.test, fit.temperature)?;
        report.temperature = Some(fit);
        report.scaled_test_error = Some(scaled.error_rate);
        report.scaled_test_nll = Some(scaled.mean_nll);
    }
    if !report.test_nll.is_finite() || report.scaled_test_nll.is_some_and(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ensemble NLL".into()));
    }
    write_json(&report, &out)?;
    print!(
        "wrote {}: {} members, test error {:.4}, NLL {:.6}",
        out.display(),
        report.members,
        report.test_error,
        report.test_nll
    );
    match (report.temperature, report.scaled_test_nll) {
        (Some(fit), Some(nll)) => println!(", T = {:.4}, scaled NLL {:.6}", fit.temperature, nll),
        _ => println!(),
    }
    Ok(())
}

pub fn trivial(
    ctx: &Context,
    checkpoint: &Path,
    t_grid: Option<Vec<f64>>,
    split: SplitArg,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = ctx.output(out)?;
    let ts = match t_grid {
        Some(ts) => {
            check_t_grid(&ts)?;
            ts
        }
        None => ctx.config.trivial.clone().unwrap_or_default().t_grid,
    };
    let (w, net, _) = load_checkpoint(checkpoint).map_err(|e| in_file(checkpoint, e))?;
    let data = ctx.splits()?;
    check_fits(&net, &data.train)?;
    let set = match split {
        SplitArg::Train => &data.train,
        SplitArg::Test => &data.test,
    };
    let report = trivial_check(&w, &net, set, &ts)?;
    write_table(&report, "trivial report", &out)?;
    println!(
        "wrote {}: argmax invariant {}, max logit ratio error {:.3e}",
        out.display(),
        report.argmax_invariant,
        report.logit_ratio_error
    );
    Ok(())
}

pub fn sweep(ctx: &Context, out: Option<PathBuf>) -> Result<()> {
    let out = ctx.output(out)?;
    let section = RunConfig::require(&ctx.config.sweep, "sweep")?;
    let net = RunConfig::require(&ctx.config.net, "net")?;
    let curve = RunConfig::require(&ctx.config.curve, "curve")?;
    let cfg = SweepConfig {
        hidden: net.hidden.clone(),
        factors: section.factors.clone(),
        batch_norm: net.batch_norm,
        l2_coeff: net.l2_coeff,
        train: RunConfig::require(&ctx.config.train, "train")?.clone(),
        curve: RunConfig::require(&curve.train, "curve.train")?.clone(),
        kind: curve.kind,
        n_bends: curve.n_bends,
        grid_size: curve.grid_size,
    };
    cfg.validate()?;
    let data = ctx.splits()?;
    let report = run_sweep(&cfg, &data.train, ctx.seed)?;
    write_table(&report, "sweep table", &out)?;
    println!("wrote {}", out.display());
    for r in &report.rows {
        println!(
            "K = {:<5} params {:>6}  worst curve loss {:.6}  endpoint loss {:.6}  length ratio {:.4}",
            r.factor, r.param_count, r.worst_curve_loss, r.endpoint_loss, r.length_ratio
        );
    }
    Ok(())
}
