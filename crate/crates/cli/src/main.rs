//! `hood`: simulate, preprocess, train, calibrate, evaluate and detect.

mod config;
mod queue;

use std::fmt::Write as _;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;

use clap::{ArgAction, Args, Parser, Subcommand};
use hood::dataio::{
    read_checkpoint, read_dataset, split_dataset, write_atomic, write_checkpoint, write_dataset, write_stream_frame,
    write_stream_header, Dataset, DatasetKind, FrameStreamReader, SampleLabel,
};
use hood::detector::{calibrate, PresenceDetector, Provenance, Thresholds};
use hood::dsp::RdiPipeline;
use hood::metrics::{evaluate, MetricsReport};
use hood::model::{train, EpochRecord, HoodModel};
use hood::pipeline::{preset_label, run_benchmark};
use hood::radar::{preset_scene, simulate_recording, FrameCube, PresetName, Scene, SceneClass};
use hood::{HoodError, Result};

use config::RunConfig;
use queue::StageQueue;

#[derive(Parser)]
#[command(name = "hood", version, about = "Radar human-presence and out-of-distribution detection")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "HOOD_CONFIG")]
    config: Option<PathBuf>,
    /// Make every output bit-reproducible (zero wall times, no dropped frames).
    #[arg(long, global = true)]
    deterministic: bool,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a recording from a preset or a scene file.
    Simulate(SimulateArgs),
    /// Turn raw recordings into a paired macro/micro RDI dataset.
    Preprocess(PreprocessArgs),
    /// Split a dataset into scene-disjoint train and test parts.
    Split(SplitArgs),
    /// Train a model on the ID samples of a paired dataset.
    Train(TrainArgs),
    /// Compute per-category thresholds on ID data.
    Calibrate(CalibrateArgs),
    /// Score a labeled test set.
    Evaluate(EvaluateArgs),
    /// Print one verdict per frame for a recording or a live stream.
    Detect(DetectArgs),
    /// Run the seeded end-to-end synthetic benchmark.
    Benchmark(BenchmarkArgs),
}

fn parse_preset(s: &str) -> std::result::Result<PresetName, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = PresetName::ALL.iter().map(|p| p.as_str()).collect();
        format!("unknown preset `{s}` (expected one of: {})", names.join(", "))
    })
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_preset, required_unless_present = "scene", conflicts_with = "scene")]
    preset: Option<PresetName>,
    /// Scene description (TOML).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Seconds; defaults to the scene's own duration.
    #[arg(long)]
    duration: Option<f64>,
    /// Preset randomization seed, or noise seed override for a scene file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    scene_id: u32,
    /// Dataset file, or `-` for the live frame stream on stdout.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the resolved scene as TOML.
    #[arg(long)]
    scene_out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Raw-frame datasets.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    /// Keep every n-th pair.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args)]
struct SplitArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    /// Checkpoint to write.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    no_augment: bool,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Per-epoch CSV log; defaults to `<out>.loss.csv`.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Paired dataset with ID samples.
    dataset: PathBuf,
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Checked against the checkpoint for provenance.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    dataset: PathBuf,
    /// Report as TOML.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    thresholds: PathBuf,
    /// Raw-frame dataset, or `-` for a live frame stream on stdin.
    input: PathBuf,
    /// Majority vote over the last k verdicts.
    #[arg(long, default_value_t = 1)]
    majority_vote: usize,
    /// Frames buffered between acquisition and processing.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    queue_capacity: u64,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Directory for the checkpoint, thresholds, report and loss log.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// 2 usage, 3 validation, 4 I/O or file format, 5 numerical divergence.
fn exit_code(err: &HoodError) -> u8 {
    match err {
        HoodError::UnknownPreset(_) => 2,
        HoodError::InvalidConfig(_)
        | HoodError::Shape(_)
        | HoodError::RangeOutOfSpan { .. }
        | HoodError::FrameOutOfRange { .. }
        | HoodError::InsufficientData(_)
        | HoodError::EmptyCategory(_)
        | HoodError::MissingOptimizerState
        | HoodError::Parse(_) => 3,
        HoodError::Io(_)
        | HoodError::BadMagic { .. }
        | HoodError::VersionMismatch { .. }
        | HoodError::Truncated { .. }
        | HoodError::Checksum { .. }
        | HoodError::Schema { .. } => 4,
        HoodError::Divergence { .. } | HoodError::NonFinite(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    config.validate()?;
    let det = cli.deterministic;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(config, a),
        Command::Preprocess(a) => cmd_preprocess(config, a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(config, a, det),
        Command::Calibrate(a) => cmd_calibrate(config, a),
        Command::Evaluate(a) => cmd_evaluate(a, det),
        Command::Detect(a) => cmd_detect(config, a, det),
        Command::Benchmark(a) => cmd_benchmark(config, a, det),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn cmd_simulate(config: RunConfig, a: SimulateArgs) -> Result<()> {
    config.radar.validate()?;
    let (mut scene, label) = match (&a.preset, &a.scene) {
        (Some(p), _) => (preset_scene(*p, a.seed.unwrap_or(0)), preset_label(*p, a.scene_id)),
        (None, Some(path)) => {
            let mut scene = Scene::from_toml(&std::fs::read_to_string(path)?)?;
            if let Some(seed) = a.seed {
                scene.seed = seed;
            }
            let category = match scene.class() {
                SceneClass::Static => Some(hood::model::Category::Static),
                SceneClass::VeryStatic => Some(hood::model::Category::VeryStatic),
                SceneClass::Ood => None,
            };
            let label = SampleLabel { category, ood: category.is_none(), scene_id: a.scene_id, frame_index: 0 };
            (scene, label)
        }
        (None, None) => unreachable!("clap requires --preset or --scene"),
    };
    if let Some(d) = a.duration {
        scene.duration = d;
    }
    scene.validate()?;
    if let Some(path) = &a.scene_out {
        write_text(path, &scene.to_toml())?;
    }
    if a.out == Path::new("-") {
        let mut out = BufWriter::new(io::stdout().lock());
        write_stream_header(&mut out, &config.radar)?;
        for frame in simulate_recording(&config.radar, &scene)? {
            write_stream_frame(&mut out, &frame?)?;
        }
        out.flush()?;
        return Ok(());
    }
    let frames = simulate_recording(&config.radar, &scene)?.collect::<Result<Vec<FrameCube>>>()?;
    let ds = Dataset::from_frames(&frames, label)?;
    write_dataset(&a.out, &ds)?;
    log::info!("wrote {} frames to {}", ds.len(), a.out.display());
    Ok(())
}

/// Splits a raw dataset into runs of consecutive samples from one scene.
fn scene_runs(ds: &Dataset) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for (i, l) in ds.labels.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if ds.labels[run[0]].scene_id == l.scene_id => run.push(i),
            _ => runs.push(vec![i]),
        }
    }
    runs
}

fn cmd_preprocess(config: RunConfig, a: PreprocessArgs) -> Result<()> {
    config.radar.validate()?;
    config.dsp.validate()?;
    if a.stride == 0 {
        return Err(HoodError::InvalidConfig("stride must be >= 1".into()));
    }
    let mut parts = Vec::new();
    for path in &a.inputs {
        let raw = read_dataset(path)?;
        if raw.kind != DatasetKind::RawFrames {
            return Err(HoodError::InvalidConfig(format!(
                "{}: expected a raw_frames dataset, got {}",
                path.display(),
                raw.kind.as_str()
            )));
        }
        if raw.is_empty() {
            return Err(HoodError::InsufficientData(format!(
                "{}: recording is empty, preprocessing needs at least {} frames",
                path.display(),
                config.dsp.warmup_frames()
            )));
        }
        for run in scene_runs(&raw) {
            let rec = raw.select(&run);
            let pairs = RdiPipeline::process_all(&config.radar, &config.dsp, rec.raw_frames(&config.radar)?)?;
            let kept: Vec<_> = pairs.into_iter().step_by(a.stride).collect();
            log::info!("{}: scene {} -> {} pairs", path.display(), rec.labels[0].scene_id, kept.len());
            parts.push(Dataset::from_pairs(&kept, rec.labels[0])?);
        }
    }
    let out = Dataset::concat(&parts)?;
    write_dataset(&a.out, &out)?;
    log::info!("wrote {} paired samples to {}", out.len(), a.out.display());
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let ds = read_dataset(&a.input)?;
    let (train, test) = split_dataset(&ds, a.train_fraction, a.seed)?;
    write_dataset(&a.train_out, &train)?;
    write_dataset(&a.test_out, &test)?;
    log::info!("split {} samples into {} train / {} test", ds.len(), train.len(), test.len());
    Ok(())
}

fn check_model_dims(model: &HoodModel<f32>, ds: &Dataset) -> Result<()> {
    let hw = model.config.input_hw;
    if ds.kind != DatasetKind::PairedRdi {
        return Err(HoodError::InvalidConfig(format!("expected a paired_rdi dataset, got {}", ds.kind.as_str())));
    }
    if !ds.is_empty() && ds.sample_dims != [2, hw, hw] {
        return Err(HoodError::Shape(format!(
            "dataset samples are {:?}, model expects [2, {hw}, {hw}]",
            ds.sample_dims
        )));
    }
    Ok(())
}

fn loss_log(epochs: &[EpochRecord], deterministic: bool) -> String {
    let mut s = String::from("epoch,loss,wall_time_s\n");
    for e in epochs {
        let t = if deterministic { 0.0 } else { e.wall_time_s };
        writeln!(s, "{},{:.9e},{t:.3}", e.epoch, e.loss).unwrap();
    }
    s
}

fn cmd_train(config: RunConfig, a: TrainArgs, deterministic: bool) -> Result<()> {
    let mut tc = config.train.clone();
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        tc.learning_rate = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    if let Some(v) = a.patience {
        tc.patience = v;
    }
    if a.no_augment {
        tc.augment.enabled = false;
    }
    tc.validate()?;
    let mut mc = config.model;
    if let Some(v) = a.latent_dim {
        mc.latent_dim = v;
    }
    mc.validate()?;

    let ds = read_dataset(&a.dataset)?;
    let (mut model, optimizer) = match &a.resume {
        Some(path) => {
            let ck = read_checkpoint::<f32>(path)?;
            let opt = ck.require_optimizer()?.clone();
            if a.latent_dim.is_some_and(|d| d != ck.model.config.latent_dim) {
                return Err(HoodError::InvalidConfig(format!(
                    "--latent-dim {} differs from the resumed checkpoint's {}",
                    mc.latent_dim, ck.model.config.latent_dim
                )));
            }
            (ck.model, Some(opt))
        }
        None => (HoodModel::<f32>::new(mc, tc.seed)?, None),
    };
    check_model_dims(&model, &ds)?;
    let samples = ds.training_samples()?;
    let skipped = ds.len() - samples.len();
    if skipped > 0 {
        log::warn!("ignoring {skipped} OOD or unlabeled samples; training uses ID data only");
    }
    let report = train(&mut model, &samples, &tc, optimizer, |_| {})?;
    let id = write_checkpoint(&a.out, &model, Some(&report.optimizer))?;
    let log_path = a.loss_log.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    write_text(&log_path, &loss_log(&report.epochs, deterministic))?;
    log::info!(
        "trained {} epochs{}; checkpoint {id} written to {}",
        report.epochs.len(),
        if report.stopped_early { " (early stop)" } else { "" },
        a.out.display()
    );
    Ok(())
}

fn cmd_calibrate(config: RunConfig, a: CalibrateArgs) -> Result<()> {
    let q = a.quantile.unwrap_or(config.quantile);
    if !(q > 0.0 && q < 1.0) {
        return Err(HoodError::InvalidConfig(format!("quantile must be in (0, 1), got {q}")));
    }
    let ck = read_checkpoint::<f32>(&a.checkpoint)?;
    let ds = read_dataset(&a.dataset)?;
    check_model_dims(&ck.model, &ds)?;
    let samples = ds.training_samples()?;
    let mut t = calibrate(&ck.model, &samples, q)?;
    t.provenance = Provenance { dataset_id: ds.content_id(), model_id: ck.id };
    write_text(&a.out, &t.to_toml())?;
    log::info!("threshold_s = {:.6e}, threshold_vs = {:.6e}", t.threshold_s, t.threshold_vs);
    Ok(())
}

fn read_thresholds(path: &Path) -> Result<Thresholds> {
    Thresholds::from_toml(&std::fs::read_to_string(path)?)
}

fn warn_on_provenance(t: &Thresholds, model_id: &str) {
    if !t.provenance.model_id.is_empty() && t.provenance.model_id != model_id {
        log::warn!("thresholds were calibrated for model {}, not {model_id}", t.provenance.model_id);
    }
}

fn cmd_evaluate(a: EvaluateArgs, deterministic: bool) -> Result<()> {
    let ck = read_checkpoint::<f32>(&a.checkpoint)?;
    if let Some(path) = &a.thresholds {
        warn_on_provenance(&read_thresholds(path)?, &ck.id);
    }
    let ds = read_dataset(&a.dataset)?;
    check_model_dims(&ck.model, &ds)?;
    let report = evaluate(&ck.model, &ds, deterministic)?;
    let csv = format!("{}\n{}\n", MetricsReport::csv_header(), report.csv_row());
    if let Some(path) = &a.out {
        write_text(path, &report.to_text())?;
    }
    if let Some(path) = &a.csv {
        write_text(path, &csv)?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_detect(config: RunConfig, a: DetectArgs, deterministic: bool) -> Result<()> {
    let ck = read_checkpoint::<f32>(&a.checkpoint)?;
    let thresholds = read_thresholds(&a.thresholds)?;
    warn_on_provenance(&thresholds, &ck.id);
    let mut detector =
        PresenceDetector::new(&ck.model, thresholds, &config.radar, &config.dsp)?.with_majority_vote(a.majority_vote);

    let live = a.input == Path::new("-");
    // A file is replayed without loss; a live stream sheds its oldest
    // frames when processing falls behind, unless outputs must reproduce.
    let queue = Arc::new(StageQueue::<Result<FrameCube>>::new(a.queue_capacity as usize, live && !deterministic));
    let acquisition = {
        let queue = Arc::clone(&queue);
        let radar = config.radar.clone();
        let input = a.input.clone();
        thread::spawn(move || {
            let result = (|| -> Result<()> {
                if live {
                    let stdin = io::stdin().lock();
                    for frame in FrameStreamReader::new(stdin, &radar, Path::new("<stdin>"))? {
                        queue.push(frame);
                    }
                } else {
                    let ds = read_dataset(&input)?;
                    for frame in ds.raw_frames(&radar)? {
                        queue.push(frame);
                    }
                }
                Ok(())
            })();
            if let Err(e) = result {
                queue.push(Err(e));
            }
            queue.close();
        })
    };

    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "frame_index,err_s,err_vs,verdict")?;
    let (mut frames, mut verdicts) = (0usize, 0usize);
    let mut failure = None;
    while let Some(item) = queue.pop() {
        let step = item.and_then(|frame| detector.push(&frame));
        match step {
            Ok(Some(r)) => {
                writeln!(out, "{r}")?;
                if live {
                    out.flush()?;
                }
                verdicts += 1;
                frames += 1;
            }
            Ok(None) => frames += 1,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    out.flush()?;
    if let Some(e) = failure {
        // Unblock and abandon the producer.
        queue.close();
        drop(acquisition);
        return Err(e);
    }
    acquisition.join().expect("acquisition thread panicked");
    let dropped = queue.dropped();
    if dropped > 0 {
        log::warn!("dropped {dropped} frames while processing lagged behind acquisition");
    }
    if frames < detector.warmup_frames() {
        log::warn!("only {frames} frames processed; the first verdict needs {}", detector.warmup_frames());
    }
    log::info!("{frames} frames processed, {verdicts} verdicts, {dropped} dropped");
    Ok(())
}

fn cmd_benchmark(config: RunConfig, a: BenchmarkArgs, deterministic: bool) -> Result<()> {
    let mut bc = config.benchmark.clone();
    if let Some(s) = a.seed {
        bc.master_seed = s;
    }
    if let Some(e) = a.epochs {
        bc.train.epochs = e;
    }
    bc.validate()?;
    let outcome = run_benchmark(&bc, deterministic, |_| {})?;
    let curve = outcome.loss_curve();
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        log::info!("loss {first:.6} -> {last:.6} ({:.3}x)", last / first);
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        let model_id = write_checkpoint(&dir.join("model.ckpt"), &outcome.model, None)?;
        let mut t = outcome.thresholds.clone();
        t.provenance.model_id = model_id;
        write_text(&dir.join("thresholds.toml"), &t.to_toml())?;
        write_text(&dir.join("report.toml"), &outcome.report.to_text())?;
        let csv = format!("{}\n{}\n", MetricsReport::csv_header(), outcome.report.csv_row());
        write_text(&dir.join("report.csv"), &csv)?;
        write_text(&dir.join("loss.csv"), &loss_log(&outcome.epochs, deterministic))?;
    }
    print!("{}", outcome.report.to_text());
    Ok(())
}
