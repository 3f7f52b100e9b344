use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nkf_cli::report::CurveConfig;
use nkf_cli::{
    cmd_evaluate, cmd_run, cmd_simulate, cmd_train, parameter_report, pipeline, CliError, CliResult,
    EvaluateOptions, Precision, RunInput, RunOptions, Settings, SimulateOptions, TrainCommand,
};
use nkf_core::nkf::NkfConfig;
use nkf_core::sim::dataset::EvalSetConfig;
use nkf_core::sim::Subset;
use nkf_core::train::{OptimizerKind, TrainConfig};

/// Time-frequency Kalman and neural Kalman echo cancellation.
///
/// Settings resolve in this order: command-line flag, NKF_* environment
/// variable, `key = value` line in the --config file, built-in default.
#[derive(Parser)]
#[command(name = "nkf", version)]
struct Cli {
    /// Line-based `key = value` settings file.
    #[arg(long, global = true, env = "NKF_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "NKF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate evaluation scenes and their manifest.
    Simulate(SimulateArgs),
    /// Run one canceller on one clip.
    Run(RunArgs),
    /// Train the neural Kalman gain network.
    Train(TrainArgs),
    /// Score methods over a scene manifest.
    Evaluate(EvaluateArgs),
    /// Verify a weight file and report its parameter count.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory for WAVs and manifest.jsonl.
    #[arg(long, env = "NKF_OUT")]
    out: Option<PathBuf>,
    /// Clips per subset.
    #[arg(long, env = "NKF_COUNT")]
    count: Option<usize>,
    /// Comma-separated subsets (FST, FST-EPC, DT, DT-EPC); all by default.
    #[arg(long, env = "NKF_SUBSET")]
    subset: Option<String>,
    /// Master seed.
    #[arg(long, env = "NKF_SEED")]
    seed: Option<u64>,
    /// Clip length in seconds.
    #[arg(long, env = "NKF_DURATION")]
    duration: Option<f64>,
    /// Directory of 16 kHz mono source WAVs; the built-in generator otherwise.
    #[arg(long, env = "NKF_CORPUS")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "NKF_RIR_LEN")]
    rir_len: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// pnlms, tfdkf or nkf.
    #[arg(long, env = "NKF_METHOD")]
    method: Option<String>,
    /// NKFW weight file (nkf only).
    #[arg(long, env = "NKF_WEIGHTS")]
    weights: Option<PathBuf>,
    #[arg(long, env = "NKF_PRECISION")]
    precision: Option<String>,
    /// Far-end WAV (with --mic).
    #[arg(long, requires = "mic", conflicts_with = "manifest")]
    far: Option<PathBuf>,
    /// Microphone WAV (with --far).
    #[arg(long, requires = "far")]
    mic: Option<PathBuf>,
    /// Scene manifest (with --clip); enables metrics.
    #[arg(long, env = "NKF_MANIFEST", requires = "clip")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    clip: Option<String>,
    /// Near-end estimate WAV.
    #[arg(long, env = "NKF_OUT")]
    out: Option<PathBuf>,
    /// Metrics CSV to append the clip's ERLE/SDR row to.
    #[arg(long, env = "NKF_METRICS")]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Base settings: `desk` (Adam, batch 2, 64 bins per clip) or `paper`
    /// (SGD, batch 16, every bin). Individual flags override either.
    #[arg(long, env = "NKF_PRESET")]
    preset: Option<String>,
    /// Output NKFW weight file.
    #[arg(long, env = "NKF_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "NKF_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "NKF_TAPS")]
    taps: Option<usize>,
    #[arg(long, env = "NKF_LR")]
    lr: Option<f64>,
    #[arg(long, env = "NKF_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "NKF_BATCH_SIZE")]
    batch_size: Option<usize>,
    /// Number of generated training clips.
    #[arg(long, env = "NKF_CLIPS")]
    clips: Option<usize>,
    /// Frequency bins per clip; 0 trains on every bin.
    #[arg(long, env = "NKF_BINS")]
    bins: Option<usize>,
    /// sgd or adam.
    #[arg(long, env = "NKF_OPTIMIZER")]
    optimizer: Option<String>,
    #[arg(long, env = "NKF_CLIP_NORM")]
    clip_norm: Option<f64>,
    #[arg(long, env = "NKF_OUTPUT_INIT_SCALE")]
    output_init_scale: Option<f64>,
    #[arg(long, env = "NKF_CORPUS")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "NKF_RIR_LEN")]
    rir_len: Option<usize>,
    #[arg(long, env = "NKF_CHECKPOINT_DIR")]
    checkpoint_dir: Option<PathBuf>,
    /// Checkpoint sidecar (`epoch_NNN.ckpt`) to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Start from these weights instead of a fresh initialization.
    #[arg(long, env = "NKF_WEIGHTS")]
    weights: Option<PathBuf>,
    /// Loss history CSV; defaults to the weight path with `.loss.csv`.
    #[arg(long, env = "NKF_LOSS_CSV")]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, env = "NKF_MANIFEST")]
    manifest: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, env = "NKF_METHODS")]
    methods: Option<String>,
    #[arg(long, env = "NKF_WEIGHTS")]
    weights: Option<PathBuf>,
    #[arg(long, env = "NKF_PRECISION")]
    precision: Option<String>,
    /// Comma-separated subsets to keep; all by default.
    #[arg(long, env = "NKF_SUBSET")]
    subset: Option<String>,
    /// Report directory.
    #[arg(long, env = "NKF_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long, env = "NKF_WEIGHTS")]
    weights: Option<PathBuf>,
    /// Taps of a fresh model, when no weight file is given.
    #[arg(long, env = "NKF_TAPS")]
    taps: Option<usize>,
}

fn parse_subsets(list: Option<String>) -> CliResult<Vec<Subset>> {
    list.as_deref()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Subset>().map_err(CliError::from))
        .collect()
}

fn precision(settings: &Settings, flag: Option<String>) -> CliResult<Precision> {
    let raw = settings.pick(flag, "precision", "f32".to_owned())?;
    raw.parse().map_err(CliError::Config)
}

fn simulate(s: &Settings, a: SimulateArgs) -> CliResult<()> {
    let defaults = EvalSetConfig::default();
    let mut subsets = parse_subsets(s.lookup(a.subset, "subset")?)?;
    if subsets.is_empty() {
        subsets = Subset::ALL.to_vec();
    }
    let opts = SimulateOptions {
        out: s.require(a.out, "out")?,
        count: s.pick(a.count, "count", 2)?,
        subsets,
        seed: s.pick(a.seed, "seed", 0)?,
        set: EvalSetConfig {
            duration: s.pick(a.duration, "duration", defaults.duration)?,
            rir_len: s.pick(a.rir_len, "rir-len", defaults.rir_len)?,
            ..defaults
        },
        corpus: s.lookup(a.corpus, "corpus")?,
    };
    let manifest = cmd_simulate(&opts)?;
    println!("wrote {} scenes, manifest {}", opts.count * opts.subsets.len(), manifest.display());
    Ok(())
}

fn run(s: &Settings, a: RunArgs) -> CliResult<()> {
    let input = match (a.far, a.mic, s.lookup(a.manifest, "manifest")?, a.clip) {
        (Some(far), Some(mic), _, _) => RunInput::Files { far, mic },
        (_, _, Some(manifest), Some(clip_id)) => RunInput::Scene { manifest, clip_id },
        _ => return Err(CliError::config("give --far and --mic, or --manifest and --clip")),
    };
    let method = s.pick(a.method, "method", "tfdkf".to_owned())?;
    let opts = RunOptions {
        method: method.parse().map_err(CliError::Config)?,
        weights: s.lookup(a.weights, "weights")?,
        precision: precision(s, a.precision)?,
        input,
        out: s.require(a.out, "out")?,
        metrics: s.lookup(a.metrics, "metrics")?,
    };
    let outcome = cmd_run(&opts)?;
    match outcome.score {
        Some(sc) => println!(
            "{} {}: erle {:.2} dB, sdr {}, rtf {:.4}",
            outcome.clip_id,
            opts.method,
            sc.erle_db,
            sc.sdr_db.map_or_else(|| "n/a".into(), |v| format!("{v:.2} dB")),
            outcome.rtf
        ),
        None => println!("{} {}: rtf {:.4}", outcome.clip_id, opts.method, outcome.rtf),
    }
    Ok(())
}

fn train_cmd(s: &Settings, a: TrainArgs) -> CliResult<()> {
    let d = match s.pick(a.preset, "preset", "desk".to_owned())?.as_str() {
        "desk" => TrainConfig::desk(),
        "paper" => TrainConfig::default(),
        other => return Err(CliError::config(format!("unknown preset {other:?} (expected desk or paper)"))),
    };
    let optimizer = match s.lookup(a.optimizer, "optimizer")? {
        Some(name) => name.parse::<OptimizerKind>().map_err(CliError::from)?,
        None => d.optimizer,
    };
    let bins = s.pick(a.bins, "bins", d.bins_per_clip.unwrap_or(0))?;
    let config = TrainConfig {
        lr: s.pick(a.lr, "lr", d.lr)?,
        epochs: s.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: s.pick(a.batch_size, "batch-size", d.batch_size)?,
        num_clips: s.pick(a.clips, "clips", d.num_clips)?,
        bins_per_clip: (bins > 0).then_some(bins),
        optimizer,
        clip_norm: s.pick(a.clip_norm, "clip-norm", d.clip_norm)?,
        output_init_scale: s.pick(a.output_init_scale, "output-init-scale", d.output_init_scale)?,
        rir_len: s.pick(a.rir_len, "rir-len", d.rir_len)?,
        seed: s.pick(a.seed, "seed", d.seed)?,
        ..d
    };
    let cmd = TrainCommand {
        config,
        nkf: NkfConfig::with_taps(s.pick(a.taps, "taps", NkfConfig::default().taps)?),
        corpus: s.lookup(a.corpus, "corpus")?,
        out: s.require(a.out, "out")?,
        loss_csv: s.lookup(a.loss_csv, "loss-csv")?,
        checkpoint_dir: s.lookup(a.checkpoint_dir, "checkpoint-dir")?,
        resume: a.resume,
        init_weights: s.lookup(a.weights, "weights")?,
    };
    cmd_train(&cmd, |r| {
        println!("epoch {:>3}  loss {:.6}  lr {}", r.epoch, r.mean_loss, r.lr);
    })?;
    println!("wrote {} and {}", cmd.out.display(), cmd.loss_csv_path().display());
    Ok(())
}

fn evaluate(s: &Settings, a: EvaluateArgs) -> CliResult<()> {
    let methods = s.pick(a.methods, "methods", "tfdkf".to_owned())?;
    let opts = EvaluateOptions {
        manifest: s.require(a.manifest, "manifest")?,
        methods: pipeline::parse_methods(&methods)?,
        weights: s.lookup(a.weights, "weights")?,
        precision: precision(s, a.precision)?,
        subsets: parse_subsets(s.lookup(a.subset, "subset")?)?,
        out: s.require(a.out, "out")?,
        curve: CurveConfig::default(),
    };
    let outcome = cmd_evaluate(&opts)?;
    print!("{}", outcome.report.means_csv());
    for f in &outcome.report.failures {
        eprintln!("failed: {} {:?}: {}", f.clip_id, f.method, f.message);
    }
    println!("report written to {}", opts.out.display());
    Ok(())
}

fn inspect(s: &Settings, a: InspectArgs) -> CliResult<()> {
    let weights = s.lookup(a.weights, "weights")?;
    let taps = s.pick(a.taps, "taps", NkfConfig::default().taps)?;
    let (taps, count) = parameter_report(weights.as_deref(), taps)?;
    if let Some(w) = &weights {
        println!("{}: checksums ok", w.display());
    }
    println!("taps {taps}, parameters {count}");
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let threads = settings.pick(cli.threads, "threads", 0)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Simulate(a) => simulate(&settings, a),
        Command::Run(a) => run(&settings, a),
        Command::Train(a) => train_cmd(&settings, a),
        Command::Evaluate(a) => evaluate(&settings, a),
        Command::Inspect(a) => inspect(&settings, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
