//! The four subcommands as library functions, so tests can drive them
//! without spawning a process.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use nkf_core::nkf::{load_weights, save_weights, verify_weights, ModelWeights, NkfConfig};
use nkf_core::signal::wav::{read_wav, write_wav, WavFormat};
use nkf_core::signal::TimeSignal;
use nkf_core::sim::dataset::EvalSetConfig;
use nkf_core::sim::manifest::{read_manifest, write_manifest, SceneRecord};
use nkf_core::sim::{erle_curve, Corpus, CurvePoint, ScenePlan, Subset};
use nkf_core::train::{train, EpochRecord, TrainConfig, TrainOptions};

use crate::error::{CliError, CliResult};
use crate::pipeline::{echo_estimate, score, Canceller, ClipScore, Method, Precision};
use crate::report::{
    average_curves, clip_recovery, curves_csv, recovery_csv, summarize_recovery, write_text,
    ClipFailure, CurveConfig, EvalReport, EvalRow, RecoverySummary,
};

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub out: PathBuf,
    /// Clips per subset.
    pub count: usize,
    pub subsets: Vec<Subset>,
    pub seed: u64,
    pub set: EvalSetConfig,
    /// Directory of source WAVs; the built-in generator when `None`.
    pub corpus: Option<PathBuf>,
}

/// Generates evaluation scenes, writes their WAVs, and returns the manifest
/// path.
pub fn cmd_simulate(opts: &SimulateOptions) -> CliResult<PathBuf> {
    if opts.count == 0 || opts.subsets.is_empty() {
        return Err(CliError::config("simulate needs count >= 1 and at least one subset"));
    }
    create_dir(&opts.out)?;
    let corpus = Corpus::open(opts.corpus.as_deref())?;
    let jobs: Vec<(Subset, u64)> = opts
        .subsets
        .iter()
        .flat_map(|&s| (0..opts.count as u64).map(move |i| (s, i)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(subset, index)| {
            let plan = ScenePlan::evaluation(subset, index, opts.seed, &opts.set);
            let record = SceneRecord::new(&format!("{}_{index:04}", subset.name()), &plan);
            let scene = plan.build(&corpus)?;
            for (name, sig) in [
                (&record.far, &scene.far),
                (&record.near, &scene.near),
                (&record.echo, &scene.echo),
                (&record.mic, &scene.mic),
            ] {
                write_wav(opts.out.join(name), sig, WavFormat::Float32)?;
            }
            Ok(record)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = opts.out.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

/// The four signals of a simulated clip.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub record: SceneRecord,
    pub far: TimeSignal<f64>,
    pub near: TimeSignal<f64>,
    pub echo: TimeSignal<f64>,
    pub mic: TimeSignal<f64>,
}

pub fn load_clip(manifest: &Path, record: &SceneRecord) -> CliResult<LoadedClip> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    Ok(LoadedClip {
        far: read_wav(dir.join(&record.far))?,
        near: read_wav(dir.join(&record.near))?,
        echo: read_wav(dir.join(&record.echo))?,
        mic: read_wav(dir.join(&record.mic))?,
        record: record.clone(),
    })
}

#[derive(Debug, Clone)]
pub enum RunInput {
    /// Far-end and microphone WAVs without ground truth.
    Files { far: PathBuf, mic: PathBuf },
    /// A clip of a simulated set; metrics are computed against its truth.
    Scene { manifest: PathBuf, clip_id: String },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub method: Method,
    pub weights: Option<PathBuf>,
    pub precision: Precision,
    pub input: RunInput,
    /// Where the near-end estimate is written.
    pub out: PathBuf,
    /// Metrics CSV the clip's row is appended to.
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub clip_id: String,
    pub score: Option<ClipScore>,
    pub rtf: f64,
}

pub const METRICS_HEADER: &str = "clip_id,method,erle_db,sdr_db";

fn append_metrics(path: &Path, line: &str) -> CliResult<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let text = if fresh {
        format!("{METRICS_HEADER}\n{line}\n")
    } else {
        format!("{line}\n")
    };
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Runs one canceller on one clip and writes its near-end estimate.
pub fn cmd_run(opts: &RunOptions) -> CliResult<RunOutcome> {
    let canceller = Canceller::new(opts.method, opts.precision, opts.weights.as_deref())?;
    let (clip_id, far, mic, truth) = match &opts.input {
        RunInput::Files { far, mic } => {
            let id = mic.file_stem().map_or_else(|| "clip".into(), |s| s.to_string_lossy().into_owned());
            (id, read_wav(far)?, read_wav(mic)?, None)
        }
        RunInput::Scene { manifest, clip_id } => {
            let records = read_manifest(manifest)?;
            let record = records
                .iter()
                .find(|r| &r.clip_id == clip_id)
                .ok_or_else(|| CliError::config(format!("clip {clip_id:?} is not in {}", manifest.display())))?;
            let clip = load_clip(manifest, record)?;
            (clip_id.clone(), clip.far, clip.mic, Some((clip.echo, clip.near)))
        }
    };
    let (s_hat, rtf) = canceller.cancel_timed(&far, &mic)?;
    write_wav(&opts.out, &s_hat, WavFormat::Float32)?;
    let score = match truth {
        Some((echo, near)) => Some(score(&echo, &near, &mic, &s_hat)?),
        None => None,
    };
    if let (Some(path), Some(s)) = (&opts.metrics, score) {
        let sdr = s.sdr_db.map_or_else(String::new, |v| format!("{v:.6}"));
        append_metrics(path, &format!("{clip_id},{},{:.6},{sdr}", opts.method, s.erle_db))?;
    }
    Ok(RunOutcome { clip_id, score, rtf })
}

#[derive(Debug, Clone)]
pub struct TrainCommand {
    pub config: TrainConfig,
    pub nkf: NkfConfig,
    pub corpus: Option<PathBuf>,
    /// Output NKFW file; its checksum manifest is written next to it.
    pub out: PathBuf,
    pub loss_csv: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub init_weights: Option<PathBuf>,
}

impl TrainCommand {
    pub fn loss_csv_path(&self) -> PathBuf {
        self.loss_csv.clone().unwrap_or_else(|| self.out.with_extension("loss.csv"))
    }
}

/// Trains the gain network and writes the weights and the loss history.
pub fn cmd_train(cmd: &TrainCommand, on_epoch: impl FnMut(&EpochRecord)) -> CliResult<Vec<EpochRecord>> {
    let corpus = Corpus::open(cmd.corpus.as_deref())?;
    let init_weights = match &cmd.init_weights {
        Some(p) => {
            verify_weights(p)?;
            Some(load_weights::<f64>(p)?)
        }
        None => None,
    };
    if let Some(dir) = &cmd.checkpoint_dir {
        create_dir(dir)?;
    }
    let options = TrainOptions {
        checkpoint_dir: cmd.checkpoint_dir.clone(),
        resume: cmd.resume.clone(),
        init_weights,
    };
    let outcome = train(&corpus, &cmd.config, &cmd.nkf, &options, on_epoch)?;
    if let Some(dir) = cmd.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_weights(&cmd.out, &outcome.weights)?;
    EpochRecord::write_csv(&cmd.loss_csv_path(), &outcome.history)?;
    Ok(outcome.history)
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub manifest: PathBuf,
    pub methods: Vec<Method>,
    pub weights: Option<PathBuf>,
    pub precision: Precision,
    /// Restricts evaluation to these subsets when non-empty.
    pub subsets: Vec<Subset>,
    pub out: PathBuf,
    pub curve: CurveConfig,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Mean ERLE curve per method over the DT-EPC clips.
    pub curves: Vec<(Method, Vec<CurvePoint>)>,
    /// Convergence and post-switch recovery per method over the DT-EPC clips.
    pub recovery: Vec<(Method, RecoverySummary)>,
}

struct ClipResult {
    rows: Vec<EvalRow>,
    curves: Vec<(Method, Vec<CurvePoint>)>,
    recovery: Vec<(Method, crate::report::ClipRecovery)>,
    rtf: Vec<(Method, f64)>,
    failures: Vec<ClipFailure>,
}

fn evaluate_clip(
    manifest: &Path,
    record: &SceneRecord,
    cancellers: &[Canceller],
    curve: &CurveConfig,
) -> ClipResult {
    let mut res = ClipResult {
        rows: Vec::new(),
        curves: Vec::new(),
        recovery: Vec::new(),
        rtf: Vec::new(),
        failures: Vec::new(),
    };
    let clip = match load_clip(manifest, record) {
        Ok(c) => c,
        Err(e) => {
            res.failures.push(ClipFailure {
                clip_id: record.clip_id.clone(),
                method: None,
                message: e.to_string(),
            });
            return res;
        }
    };
    for c in cancellers {
        let outcome = (|| -> CliResult<()> {
            let (s_hat, rtf) = c.cancel_timed(&clip.far, &clip.mic)?;
            let s = score(&clip.echo, &clip.near, &clip.mic, &s_hat)?;
            res.rows.push(EvalRow {
                clip_id: record.clip_id.clone(),
                subset: record.subset,
                method: c.method,
                erle_db: s.erle_db,
                sdr_db: s.sdr_db,
            });
            res.rtf.push((c.method, rtf));
            if record.subset == Subset::DtEpc {
                let points = erle_curve(&clip.echo, &echo_estimate(&clip.mic, &s_hat), curve.window, curve.hop)?;
                let switch = record.switch_time.unwrap_or(0.0) * clip.mic.sample_rate as f64;
                let switch_frame = (switch.round() as usize).div_ceil(curve.hop);
                res.recovery.push((c.method, clip_recovery(&points, switch_frame, curve.threshold_db)));
                res.curves.push((c.method, points));
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            res.failures.push(ClipFailure {
                clip_id: record.clip_id.clone(),
                method: Some(c.method),
                message: e.to_string(),
            });
        }
    }
    res
}

/// Evaluates every method on every clip of the manifest. Clip failures are
/// recorded and the run continues; the error return is for problems that
/// affect the whole run.
pub fn cmd_evaluate(opts: &EvaluateOptions) -> CliResult<EvalOutcome> {
    let cancellers = opts
        .methods
        .iter()
        .map(|&m| Canceller::new(m, opts.precision, opts.weights.as_deref()))
        .collect::<CliResult<Vec<_>>>()?;
    let records: Vec<SceneRecord> = read_manifest(&opts.manifest)?
        .into_iter()
        .filter(|r| opts.subsets.is_empty() || opts.subsets.contains(&r.subset))
        .collect();
    if records.is_empty() {
        return Err(CliError::config("no clips to evaluate"));
    }
    create_dir(&opts.out)?;
    let results: Vec<ClipResult> = records
        .par_iter()
        .map(|r| evaluate_clip(&opts.manifest, r, &cancellers, &opts.curve))
        .collect();

    let mut outcome = EvalOutcome::default();
    let mut rtf_sum = std::collections::BTreeMap::<Method, (f64, usize)>::new();
    let mut curves = std::collections::BTreeMap::<Method, Vec<Vec<CurvePoint>>>::new();
    let mut recovery = std::collections::BTreeMap::<Method, Vec<_>>::new();
    for r in results {
        outcome.report.rows.extend(r.rows);
        outcome.report.failures.extend(r.failures);
        for (m, v) in r.rtf {
            let e = rtf_sum.entry(m).or_default();
            e.0 += v;
            e.1 += 1;
        }
        for (m, c) in r.curves {
            curves.entry(m).or_default().push(c);
        }
        for (m, c) in r.recovery {
            recovery.entry(m).or_default().push(c);
        }
    }
    outcome.report.rtf = rtf_sum.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect();
    for m in &opts.methods {
        if let Some(c) = curves.get(m) {
            outcome.curves.push((*m, average_curves(c)?));
        }
        if let Some(s) = recovery.get(m).and_then(|c| summarize_recovery(c)) {
            outcome.recovery.push((*m, s));
        }
    }

    let report = &outcome.report;
    write_text(&opts.out.join("report.csv"), &report.rows_csv())?;
    write_text(&opts.out.join("means.csv"), &report.means_csv())?;
    write_text(&opts.out.join("rtf.csv"), &report.rtf_csv())?;
    write_text(&opts.out.join("failures.csv"), &report.failures_csv())?;
    if !outcome.curves.is_empty() {
        write_text(&opts.out.join("curve.csv"), &curves_csv(&outcome.curves))?;
        write_text(&opts.out.join("recovery.csv"), &recovery_csv(&outcome.recovery))?;
    }
    Ok(outcome)
}

/// Parameter count of a weight file or of a fresh model with `taps` taps.
pub fn parameter_report(weights: Option<&Path>, taps: usize) -> CliResult<(usize, usize)> {
    match weights {
        Some(p) => {
            verify_weights(p)?;
            let w: ModelWeights<f64> = load_weights(p)?;
            Ok((w.taps(), w.parameter_count()))
        }
        None => {
            let cfg = NkfConfig::with_taps(taps);
            cfg.validate()?;
            Ok((taps, ModelWeights::<f64>::zeros(&cfg).parameter_count()))
        }
    }
}
