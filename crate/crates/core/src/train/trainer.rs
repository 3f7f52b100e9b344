use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::backprop::{backward, forward_traced};
use super::data::{draw_clip, sample_example, TrainConfig};
use super::optim::{clip_global_norm, lr_at_epoch, Optimizer};
use super::GradientSet;
use crate::error::{AecError, Result};
use crate::nkf::{load_weights, save_weights, InitMode, ModelWeights, NkfConfig};
use crate::sim::{derive_seed, Corpus};

/// Bins traced together; bounds the memory of one backward pass.
const TRACE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean of `|D - D̂|²` over every trained time-frequency point.
    pub mean_loss: f64,
    pub lr: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,mean_loss,lr";

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.epoch, self.mean_loss, self.lr)
    }

    pub fn write_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in history {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        fs::write(path, s).map_err(|e| AecError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<EpochRecord>> {
        let text = fs::read_to_string(path).map_err(|e| AecError::io(path, e))?;
        let fail = |reason: String| AecError::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(fail("missing header".into()));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 3 {
                    return Err(fail(format!("bad row {l:?}")));
                }
                let bad = |_| fail(format!("bad row {l:?}"));
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|e: std::num::ParseIntError| fail(e.to_string()))?,
                    mean_loss: f[1].parse().map_err(bad)?,
                    lr: f[2].parse().map_err(bad)?,
                })
            })
            .collect()
    }
}

/// Text sidecar describing one saved epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub weights: PathBuf,
    pub optimizer: PathBuf,
}

impl Checkpoint {
    fn paths(dir: &Path, epoch: usize) -> (PathBuf, PathBuf, PathBuf) {
        let stem = format!("epoch_{epoch:03}");
        (
            dir.join(format!("{stem}.nkfw")),
            dir.join(format!("{stem}.opt.json")),
            dir.join(format!("{stem}.ckpt")),
        )
    }

    fn write(dir: &Path, record: &EpochRecord, weights: &ModelWeights<f64>, opt: &Optimizer) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| AecError::io(dir, e))?;
        let (wp, op, cp) = Self::paths(dir, record.epoch);
        save_weights(&wp, weights)?;
        let json = serde_json::to_string(opt).expect("optimizer state serializes");
        fs::write(&op, json).map_err(|e| AecError::io(&op, e))?;
        let text = format!(
            "epoch = {}\nlr = {}\nmean_loss = {}\nweights = {}\noptimizer = {}\n",
            record.epoch,
            record.lr,
            record.mean_loss,
            wp.file_name().unwrap().to_string_lossy(),
            op.file_name().unwrap().to_string_lossy(),
        );
        fs::write(&cp, text).map_err(|e| AecError::io(&cp, e))?;
        Ok(cp)
    }

    /// Reads a `.ckpt` sidecar; the referenced files are resolved relative
    /// to its directory.
    pub fn read(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| AecError::io(path, e))?;
        let fail = |reason: String| AecError::Format {
            path: path.to_path_buf(),
            reason,
        };
        let get = |key: &str| {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_owned())
                .ok_or_else(|| fail(format!("missing key {key}")))
        };
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok(Checkpoint {
            epoch: get("epoch")?.parse().map_err(|_| fail("bad epoch".into()))?,
            lr: get("lr")?.parse().map_err(|_| fail("bad lr".into()))?,
            mean_loss: get("mean_loss")?.parse().map_err(|_| fail("bad mean_loss".into()))?,
            weights: dir.join(get("weights")?),
            optimizer: dir.join(get("optimizer")?),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where per-epoch checkpoints and `loss.csv` go.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from this `.ckpt` sidecar.
    pub resume: Option<PathBuf>,
    /// Starting weights; defaults to a seeded random initialization.
    pub init_weights: Option<ModelWeights<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights<f64>,
    pub history: Vec<EpochRecord>,
    pub optimizer: Optimizer,
}

fn round_to_f32(w: &mut ModelWeights<f64>) {
    let flat: Vec<f64> = w.to_flat().iter().map(|&v| v as f32 as f64).collect();
    w.set_flat(&flat).expect("same layout");
}

/// Loss, trained point count, and gradient for one clip.
fn clip_gradient(
    weights: &ModelWeights<f64>,
    corpus: &Corpus,
    config: &TrainConfig,
    nkf: &NkfConfig,
    epoch: usize,
    clip: usize,
) -> Result<(f64, usize, GradientSet)> {
    let ex = sample_example(corpus, config, config.clip_seed(clip))?;
    let draw = draw_clip(config, epoch, clip, ex.far.num_bins());
    let cfg = NkfConfig {
        init_mode: if draw.noise_init { InitMode::Noise } else { InitMode::Zeros },
        init_seed: draw.init_seed,
        ..nkf.clone()
    };
    let mut grads = GradientSet::zeros_like(weights);
    let mut loss = 0.0;
    for bins in draw.bins.chunks(TRACE_CHUNK) {
        let trace = forward_traced(weights, &ex.far, &ex.mic, &cfg, bins)?;
        let (l, g) = backward(weights, &trace, &ex.echo)?;
        loss += l;
        grads.add(&g)?;
    }
    Ok((loss, draw.bins.len() * ex.far.num_frames(), grads))
}

/// Trains the gain network on generated scenes. `on_epoch` runs after every
/// epoch. A non-finite loss or gradient aborts training; the error names the
/// last good checkpoint when one was written.
pub fn train(
    corpus: &Corpus,
    config: &TrainConfig,
    nkf: &NkfConfig,
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    nkf.validate()?;
    let mut weights = options
        .init_weights
        .clone()
        .unwrap_or_else(|| config.initial_weights(nkf));
    weights.check_shapes(nkf)?;
    round_to_f32(&mut weights);
    let mut optimizer = Optimizer::new(config.optimizer, weights.parameter_count());
    let mut history = Vec::new();
    let mut start = 1;

    if let Some(ckpt) = &options.resume {
        let c = Checkpoint::read(ckpt)?;
        weights = load_weights(&c.weights)?;
        weights.check_shapes(nkf)?;
        let json = fs::read_to_string(&c.optimizer).map_err(|e| AecError::io(&c.optimizer, e))?;
        optimizer = serde_json::from_str(&json).map_err(|e| AecError::Format {
            path: c.optimizer.clone(),
            reason: e.to_string(),
        })?;
        if optimizer.kind != config.optimizer {
            return Err(AecError::config("checkpoint was written by a different optimizer"));
        }
        let csv = ckpt.parent().unwrap_or(Path::new(".")).join("loss.csv");
        if csv.exists() {
            history = EpochRecord::read_csv(&csv)?;
            history.retain(|r| r.epoch <= c.epoch);
        }
        start = c.epoch + 1;
    }

    let mut last_good: Option<PathBuf> = None;
    for epoch in start..=config.epochs {
        let lr = lr_at_epoch(config.lr, epoch);
        let mut order: Vec<usize> = (0..config.num_clips).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed ^ 0x0c1d, epoch as u64)));

        let mut epoch_loss = 0.0;
        let mut epoch_points = 0usize;
        for batch in order.chunks(config.batch_size) {
            let parts = batch
                .par_iter()
                .map(|&clip| clip_gradient(&weights, corpus, config, nkf, epoch, clip))
                .collect::<Vec<_>>();
            let mut grads = GradientSet::zeros_like(&weights);
            let mut loss = 0.0;
            let mut points = 0;
            let mut failure = None;
            for p in parts {
                match p {
                    Ok((l, n, g)) => {
                        loss += l;
                        points += n;
                        grads.add(&g)?;
                    }
                    Err(AecError::Numerical(msg)) => failure = Some(msg),
                    Err(e) => return Err(e),
                }
            }
            if failure.is_none() && !loss.is_finite() {
                failure = Some("loss is not finite".into());
            }
            if let Some(msg) = failure {
                let hint = match &last_good {
                    Some(p) => format!("last good checkpoint {}", p.display()),
                    None => "no checkpoint was written".to_owned(),
                };
                return Err(AecError::Numerical(format!("training diverged in epoch {epoch} ({msg}); {hint}")));
            }
            grads.scale(1.0 / points.max(1) as f64);
            clip_global_norm(&mut grads, config.clip_norm);
            let mut flat = weights.to_flat();
            optimizer.step(&mut flat, &grads.to_flat(), lr)?;
            weights.set_flat(&flat)?;
            epoch_loss += loss;
            epoch_points += points;
        }
        round_to_f32(&mut weights);
        let record = EpochRecord {
            epoch,
            mean_loss: epoch_loss / epoch_points.max(1) as f64,
            lr,
        };
        history.push(record);
        if let Some(dir) = &options.checkpoint_dir {
            last_good = Some(Checkpoint::write(dir, &record, &weights, &optimizer)?);
            EpochRecord::write_csv(&dir.join("loss.csv"), &history)?;
        }
        on_epoch(&record);
    }
    Ok(TrainOutcome {
        weights,
        history,
        optimizer,
    })
}
