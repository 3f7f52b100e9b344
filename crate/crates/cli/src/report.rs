//! Evaluation report: per-clip rows, per-subset means, averaged ERLE curves,
//! and convergence/recovery times.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nkf_core::sim::{CurvePoint, Subset};

use crate::error::{CliError, CliResult};
use crate::pipeline::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub clip_id: String,
    pub subset: Subset,
    pub method: Method,
    pub erle_db: f64,
    pub sdr_db: Option<f64>,
}

/// A clip that could not be processed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFailure {
    pub clip_id: String,
    pub method: Option<Method>,
    pub message: String,
}

/// Mean ERLE and SDR of one (subset, method) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub clips: usize,
    pub erle_db: f64,
    pub sdr_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub failures: Vec<ClipFailure>,
    /// Mean real-time factor per method.
    pub rtf: BTreeMap<Method, f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn subsets(&self) -> Vec<Subset> {
        let mut s: Vec<Subset> = self.rows.iter().map(|r| r.subset).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Arithmetic mean over the rows of `subset` and `method`.
    pub fn cell(&self, subset: Subset, method: Method) -> Option<CellMean> {
        let rows: Vec<&EvalRow> = self
            .rows
            .iter()
            .filter(|r| r.subset == subset && r.method == method)
            .collect();
        Some(CellMean {
            clips: rows.len(),
            erle_db: mean(rows.iter().map(|r| r.erle_db))?,
            sdr_db: mean(rows.iter().filter_map(|r| r.sdr_db)),
        })
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("clip_id,subset,method,erle_db,sdr_db\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{}",
                r.clip_id,
                r.subset,
                r.method,
                r.erle_db,
                fmt_opt(r.sdr_db)
            );
        }
        out
    }

    /// One row per method, an ERLE and an SDR column per subset.
    pub fn means_csv(&self) -> String {
        let subsets = self.subsets();
        let mut out = String::from("method");
        for s in &subsets {
            let _ = write!(out, ",{s}_clips,{s}_erle_db,{s}_sdr_db");
        }
        out.push('\n');
        for m in self.methods() {
            out.push_str(m.name());
            for &s in &subsets {
                match self.cell(s, m) {
                    Some(c) => {
                        let _ = write!(out, ",{},{:.6},{}", c.clips, c.erle_db, fmt_opt(c.sdr_db));
                    }
                    None => out.push_str(",0,,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn failures_csv(&self) -> String {
        let mut out = String::from("clip_id,method,message\n");
        for f in &self.failures {
            let method = f.method.map_or("", Method::name);
            let _ = writeln!(out, "{},{},\"{}\"", f.clip_id, method, f.message.replace('"', "'"));
        }
        out
    }

    pub fn rtf_csv(&self) -> String {
        let mut out = String::from("method,rtf\n");
        for (m, r) in &self.rtf {
            let _ = writeln!(out, "{m},{r:.6}");
        }
        out
    }
}

/// Windowed-ERLE settings for curves and convergence times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveConfig {
    /// Window length in samples.
    pub window: usize,
    /// Curve resolution in samples; one STFT hop, so points are frames.
    pub hop: usize,
    /// ERLE a canceller must reach to count as converged.
    pub threshold_db: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            window: 2048,
            hop: 256,
            threshold_db: 10.0,
        }
    }
}

/// Point-wise mean over clips, skipping gaps. All curves must have the
/// same length.
pub fn average_curves(curves: &[Vec<CurvePoint>]) -> CliResult<Vec<CurvePoint>> {
    let Some(first) = curves.first() else {
        return Ok(Vec::new());
    };
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(CliError::config("curves of clips with different lengths cannot be averaged"));
    }
    Ok((0..first.len())
        .map(|i| CurvePoint {
            time: first[i].time,
            erle_db: mean(curves.iter().filter_map(|c| c[i].erle_db)),
        })
        .collect())
}

/// Curve CSV: one row per frame, one ERLE column per method.
pub fn curves_csv(curves: &[(Method, Vec<CurvePoint>)]) -> String {
    let mut out = String::from("frame,time_s");
    for (m, _) in curves {
        let _ = write!(out, ",{m}_erle_db");
    }
    out.push('\n');
    let n = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..n {
        let time = curves.iter().find_map(|(_, c)| c.get(i)).map_or(0.0, |p| p.time);
        let _ = write!(out, "{i},{time:.6}");
        for (_, c) in curves {
            let _ = write!(out, ",{}", fmt_opt(c.get(i).and_then(|p| p.erle_db)));
        }
        out.push('\n');
    }
    out
}

/// Frames from `from` until the curve first reaches `threshold_db`, or
/// `None` when it never does. Gaps never count as reached.
pub fn frames_to_threshold(curve: &[CurvePoint], from: usize, threshold_db: f64) -> Option<usize> {
    curve
        .iter()
        .enumerate()
        .skip(from)
        .find(|(_, p)| p.erle_db.is_some_and(|e| e >= threshold_db))
        .map(|(i, _)| i - from)
}

/// Convergence times of one clip, in frames. A canceller that never reaches
/// the threshold is charged every frame of the segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRecovery {
    pub initial: usize,
    pub initial_reached: bool,
    pub after_switch: usize,
    pub after_switch_reached: bool,
}

/// `switch_frame` is the first curve point whose window starts at or after
/// the echo-path change.
pub fn clip_recovery(curve: &[CurvePoint], switch_frame: usize, threshold_db: f64) -> ClipRecovery {
    let switch_frame = switch_frame.min(curve.len());
    let initial = frames_to_threshold(&curve[..switch_frame], 0, threshold_db);
    let after = frames_to_threshold(curve, switch_frame, threshold_db);
    ClipRecovery {
        initial: initial.unwrap_or(switch_frame),
        initial_reached: initial.is_some(),
        after_switch: after.unwrap_or(curve.len() - switch_frame),
        after_switch_reached: after.is_some(),
    }
}

/// Mean convergence times of one method over a set of clips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverySummary {
    pub clips: usize,
    pub initial_frames: f64,
    pub after_switch_frames: f64,
    /// Clips that never reached the threshold in one of the two segments.
    pub censored: usize,
}

pub fn summarize_recovery(clips: &[ClipRecovery]) -> Option<RecoverySummary> {
    Some(RecoverySummary {
        clips: clips.len(),
        initial_frames: mean(clips.iter().map(|c| c.initial as f64))?,
        after_switch_frames: mean(clips.iter().map(|c| c.after_switch as f64))?,
        censored: clips
            .iter()
            .filter(|c| !(c.initial_reached && c.after_switch_reached))
            .count(),
    })
}

pub fn recovery_csv(summaries: &[(Method, RecoverySummary)]) -> String {
    let mut out = String::from("method,clips,initial_frames,after_switch_frames,censored\n");
    for (m, s) in summaries {
        let _ = writeln!(
            out,
            "{m},{},{:.3},{:.3},{}",
            s.clips, s.initial_frames, s.after_switch_frames, s.censored
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
