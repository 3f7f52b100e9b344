//! Mono 16 kHz WAV input/output (PCM16 or 32-bit float).

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use super::{TimeSignal, SAMPLE_RATE};
use crate::error::{AecError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

fn format_error(path: &Path, reason: impl Into<String>) -> AecError {
    AecError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn hound_error(path: &Path, err: hound::Error) -> AecError {
    match err {
        hound::Error::IoError(e) => AecError::io(path, e),
        other => format_error(path, other.to_string()),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<TimeSignal<f64>> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(format_error(path, format!("expected mono, got {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(format_error(
            path,
            format!("expected {SAMPLE_RATE} Hz, got {} Hz", spec.sample_rate),
        ));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
        (fmt, bits) => {
            return Err(format_error(path, format!("unsupported sample format {fmt:?}/{bits} bit")))
        }
    };
    Ok(TimeSignal::new(samples, spec.sample_rate))
}

pub fn write_wav<T: Real>(
    path: impl AsRef<Path>,
    signal: &TimeSignal<T>,
    format: WavFormat,
) -> Result<()> {
    let path = path.as_ref();
    if signal.sample_rate != SAMPLE_RATE {
        return Err(AecError::config(format!(
            "refusing to write {} Hz audio, only {SAMPLE_RATE} Hz is supported",
            signal.sample_rate
        )));
    }
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for &s in &signal.samples {
        let v = s.to_f64_lossless();
        let res = match format {
            WavFormat::Pcm16 => writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            WavFormat::Float32 => writer.write_sample(v as f32),
        };
        res.map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}
