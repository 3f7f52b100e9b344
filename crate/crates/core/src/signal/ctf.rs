use num_complex::Complex;

use super::Spectrogram;
use crate::error::{AecError, Result};
use crate::scalar::{czero, dot_conj, Real};

/// Far-end frames `[X[m,k], X[m-1,k], ..., X[m-L+1,k]]` at one bin, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfInputVector<T> {
    pub values: Vec<Complex<T>>,
}

impl<T: Real> CtfInputVector<T> {
    pub fn new(values: Vec<Complex<T>>) -> Self {
        CtfInputVector { values }
    }

    pub fn taps(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|c| c.re == T::zero() && c.im == T::zero())
    }
}

/// Stacks the `taps` most recent far-end frames at bin `bin`; frames before
/// the start of the signal count as zero.
pub fn ctf_stack<T: Real>(
    far: &Spectrogram<T>,
    frame: usize,
    bin: usize,
    taps: usize,
) -> Result<CtfInputVector<T>> {
    if frame >= far.num_frames() {
        return Err(AecError::Index {
            what: "frame",
            index: frame,
            limit: far.num_frames(),
        });
    }
    if bin >= far.num_bins() {
        return Err(AecError::Index {
            what: "bin",
            index: bin,
            limit: far.num_bins(),
        });
    }
    if taps == 0 {
        return Err(AecError::config("taps must be >= 1"));
    }
    let values = (0..taps)
        .map(|l| {
            if l <= frame {
                far.get(frame - l, bin)
            } else {
                czero()
            }
        })
        .collect();
    Ok(CtfInputVector { values })
}

/// Echo estimate `h^H x` of a CTF `h` applied to stacked far-end frames.
pub fn apply_ctf<T: Real>(h: &[Complex<T>], x: &CtfInputVector<T>) -> Result<Complex<T>> {
    if h.len() != x.values.len() {
        return Err(AecError::shape(format!(
            "ctf has {} taps but input vector has {}",
            h.len(),
            x.values.len()
        )));
    }
    Ok(dot_conj(h, &x.values))
}

/// Sliding CTF input vectors over one bin's frame sequence. Reuses a single
/// buffer; `window(m)` is `ctf_stack(.., m, k, L)` for the bin the sequence
/// was taken from.
pub(crate) struct CtfWindow<'a, T> {
    bin: &'a [Complex<T>],
    buf: Vec<Complex<T>>,
}

impl<'a, T: Real> CtfWindow<'a, T> {
    pub(crate) fn new(bin: &'a [Complex<T>], taps: usize) -> Self {
        CtfWindow {
            bin,
            buf: vec![czero(); taps],
        }
    }

    pub(crate) fn at(&mut self, frame: usize) -> &[Complex<T>] {
        for (l, slot) in self.buf.iter_mut().enumerate() {
            *slot = if l <= frame {
                self.bin[frame - l]
            } else {
                czero()
            };
        }
        &self.buf
    }
}
