//! NKFW weight files and their text manifests.
//!
//! Layout (little-endian): magic `NKFW`, `u32` version, `u32` record count,
//! then per record `u16` name length, UTF-8 name, `u8` ndim, `u32` dims, and
//! interleaved `(re, im)` `f32` values in row-major order. PReLU slopes are
//! stored as complex values with a zero imaginary part.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use sha2::{Digest, Sha256};

use super::weights::{ModelWeights, TensorMut, TensorRef};
use super::NkfConfig;
use crate::error::{AecError, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"NKFW";
const VERSION: u32 = 1;

/// One decoded record.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<Complex<f32>>,
}

fn record_payload(values: &[Complex<f32>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn weight_records<T: Real>(weights: &ModelWeights<T>) -> Vec<WeightRecord> {
    let mut records = Vec::new();
    weights.visit(|info, t| {
        let values = match t {
            TensorRef::Complex(c) => c
                .iter()
                .map(|v| Complex::new(v.re.to_f64_lossless() as f32, v.im.to_f64_lossless() as f32))
                .collect(),
            TensorRef::Real(r) => r
                .iter()
                .map(|v| Complex::new(v.to_f64_lossless() as f32, 0.0))
                .collect(),
        };
        records.push(WeightRecord {
            name: info.name,
            dims: info.dims,
            values,
        });
    });
    records
}

/// Serializes weights to NKFW bytes. Values are rounded to `f32`.
pub fn encode_weights<T: Real>(weights: &ModelWeights<T>) -> Vec<u8> {
    let records = weight_records(weights);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in &records {
        out.extend_from_slice(&(r.name.len() as u16).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.push(r.dims.len() as u8);
        for &d in &r.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&record_payload(&r.values));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> AecError {
        AecError::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses NKFW bytes into raw records. `path` is only used in error messages.
pub fn decode_records(bytes: &[u8], path: &Path) -> Result<Vec<WeightRecord>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.fail("tensor name is not UTF-8"))?
            .to_owned();
        let ndim = r.u8()? as usize;
        let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        if n * 8 > bytes.len() - r.pos {
            return Err(r.fail(format!("tensor {name} runs past end of file")));
        }
        let values = (0..n)
            .map(|_| Ok(Complex::new(r.f32()?, r.f32()?)))
            .collect::<Result<Vec<_>>>()?;
        records.push(WeightRecord { name, dims, values });
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after last record"));
    }
    Ok(records)
}

/// Builds weights from decoded records, inferring the tap count from `fc3`.
pub fn weights_from_records<T: Real>(records: &[WeightRecord], path: &Path) -> Result<ModelWeights<T>> {
    let fail = |reason: String| AecError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let taps = records
        .iter()
        .find(|r| r.name == "fc3.bias")
        .map(|r| r.dims.first().copied().unwrap_or(0))
        .ok_or_else(|| fail("missing tensor fc3.bias".into()))?;
    let config = NkfConfig::with_taps(taps);
    config.validate().map_err(|e| fail(e.to_string()))?;
    let mut weights = ModelWeights::<T>::zeros(&config);
    let layout = weights.layout();
    if layout.len() != records.len() {
        return Err(fail(format!(
            "expected {} tensors, found {}",
            layout.len(),
            records.len()
        )));
    }
    for (info, rec) in layout.iter().zip(records) {
        if info.name != rec.name || info.dims != rec.dims {
            return Err(fail(format!(
                "expected tensor {} {:?}, found {} {:?}",
                info.name, info.dims, rec.name, rec.dims
            )));
        }
        if rec.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(fail(format!("tensor {} has non-finite entries", rec.name)));
        }
        if !info.complex && rec.values.iter().any(|v| v.im != 0.0) {
            return Err(fail(format!("real tensor {} has an imaginary part", rec.name)));
        }
    }
    let mut it = records.iter();
    weights.visit_mut(|_, t| {
        let rec = it.next().expect("record count checked");
        match t {
            TensorMut::Complex(c) => {
                for (dst, src) in c.iter_mut().zip(&rec.values) {
                    *dst = Complex::new(T::of(src.re as f64), T::of(src.im as f64));
                }
            }
            TensorMut::Real(r) => {
                for (dst, src) in r.iter_mut().zip(&rec.values) {
                    *dst = T::of(src.re as f64);
                }
            }
        }
    });
    Ok(weights)
}

/// Path of the manifest that accompanies `weights_path`.
pub fn manifest_path(weights_path: &Path) -> PathBuf {
    let mut s = weights_path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Manifest text: a whole-file checksum line, then `name shape sha256` per
/// tensor, where the tensor checksum covers its encoded payload.
pub fn manifest_text(bytes: &[u8], records: &[WeightRecord]) -> String {
    let mut out = format!("file sha256={}\n", hex(&Sha256::digest(bytes)));
    for r in records {
        let shape = r.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        let digest = hex(&Sha256::digest(record_payload(&r.values)));
        let _ = writeln!(out, "{} {} sha256={}", r.name, shape, digest);
    }
    out
}

/// Writes the weight file and its manifest. Returns the parameter count.
pub fn save_weights<T: Real>(path: &Path, weights: &ModelWeights<T>) -> Result<usize> {
    let bytes = encode_weights(weights);
    let manifest = manifest_text(&bytes, &weight_records(weights));
    fs::write(path, &bytes).map_err(|e| AecError::io(path, e))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, manifest).map_err(|e| AecError::io(&mpath, e))?;
    Ok(weights.parameter_count())
}

/// Reads a weight file. The manifest is not consulted; see [`verify_weights`].
pub fn load_weights<T: Real>(path: &Path) -> Result<ModelWeights<T>> {
    let bytes = fs::read(path).map_err(|e| AecError::io(path, e))?;
    let records = decode_records(&bytes, path)?;
    weights_from_records(&records, path)
}

/// Checks a weight file against its manifest.
pub fn verify_weights(path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| AecError::io(path, e))?;
    let records = decode_records(&bytes, path)?;
    let mpath = manifest_path(path);
    let stored = fs::read_to_string(&mpath).map_err(|e| AecError::io(&mpath, e))?;
    let expected = manifest_text(&bytes, &records);
    if stored != expected {
        let line = stored
            .lines()
            .zip(expected.lines())
            .find(|(a, b)| a != b)
            .map(|(a, _)| a.to_owned())
            .unwrap_or_else(|| "line count differs".to_owned());
        return Err(AecError::Format {
            path: mpath,
            reason: format!("checksum mismatch: {line}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelWeights<f64> {
        ModelWeights::init(&NkfConfig::with_taps(2), 11)
    }

    #[test]
    fn header_layout() {
        let bytes = encode_weights(&sample());
        assert_eq!(&bytes[..4], b"NKFW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16);
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 10);
        assert_eq!(&bytes[14..24], b"fc1.weight");
        assert_eq!(bytes[24], 2);
        assert_eq!(u32::from_le_bytes(bytes[25..29].try_into().unwrap()), 10);
        assert_eq!(u32::from_le_bytes(bytes[29..33].try_into().unwrap()), 5);
    }

    #[test]
    fn save_load_verify() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.nkfw");
        let w = sample();
        assert_eq!(save_weights(&path, &w).unwrap(), w.parameter_count());
        verify_weights(&path).unwrap();
        let back: ModelWeights<f64> = load_weights(&path).unwrap();
        let flat_a = w.to_flat();
        let flat_b = back.to_flat();
        for (a, b) in flat_a.iter().zip(&flat_b) {
            assert_eq!(*b, *a as f32 as f64);
        }
        // saving the reloaded weights is a fixed point
        let path2 = dir.path().join("w2.nkfw");
        save_weights(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.nkfw");
        save_weights(&path, &sample()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 2;
        bytes[last] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        let err = verify_weights(&path).unwrap_err().to_string();
        assert!(err.contains("checksum mismatch"), "{err}");
    }

    #[test]
    fn malformed_files_are_rejected() {
        let p = Path::new("x.nkfw");
        let good = encode_weights(&sample());
        assert!(decode_records(b"NKFX\x01\0\0\0\0\0\0\0", p).is_err());
        assert!(decode_records(&good[..good.len() - 3], p).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_records(&extra, p).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(decode_records(&bad_version, p).is_err());
        let recs = decode_records(&good, p).unwrap();
        assert!(weights_from_records::<f64>(&recs[..recs.len() - 1], p).is_err());
        let mut nan = recs.clone();
        nan[0].values[0].re = f32::NAN;
        assert!(weights_from_records::<f64>(&nan, p).is_err());
        assert!(matches!(
            load_weights::<f64>(Path::new("/nonexistent/w.nkfw")),
            Err(AecError::Io { .. })
        ));
    }
}
