//! Sample-level helpers shared by the design and runtime modules: linear
//! convolution, test-signal generators and raw `f64` stream I/O.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    convolve_add(a, b, &mut out);
    out
}

/// Adds `a * b` into `out[..a.len() + b.len() - 1]`.
pub fn convolve_add(a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert!(out.len() + 1 >= a.len() + b.len());
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (o, &bj) in out[i..i + b.len()].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Seeded white noise, uniform on [-1, 1).
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Exponential sine sweep from `f_start` to `f_stop` Hz over `len` samples.
pub fn exp_sweep(len: usize, sample_rate_hz: f64, f_start: f64, f_stop: f64) -> Vec<f64> {
    let duration = len as f64 / sample_rate_hz;
    let ratio = (f_stop / f_start).ln();
    let k = 2.0 * PI * f_start * duration / ratio;
    (0..len)
        .map(|n| {
            let t = n as f64 / sample_rate_hz;
            (k * ((t / duration * ratio).exp() - 1.0)).sin()
        })
        .collect()
}

pub fn write_f64_le(path: &Path, samples: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: (bytes.len() as u64 / 8) * 8,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
