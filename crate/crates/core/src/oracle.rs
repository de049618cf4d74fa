//! Naive reference computations used to cross-check the fast paths.
//!
//! Nothing here calls into the design, runtime or metric code it checks:
//! convolutions are textbook sums, matrices are materialized entry by entry
//! and spectra come from a direct DFT.

use nalgebra::{DMatrix, DVector};

use crate::irdata::{IrSet, MicGroup, PositionId};

/// `y[n] = sum_k a[k] b[n - k]`, evaluated output sample by output sample.
pub fn direct_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let len = a.len() + b.len() - 1;
    (0..len)
        .map(|n| {
            let lo = n.saturating_sub(b.len() - 1);
            let hi = n.min(a.len() - 1);
            (lo..=hi).map(|k| a[k] * b[n - k]).sum()
        })
        .collect()
}

/// `H_zone` with one `(K+J-1)`-row block per mic and one `J`-column block
/// per loudspeaker, built from `H[n, j] = h[n - j]`.
pub fn dense_zone_matrix(set: &IrSet, pos: PositionId, group: MicGroup, filter_len: usize) -> DMatrix<f64> {
    let k = set.ir_length();
    let rows = k + filter_len - 1;
    let l_count = set.num_loudspeakers();
    let mics = set.mic_count(group);
    DMatrix::from_fn(mics * rows, l_count * filter_len, |r, c| {
        let (m, n) = (r / rows, r % rows);
        let (l, j) = (c / filter_len, c % filter_len);
        if n >= j && n - j < k {
            set.ir(pos, group, m, l)[n - j]
        } else {
            0.0
        }
    })
}

pub fn dense_covariance(set: &IrSet, pos: PositionId, group: MicGroup, filter_len: usize) -> DMatrix<f64> {
    let h = dense_zone_matrix(set, pos, group, filter_len);
    h.transpose() * h
}

/// `H_B^T d` with `d` the stacked desired signals.
pub fn dense_cross(set: &IrSet, pos: PositionId, desired: &[Vec<f64>], filter_len: usize) -> DVector<f64> {
    let h = dense_zone_matrix(set, pos, MicGroup::Bright, filter_len);
    let d = DVector::from_iterator(h.nrows(), desired.iter().flatten().copied());
    h.transpose() * d
}

/// Reproduced pressures at every mic of `group` for stacked filters `q`.
pub fn zone_pressures(set: &IrSet, pos: PositionId, group: MicGroup, q: &[f64], filter_len: usize) -> Vec<Vec<f64>> {
    (0..set.mic_count(group))
        .map(|m| {
            let rows = set.ir_length() + filter_len - 1;
            let mut p = vec![0.0; rows];
            for l in 0..set.num_loudspeakers() {
                let part = direct_convolution(set.ir(pos, group, m, l), &q[l * filter_len..(l + 1) * filter_len]);
                for (a, b) in p.iter_mut().zip(part) {
                    *a += b;
                }
            }
            p
        })
        .collect()
}

/// `(1-zeta) ||p_B - d_B||^2 + zeta ||p_D||^2 + lambda ||q||^2`, evaluated
/// by explicit convolution.
pub fn pm_objective(
    set: &IrSet,
    pos: PositionId,
    desired: &[Vec<f64>],
    q: &[f64],
    filter_len: usize,
    zeta: f64,
    lambda: f64,
) -> f64 {
    let pb = zone_pressures(set, pos, MicGroup::Bright, q, filter_len);
    let pd = zone_pressures(set, pos, MicGroup::Dark, q, filter_len);
    let bright_err: f64 = pb
        .iter()
        .zip(desired)
        .map(|(p, d)| p.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    let dark: f64 = pd.iter().flatten().map(|x| x * x).sum();
    let reg: f64 = q.iter().map(|x| x * x).sum();
    (1.0 - zeta) * bright_err + zeta * dark + lambda * reg
}

/// Image lattice size by scanning the whole cube `[-O, O]^3`.
pub fn image_count_bruteforce(order: usize) -> usize {
    let o = order as i64;
    let mut count = 0;
    for i in -o..=o {
        for j in -o..=o {
            for k in -o..=o {
                if i.abs() + j.abs() + k.abs() <= o {
                    count += 1;
                }
            }
        }
    }
    count
}

/// `|X_k|^2` for bins `0..=nfft/2` by direct DFT of the zero-padded signal.
pub fn dft_power(x: &[f64], nfft: usize) -> Vec<f64> {
    (0..=nfft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in x.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * ((k * n) % nfft) as f64 / nfft as f64;
                re += v * phase.cos();
                im += v * phase.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Output of a frame-switched FIR: frame `t` of `x` is convolved with its
/// own filter `filters[t]` and the full result is added at offset `t * n`,
/// then truncated to `x.len()`. Stale tails fall out of the superposition.
pub fn switched_convolution(x: &[f64], filters: &[&[f64]], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (t, f) in filters.iter().enumerate() {
        let start = t * n;
        if start >= x.len() {
            break;
        }
        let frame = &x[start..x.len().min(start + n)];
        for (i, v) in direct_convolution(f, frame).into_iter().enumerate() {
            if start + i < out.len() {
                out[start + i] += v;
            }
        }
    }
    out
}

/// `sum_l h_l * y_l` over the whole signal, truncated to the input length.
pub fn mix_signals(irs: &[&[f64]], y: &[Vec<f64>]) -> Vec<f64> {
    let len = y[0].len();
    let mut out = vec![0.0; len];
    for (h, y_l) in irs.iter().zip(y) {
        for (o, v) in out.iter_mut().zip(direct_convolution(h, y_l)) {
            *o += v;
        }
    }
    out
}
