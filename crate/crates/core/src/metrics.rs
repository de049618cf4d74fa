//! Acoustic contrast and normalized signal distortion, per frame in the
//! time domain and per bin over the whole simulation in the frequency domain.
//!
//! Contrast is normalized by microphone count:
//! `AC = (M_D * sum_b E_b) / (M_B * sum_d E_d)`. Distortion is
//! `nSDP = sum_b ||p_b - d_b||^2 / sum_b ||d_b||^2`. Both are reported in dB,
//! clamped to +-200 dB, with denominators floored at 1e-300.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::signal::energy;

pub const DB_CLAMP: f64 = 200.0;
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// `10 log10(num / den)` with the floor and clamp applied.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    let r = num / den.max(DENOMINATOR_FLOOR);
    (10.0 * r.log10()).clamp(-DB_CLAMP, DB_CLAMP)
}

fn total_energy(signals: &[Vec<f64>]) -> f64 {
    signals.iter().map(|s| energy(s)).sum()
}

fn error_energy(p: &[Vec<f64>], d: &[Vec<f64>]) -> f64 {
    p.iter()
        .zip(d)
        .map(|(p, d)| p.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

pub fn td_ac(bright: &[Vec<f64>], dark: &[Vec<f64>]) -> f64 {
    let num = dark.len() as f64 * total_energy(bright);
    let den = bright.len() as f64 * total_energy(dark);
    ratio_db(num, den)
}

pub fn td_nsdp(bright: &[Vec<f64>], desired: &[Vec<f64>]) -> f64 {
    assert_eq!(bright.len(), desired.len());
    ratio_db(error_energy(bright, desired), total_energy(desired))
}

pub fn fft_size(len: usize) -> usize {
    len.max(1).next_power_of_two()
}

/// One-sided spectra (bins `0..=nfft/2`) of zero-padded real signals.
pub fn spectra(signals: &[Vec<f64>], nfft: usize) -> Vec<Vec<Complex<f64>>> {
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    signals
        .iter()
        .map(|s| {
            assert!(s.len() <= nfft, "signal longer than the FFT size");
            let mut buf: Vec<Complex<f64>> = s.iter().map(|&x| Complex::new(x, 0.0)).collect();
            buf.resize(nfft, Complex::new(0.0, 0.0));
            fft.process(&mut buf);
            buf.truncate(nfft / 2 + 1);
            buf
        })
        .collect()
}

/// Per-bin power summed over signals, bins `0..=nfft/2`.
pub fn summed_power(spec: &[Vec<Complex<f64>>]) -> Vec<f64> {
    let bins = spec.first().map_or(0, Vec::len);
    (0..bins)
        .map(|k| spec.iter().map(|s| s[k].norm_sqr()).sum())
        .collect()
}

/// Time-domain energy recovered from a one-sided power spectrum.
pub fn parseval_energy(power: &[f64], nfft: usize) -> f64 {
    let half = nfft / 2;
    let mut total = 0.0;
    for (k, p) in power.iter().enumerate() {
        let w = if k == 0 || (nfft % 2 == 0 && k == half) { 1.0 } else { 2.0 };
        total += w * p;
    }
    total / nfft as f64
}

/// Frequencies of bins `1..=nfft/2`.
pub fn bin_frequencies(nfft: usize, sample_rate_hz: f64) -> Vec<f64> {
    (1..=nfft / 2)
        .map(|k| k as f64 * sample_rate_hz / nfft as f64)
        .collect()
}

/// Per-bin acoustic contrast over bins `1..=nfft/2`.
pub fn fd_ac(bright: &[Vec<f64>], dark: &[Vec<f64>], nfft: usize) -> Vec<f64> {
    let pb = summed_power(&spectra(bright, nfft));
    let pd = summed_power(&spectra(dark, nfft));
    let (mb, md) = (bright.len() as f64, dark.len() as f64);
    (1..=nfft / 2)
        .map(|k| ratio_db(md * pb[k], mb * pd[k]))
        .collect()
}

/// Per-bin normalized distortion over bins `1..=nfft/2`.
pub fn fd_nsdp(bright: &[Vec<f64>], desired: &[Vec<f64>], nfft: usize) -> Vec<f64> {
    assert_eq!(bright.len(), desired.len());
    let sp = spectra(bright, nfft);
    let sd = spectra(desired, nfft);
    (1..=nfft / 2)
        .map(|k| {
            let err: f64 = sp.iter().zip(&sd).map(|(p, d)| (p[k] - d[k]).norm_sqr()).sum();
            let des: f64 = sd.iter().map(|d| d[k].norm_sqr()).sum();
            ratio_db(err, des)
        })
        .collect()
}

/// All four metrics of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsSeries {
    pub td_ac: Vec<f64>,
    pub td_nsdp: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    pub fd_ac: Vec<f64>,
    pub fd_nsdp: Vec<f64>,
}

/// Accumulates per-frame TD metrics and the full signals needed for FD metrics.
#[derive(Clone, Debug, Default)]
pub struct MetricsRecorder {
    td_ac: Vec<f64>,
    td_nsdp: Vec<f64>,
    bright: Vec<Vec<f64>>,
    dark: Vec<Vec<f64>>,
    desired: Vec<Vec<f64>>,
}

fn append(dst: &mut Vec<Vec<f64>>, frames: &[Vec<f64>]) {
    if dst.is_empty() {
        dst.resize(frames.len(), Vec::new());
    }
    for (d, f) in dst.iter_mut().zip(frames) {
        d.extend_from_slice(f);
    }
}

impl MetricsRecorder {
    pub fn push_frame(&mut self, bright: &[Vec<f64>], dark: &[Vec<f64>], desired: &[Vec<f64>]) {
        self.td_ac.push(td_ac(bright, dark));
        self.td_nsdp.push(td_nsdp(bright, desired));
        append(&mut self.bright, bright);
        append(&mut self.dark, dark);
        append(&mut self.desired, desired);
    }

    pub fn bright(&self) -> &[Vec<f64>] {
        &self.bright
    }

    pub fn dark(&self) -> &[Vec<f64>] {
        &self.dark
    }

    pub fn desired(&self) -> &[Vec<f64>] {
        &self.desired
    }

    pub fn finish(self, sample_rate_hz: f64) -> MetricsSeries {
        let len = self.bright.first().map_or(0, Vec::len);
        let nfft = fft_size(len);
        MetricsSeries {
            freqs_hz: bin_frequencies(nfft, sample_rate_hz),
            fd_ac: fd_ac(&self.bright, &self.dark, nfft),
            fd_nsdp: fd_nsdp(&self.bright, &self.desired, nfft),
            td_ac: self.td_ac,
            td_nsdp: self.td_nsdp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_degenerate_cases() {
        let a = vec![vec![1.0, -1.0], vec![0.5, 0.5]];
        assert!(td_ac(&a, &a).abs() < 1e-12);
        assert_eq!(td_ac(&a, &[vec![0.0; 2]]), DB_CLAMP);
        assert_eq!(td_nsdp(&a, &a), -DB_CLAMP);
        let zero = vec![vec![0.0; 2]; 2];
        assert!(td_nsdp(&zero, &a).abs() < 1e-12);
        let double: Vec<Vec<f64>> = a.iter().map(|s| s.iter().map(|x| 2.0 * x).collect()).collect();
        assert!(td_nsdp(&double, &a).abs() < 1e-12);
    }

    #[test]
    fn mic_count_normalization() {
        // Two bright mics with unit energy vs one dark mic with unit energy.
        let bright = vec![vec![1.0], vec![1.0]];
        let dark = vec![vec![1.0]];
        assert!(td_ac(&bright, &dark).abs() < 1e-12);
    }

    #[test]
    fn fd_degenerate_cases() {
        let n = 64;
        let tone: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).cos()).collect();
        let same = fd_ac(std::slice::from_ref(&tone), std::slice::from_ref(&tone), n);
        assert!(same.iter().all(|v| v.abs() < 1e-9));
        let silent = fd_ac(std::slice::from_ref(&tone), &[vec![0.0; n]], n);
        assert_eq!(silent[7], DB_CLAMP);
        let exact = fd_nsdp(std::slice::from_ref(&tone), std::slice::from_ref(&tone), n);
        assert!(exact.iter().all(|&v| v == -DB_CLAMP));
        let nothing = fd_nsdp(&[vec![0.0; n]], &[tone], n);
        assert!(nothing[7].abs() < 1e-9);
    }

    #[test]
    fn frequency_axis() {
        let f = bin_frequencies(16, 8000.0);
        assert_eq!(f.len(), 8);
        assert_eq!(f[0], 500.0);
        assert_eq!(*f.last().unwrap(), 4000.0);
        assert!(f.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn parseval_recovers_energy() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0).collect();
        let nfft = fft_size(x.len());
        let p = summed_power(&spectra(std::slice::from_ref(&x), nfft));
        let e = parseval_energy(&p, nfft);
        assert!((e - energy(&x)).abs() < 1e-10 * energy(&x));
    }
}
