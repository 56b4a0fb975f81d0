//! Mel filterbank and the orthonormal DCT-II that turns log band energies
//! into cepstra.

use std::f64::consts::PI;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, spaced evenly on the mel scale between
/// 0 Hz and Nyquist. Stored sparsely as `(first_bin, weights)` per band.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    bands: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(n_bands: usize, fft_size: usize, sample_rate: f64) -> Self {
        let n_bins = fft_size / 2 + 1;
        let top = hz_to_mel(sample_rate / 2.0);
        let edges: Vec<f64> = (0..n_bands + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_bands + 1) as f64))
            .collect();
        let bin_hz = sample_rate / fft_size as f64;
        let bands = (0..n_bands)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let first = (lo / bin_hz).ceil() as usize;
                let last = ((hi / bin_hz).floor() as usize).min(n_bins - 1);
                let weights = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                        .max(0.0)
                    })
                    .collect();
                (first, weights)
            })
            .collect();
        Self {
            bands,
            centers_hz: edges[1..=n_bands].to_vec(),
            n_bins,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Band energies `E_m = sum_k M_m(k) p_k` of a one-sided power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.bands
            .iter()
            .map(|(first, w)| w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Sum of each band's weights.
    pub fn band_weights(&self) -> Vec<f64> {
        self.bands.iter().map(|(_, w)| w.iter().sum()).collect()
    }
}

/// Orthonormal DCT-II of `x`, keeping the first `n_out` coefficients.
pub fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (0..n_out)
        .map(|i| {
            let s = if i == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            s * x
                .iter()
                .enumerate()
                .map(|(j, v)| v * (PI * i as f64 * (j as f64 + 0.5) / m).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Inverse of [`dct2`] from a possibly truncated coefficient vector back to
/// `n` samples; missing coefficients are taken as zero.
pub fn idct2(c: &[f64], n: usize) -> Vec<f64> {
    let m = n as f64;
    (0..n)
        .map(|j| {
            c.iter()
                .enumerate()
                .map(|(i, v)| {
                    let s = if i == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                    s * v * (PI * i as f64 * (j as f64 + 0.5) / m).cos()
                })
                .sum()
        })
        .collect()
}
