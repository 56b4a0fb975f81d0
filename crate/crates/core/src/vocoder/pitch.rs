//! Autocorrelation pitch estimation.
//!
//! The frame is mean-removed, Hann-windowed and autocorrelated through an FFT
//! of at least twice its length. Dividing by the window's own autocorrelation
//! undoes the taper so a steady periodic signal peaks near 1 at its period.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{hann, AnalysisConfig};

/// Mean-square level below which a frame is treated as silence.
pub const SILENCE_POWER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    /// Hz, 0 when unvoiced.
    pub f0: f64,
    /// Normalized autocorrelation at the chosen lag (0 for silence).
    pub clarity: f64,
}

pub struct PitchTracker {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
    window: Vec<f64>,
    window_acf: Vec<f64>,
    min_lag: usize,
    max_lag: usize,
    threshold: f64,
    sample_rate: f64,
}

impl PitchTracker {
    pub fn new(cfg: &AnalysisConfig) -> Self {
        let n = (2 * cfg.window).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let window = hann(cfg.window);
        let sr = cfg.sample_rate as f64;
        let mut t = Self {
            fwd,
            inv,
            n,
            window_acf: Vec::new(),
            window: window.clone(),
            min_lag: (sr / cfg.f0_max).ceil() as usize,
            max_lag: (sr / cfg.f0_min).floor() as usize,
            threshold: cfg.voicing_threshold,
            sample_rate: sr,
        };
        t.window_acf = t.raw_acf(&window);
        t
    }

    fn raw_acf(&self, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(self.n, Complex::new(0.0, 0.0));
        self.fwd.process(&mut buf);
        for v in buf.iter_mut() {
            *v = Complex::new(v.norm_sqr(), 0.0);
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf[..=self.max_lag + 1].iter().map(|v| v.re * scale).collect()
    }

    /// Normalized autocorrelation of a raw frame for lags `0..=max_lag + 1`,
    /// or `None` for a silent frame.
    pub fn normalized_acf(&self, frame: &[f64]) -> Option<Vec<f64>> {
        debug_assert_eq!(frame.len(), self.window.len());
        let mean = frame.iter().sum::<f64>() / frame.len() as f64;
        let xw: Vec<f64> = frame.iter().zip(&self.window).map(|(v, w)| (v - mean) * w).collect();
        let acf = self.raw_acf(&xw);
        let w2 = self.window_acf[0];
        if acf[0] / w2 < SILENCE_POWER {
            return None;
        }
        Some(
            acf.iter()
                .zip(&self.window_acf)
                .map(|(a, w)| (a / acf[0]) / (w / w2))
                .collect(),
        )
    }

    pub fn estimate(&self, frame: &[f64]) -> PitchEstimate {
        let unvoiced = PitchEstimate { f0: 0.0, clarity: 0.0 };
        let Some(r) = self.normalized_acf(frame) else { return unvoiced };
        let peaks: Vec<usize> = (self.min_lag.max(1)..=self.max_lag)
            .filter(|&t| r[t] > r[t - 1] && r[t] >= r[t + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&t| r[t]).reduce(f64::max) else {
            return unvoiced;
        };
        // Prefer the shortest period whose peak is nearly as strong as the best,
        // which avoids locking onto multiples of the true period.
        let lag = peaks.into_iter().find(|&t| r[t] >= 0.9 * best).expect("best exists");
        let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let clarity = b - 0.25 * (a - c) * shift;
        if clarity < self.threshold {
            return PitchEstimate { f0: 0.0, clarity };
        }
        PitchEstimate {
            f0: self.sample_rate / (lag as f64 + shift),
            clarity,
        }
    }
}
