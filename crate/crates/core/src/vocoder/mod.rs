//! Reference sinusoids-plus-noise vocoder.
//!
//! Analysis produces, per frame, 25 mel-cepstral coefficients (orthonormal
//! DCT-II of log mel-band energies, coefficient 0 included), four band
//! aperiodicities and a voicing flag, plus an f0 contour. Synthesis drives a
//! harmonic oscillator bank and shaped noise from the same parameters.

mod analysis;
pub mod mel;
pub mod pitch;
mod synthesis;
pub mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analysis::{analyze, analyze_centered, Analyzer};
pub use synthesis::synthesize;
pub use wav::{read_wav, write_wav};

/// Floor added to mel-band energies before the log.
pub const LOG_FLOOR: f64 = 1e-8;
/// Lower clamp of band aperiodicity.
pub const BAP_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Vocoder("sample rate must be positive".into()));
        }
        if let Some(v) = samples.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Vocoder(format!("sample {v} outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub sample_rate: u32,
    pub frame_hop_s: f64,
    pub window: usize,
    pub fft_size: usize,
    pub mel_bands: usize,
    pub n_mcep: usize,
    pub n_bap: usize,
    pub f0_min: f64,
    pub f0_max: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            frame_hop_s: 0.005,
            window: 1024,
            fft_size: 1024,
            mel_bands: 40,
            n_mcep: crate::features::N_MCEP,
            n_bap: crate::features::N_BAP,
            f0_min: 50.0,
            f0_max: 600.0,
            voicing_threshold: 0.3,
        }
    }
}

impl AnalysisConfig {
    pub fn hop_samples(&self) -> usize {
        (self.frame_hop_s * self.sample_rate as f64).round() as usize
    }

    /// Feature dimension: cepstra, aperiodicities, voicing flag.
    pub fn dim(&self) -> usize {
        self.n_mcep + self.n_bap + 1
    }

    pub fn dim_labels(&self) -> Vec<String> {
        (0..self.n_mcep)
            .map(|i| format!("mcep_{i}"))
            .chain((0..self.n_bap).map(|i| format!("bap_{i}")))
            .chain(std::iter::once("vuv".to_string()))
            .collect()
    }

    /// Edges in Hz of the aperiodicity bands, equal width on a log axis from
    /// 100 Hz to Nyquist.
    pub fn bap_edges(&self) -> Vec<f64> {
        let lo: f64 = 100.0;
        let hi = self.sample_rate as f64 / 2.0;
        (0..=self.n_bap)
            .map(|b| lo * (hi / lo).powf(b as f64 / self.n_bap as f64))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let hop = self.hop_samples();
        let bad = |m: String| Err(Error::Vocoder(m));
        if self.sample_rate == 0 || hop == 0 {
            return bad(format!(
                "hop of {} s at {} Hz is empty",
                self.frame_hop_s, self.sample_rate
            ));
        }
        if self.window < hop {
            return bad(format!("window {} shorter than hop {hop}", self.window));
        }
        if self.fft_size < self.window || !self.fft_size.is_multiple_of(2) {
            return bad(format!(
                "fft size {} must be even and at least the window {}",
                self.fft_size, self.window
            ));
        }
        if self.n_mcep == 0 || self.n_mcep > self.mel_bands {
            return bad(format!("{} cepstra from {} mel bands", self.n_mcep, self.mel_bands));
        }
        if self.n_bap == 0 {
            return bad("at least one aperiodicity band is required".into());
        }
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max && self.f0_max < self.sample_rate as f64 / 2.0) {
            return bad(format!("f0 range {}..{} Hz is invalid", self.f0_min, self.f0_max));
        }
        let max_lag = (self.sample_rate as f64 / self.f0_min).floor() as usize;
        if max_lag + 1 >= self.window {
            return bad(format!(
                "window {} cannot resolve periods of {} Hz",
                self.window, self.f0_min
            ));
        }
        Ok(())
    }
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}
