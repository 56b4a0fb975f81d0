use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::mel::{dct2, MelFilterbank};
use super::pitch::PitchTracker;
use super::{hann, AnalysisConfig, Waveform, BAP_FLOOR, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Reusable analysis state: FFT plans, window, filterbank and pitch tracker.
pub struct Analyzer {
    cfg: AnalysisConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    window_sum: f64,
    filterbank: MelFilterbank,
    pitch: PitchTracker,
    bap_edges: Vec<f64>,
}

/// Features of one frame before they are packed into a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub mcep: Vec<f64>,
    pub bap: Vec<f64>,
    pub f0: f64,
}

impl Analyzer {
    pub fn new(cfg: &AnalysisConfig) -> Result<Self> {
        cfg.validate()?;
        let window = hann(cfg.window);
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(cfg.fft_size),
            window_sum: window.iter().sum(),
            window,
            filterbank: MelFilterbank::new(cfg.mel_bands, cfg.fft_size, cfg.sample_rate as f64),
            pitch: PitchTracker::new(cfg),
            bap_edges: cfg.bap_edges(),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// One-sided power spectrum of the windowed frame, scaled so that a
    /// sinusoid of amplitude `A` peaks at `A^2 / 4`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let n = self.cfg.fft_size;
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(v, w)| Complex::new(v * w, 0.0))
            .collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        let s = 1.0 / (self.window_sum * self.window_sum);
        buf[..=n / 2].iter().map(|v| v.norm_sqr() * s).collect()
    }

    /// Mel-cepstrum of a one-sided power spectrum.
    pub fn cepstrum(&self, power: &[f64]) -> Vec<f64> {
        let log_mel: Vec<f64> = self
            .filterbank
            .apply(power)
            .into_iter()
            .map(|e| (e + LOG_FLOOR).ln())
            .collect();
        dct2(&log_mel, self.cfg.n_mcep)
    }

    pub fn analyze_frame(&self, frame: &[f64]) -> FrameFeatures {
        let power = self.power_spectrum(frame);
        let mcep = self.cepstrum(&power);
        let est = self.pitch.estimate(frame);
        let bap = if est.f0 > 0.0 {
            self.aperiodicity(&power, est.f0, est.clarity)
        } else {
            vec![1.0; self.cfg.n_bap]
        };
        FrameFeatures { mcep, bap, f0: est.f0 }
    }

    /// Noise-to-total energy per band. Bins farther than the window main lobe
    /// from every harmonic are taken as noise; their median level (corrected
    /// to a mean for exponentially distributed periodogram values) extrapolated
    /// over the band gives the noise energy.
    fn aperiodicity(&self, power: &[f64], f0: f64, clarity: f64) -> Vec<f64> {
        let n = self.cfg.fft_size as f64;
        let bin_hz = self.cfg.sample_rate as f64 / n;
        let spacing = f0 / bin_hz;
        let lobe = 2.0 * n / self.cfg.window as f64;
        self.bap_edges
            .windows(2)
            .map(|e| {
                let lo = (e[0] / bin_hz).ceil() as usize;
                let hi = ((e[1] / bin_hz).ceil() as usize).min(power.len());
                let band = &power[lo..hi];
                let total: f64 = band.iter().sum();
                if total <= 0.0 {
                    return 1.0;
                }
                let mut noise: Vec<f64> = (lo..hi)
                    .filter(|&k| {
                        let h = (k as f64 / spacing).round().max(1.0);
                        (k as f64 - h * spacing).abs() >= lobe
                    })
                    .map(|k| power[k])
                    .collect();
                let ratio = if noise.len() >= 3 {
                    noise.sort_by(f64::total_cmp);
                    let median = noise[noise.len() / 2];
                    median / std::f64::consts::LN_2 * band.len() as f64 / total
                } else {
                    1.0 - clarity
                };
                ratio.clamp(BAP_FLOOR, 1.0)
            })
            .collect()
    }

    fn pack(&self, frames: Vec<FrameFeatures>) -> Result<(FeatureMatrix, Vec<f64>)> {
        let t = frames.len();
        let mut data = Vec::with_capacity(t * self.cfg.dim());
        let mut f0 = Vec::with_capacity(t);
        for fr in frames {
            data.extend(fr.mcep.iter().map(|&v| v as f32));
            data.extend(fr.bap.iter().map(|&v| v as f32));
            data.push(if fr.f0 > 0.0 { 1.0 } else { 0.0 });
            f0.push(fr.f0);
        }
        let m = FeatureMatrix::new(t, self.cfg.dim(), data, self.cfg.frame_hop_s, self.cfg.dim_labels())?;
        Ok((m, f0))
    }

    /// Frames start at multiples of the hop; `T = floor((len - W) / hop) + 1`.
    pub fn analyze(&self, wave: &Waveform) -> Result<(FeatureMatrix, Vec<f64>)> {
        self.check_rate(wave)?;
        let (w, hop) = (self.cfg.window, self.cfg.hop_samples());
        let len = wave.samples.len();
        if len < w {
            return Err(Error::Vocoder(format!(
                "waveform of {len} samples is shorter than the {w}-sample window"
            )));
        }
        let t = (len - w) / hop + 1;
        let frames = (0..t)
            .map(|i| self.analyze_frame(&wave.samples[i * hop..i * hop + w]))
            .collect();
        self.pack(frames)
    }

    /// Zero-pads so that frame `t` is centred at `(t + 0.5) * hop`, giving
    /// `floor(len / hop)` frames aligned with annotation time.
    pub fn analyze_centered(&self, wave: &Waveform) -> Result<(FeatureMatrix, Vec<f64>)> {
        self.check_rate(wave)?;
        let (w, hop) = (self.cfg.window, self.cfg.hop_samples());
        let len = wave.samples.len();
        if len < hop {
            return Err(Error::Vocoder(format!(
                "waveform of {len} samples is shorter than one {hop}-sample hop"
            )));
        }
        let left = (w - hop) / 2;
        let mut padded = vec![0.0; left];
        padded.extend_from_slice(&wave.samples);
        padded.resize(left + len + (w - hop - left), 0.0);
        let t = len / hop;
        let frames = (0..t)
            .map(|i| self.analyze_frame(&padded[i * hop..i * hop + w]))
            .collect();
        self.pack(frames)
    }

    fn check_rate(&self, wave: &Waveform) -> Result<()> {
        if wave.sample_rate != self.cfg.sample_rate {
            return Err(Error::Vocoder(format!(
                "waveform is {} Hz, analysis expects {} Hz",
                wave.sample_rate, self.cfg.sample_rate
            )));
        }
        Ok(())
    }
}

pub fn analyze(wave: &Waveform, cfg: &AnalysisConfig) -> Result<(FeatureMatrix, Vec<f64>)> {
    Analyzer::new(cfg)?.analyze(wave)
}

pub fn analyze_centered(wave: &Waveform, cfg: &AnalysisConfig) -> Result<(FeatureMatrix, Vec<f64>)> {
    Analyzer::new(cfg)?.analyze_centered(wave)
}
