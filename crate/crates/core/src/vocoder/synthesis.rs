//! Harmonic-plus-noise resynthesis.
//!
//! The cepstra only describe mel-band energies, so each frame's spectral
//! envelope is found by analysis-by-synthesis: a piecewise log-linear envelope
//! (knots at the mel band centres) is adjusted until the band energies that
//! the analyser would measure on the synthetic frame reproduce the target
//! cepstrum. Harmonics sample the envelope at multiples of f0; noise fills the
//! share given by the band aperiodicities.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::mel::{dct2, hz_to_mel, idct2, MelFilterbank};
use super::{hann, AnalysisConfig, Waveform, BAP_FLOOR, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const FIT_ITERS: usize = 60;
const FIT_TOL: f64 = 1e-4;
/// Leakage of a sinusoid is tabulated this many main-lobe half-widths out.
const KERNEL_LOBES: f64 = 4.0;
const KERNEL_STEPS_PER_BIN: f64 = 32.0;
const PEAK_LIMIT: f64 = 0.99;

pub struct Synthesizer {
    cfg: AnalysisConfig,
    filterbank: MelFilterbank,
    /// Per bin: index of the left envelope knot and interpolation fraction.
    bin_knots: Vec<(usize, f64)>,
    knot_mels: Vec<f64>,
    /// `|W(delta)|^2 / (sum w)^2` for `delta = i / KERNEL_STEPS_PER_BIN` bins.
    kernel: Vec<f64>,
    /// `sum w^2 / (sum w)^2`: periodogram level of unit-variance white noise.
    noise_gain: f64,
    band_of_bin: Vec<usize>,
    ifft: Arc<dyn Fft<f64>>,
}

/// Fitted parameters of one frame.
struct FrameModel {
    f0: f64,
    /// Sinusoid amplitudes for harmonics 1, 2, ...
    amps: Vec<f64>,
    /// Two-sided noise PSD per one-sided bin.
    noise_psd: Vec<f64>,
}

impl Synthesizer {
    pub fn new(cfg: &AnalysisConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.fft_size;
        let sr = cfg.sample_rate as f64;
        let filterbank = MelFilterbank::new(cfg.mel_bands, n, sr);
        let knot_mels: Vec<f64> = filterbank.centers_hz().iter().map(|&f| hz_to_mel(f)).collect();
        let bin_hz = sr / n as f64;
        let bin_knots = (0..=n / 2)
            .map(|k| knot_position(&knot_mels, hz_to_mel(k as f64 * bin_hz)))
            .collect();
        let window = hann(cfg.window);
        let wsum: f64 = window.iter().sum();
        let lobe = 2.0 * n as f64 / cfg.window as f64;
        let steps = (KERNEL_LOBES * lobe * KERNEL_STEPS_PER_BIN).ceil() as usize;
        let kernel = (0..=steps)
            .map(|i| {
                let delta = i as f64 / KERNEL_STEPS_PER_BIN;
                let (mut re, mut im) = (0.0, 0.0);
                for (j, w) in window.iter().enumerate() {
                    let ph = -2.0 * PI * delta * j as f64 / n as f64;
                    re += w * ph.cos();
                    im += w * ph.sin();
                }
                (re * re + im * im) / (wsum * wsum)
            })
            .collect();
        let edges = cfg.bap_edges();
        let band_of_bin = (0..=n / 2)
            .map(|k| {
                let f = k as f64 * bin_hz;
                edges[1..cfg.n_bap].iter().filter(|&&e| f >= e).count()
            })
            .collect();
        Ok(Self {
            noise_gain: window.iter().map(|w| w * w).sum::<f64>() / (wsum * wsum),
            ifft: FftPlanner::new().plan_fft_inverse(n),
            cfg: cfg.clone(),
            filterbank,
            bin_knots,
            knot_mels,
            kernel,
            band_of_bin,
        })
    }

    fn kernel_at(&self, delta: f64) -> f64 {
        let x = delta.abs() * KERNEL_STEPS_PER_BIN;
        let i = x as usize;
        if i + 1 >= self.kernel.len() {
            return 0.0;
        }
        let f = x - i as f64;
        self.kernel[i] * (1.0 - f) + self.kernel[i + 1] * f
    }

    fn envelope_at_bins(&self, log_env: &[f64]) -> Vec<f64> {
        self.bin_knots
            .iter()
            .map(|&(m, f)| {
                let hi = (m + 1).min(log_env.len() - 1);
                (log_env[m] * (1.0 - f) + log_env[hi] * f).exp()
            })
            .collect()
    }

    fn envelope_at_hz(&self, log_env: &[f64], hz: f64) -> f64 {
        let (m, f) = knot_position(&self.knot_mels, hz_to_mel(hz));
        let hi = (m + 1).min(log_env.len() - 1);
        (log_env[m] * (1.0 - f) + log_env[hi] * f).exp()
    }

    fn max_harmonic_hz(&self) -> f64 {
        0.49 * self.cfg.sample_rate as f64
    }

    /// Builds the frame model for an envelope and the one-sided power
    /// spectrum the analyser would see on it.
    fn model(&self, log_env: &[f64], noise_frac: &[f64], f0: f64) -> (FrameModel, Vec<f64>) {
        let n = self.cfg.fft_size as f64;
        let bin_hz = self.cfg.sample_rate as f64 / n;
        let env = self.envelope_at_bins(log_env);
        let noise_psd: Vec<f64> = env
            .iter()
            .zip(&self.band_of_bin)
            .map(|(s, &b)| if f0 > 0.0 { s * noise_frac[b] } else { *s })
            .collect();
        let mut power: Vec<f64> = noise_psd.iter().map(|q| q * self.noise_gain).collect();
        let mut amps = Vec::new();
        if f0 > 0.0 {
            let spacing = f0 / bin_hz;
            let reach = (self.kernel.len() as f64 / KERNEL_STEPS_PER_BIN).ceil() as isize;
            let mut h = 1;
            while h as f64 * f0 <= self.max_harmonic_hz() {
                let fh = h as f64 * f0;
                let band = self.band_of_bin[(fh / bin_hz).round() as usize];
                let k_h = (1.0 - noise_frac[band]) * self.envelope_at_hz(log_env, fh) * spacing / n;
                amps.push(2.0 * k_h.sqrt());
                let centre = fh / bin_hz;
                let c = centre.round() as isize;
                for k in (c - reach).max(0)..=(c + reach).min(power.len() as isize - 1) {
                    power[k as usize] += k_h * self.kernel_at(k as f64 - centre);
                }
                h += 1;
            }
        }
        (FrameModel { f0, amps, noise_psd }, power)
    }

    fn log_mel(&self, power: &[f64]) -> Vec<f64> {
        self.filterbank
            .apply(power)
            .into_iter()
            .map(|e| (e + LOG_FLOOR).ln())
            .collect()
    }

    fn fit_frame(&self, mcep: &[f64], bap: &[f64], f0: f64) -> FrameModel {
        let m = self.cfg.mel_bands;
        let noise_frac: Vec<f64> = bap
            .iter()
            .map(|&a| ((a - BAP_FLOOR) / (1.0 - BAP_FLOOR)).clamp(0.0, 1.0))
            .collect();
        let target_log = idct2(mcep, m);
        let widths = self.filterbank.band_weights();
        let mut log_env: Vec<f64> = target_log
            .iter()
            .zip(&widths)
            .map(|(l, w)| l - (self.noise_gain * w).ln())
            .collect();
        for _ in 0..FIT_ITERS {
            let (_, power) = self.model(&log_env, &noise_frac, f0);
            let c = dct2(&self.log_mel(&power), mcep.len());
            let resid: Vec<f64> = mcep.iter().zip(&c).map(|(a, b)| a - b).collect();
            if resid.iter().all(|r| r.abs() < FIT_TOL) {
                break;
            }
            for (e, d) in log_env.iter_mut().zip(idct2(&resid, m)) {
                *e = (*e + d).clamp(-120.0, 20.0);
            }
        }
        self.model(&log_env, &noise_frac, f0).0
    }

    /// Frame `t` of the output is centred at `(t + 0.5) * hop` samples, the
    /// same alignment as [`super::analyze_centered`].
    pub fn synthesize(&self, features: &FeatureMatrix, f0: &[f64], seed: u64) -> Result<Waveform> {
        let cfg = &self.cfg;
        if features.dim() != cfg.dim() {
            return Err(Error::Vocoder(format!(
                "features have {} dimensions, vocoder expects {}",
                features.dim(),
                cfg.dim()
            )));
        }
        let t = features.n_frames();
        if f0.len() != t {
            return Err(Error::Vocoder(format!("{} f0 values for {t} frames", f0.len())));
        }
        let vuv = cfg.n_mcep + cfg.n_bap;
        let frames: Vec<FrameModel> = (0..t)
            .map(|i| {
                let row: Vec<f64> = features.row(i).iter().map(|&v| v as f64).collect();
                let voiced = row[vuv] > 0.5 && f0[i] > 0.0;
                self.fit_frame(
                    &row[..cfg.n_mcep],
                    &row[cfg.n_mcep..vuv],
                    if voiced { f0[i] } else { 0.0 },
                )
            })
            .collect();
        let hop = cfg.hop_samples();
        let mut out = self.harmonics(&frames, hop);
        let noise = self.noise(&frames, hop, seed);
        for (o, v) in out.iter_mut().zip(noise) {
            *o += v;
        }
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > PEAK_LIMIT {
            let g = PEAK_LIMIT / peak;
            out.iter_mut().for_each(|v| *v *= g);
        }
        Waveform::new(out, cfg.sample_rate)
    }

    fn harmonics(&self, frames: &[FrameModel], hop: usize) -> Vec<f64> {
        let sr = self.cfg.sample_rate as f64;
        let len = frames.len() * hop;
        let mut out = vec![0.0; len];
        let mut phase = 0.0f64;
        for (n, o) in out.iter_mut().enumerate() {
            let u = (n as f64 + 0.5) / hop as f64 - 0.5;
            let (a, b, w) = if u <= 0.0 {
                (0, 0, 0.0)
            } else if u >= (frames.len() - 1) as f64 {
                (frames.len() - 1, frames.len() - 1, 0.0)
            } else {
                let a = u.floor() as usize;
                (a, a + 1, u - a as f64)
            };
            let (fa, fb) = (&frames[a], &frames[b]);
            let f0 = match (fa.f0 > 0.0, fb.f0 > 0.0) {
                (true, true) => fa.f0 * (1.0 - w) + fb.f0 * w,
                (true, false) => fa.f0,
                (false, true) => fb.f0,
                (false, false) => continue,
            };
            phase = (phase + 2.0 * PI * f0 / sr) % (2.0 * PI);
            let nh = fa.amps.len().max(fb.amps.len());
            let mut acc = 0.0;
            for h in 0..nh {
                let amp = fa.amps.get(h).copied().unwrap_or(0.0) * (1.0 - w)
                    + fb.amps.get(h).copied().unwrap_or(0.0) * w;
                if amp > 0.0 && (h + 1) as f64 * f0 < 0.5 * sr {
                    acc += amp * ((h + 1) as f64 * phase).sin();
                }
            }
            *o = acc;
        }
        out
    }

    /// Overlapping random-phase grains, one per frame, normalized so the
    /// local variance follows the frames' noise PSD.
    fn noise(&self, frames: &[FrameModel], hop: usize, seed: u64) -> Vec<f64> {
        let n = self.cfg.fft_size;
        let len = frames.len() * hop;
        let window = hann(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for (t, fr) in frames.iter().enumerate() {
            buf.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
            for k in 1..n / 2 {
                let mag = (n as f64 * fr.noise_psd[k]).sqrt();
                let ph = rng.gen_range(0.0..2.0 * PI);
                buf[k] = Complex::from_polar(mag, ph);
                buf[n - k] = buf[k].conj();
            }
            self.ifft.process(&mut buf);
            let start = (t * hop + hop / 2) as isize - (n / 2) as isize;
            for (i, w) in window.iter().enumerate() {
                let pos = start + i as isize;
                if pos < 0 || pos >= len as isize {
                    continue;
                }
                acc[pos as usize] += w * buf[i].re / n as f64;
                norm[pos as usize] += w * w;
            }
        }
        acc.iter()
            .zip(&norm)
            .map(|(a, z)| if *z > 1e-12 { a / z.sqrt() } else { 0.0 })
            .collect()
    }
}

/// Left knot index and fraction for a mel position; constant beyond the ends.
fn knot_position(knots: &[f64], mel: f64) -> (usize, f64) {
    let last = knots.len() - 1;
    if mel <= knots[0] {
        return (0, 0.0);
    }
    if mel >= knots[last] {
        return (last, 0.0);
    }
    let i = knots.partition_point(|&k| k <= mel) - 1;
    (i, (mel - knots[i]) / (knots[i + 1] - knots[i]))
}

pub fn synthesize(features: &FeatureMatrix, f0: &[f64], cfg: &AnalysisConfig, seed: u64) -> Result<Waveform> {
    Synthesizer::new(cfg)?.synthesize(features, f0, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocoder::{analyze, analyze_centered};

    fn harmonic_tone(f0: f64, secs: f64) -> Waveform {
        let n = (secs * 16000.0) as usize;
        let x = (0..n)
            .map(|i| {
                let t = i as f64 / 16000.0;
                (1..=12)
                    .map(|h| 0.3 / h as f64 * (2.0 * PI * f0 * h as f64 * t).sin())
                    .sum::<f64>()
            })
            .collect();
        Waveform::new(x, 16000).unwrap()
    }

    fn mcd_frames(a: &FeatureMatrix, b: &FeatureMatrix, frames: std::ops::Range<usize>) -> f64 {
        let k = 10.0 * 2f64.sqrt() / 10f64.ln();
        let n = frames.len() as f64;
        frames
            .map(|t| {
                (0..25)
                    .map(|i| ((a.get(t, i) - b.get(t, i)) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            * k
            / n
    }

    #[test]
    fn output_length_and_determinism() {
        let cfg = AnalysisConfig::default();
        let (m, f0) = analyze_centered(&harmonic_tone(200.0, 0.3), &cfg).unwrap();
        let a = synthesize(&m, &f0, &cfg, 5).unwrap();
        let b = synthesize(&m, &f0, &cfg, 5).unwrap();
        assert_eq!(a.samples.len(), m.n_frames() * 80);
        assert_eq!(a, b);
        assert!(a.peak() <= 0.99);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let cfg = AnalysisConfig::default();
        let m = FeatureMatrix::new(2, 3, vec![0.0; 6], 0.005, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert!(synthesize(&m, &[0.0, 0.0], &cfg, 0).is_err());
        let (m, _) = analyze_centered(&harmonic_tone(200.0, 0.1), &cfg).unwrap();
        assert!(synthesize(&m, &[0.0], &cfg, 0).is_err());
    }

    #[test]
    fn round_trip_keeps_pitch_and_envelope() {
        let cfg = AnalysisConfig::default();
        let x = harmonic_tone(220.0, 1.0);
        let (m, f0) = analyze_centered(&x, &cfg).unwrap();
        let y = synthesize(&m, &f0, &cfg, 1).unwrap();
        let (m2, f02) = analyze_centered(&y, &cfg).unwrap();
        let inner = 10..m.n_frames() - 10;
        for t in inner.clone() {
            assert!((f02[t] - 220.0).abs() / 220.0 < 0.03, "frame {t}: {}", f02[t]);
        }
        let d = mcd_frames(&m, &m2, inner);
        assert!(d < 8.0, "round-trip MCD {d}");
    }

    #[test]
    fn unvoiced_features_give_unpitched_noise() {
        let cfg = AnalysisConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<f64> = (0..8000).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let (m, f0) = analyze_centered(&Waveform::new(noise, 16000).unwrap(), &cfg).unwrap();
        assert!(f0.iter().all(|&f| f == 0.0));
        let y = synthesize(&m, &vec![0.0; m.n_frames()], &cfg, 2).unwrap();
        assert!(y.peak() > 0.0);
        let (_, f0) = analyze(&y, &cfg).unwrap();
        assert!(f0.iter().all(|&f| f == 0.0), "{f0:?}");
    }

    #[test]
    fn constant_features_are_periodic_at_f0() {
        let cfg = AnalysisConfig::default();
        let t = 200;
        let mut data = Vec::new();
        for _ in 0..t {
            let mut row = vec![0.0f32; 30];
            row[0] = -10.0;
            row[1] = 2.0;
            for b in 25..29 {
                row[b] = 0.001;
            }
            row[29] = 1.0;
            data.extend(row);
        }
        let m = FeatureMatrix::new(t, 30, data, 0.005, cfg.dim_labels()).unwrap();
        let y = synthesize(&m, &vec![200.0; t], &cfg, 3).unwrap();
        let (_, f0) = analyze(&y, &cfg).unwrap();
        let inner = &f0[5..f0.len() - 5];
        for &f in inner {
            let period_ms = 1000.0 / f;
            assert!((period_ms - 5.0).abs() / 5.0 < 0.03, "{period_ms}");
        }
    }
}
