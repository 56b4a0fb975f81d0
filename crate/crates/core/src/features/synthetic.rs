//! Deterministic synthetic singing datasets.
//!
//! Every (singer, phoneme) pair owns a feature template that is smooth across
//! the cepstral index: a singer timbre offset plus a phoneme envelope. Songs are
//! random phone sequences with a per-singer base pitch and a per-note melody;
//! each frame is its template plus small Gaussian noise, so the mapping from
//! conditions to features is learnable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::annotation::PhoneSegment;
use super::dataset::{Dataset, Song, Split};
use super::matrix::{default_dim_labels, FeatureMatrix, D_OUT, N_BAP, N_MCEP, VUV_DIM};
use super::vocab::{frame_align, Gender, PhonemeVocab, Singer, SingerTable, SILENCE};
use crate::error::{Error, Result};

pub const SYNTHETIC_HOP_S: f64 = 0.005;
/// Per-coefficient standard deviation of the frame noise.
pub const NOISE_STD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_singers: usize,
    /// Vocabulary size, silence included.
    pub n_phonemes: usize,
    pub n_songs: usize,
    pub frames_per_song: usize,
    /// Trailing songs assigned to the held-out split.
    pub held_out: usize,
}

impl SyntheticSpec {
    pub fn new(seed: u64, n_singers: usize, n_phonemes: usize, n_songs: usize, frames: usize) -> Self {
        Self {
            seed,
            n_singers,
            n_phonemes,
            n_songs,
            frames_per_song: frames,
            held_out: 0,
        }
    }
}

/// Feature templates for every singer and phoneme.
#[derive(Debug, Clone)]
pub struct Templates {
    /// `[singer][phoneme]` -> `D_OUT` values (f0 term excluded).
    pub table: Vec<Vec<Vec<f64>>>,
    pub base_f0: Vec<f64>,
}

fn smooth_profile(rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    // A few low-order cosines over the coefficient axis give a smooth shape.
    let amps: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let phases: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    (0..N_MCEP)
        .map(|i| {
            let x = i as f64 / N_MCEP as f64;
            let s: f64 = amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(k, (a, p))| a * (std::f64::consts::PI * (k + 1) as f64 * x + p).cos())
                .sum();
            scale * s / (1.0 + i as f64 / 6.0)
        })
        .collect()
}

impl Templates {
    fn generate(rng: &mut ChaCha8Rng, n_singers: usize, vocab: &PhonemeVocab) -> Self {
        let sil = vocab.silence_id();
        let singer_parts: Vec<Vec<f64>> = (0..n_singers).map(|_| smooth_profile(rng, 1.5)).collect();
        let phone_parts: Vec<Vec<f64>> = (0..vocab.len()).map(|_| smooth_profile(rng, 2.5)).collect();
        let phone_bap: Vec<Vec<f64>> = (0..vocab.len())
            .map(|_| (0..N_BAP).map(|b| rng.gen_range(0.02..0.3) * (1.0 + b as f64)).collect())
            .collect();
        let base_f0 = (0..n_singers)
            .map(|s| {
                let root = if s % 2 == 0 { 220.0 } else { 120.0 };
                root * 2f64.powf(rng.gen_range(0.0..0.4))
            })
            .collect();
        let mut table = vec![vec![vec![0.0; D_OUT]; vocab.len()]; n_singers];
        for (s, row) in table.iter_mut().enumerate() {
            for (p, t) in row.iter_mut().enumerate() {
                if p == sil {
                    t[0] = -40.0;
                    for v in &mut t[N_MCEP..VUV_DIM] {
                        *v = 1.0;
                    }
                    t[VUV_DIM] = 0.0;
                    continue;
                }
                t[0] = -5.0;
                for i in 0..N_MCEP {
                    t[i] += singer_parts[s][i] + phone_parts[p][i];
                }
                for b in 0..N_BAP {
                    t[N_MCEP + b] = phone_bap[p][b].min(1.0);
                }
                t[VUV_DIM] = 1.0;
            }
        }
        Self { table, base_f0 }
    }

    /// Mean and minimum Euclidean distance between the mel-cepstral parts of
    /// distinct (singer, voiced phoneme) templates.
    pub fn separation(&self, vocab: &PhonemeVocab) -> (f64, f64) {
        let sil = vocab.silence_id();
        let flat: Vec<&Vec<f64>> = self
            .table
            .iter()
            .flat_map(|row| row.iter().enumerate().filter(|(p, _)| *p != sil).map(|(_, t)| t))
            .collect();
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut n = 0usize;
        for i in 0..flat.len() {
            for j in i + 1..flat.len() {
                let d = flat[i][..N_MCEP]
                    .iter()
                    .zip(&flat[j][..N_MCEP])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sum += d;
                min = min.min(d);
                n += 1;
            }
        }
        if n == 0 {
            (0.0, 0.0)
        } else {
            (sum / n as f64, min)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub templates: Templates,
}

impl SyntheticDataset {
    /// Ratio of mean template distance to the per-coefficient noise level.
    pub fn separation_ratio(&self) -> f64 {
        self.templates.separation(&self.dataset.vocab).0 / NOISE_STD
    }
}

fn phone_labels(n: usize) -> Vec<String> {
    std::iter::once(SILENCE.to_string())
        .chain((1..n).map(|i| format!("ph{i:02}")))
        .collect()
}

fn random_segments(
    rng: &mut ChaCha8Rng,
    vocab: &PhonemeVocab,
    frames: usize,
) -> Vec<(usize, usize, usize)> {
    // (start frame, end frame, phoneme id)
    let sil = vocab.silence_id();
    let voiced: Vec<usize> = (0..vocab.len()).filter(|&p| p != sil).collect();
    let mut segs = Vec::new();
    let lead = rng.gen_range(8..24).min(frames);
    segs.push((0, lead, sil));
    let mut pos = lead;
    while pos < frames {
        let len = rng.gen_range(8..40).min(frames - pos);
        let id = if voiced.is_empty() || rng.gen_bool(0.1) {
            sil
        } else {
            voiced[rng.gen_range(0..voiced.len())]
        };
        segs.push((pos, pos + len, id));
        pos += len;
    }
    segs
}

pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    if spec.n_singers == 0 || spec.n_phonemes == 0 || spec.n_songs == 0 || spec.frames_per_song == 0
    {
        return Err(Error::config("synthetic dataset counts must all be at least 1"));
    }
    if spec.held_out >= spec.n_songs {
        return Err(Error::config("held-out songs must leave at least one training song"));
    }
    let hop = SYNTHETIC_HOP_S;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = PhonemeVocab::from_labels(phone_labels(spec.n_phonemes));
    let singers = SingerTable::new(
        (0..spec.n_singers)
            .map(|s| Singer {
                id: format!("singer{s:02}"),
                gender: if s % 2 == 0 { Gender::Female } else { Gender::Male },
            })
            .collect(),
    )?;
    let templates = Templates::generate(&mut rng, spec.n_singers, &vocab);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    let labels = default_dim_labels();
    let sil = vocab.silence_id();

    let mut songs = Vec::with_capacity(spec.n_songs);
    for n in 0..spec.n_songs {
        let singer = n % spec.n_singers;
        let raw = random_segments(&mut rng, &vocab, spec.frames_per_song);
        let segments: Vec<PhoneSegment> = raw
            .iter()
            .map(|&(a, b, p)| {
                PhoneSegment::new(
                    round_time(a as f64 * hop),
                    round_time(b as f64 * hop),
                    vocab.label(p).expect("id in vocab"),
                )
            })
            .collect();
        let phonemes = frame_align(&segments, &vocab, hop, spec.frames_per_song)?;
        // One note per voiced segment, in semitones around the singer's base.
        let mut f0 = vec![0.0; spec.frames_per_song];
        for &(a, b, p) in &raw {
            if p == sil {
                continue;
            }
            let note = templates.base_f0[singer] * 2f64.powf(rng.gen_range(-5i32..=7) as f64 / 12.0);
            for (t, f) in f0.iter_mut().enumerate().take(b).skip(a) {
                // Slow vibrato keeps the contour from being piecewise constant.
                *f = note * (1.0 + 0.01 * (t as f64 * 0.15).sin());
            }
        }
        let mut rows = Vec::with_capacity(spec.frames_per_song);
        for t in 0..spec.frames_per_song {
            let p = phonemes[t];
            let tmpl = &templates.table[singer][p];
            let mut row = tmpl.clone();
            if p != sil {
                for v in &mut row[..N_MCEP] {
                    *v += noise.sample(&mut rng);
                }
                // Brighter spectra on higher notes.
                row[1] += 0.8 * (f0[t] / templates.base_f0[singer]).log2();
                for v in &mut row[N_MCEP..VUV_DIM] {
                    *v = (*v + 0.2 * noise.sample(&mut rng)).clamp(1e-3, 1.0);
                }
            }
            // Voicing and f0 must agree.
            row[VUV_DIM] = if f0[t] > 0.0 { 1.0 } else { 0.0 };
            rows.push(row);
        }
        let id = format!("song{n:03}");
        let features = FeatureMatrix::from_rows_f64(&rows, hop, labels.clone())?
            .with_ids(&id, &singers.singers[singer].id);
        let split = if n >= spec.n_songs - spec.held_out { Split::HeldOut } else { Split::Train };
        songs.push(Song {
            id,
            singer,
            split,
            features,
            f0: f0.iter().map(|&v| v as f32 as f64).collect(),
            segments,
            phonemes,
        });
    }
    let dataset = Dataset::new("synthetic", hop, vocab, singers, songs)?;
    Ok(SyntheticDataset { dataset, templates })
}

fn round_time(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}
