//! Full-song synthesis: condition blocks stream through the generator with
//! carried states, the output blocks are merged by overlap-add, denormalized
//! and optionally rendered with the vocoder.

use crate::error::{Error, Result};
use crate::features::{overlap_add, BlockSequence, FeatureMatrix, FrameArray, NormStats, Song};
use crate::model::{generator_forward, song_condition_blocks, ModelConfig, ModelParams};
use crate::nn::Tensor;
use crate::vocoder::{synthesize, AnalysisConfig, Waveform};

/// Frame-level conditions of one song.
#[derive(Debug, Clone, PartialEq)]
pub struct SongConditions {
    pub phonemes: Vec<usize>,
    /// Hz, 0 when unvoiced.
    pub f0: Vec<f64>,
    pub vuv: Vec<f64>,
    pub singer: usize,
}

impl SongConditions {
    pub fn from_song(song: &Song) -> Self {
        Self {
            phonemes: song.phonemes.clone(),
            f0: song.f0.clone(),
            vuv: song.vuv(),
            singer: song.singer,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.phonemes.len()
    }

    pub fn with_singer(&self, singer: usize) -> Self {
        Self {
            singer,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Block advance; the block length comes from the model.
    pub hop: usize,
    pub seed: u64,
    /// Zero the noise channels instead of sampling them.
    pub zero_noise: bool,
    /// Phoneme used to pad the final block.
    pub pad_phoneme: usize,
}

impl SynthOptions {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        Self {
            hop: cfg.block_len / 2,
            seed,
            zero_noise: false,
            pad_phoneme: 0,
        }
    }
}

/// Condition tensors for every block of a song.
pub fn condition_blocks(cfg: &ModelConfig, conds: &SongConditions, opts: &SynthOptions) -> Result<Vec<Tensor>> {
    let mut blocks = song_condition_blocks(
        &conds.phonemes,
        &conds.f0,
        &conds.vuv,
        conds.singer,
        &cfg.condition,
        cfg.block_len,
        opts.hop,
        opts.pad_phoneme,
        opts.seed,
    )?;
    if opts.zero_noise {
        let first = cfg.condition.noise_channel();
        for b in &mut blocks {
            for c in first..cfg.condition.channels() {
                b.row_mut(c).fill(0.0);
            }
        }
    }
    Ok(blocks)
}

/// Replaces the singer one-hot of every block. All other channels are left
/// bit-identical.
pub fn voice_change(blocks: &[Tensor], target: usize, cfg: &ModelConfig) -> Result<Vec<Tensor>> {
    let spec = &cfg.condition;
    if target >= spec.n_singers {
        return Err(Error::config(format!(
            "target singer {target} out of range (S = {})",
            spec.n_singers
        )));
    }
    Ok(blocks
        .iter()
        .map(|b| {
            let mut b = b.clone();
            for s in 0..spec.n_singers {
                b.row_mut(spec.singer_channel(s)).fill(if s == target { 1.0 } else { 0.0 });
            }
            b
        })
        .collect())
}

/// Merges generator output blocks (`[D, block_len]` tensors) into `n_frames`
/// normalized frames.
pub fn merge_blocks(outputs: &[Tensor], hop: usize, n_frames: usize) -> Result<FrameArray> {
    let first = outputs.first().ok_or_else(|| Error::shape("no output blocks"))?;
    let (d, len) = first.shape();
    let blocks = outputs
        .iter()
        .map(|y| {
            let mut f = FrameArray::zeros(len, d);
            for t in 0..len {
                for (k, v) in f.row_mut(t).iter_mut().enumerate() {
                    *v = y.get(k, t);
                }
            }
            f
        })
        .collect::<Vec<_>>();
    let total = (blocks.len() - 1) * hop + len;
    if n_frames == 0 || n_frames > total {
        return Err(Error::shape(format!("{} blocks cover {total} frames, asked for {n_frames}", blocks.len())));
    }
    overlap_add(&BlockSequence {
        blocks,
        block_len: len,
        hop,
        n_frames,
        pad_frames: total - n_frames,
        song_id: String::new(),
    })
}

/// Runs the generator over condition blocks and merges the result, still in
/// normalized units.
pub fn generate_normalized(
    params: &ModelParams,
    cfg: &ModelConfig,
    blocks: &[Tensor],
    hop: usize,
    n_frames: usize,
) -> Result<FrameArray> {
    let (outputs, _) = generator_forward(params, cfg, blocks, None)?;
    merge_blocks(&outputs, hop, n_frames)
}

/// Generates denormalized features for a song.
pub fn synthesize_features(
    params: &ModelParams,
    cfg: &ModelConfig,
    stats: Option<&NormStats>,
    conds: &SongConditions,
    opts: &SynthOptions,
    hop_s: f64,
    dim_labels: Vec<String>,
) -> Result<FeatureMatrix> {
    let stats = stats.ok_or_else(|| Error::config("inference needs the training norm stats"))?;
    let blocks = condition_blocks(cfg, conds, opts)?;
    let frames = generate_normalized(params, cfg, &blocks, opts.hop, conds.n_frames())?;
    crate::features::denormalize(&frames, stats, hop_s, dim_labels)
}

/// Features and waveform for a song. The vocoder uses the input f0 contour.
pub fn synthesize_song(
    params: &ModelParams,
    cfg: &ModelConfig,
    stats: Option<&NormStats>,
    conds: &SongConditions,
    opts: &SynthOptions,
    vocoder: &AnalysisConfig,
) -> Result<(FeatureMatrix, Waveform)> {
    let hop_s = vocoder.frame_hop_s;
    let features = synthesize_features(params, cfg, stats, conds, opts, hop_s, vocoder.dim_labels())?;
    let wave = synthesize(&features, &conds.f0, vocoder, opts.seed)?;
    Ok((features, wave))
}
