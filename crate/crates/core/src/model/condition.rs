//! Conditioning tensors: phoneme one-hot, log-f0, voicing, singer one-hot and
//! noise channels, in that channel order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const N_NOISE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub n_phonemes: usize,
    pub n_singers: usize,
    pub n_noise: usize,
    /// Reference pitch mapped to 0 on the log-f0 channel.
    pub f0_ref: f64,
    /// Octaves either side of `f0_ref` mapped onto `[-1, 1]`.
    pub f0_octaves: f64,
}

impl ConditionSpec {
    pub fn new(n_phonemes: usize, n_singers: usize) -> Self {
        Self {
            n_phonemes,
            n_singers,
            n_noise: N_NOISE,
            f0_ref: 220.0,
            f0_octaves: 2.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.n_phonemes + 2 + self.n_singers + self.n_noise
    }

    pub fn channels_without_noise(&self) -> usize {
        self.channels() - self.n_noise
    }

    pub fn f0_channel(&self) -> usize {
        self.n_phonemes
    }

    pub fn vuv_channel(&self) -> usize {
        self.n_phonemes + 1
    }

    pub fn singer_channel(&self, s: usize) -> usize {
        self.n_phonemes + 2 + s
    }

    pub fn noise_channel(&self) -> usize {
        self.n_phonemes + 2 + self.n_singers
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_phonemes == 0 || self.n_singers == 0 {
            return Err(Error::config("conditioning needs at least one phoneme and one singer"));
        }
        if !(self.f0_ref > 0.0 && self.f0_octaves > 0.0) {
            return Err(Error::config("f0 reference and range must be positive"));
        }
        Ok(())
    }
}

/// `log2(f0 / f_ref) / octaves` clamped to `[-1, 1]`, 0 when unvoiced.
pub fn encode_log_f0(f0: f64, spec: &ConditionSpec) -> f64 {
    if f0 > 0.0 {
        ((f0 / spec.f0_ref).log2() / spec.f0_octaves).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Builds the `[channels, T]` condition for one stretch of frames. Noise is
/// drawn from a generator seeded with `seed`.
pub fn assemble_condition(
    phonemes: &[usize],
    f0: &[f64],
    vuv: &[f64],
    singer: usize,
    spec: &ConditionSpec,
    seed: u64,
) -> Result<Tensor> {
    let t = phonemes.len();
    if f0.len() != t || vuv.len() != t {
        return Err(Error::shape(format!(
            "condition inputs disagree: {t} phonemes, {} f0, {} vuv",
            f0.len(),
            vuv.len()
        )));
    }
    if singer >= spec.n_singers {
        return Err(Error::config(format!("singer id {singer} out of range (S = {})", spec.n_singers)));
    }
    let mut c = Tensor::zeros(spec.channels(), t);
    for (i, &p) in phonemes.iter().enumerate() {
        if p >= spec.n_phonemes {
            return Err(Error::config(format!(
                "phoneme id {p} at frame {i} out of range (P = {})",
                spec.n_phonemes
            )));
        }
        if !(f0[i] >= 0.0) {
            return Err(Error::config(format!("negative or NaN f0 {} at frame {i}", f0[i])));
        }
        c.set(p, i, 1.0);
        c.set(spec.f0_channel(), i, encode_log_f0(f0[i], spec));
        c.set(spec.vuv_channel(), i, if vuv[i] > 0.5 { 1.0 } else { 0.0 });
        c.set(spec.singer_channel(singer), i, 1.0);
    }
    // Frame-major draws so a prefix of a song sees the same noise.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..t {
        for ch in spec.noise_channel()..spec.channels() {
            c.set(ch, i, StandardNormal.sample(&mut rng));
        }
    }
    Ok(c)
}

/// Conditions for a whole song cut into blocks of `block_len` frames every
/// `hop` frames. The tail is padded with `pad_phoneme`, unvoiced, before the
/// condition is built, so padded frames are valid silence rather than zeros.
#[allow(clippy::too_many_arguments)]
pub fn song_condition_blocks(
    phonemes: &[usize],
    f0: &[f64],
    vuv: &[f64],
    singer: usize,
    spec: &ConditionSpec,
    block_len: usize,
    hop: usize,
    pad_phoneme: usize,
    seed: u64,
) -> Result<Vec<Tensor>> {
    if phonemes.is_empty() {
        return Err(Error::shape("cannot condition an empty song"));
    }
    if block_len == 0 || hop == 0 || hop > block_len {
        return Err(Error::config(format!("invalid block geometry {block_len}/{hop}")));
    }
    let n = crate::features::blocks::block_count(phonemes.len(), block_len, hop);
    let total = (n - 1) * hop + block_len;
    let mut p = phonemes.to_vec();
    let mut f = f0.to_vec();
    let mut v = vuv.to_vec();
    p.resize(total, pad_phoneme);
    f.resize(total, 0.0);
    v.resize(total, 0.0);
    let full = assemble_condition(&p, &f, &v, singer, spec, seed)?;
    Ok((0..n).map(|b| slice_time(&full, b * hop, block_len)).collect())
}

fn slice_time(x: &Tensor, start: usize, len: usize) -> Tensor {
    let mut out = Tensor::zeros(x.channels(), len);
    for c in 0..x.channels() {
        out.row_mut(c).copy_from_slice(&x.row(c)[start..start + len]);
    }
    out
}

/// The condition without its trailing noise channels, as seen by the critic.
pub fn strip_noise(cond: &Tensor, spec: &ConditionSpec) -> Tensor {
    let keep = spec.channels_without_noise();
    Tensor::new(keep, cond.length(), cond.data()[..keep * cond.length()].to_vec()).expect("prefix")
}
