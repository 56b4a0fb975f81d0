//! Objective metrics: mel-cepstral distance, the exact 1-D Wasserstein-1
//! distance and a clipped-critic probe against it, and listening-test export.

mod listening;
mod wasserstein;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, Split, N_MCEP};
use crate::inference::{synthesize_features, SongConditions, SynthOptions};
use crate::model::{ModelConfig, ModelParams};

pub use listening::{export_listening_test, ListeningCondition, ListeningModel, ListeningRow, LISTENING_HEADER};
pub use wasserstein::{
    critic_w1_probe, normal_samples, spearman, w1_sweep, wasserstein1_empirical, ProbeConfig, ProbeResult,
    SweepReport, SweepRow, PROBE_SHIFTS,
};

/// `10 sqrt(2) / ln 10`.
pub const MCD_CONST: f64 = 10.0 * std::f64::consts::SQRT_2 / std::f64::consts::LN_10;

/// Mean per-frame Euclidean distance between two mel-cepstral sequences, in
/// dB. Every frame must hold exactly `N_MCEP` coefficients.
pub fn mcd(reference: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<f64> {
    if reference.is_empty() || reference.len() != generated.len() {
        return Err(Error::shape(format!(
            "mcd needs equal non-empty frame counts, got {} and {}",
            reference.len(),
            generated.len()
        )));
    }
    let mut total = 0.0;
    for (t, (a, b)) in reference.iter().zip(generated).enumerate() {
        if a.len() != N_MCEP || b.len() != N_MCEP {
            return Err(Error::shape(format!(
                "frame {t} has {} and {} coefficients, expected {N_MCEP}",
                a.len(),
                b.len()
            )));
        }
        total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    }
    Ok(MCD_CONST * total / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongMcd {
    pub song: String,
    pub frames: usize,
    pub mcd_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdReport {
    pub model: String,
    pub split: Split,
    pub songs: Vec<SongMcd>,
    pub mean_db: f64,
}

/// MCD of every song of `split` synthesized from its own conditions.
pub fn evaluate_mcd(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &Dataset,
    split: Split,
    model: &str,
    seed: u64,
) -> Result<McdReport> {
    let mut songs = Vec::new();
    for (i, song) in data.songs.iter().enumerate() {
        if song.split != split {
            continue;
        }
        let conds = SongConditions::from_song(song);
        let mut opts = SynthOptions::new(cfg, song_seed(seed, i));
        opts.pad_phoneme = data.vocab.silence_id();
        let gen = synthesize_features(
            params,
            cfg,
            Some(&data.norm_stats),
            &conds,
            &opts,
            data.hop_s,
            data.dim_labels.clone(),
        )?;
        songs.push(SongMcd {
            song: song.id.clone(),
            frames: song.n_frames(),
            mcd_db: mcd(&song.features.mcep(), &gen.mcep())?,
        });
    }
    if songs.is_empty() {
        return Err(Error::Validation(format!("no songs in split {split:?}")));
    }
    let mean_db = songs.iter().map(|s| s.mcd_db).sum::<f64>() / songs.len() as f64;
    if !mean_db.is_finite() {
        return Err(Error::Numerical("mcd is not finite".into()));
    }
    Ok(McdReport {
        model: model.to_string(),
        split,
        songs,
        mean_db,
    })
}

/// Noise seed of song `index` at inference.
pub fn song_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
