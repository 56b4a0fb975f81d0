use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, FrameArray};
use crate::error::{Error, Result};

/// Per-dimension range over the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.min.len() != d || self.max.len() != d {
            return Err(Error::shape(format!(
                "norm stats cover {} dimensions, features have {d}",
                self.min.len()
            )));
        }
        Ok(())
    }

    fn span(&self, k: usize) -> f64 {
        self.max[k] - self.min[k]
    }
}

pub fn compute_norm_stats(training: &[FeatureMatrix]) -> Result<NormStats> {
    let first = training
        .first()
        .ok_or_else(|| Error::Validation("no training features for norm stats".into()))?;
    let d = first.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for m in training {
        if m.dim() != d {
            return Err(Error::shape(format!(
                "song `{}` has {} dimensions, expected {d}",
                m.song_id,
                m.dim()
            )));
        }
        for t in 0..m.n_frames() {
            for (k, &v) in m.row(t).iter().enumerate() {
                min[k] = min[k].min(v as f64);
                max[k] = max[k].max(v as f64);
            }
        }
    }
    Ok(NormStats { min, max })
}

/// Affine map of each dimension onto `[-1, 1]`; constant dimensions map to 0.
pub fn normalize(m: &FeatureMatrix, stats: &NormStats) -> Result<FrameArray> {
    stats.check(m.dim())?;
    let d = m.dim();
    let values = m
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = i % d;
            let span = stats.span(k);
            if span > 0.0 {
                2.0 * (v as f64 - stats.min[k]) / span - 1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(FrameArray::new(m.n_frames(), d, values))
}

/// Inverse of [`normalize`]; `hop_s` and `dim_labels` describe the rebuilt matrix.
pub fn denormalize(
    n: &FrameArray,
    stats: &NormStats,
    hop_s: f64,
    dim_labels: Vec<String>,
) -> Result<FeatureMatrix> {
    stats.check(n.d)?;
    let frames = n
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = i % n.d;
            let span = stats.span(k);
            if span > 0.0 {
                ((v + 1.0) * 0.5 * span + stats.min[k]) as f32
            } else {
                stats.min[k] as f32
            }
        })
        .collect();
    FeatureMatrix::new(n.t, n.d, frames, hop_s, dim_labels)
}
