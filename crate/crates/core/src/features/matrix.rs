use crate::error::{Error, Result};

/// Number of mel-cepstral coefficients per frame.
pub const N_MCEP: usize = 25;
/// Number of band aperiodicity values per frame.
pub const N_BAP: usize = 4;
/// Default output feature dimension: mel-cepstra, band aperiodicities, voicing.
pub const D_OUT: usize = N_MCEP + N_BAP + 1;
/// Column index of the voiced/unvoiced flag.
pub const VUV_DIM: usize = N_MCEP + N_BAP;

/// Labels for the default `D_OUT` layout.
pub fn default_dim_labels() -> Vec<String> {
    (0..N_MCEP)
        .map(|i| format!("mcep_{i}"))
        .chain((0..N_BAP).map(|i| format!("bap_{i}")))
        .chain(std::iter::once("vuv".to_string()))
        .collect()
}

/// Frame-major `T x D` feature matrix for one recording.
///
/// Values are stored in single precision, which is also the on-disk
/// representation, so a container round trip is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    t: usize,
    d: usize,
    frames: Vec<f32>,
    pub hop_s: f64,
    pub dim_labels: Vec<String>,
    pub song_id: String,
    pub singer_id: String,
    /// Trailing frames that are padding rather than signal.
    pub pad_frames: usize,
}

impl FeatureMatrix {
    pub fn new(
        t: usize,
        d: usize,
        frames: Vec<f32>,
        hop_s: f64,
        dim_labels: Vec<String>,
    ) -> Result<Self> {
        if t == 0 || d == 0 {
            return Err(Error::shape(format!("feature matrix must be non-empty, got {t}x{d}")));
        }
        if frames.len() != t * d {
            return Err(Error::shape(format!(
                "feature payload holds {} values, expected {t}x{d}",
                frames.len()
            )));
        }
        if dim_labels.len() != d {
            return Err(Error::shape(format!(
                "{} dimension labels for {d} dimensions",
                dim_labels.len()
            )));
        }
        Ok(Self {
            t,
            d,
            frames,
            hop_s,
            dim_labels,
            song_id: String::new(),
            singer_id: String::new(),
            pad_frames: 0,
        })
    }

    /// Builds a matrix from `f64` rows, rounding to single precision.
    pub fn from_rows_f64(rows: &[Vec<f64>], hop_s: f64, dim_labels: Vec<String>) -> Result<Self> {
        let t = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut frames = Vec::with_capacity(t * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::shape(format!("row {i} has {} values, expected {d}", r.len())));
            }
            frames.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(t, d, frames, hop_s, dim_labels)
    }

    pub fn with_ids(mut self, song_id: impl Into<String>, singer_id: impl Into<String>) -> Self {
        self.song_id = song_id.into();
        self.singer_id = singer_id.into();
        self
    }

    pub fn n_frames(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.frames
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.frames[t * self.d..(t + 1) * self.d]
    }

    pub fn get(&self, t: usize, k: usize) -> f32 {
        self.frames[t * self.d + k]
    }

    pub fn column(&self, k: usize) -> Vec<f32> {
        (0..self.t).map(|t| self.get(t, k)).collect()
    }

    /// Columns `range` of every frame as `f64` rows.
    pub fn columns_f64(&self, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        (0..self.t)
            .map(|t| self.row(t)[range.clone()].iter().map(|&v| v as f64).collect())
            .collect()
    }

    /// Mel-cepstral block (first `N_MCEP` columns).
    pub fn mcep(&self) -> Vec<Vec<f64>> {
        self.columns_f64(0..N_MCEP.min(self.d))
    }

    /// Keeps the first `n` frames.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.t {
            return Err(Error::shape(format!("cannot truncate {} frames to {n}", self.t)));
        }
        let mut m = self.clone();
        m.t = n;
        m.frames.truncate(n * self.d);
        m.pad_frames = self.pad_frames.saturating_sub(self.t - n);
        Ok(m)
    }
}

/// Dense frame-major `t x d` array of `f64`, the working representation of
/// normalized features and condition streams.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameArray {
    pub t: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl FrameArray {
    pub fn new(t: usize, d: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), t * d, "frame array storage does not match {t}x{d}");
        Self { t, d, values }
    }

    pub fn zeros(t: usize, d: usize) -> Self {
        Self::new(t, d, vec![0.0; t * d])
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.d..(t + 1) * self.d]
    }

    /// Frames `start..start + len`, zero-filled past the end.
    pub fn window(&self, start: usize, len: usize) -> FrameArray {
        let mut out = FrameArray::zeros(len, self.d);
        let avail = self.t.saturating_sub(start).min(len);
        out.values[..avail * self.d]
            .copy_from_slice(&self.values[start * self.d..(start + avail) * self.d]);
        out
    }

    /// Keeps the first `n` frames.
    pub fn truncate(&mut self, n: usize) {
        self.t = self.t.min(n);
        self.values.truncate(self.t * self.d);
    }
}

impl From<&FeatureMatrix> for FrameArray {
    fn from(m: &FeatureMatrix) -> Self {
        FrameArray::new(
            m.n_frames(),
            m.dim(),
            m.as_slice().iter().map(|&v| v as f64).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_labels_layout() {
        let l = default_dim_labels();
        assert_eq!(l.len(), D_OUT);
        assert_eq!(l[0], "mcep_0");
        assert_eq!(l[24], "mcep_24");
        assert_eq!(l[25], "bap_0");
        assert_eq!(l[VUV_DIM], "vuv");
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FeatureMatrix::new(0, 1, vec![], 0.005, vec!["a".into()]).is_err());
        assert!(FeatureMatrix::new(2, 1, vec![0.0], 0.005, vec!["a".into()]).is_err());
        assert!(FeatureMatrix::new(1, 2, vec![0.0, 1.0], 0.005, vec!["a".into()]).is_err());
    }
}
