use crate::error::{Error, Result};

/// Channels-by-time matrix of `f64`, row-major (channel-major). Batching is
/// handled by callers, one tensor per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    length: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, length: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * length {
            return Err(Error::shape(format!(
                "tensor storage of {} values does not match {channels}x{length}",
                data.len()
            )));
        }
        Ok(Self { channels, length, data })
    }

    pub fn zeros(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            data: vec![0.0; channels * length],
        }
    }

    pub fn filled(channels: usize, length: usize, v: f64) -> Self {
        Self {
            channels,
            length,
            data: vec![v; channels * length],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::filled(1, 1, v)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.length..(c + 1) * self.length]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.length + t]
    }

    pub fn set(&mut self, c: usize, t: usize, v: f64) {
        self.data[c * self.length + t] = v;
    }

    /// Reinterprets the storage with a new shape of equal size.
    pub fn reshaped(mut self, channels: usize, length: usize) -> Result<Self> {
        if channels * length != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {}x{} into {channels}x{length}",
                self.channels, self.length
            )));
        }
        self.channels = channels;
        self.length = length;
        Ok(self)
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
