//! Exact empirical Wasserstein-1 distance in one dimension and a probe that
//! checks a weight-clipped critic orders distribution pairs the same way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{rmsprop_step, Graph, RmsPropConfig, Tensor};

/// W1 between two equal-size empirical distributions: the sorted matching is
/// optimal, so the distance is `mean |sort(x) - sort(y)|`.
pub fn wasserstein1_empirical(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::shape(format!(
            "W1 needs equal non-empty sample sets, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (a, b) = (sorted(x), sorted(y));
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape("spearman needs two equal sequences of length >= 2"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub steps: usize,
    pub clip: f64,
    pub optimizer: RmsPropConfig,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            steps: 300,
            clip: 0.01,
            optimizer: RmsPropConfig {
                lr: 1e-3,
                ..RmsPropConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    /// `mean f(y) - mean f(x)` for the trained critic.
    pub gap: f64,
    pub oracle: f64,
}

// Dense layers written as width-1 convolutions over the sample axis.
fn critic_score(g: &mut Graph, p: &[Tensor], xs: &Tensor) -> Result<crate::nn::NodeId> {
    let ids: Vec<_> = p.iter().enumerate().map(|(i, t)| g.param(i, t.clone())).collect();
    let x = g.input(xs.clone());
    let h = g.conv1d(x, ids[0], 1, 0)?;
    let h = g.add_bias(h, ids[1])?;
    let h = g.relu(h);
    let h = g.conv1d(h, ids[2], 1, 0)?;
    let h = g.add_bias(h, ids[3])?;
    let h = g.relu(h);
    let y = g.conv1d(h, ids[4], 1, 0)?;
    Ok(g.mean(y))
}

/// Trains a small clipped critic to separate `y` from `x` by maximizing
/// `mean f(y) - mean f(x)` and reports the final gap with the exact W1.
pub fn critic_w1_probe(x: &[f64], y: &[f64], cfg: &ProbeConfig) -> Result<ProbeResult> {
    let oracle = wasserstein1_empirical(x, y)?;
    let h = cfg.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.clip;
    let mut init = |r: usize, k: usize| {
        Tensor::new(r, k, (0..r * k).map(|_| rng.gen_range(-c..=c)).collect()).expect("shape")
    };
    let mut params = vec![init(h, 1), init(h, 1), init(h, h), init(h, 1), init(1, h)];
    let mut v: Vec<Vec<f64>> = params.iter().map(|t| vec![0.0; t.data().len()]).collect();
    let xs = Tensor::new(1, x.len(), x.to_vec())?;
    let ys = Tensor::new(1, y.len(), y.to_vec())?;
    let gap = |params: &[Tensor]| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let fx = critic_score(&mut g, params, &xs)?;
        let fy = critic_score(&mut g, params, &ys)?;
        let loss = g.sub(fx, fy)?;
        let grads = g.backward(loss)?;
        let mut buf: Vec<Vec<f64>> = params.iter().map(|t| vec![0.0; t.data().len()]).collect();
        grads.accumulate_params(&g, &mut buf)?;
        Ok((-g.value(loss).get(0, 0), buf))
    };
    for _ in 0..cfg.steps {
        let (_, grads) = gap(&params)?;
        for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut v) {
            rmsprop_step(p.data_mut(), g, v, &cfg.optimizer)?;
            for w in p.data_mut() {
                *w = w.clamp(-c, c);
            }
        }
    }
    let (gap, _) = gap(&params)?;
    if !gap.is_finite() {
        return Err(Error::Numerical("critic probe diverged".into()));
    }
    Ok(ProbeResult { gap, oracle })
}

/// Gaussian samples around `mean`.
pub fn normal_samples(n: usize, mean: f64, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mean, std).expect("positive std");
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// Shifts of the probe sweep.
pub const PROBE_SHIFTS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub shift: f64,
    pub gap: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub spearman: f64,
    /// Gap between two independent draws of the same distribution.
    pub identical_gap: f64,
    pub identical_oracle: f64,
}

impl SweepReport {
    /// Ordinal agreement with the oracle and a null gap under 10% of the
    /// smallest shifted gap.
    pub fn passed(&self) -> bool {
        let smallest = self.rows.iter().map(|r| r.gap.abs()).fold(f64::INFINITY, f64::min);
        self.spearman >= 0.9 && self.identical_gap.abs() < 0.1 * smallest
    }
}

/// Probes Gaussian clouds of `n` samples (std `spread`) at each shift against
/// an unshifted cloud, plus an unshifted pair.
pub fn w1_sweep(n: usize, spread: f64, cfg: &ProbeConfig) -> Result<SweepReport> {
    let base = normal_samples(n, 0.0, spread, cfg.seed);
    let mut rows = Vec::new();
    for (i, &shift) in PROBE_SHIFTS.iter().enumerate() {
        let y = normal_samples(n, shift, spread, cfg.seed.wrapping_add(1 + i as u64));
        let r = critic_w1_probe(&base, &y, cfg)?;
        rows.push(SweepRow {
            shift,
            gap: r.gap,
            oracle: r.oracle,
        });
    }
    let same = normal_samples(n, 0.0, spread, cfg.seed.wrapping_add(100));
    let null = critic_w1_probe(&base, &same, cfg)?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let oracles: Vec<f64> = rows.iter().map(|r| r.oracle).collect();
    Ok(SweepReport {
        spearman: spearman(&gaps, &oracles)?,
        rows,
        identical_gap: null.gap,
        identical_oracle: null.oracle,
    })
}
