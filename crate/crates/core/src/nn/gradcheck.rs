//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, NodeId};
use super::lstm::{cell_step, CellNodes, InputConv, StateNodes};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, floor)`. The floor keeps coordinates whose true
/// gradient is essentially zero from dividing rounding noise by itself.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub coords: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the tape gradient of `build` against central differences.
/// `build` receives one parameter node per leaf and must return a scalar.
/// When `samples` is set, only that many coordinates (drawn with `seed`) are
/// checked; otherwise all of them.
pub fn check_graph<F>(
    name: &str,
    leaves: &[Tensor],
    build: F,
    samples: Option<usize>,
    seed: u64,
    tolerance: f64,
) -> Result<CheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |leaves: &[Tensor]| -> Result<(Graph, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = leaves.iter().enumerate().map(|(i, t)| g.param(i, t.clone())).collect();
        let out = build(&mut g, &ids)?;
        Ok((g, ids, out))
    };
    let (g, ids, out) = eval(leaves)?;
    let grads = g.backward(out)?;
    let coords: Vec<(usize, usize)> = leaves
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.data().len()).map(move |j| (i, j)))
        .collect();
    let chosen: Vec<(usize, usize)> = match samples {
        Some(n) if n < coords.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, coords.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|k| coords[k]).collect()
        }
        _ => coords,
    };
    let mut worst = 0.0f64;
    let mut work = leaves.to_vec();
    for &(i, j) in &chosen {
        let analytic = grads.get(ids[i]).map_or(0.0, |t| t.data()[j]);
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + FD_EPS;
        let (gp, _, op) = eval(&work)?;
        work[i].data_mut()[j] = orig - FD_EPS;
        let (gm, _, om) = eval(&work)?;
        work[i].data_mut()[j] = orig;
        let numeric = (gp.value(op).get(0, 0) - gm.value(om).get(0, 0)) / (2.0 * FD_EPS);
        worst = worst.max(relative_error(analytic, numeric));
    }
    Ok(CheckReport {
        name: name.to_string(),
        coords: chosen.len(),
        max_rel_err: worst,
        tolerance,
        passed: worst < tolerance,
    })
}

fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, t: usize, scale: f64) -> Tensor {
    Tensor::new(c, t, (0..c * t).map(|_| rng.gen_range(-scale..scale)).collect()).expect("shape")
}

/// Finite-difference check of every differentiable op on small random inputs.
pub fn run_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    let tol = FD_TOLERANCE;

    let x = rand_tensor(&mut rng, 3, 11, 1.0);
    let w = rand_tensor(&mut rng, 4, 9, 0.7);
    reports.push(check_graph(
        "conv1d_tanh_mean",
        &[x, w],
        |g, p| {
            let y = g.conv1d(p[0], p[1], 2, 1)?;
            let y = g.tanh(y);
            Ok(g.mean(y))
        },
        None,
        seed,
        tol,
    )?);

    let x = rand_tensor(&mut rng, 4, 5, 1.0);
    let w = rand_tensor(&mut rng, 4, 6, 0.7);
    reports.push(check_graph(
        "conv1d_transpose_sigmoid_sum",
        &[x, w],
        |g, p| {
            let y = g.conv1d_transpose(p[0], p[1], 3, 2, 1, 1)?;
            let y = g.sigmoid(y);
            Ok(g.sum(y))
        },
        None,
        seed,
        tol,
    )?);

    let a = rand_tensor(&mut rng, 2, 6, 1.5);
    let b = rand_tensor(&mut rng, 2, 6, 1.5);
    let bias = rand_tensor(&mut rng, 2, 1, 1.0);
    reports.push(check_graph(
        "elementwise",
        &[a, b, bias],
        |g, p| {
            let m = g.mul(p[0], p[1])?;
            let s = g.sub(m, p[0])?;
            let s = g.add_bias(s, p[2])?;
            let r = g.relu(s);
            let q = g.softplus(p[1]);
            let t = g.add(r, q)?;
            let t = g.abs(t);
            let t = g.scale(t, 0.7);
            Ok(g.mean(t))
        },
        None,
        seed,
        tol,
    )?);

    let a = rand_tensor(&mut rng, 3, 4, 1.0);
    let b = rand_tensor(&mut rng, 2, 4, 1.0);
    reports.push(check_graph(
        "rows_concat_pool",
        &[a, b],
        |g, p| {
            let r = g.rows(p[0], 1, 2)?;
            let c = g.concat(&[r, p[1], p[0]])?;
            let c = g.tanh(c);
            let m = g.mean_time(c);
            let m = g.mul(m, m)?;
            Ok(g.sum(m))
        },
        None,
        seed,
        tol,
    )?);

    // Two chained cell steps so gradients flow through the recurrent state.
    let (cin, ch, t) = (3, 2, 8);
    let enc = InputConv::Strided { k: 3, stride: 2, pad: 1 };
    let (r, c) = enc.weight_shape(cin, ch);
    let leaves = [
        rand_tensor(&mut rng, cin, 2 * t, 1.0),
        rand_tensor(&mut rng, cin, 2 * t, 1.0),
        rand_tensor(&mut rng, r, c, 0.6),
        rand_tensor(&mut rng, 4 * ch, ch * 3, 0.6),
        rand_tensor(&mut rng, 4 * ch, 1, 0.5),
    ];
    reports.push(check_graph(
        "convlstm_two_steps",
        &leaves,
        |g, p| {
            let cell = CellNodes {
                input: enc,
                wx: p[2],
                wh: p[3],
                b: p[4],
            };
            let s1 = cell_step(g, p[0], None, &cell)?;
            let s2: StateNodes = cell_step(g, p[1], Some(s1), &cell)?;
            let both = g.concat(&[s2.h, s2.c])?;
            let sq = g.mul(both, both)?;
            Ok(g.mean(sq))
        },
        None,
        seed,
        tol,
    )?);

    let dec = InputConv::Transposed {
        k: 3,
        stride: 2,
        pad: 1,
        out_pad: 1,
    };
    let (r, c) = dec.weight_shape(cin, ch);
    let leaves = [
        rand_tensor(&mut rng, cin, t, 1.0),
        rand_tensor(&mut rng, r, c, 0.6),
        rand_tensor(&mut rng, 4 * ch, ch * 3, 0.6),
        rand_tensor(&mut rng, 4 * ch, 1, 0.5),
        rand_tensor(&mut rng, ch, 2 * t, 0.9),
        rand_tensor(&mut rng, ch, 2 * t, 1.5),
    ];
    reports.push(check_graph(
        "convlstm_transposed_with_state",
        &leaves,
        |g, p| {
            let cell = CellNodes {
                input: dec,
                wx: p[1],
                wh: p[2],
                b: p[3],
            };
            let s = cell_step(g, p[0], Some(StateNodes { h: p[4], c: p[5] }), &cell)?;
            let y = g.add(s.h, s.c)?;
            let y = g.tanh(y);
            Ok(g.sum(y))
        },
        None,
        seed,
        tol,
    )?);

    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in run_suite(11).unwrap() {
            assert!(r.passed, "{} max rel err {}", r.name, r.max_rel_err);
        }
    }

    #[test]
    fn full_and_sampled_coordinates() {
        let x = Tensor::new(1, 3, vec![0.3, -0.2, 0.9]).unwrap();
        let ok = check_graph("ok", std::slice::from_ref(&x), |g, p| Ok(g.sum(p[0])), None, 0, 1e-4).unwrap();
        assert!(ok.passed);
        assert_eq!(ok.coords, 3);
        let sampled = check_graph("s", &[x], |g, p| Ok(g.sum(p[0])), Some(2), 0, 1e-4).unwrap();
        assert_eq!(sampled.coords, 2);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, -1e-12) < 1e-4);
    }
}
