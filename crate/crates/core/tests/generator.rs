//! Generator and critic checked against a straight-line re-implementation, plus
//! the streaming properties of block-wise inference.

use blocksing::inference::{condition_blocks, generate_normalized, SongConditions, SynthOptions};
use blocksing::model::{critic_forward, generator_forward, init_params, ModelConfig, ModelParams};
use blocksing::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn to_mat(t: &Tensor) -> Mat {
    (0..t.channels()).map(|c| t.row(c).to_vec()).collect()
}

fn zeros(c: usize, t: usize) -> Mat {
    vec![vec![0.0; t]; c]
}

/// y[o][t] = sum_{i,j} w[o][i][j] x[i][t s + j - p]
fn conv(x: &Mat, w: &[f64], cout: usize, k: usize, s: usize, p: usize) -> Mat {
    let cin = x.len();
    let len = x[0].len();
    let tout = (len + 2 * p - k) / s + 1;
    let mut y = zeros(cout, tout);
    for o in 0..cout {
        for t in 0..tout {
            let mut acc = 0.0;
            for i in 0..cin {
                for j in 0..k {
                    let u = (t * s + j) as isize - p as isize;
                    if u >= 0 && (u as usize) < len {
                        acc += w[(o * cin + i) * k + j] * x[i][u as usize];
                    }
                }
            }
            y[o][t] = acc;
        }
    }
    y
}

/// Adjoint of `conv` with kernel `w[i][o][j]` mapping `o` back from `i`:
/// y[o][t s + j - p] += w[i][o][j] x[i][t].
fn conv_t(x: &Mat, w: &[f64], cout: usize, k: usize, s: usize, p: usize, out_pad: usize) -> Mat {
    let cin = x.len();
    let len = x[0].len();
    let tout = (len - 1) * s + k + out_pad - 2 * p;
    let mut y = zeros(cout, tout);
    for i in 0..cin {
        for (t, &xv) in x[i].iter().enumerate() {
            for o in 0..cout {
                for j in 0..k {
                    let u = (t * s + j) as isize - p as isize;
                    if u >= 0 && (u as usize) < tout {
                        y[o][u as usize] += w[(i * cout + o) * k + j] * xv;
                    }
                }
            }
        }
    }
    y
}

struct Cell {
    wx: Vec<f64>,
    wh: Vec<f64>,
    b: Vec<f64>,
    ch: usize,
    transposed: bool,
}

/// Hidden and cell state of one ConvLSTM step.
fn cell(x: &Mat, state: Option<&(Mat, Mat)>, w: &Cell) -> (Mat, Mat) {
    let ch = w.ch;
    let zx = if w.transposed {
        conv_t(x, &w.wx, 4 * ch, 3, 2, 1, 1)
    } else {
        conv(x, &w.wx, 4 * ch, 3, 2, 1)
    };
    let t = zx[0].len();
    let zh = match state {
        Some((h, _)) => conv(h, &w.wh, 4 * ch, 3, 1, 1),
        None => zeros(4 * ch, t),
    };
    let mut h = zeros(ch, t);
    let mut c = zeros(ch, t);
    for q in 0..ch {
        for u in 0..t {
            let z = |gate: usize| zx[gate * ch + q][u] + zh[gate * ch + q][u] + w.b[gate * ch + q];
            let (i, f, g, o) = (sig(z(0)), sig(z(1)), z(2).tanh(), sig(z(3)));
            let c_prev = state.map_or(0.0, |(_, c)| c[q][u]);
            c[q][u] = f * c_prev + i * g;
            h[q][u] = o * c[q][u].tanh();
        }
    }
    (h, c)
}

fn flat(p: &ModelParams, i: usize) -> Vec<f64> {
    p.values[i].iter().map(|&v| v as f64).collect()
}

/// Generator over consecutive blocks, written out for two encoder and two
/// decoder cells.
fn oracle_generator(p: &ModelParams, cfg: &ModelConfig, blocks: &[Tensor]) -> Vec<Mat> {
    let enc_ch = [cfg.generator.encoder[0].channels, cfg.generator.encoder[1].channels];
    let dec_ch = [cfg.generator.decoder[0].channels, cfg.generator.decoder[1].channels];
    let mk = |idx: usize, ch: usize, transposed: bool| Cell {
        wx: flat(p, idx),
        wh: flat(p, idx + 1),
        b: flat(p, idx + 2),
        ch,
        transposed,
    };
    let e1 = mk(0, enc_ch[0], false);
    let e2 = mk(3, enc_ch[1], false);
    let d1 = mk(6, dec_ch[0], true);
    let d2 = mk(9, dec_ch[1], true);
    let head_w = flat(p, 12);
    let head_b = flat(p, 13);
    let mut states: Option<[(Mat, Mat); 4]> = None;
    let mut out = Vec::new();
    for b in blocks {
        let x = to_mat(b);
        let s1 = cell(&x, states.as_ref().map(|s| &s[0]), &e1);
        let s2 = cell(&s1.0, states.as_ref().map(|s| &s[1]), &e2);
        let s3 = cell(&s2.0, states.as_ref().map(|s| &s[2]), &d1);
        // Skip connection from the first encoder cell, same resolution.
        let mut cat = s3.0.clone();
        cat.extend(s1.0.iter().cloned());
        let s4 = cell(&cat, states.as_ref().map(|s| &s[3]), &d2);
        let t = s4.0[0].len();
        let mut y = zeros(cfg.d_out, t);
        for k in 0..cfg.d_out {
            for u in 0..t {
                let mut acc = head_b[k];
                for (q, row) in s4.0.iter().enumerate() {
                    acc += head_w[k * dec_ch[1] + q] * row[u];
                }
                y[k][u] = acc.tanh();
            }
        }
        out.push(y);
        states = Some([s1, s2, s3, s4]);
    }
    out
}

fn oracle_critic(p: &ModelParams, cfg: &ModelConfig, features: &Tensor, cond: &Tensor) -> f64 {
    let base = p.n_generator;
    let ch = [cfg.critic.encoder[0].channels, cfg.critic.encoder[1].channels];
    let mk = |idx: usize, ch: usize| Cell {
        wx: flat(p, base + idx),
        wh: flat(p, base + idx + 1),
        b: flat(p, base + idx + 2),
        ch,
        transposed: false,
    };
    let mut x = to_mat(features);
    x.extend(to_mat(cond));
    let (h1, _) = cell(&x, None, &mk(0, ch[0]));
    let (h2, _) = cell(&h1, None, &mk(3, ch[1]));
    let w = flat(p, base + 6);
    h2.iter()
        .zip(&w)
        .map(|(row, wq)| wq * row.iter().sum::<f64>() / row.len() as f64)
        .sum()
}

fn small_config() -> ModelConfig {
    let mut cfg = ModelConfig::tiny(3, 2);
    cfg.block_len = 8;
    cfg.d_out = 5;
    cfg
}

/// Every weight uniform in ±0.8, biases included, so no gate sits at its init.
fn random_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = init_params(seed, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in p.values.iter_mut().flatten() {
        *v = rng.gen_range(-0.8f32..0.8);
    }
    p
}

fn random_block(rng: &mut ChaCha8Rng, c: usize, t: usize) -> Tensor {
    Tensor::new(c, t, (0..c * t).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn generator_matches_straight_line_forward() {
    let cfg = small_config();
    assert_eq!(cfg.generator.encoder.len(), 2);
    let p = random_params(&cfg, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let blocks: Vec<Tensor> = (0..3)
        .map(|_| random_block(&mut rng, cfg.condition.channels(), cfg.block_len))
        .collect();
    let (got, _) = generator_forward(&p, &cfg, &blocks, None).unwrap();
    let want = oracle_generator(&p, &cfg, &blocks);
    let mut worst = 0.0f64;
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g.shape(), (cfg.d_out, cfg.block_len));
        for (k, row) in w.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                worst = worst.max((g.get(k, t) - v).abs());
            }
        }
    }
    assert!(worst < 1e-10, "max abs diff {worst}");
}

#[test]
fn critic_matches_straight_line_forward() {
    let cfg = small_config();
    let p = random_params(&cfg, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let f = random_block(&mut rng, cfg.d_out, cfg.block_len);
        let c = random_block(&mut rng, cfg.condition.channels_without_noise(), cfg.block_len);
        let got = critic_forward(&p, &cfg, &f, &c).unwrap();
        let want = oracle_critic(&p, &cfg, &f, &c);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn later_conditions_do_not_change_earlier_blocks() {
    let cfg = small_config();
    let p = random_params(&cfg, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let blocks: Vec<Tensor> = (0..4)
        .map(|_| random_block(&mut rng, cfg.condition.channels(), cfg.block_len))
        .collect();
    let (base, _) = generator_forward(&p, &cfg, &blocks, None).unwrap();
    for n in 0..3 {
        let mut perturbed = blocks.clone();
        perturbed[n + 1] = random_block(&mut rng, cfg.condition.channels(), cfg.block_len);
        let (out, _) = generator_forward(&p, &cfg, &perturbed, None).unwrap();
        for b in 0..=n {
            assert_eq!(out[b], base[b], "block {b} changed when block {} was perturbed", n + 1);
        }
        assert_ne!(out[n + 1], base[n + 1]);
    }
}

fn song(n: usize, singer: usize) -> SongConditions {
    SongConditions {
        phonemes: (0..n).map(|t| (t / 11) % 3).collect(),
        f0: (0..n).map(|t| if t % 13 < 9 { 180.0 + t as f64 } else { 0.0 }).collect(),
        vuv: (0..n).map(|t| if t % 13 < 9 { 1.0 } else { 0.0 }).collect(),
        singer,
    }
}

fn prefix(c: &SongConditions, n: usize) -> SongConditions {
    SongConditions {
        phonemes: c.phonemes[..n].to_vec(),
        f0: c.f0[..n].to_vec(),
        vuv: c.vuv[..n].to_vec(),
        singer: c.singer,
    }
}

#[test]
fn prefix_synthesis_is_consistent_up_to_the_last_complete_block() {
    let mut cfg = small_config();
    cfg.block_len = 16;
    let p = random_params(&cfg, 12);
    let full = song(200, 1);
    let opts = SynthOptions::new(&cfg, 77);
    let render = |c: &SongConditions| {
        let blocks = condition_blocks(&cfg, c, &opts).unwrap();
        generate_normalized(&p, &cfg, &blocks, opts.hop, c.n_frames()).unwrap()
    };
    let whole = render(&full);
    for n in [37, 75, 120, 161] {
        let part = render(&prefix(&full, n));
        assert_eq!(part.t, n);
        // Blocks 0..k are complete in the prefix; block k may be padded.
        let k = (n - cfg.block_len) / opts.hop + 1;
        let stable = k * opts.hop;
        for t in 0..stable {
            assert_eq!(part.row(t), whole.row(t), "prefix {n}, frame {t}");
        }
    }
}

#[test]
fn output_length_follows_the_song() {
    let cfg = ModelConfig::tiny(3, 2);
    assert_eq!(cfg.block_len, 128);
    let p = init_params(0, &cfg).unwrap();
    for n in [128, 300, 1] {
        let c = song(n, 0);
        let opts = SynthOptions::new(&cfg, 1);
        let blocks = condition_blocks(&cfg, &c, &opts).unwrap();
        let out = generate_normalized(&p, &cfg, &blocks, opts.hop, n).unwrap();
        assert_eq!((out.t, out.d), (n, cfg.d_out));
        assert!(out.values.iter().all(|v| v.abs() < 1.0));
    }
}
