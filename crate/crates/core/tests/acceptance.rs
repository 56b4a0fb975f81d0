//! Acceptance run: twelve criteria, one PASS/FAIL line each. Exits non-zero if
//! any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use blocksing::evaluation::{
    evaluate_mcd, mcd, w1_sweep, wasserstein1_empirical, ProbeConfig, MCD_CONST,
};
use blocksing::features::blocks::block_count;
use blocksing::features::{
    compute_norm_stats, denormalize, generate_synthetic_dataset, make_blocks, normalize, overlap_add,
    read_container, write_container, Dataset, FeatureMatrix, Split, SyntheticSpec,
};
use blocksing::inference::{synthesize_features, SongConditions, SynthOptions};
use blocksing::model::{init_params, model_gradcheck, Checkpoint, ModelConfig, ModelParams};
use blocksing::nn::gradcheck::run_suite;
use blocksing::nn::{
    conv1d, conv1d_out_len, conv1d_transpose, conv1d_transpose_out_len, convlstm_cell, ConvLstmState,
    ConvLstmWeights, ConvSpec, InputConv, RmsPropConfig, Tensor,
};
use blocksing::training::{generator_grad_norm, Gan, LogRecord, TrainConfig, Trainer};
use blocksing::vocoder::{analyze, analyze_centered, synthesize, AnalysisConfig, Waveform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, t: usize) -> Tensor {
    Tensor::new(c, t, (0..c * t).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let mut reports = run_suite(2024)?;
    reports.extend(model_gradcheck(2024)?);
    let elapsed = t0.elapsed();
    let worst = reports
        .iter()
        .max_by(|a, b| (a.max_rel_err / a.tolerance).total_cmp(&(b.max_rel_err / b.tolerance)))
        .unwrap();
    let ok = reports.iter().all(|r| r.passed) && elapsed < Duration::from_secs(120);
    Ok((
        ok,
        format!(
            "{} checks, worst {} {:.2e} (tol {:.0e}), {:.1} s",
            reports.len(),
            worst.name,
            worst.max_rel_err,
            worst.tolerance,
            elapsed.as_secs_f64()
        ),
    ))
}

fn convlstm_degeneracy() -> Outcome {
    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let input = InputConv::Strided { k: 1, stride: 1, pad: 0 };
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut w = ConvLstmWeights::zeros(input, 1, 1);
        for v in w.wx.data_mut().iter_mut().chain(w.wh.data_mut()).chain(w.b.data_mut()) {
            *v = rng.gen_range(-2.0..2.0);
        }
        let (x, h, c): (f64, f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
        let state = ConvLstmState {
            h: Tensor::scalar(h),
            c: Tensor::scalar(c),
        };
        let out = convlstm_cell(&Tensor::scalar(x), &state, &w)?;
        // At T=1 only the centre tap of the state kernel sees data.
        let pre = |q: usize| w.wx.get(q, 0) * x + w.wh.get(q, 1) * h + w.b.get(q, 0);
        let c2 = sig(pre(1)) * c + sig(pre(0)) * pre(2).tanh();
        let h2 = sig(pre(3)) * c2.tanh();
        worst = worst
            .max((out.c.get(0, 0) - c2).abs())
            .max((out.h.get(0, 0) - h2).abs());
    }
    Ok((worst < 1e-12, format!("1000 scalar cells, max abs diff {worst:.1e}")))
}

fn shape_laws() -> Outcome {
    let mut cases = 0;
    let mut bad = Vec::new();
    for t in 1..=16 {
        for k in [1, 3, 5] {
            for s in 1..=3 {
                for p in 0..=1 {
                    let Some(t1) = conv1d_out_len(t, k, s, p) else {
                        if t + 2 * p >= k {
                            bad.push(format!("conv T={t} k={k} s={s} p={p} rejected"));
                        }
                        continue;
                    };
                    cases += 1;
                    let spec = ConvSpec::new(1, 1, k, s, p);
                    let y = conv1d(&Tensor::zeros(1, t), &vec![0.0; k], &spec)?;
                    if t1 != (t + 2 * p - k) / s + 1 || y.length() != t1 {
                        bad.push(format!("conv T={t} k={k} s={s} p={p}"));
                    }
                    if let Some(t2) = conv1d_transpose_out_len(t1, k, s, p, 0) {
                        let z = conv1d_transpose(&y, &vec![0.0; k], &spec, 0)?;
                        if t2 + 2 * p != (t1 - 1) * s + k || z.length() != t2 {
                            bad.push(format!("transpose T={t1} k={k} s={s} p={p}"));
                        }
                    }
                }
            }
        }
    }
    let down = conv1d_out_len(6, 3, 3, 0);
    let up = conv1d_transpose_out_len(2, 3, 3, 0, 0);
    if down != Some(2) || up != Some(6) {
        bad.push(format!("6<->2 stride-3 example gave {down:?}/{up:?}"));
    }
    Ok((bad.is_empty(), format!("{cases} geometries, 6->2->6 at stride 3, {} violations {bad:?}", bad.len())))
}

fn adjoint_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (cin, cout) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let s = rng.gen_range(1..4);
        let p = rng.gen_range(0..=k / 2);
        let t = rng.gen_range(k..48);
        let spec = ConvSpec::new(cout, cin, k, s, p);
        let w: Vec<f64> = (0..spec.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = rand_tensor(&mut rng, cin, t);
        let t1 = conv1d_out_len(t, k, s, p).unwrap();
        let y = rand_tensor(&mut rng, cout, t1);
        let out_pad = t - conv1d_transpose_out_len(t1, k, s, p, 0).unwrap();
        let lhs = conv1d(&x, &w, &spec)?.dot(&y);
        let rhs = x.dot(&conv1d_transpose(&y, &w, &spec, out_pad)?);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok((worst < 1e-10, format!("100 instances, max |<Ax,y> - <x,A'y>| {worst:.1e}")))
}

fn w1_oracle() -> Outcome {
    let mut fails = Vec::new();
    let hand = [
        (vec![0.3, -1.2, 4.0], vec![0.3, -1.2, 4.0], 0.0),
        (vec![0.0, 1.0], vec![1.0, 2.0], 1.0),
        (vec![0.0; 7], vec![3.0; 7], 3.0),
    ];
    for (x, y, want) in &hand {
        let got = wasserstein1_empirical(x, y)?;
        if got != *want {
            fails.push(format!("hand case {want}: got {got}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    for i in 0..1000 {
        let n = rng.gen_range(1..40);
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect() };
        let (x, y, z) = (draw(), draw(), draw());
        let kappa = rng.gen_range(-5.0..5.0);
        let shift = |v: &[f64]| v.iter().map(|a| a + kappa).collect::<Vec<_>>();
        let xy = wasserstein1_empirical(&x, &y)?;
        let yx = wasserstein1_empirical(&y, &x)?;
        let xz = wasserstein1_empirical(&x, &z)?;
        let zy = wasserstein1_empirical(&z, &y)?;
        let moved = wasserstein1_empirical(&shift(&x), &shift(&y))?;
        let self_shift = wasserstein1_empirical(&x, &shift(&x))?;
        if !(xy >= 0.0 && close(xy, yx) && xy <= xz + zy + 1e-9 && close(moved, xy) && close(self_shift, kappa.abs())) {
            fails.push(format!("instance {i}"));
        }
        if wasserstein1_empirical(&x, &x)? != 0.0 {
            fails.push(format!("instance {i}: W1(x, x) != 0"));
        }
    }
    Ok((fails.is_empty(), format!("3 hand cases exact, 1000 random instances, failures {fails:?}")))
}

fn critic_probe() -> Outcome {
    let t0 = Instant::now();
    let report = w1_sweep(512, 0.5, &ProbeConfig::default())?;
    let elapsed = t0.elapsed();
    let gaps: Vec<String> = report.rows.iter().map(|r| format!("{}:{:.2e}", r.shift, r.gap)).collect();
    Ok((
        report.passed() && elapsed < Duration::from_secs(300),
        format!(
            "spearman {:.2}, gaps [{}], identical {:.1e}, {:.1} s",
            report.spearman,
            gaps.join(" "),
            report.identical_gap,
            elapsed.as_secs_f64()
        ),
    ))
}

/// Tiny synthetic task: 2 singers, 5 phonemes, 10 songs of 1344 frames, which
/// block into 200 blocks of 128 frames at hop 64.
fn learning_data() -> Dataset {
    generate_synthetic_dataset(&SyntheticSpec::new(7, 2, 5, 10, 1344)).unwrap().dataset
}

fn learning_config() -> TrainConfig {
    TrainConfig {
        mode: "wgan".into(),
        epochs: 300,
        seed: 1,
        batch_size: 1,
        optimizer: RmsPropConfig {
            lr: 1e-3,
            ..RmsPropConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn learning_check(data: &Dataset, trained: &mut Option<(ModelConfig, ModelParams)>) -> Outcome {
    let cfg = ModelConfig::tiny(data.n_phonemes(), data.n_singers());
    let blocks: usize = data
        .split(Split::Train)
        .map(|s| block_count(s.n_frames(), cfg.block_len, cfg.block_len / 2))
        .sum();
    let tc = learning_config();
    let clip = tc.clip as f32 as f64;
    let t0 = Instant::now();
    let mut trainer = Trainer::new(data, cfg.clone(), tc)?;
    trainer.run()?;
    let elapsed = t0.elapsed();
    let mcds = trainer.log.epoch_mcd();
    let (first, last) = (mcds[0], *mcds.last().unwrap());
    let mut steps = 0;
    let mut clip_ok = true;
    for r in &trainer.log.records {
        if let LogRecord::Step { critic_max_abs, .. } = r {
            steps += 1;
            clip_ok &= *critic_max_abs <= clip;
        }
    }
    *trained = Some((cfg, trainer.params.clone()));
    let ok = blocks == 200 && mcds.len() == 300 && last < 0.5 * first && clip_ok && elapsed < Duration::from_secs(900);
    Ok((
        ok,
        format!(
            "{blocks} blocks, MCD {first:.2} -> {last:.2} dB ({:.0}%), clip held over {steps} steps: {clip_ok}, {:.0} s",
            100.0 * last / first,
            elapsed.as_secs_f64()
        ),
    ))
}

fn voice_change(data: &Dataset, trained: &Option<(ModelConfig, ModelParams)>) -> Outcome {
    let Some((cfg, params)) = trained else {
        return Ok((false, "no trained model (learning check did not run)".into()));
    };
    let mut shift_total = 0.0;
    let mut wins = 0;
    let mut songs = 0;
    let mut lines = Vec::new();
    for (i, song) in data.songs.iter().enumerate() {
        let own = SongConditions::from_song(song);
        let other = own.with_singer(1 - song.singer);
        let mut opts = SynthOptions::new(cfg, blocksing::evaluation::song_seed(3, i));
        opts.pad_phoneme = data.vocab.silence_id();
        let render = |c: &SongConditions| {
            synthesize_features(params, cfg, Some(&data.norm_stats), c, &opts, data.hop_s, data.dim_labels.clone())
        };
        let (a, b) = (render(&own)?, render(&other)?);
        let diff = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() as f64)
            .sum::<f64>()
            / a.as_slice().len() as f64;
        let truth = song.features.mcep();
        let (ma, mb) = (mcd(&truth, &a.mcep())?, mcd(&truth, &b.mcep())?);
        shift_total += diff;
        songs += 1;
        if ma < mb {
            wins += 1;
        }
        if i < 2 {
            lines.push(format!("{}: own {ma:.2} / other {mb:.2} dB", song.id));
        }
    }
    let mean_shift = shift_total / songs as f64;
    Ok((
        mean_shift > 1e-3 && wins == songs,
        format!(
            "mean |dfeat| {mean_shift:.3}, own identity closer on {wins}/{songs} songs ({})",
            lines.join(", ")
        ),
    ))
}

fn pipeline_identities() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir()?;

    let labels: Vec<String> = (0..30).map(|i| format!("d{i}")).collect();
    let rows: Vec<Vec<f64>> = (0..257).map(|_| (0..30).map(|_| rng.gen_range(-50.0..50.0)).collect()).collect();
    let m = FeatureMatrix::from_rows_f64(&rows, 0.005, labels.clone())?.with_ids("song", "singer");
    let path = dir.path().join("m.gsf");
    write_container(&m, &path)?;
    let back = read_container(&path)?;
    let bit_exact = back == m
        && back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
    ok &= bit_exact;
    notes.push(format!("container bit-exact {bit_exact}"));

    let stats = compute_norm_stats(std::slice::from_ref(&m))?;
    let restored = denormalize(&normalize(&m, &stats)?, &stats, m.hop_s, labels)?;
    let err = restored
        .as_slice()
        .iter()
        .zip(m.as_slice())
        .map(|(a, b)| (a - b).abs() as f64 / (b.abs() as f64).max(1.0))
        .fold(0.0, f64::max);
    ok &= err < 1e-6;
    notes.push(format!("norm round trip rel {err:.1e}"));

    let mut worst = 0.0f64;
    for n in [128, 129, 300, 1000] {
        let frames = blocksing::features::FrameArray::new(
            n,
            30,
            (0..n * 30).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let merged = overlap_add(&make_blocks(&frames, 128, 64)?)?;
        for (a, b) in merged.values.iter().zip(&frames.values) {
            worst = worst.max((a - b).abs());
        }
    }
    ok &= worst < 1e-6;
    notes.push(format!("overlap-add {worst:.1e}"));

    let data = generate_synthetic_dataset(&SyntheticSpec::new(3, 2, 4, 4, 300))?.dataset;
    let cfg = ModelConfig::tiny(data.n_phonemes(), data.n_singers());
    let tc = TrainConfig {
        epochs: 2,
        batch_size: 1,
        blocks_per_segment: 1,
        seed: 4,
        ..TrainConfig::default()
    };
    let mut full = Trainer::new(&data, cfg.clone(), tc.clone())?;
    full.run()?;
    let mut first = Trainer::new(&data, cfg, TrainConfig { epochs: 1, ..tc.clone() })?;
    first.run()?;
    let path = dir.path().join("c.gsc");
    first.checkpoint().save(&path)?;
    let mut rest = Trainer::resume(&data, Checkpoint::load(&path)?, tc)?;
    rest.run()?;
    let n1 = first.log.step_losses().len();
    let expect = &full.log.step_losses()[n1..];
    let got = rest.log.step_losses();
    let same = expect.len() >= 10 && got.len() >= 10 && expect[..10] == got[..10];
    ok &= same;
    notes.push(format!("resume reproduces next 10 step losses {same}"));
    Ok((ok, notes.join(", ")))
}

fn mcd_units() -> Outcome {
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let frame = |rng: &mut ChaCha8Rng| (0..25).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
    let a: Vec<Vec<f64>> = (0..20).map(|_| frame(&mut rng)).collect();
    let zero = mcd(&a, &a)?;
    let mut b = vec![vec![0.0; 25]];
    let base = vec![vec![0.0; 25]];
    b[0][3] = 1.0;
    let unit = mcd(&base, &b)?;
    let oracle = 10.0 * 2f64.sqrt() / 10f64.ln();
    let mut ok = zero == 0.0 && (unit - 6.1419).abs() < 1e-3 && (MCD_CONST - oracle).abs() < 1e-12;
    notes.push(format!("identical {zero}, unit {unit:.4} dB"));
    let mut bad = 0;
    for _ in 0..500 {
        let t = rng.gen_range(1..30);
        let x: Vec<Vec<f64>> = (0..t).map(|_| frame(&mut rng)).collect();
        let y: Vec<Vec<f64>> = (0..t).map(|_| frame(&mut rng)).collect();
        let d = mcd(&x, &y)?;
        let k = rng.gen_range(-4.0..4.0);
        let scale = |v: &[Vec<f64>]| v.iter().map(|r| r.iter().map(|c| c * k).collect()).collect::<Vec<Vec<f64>>>();
        let ds = mcd(&scale(&x), &scale(&y))?;
        let mut order: Vec<usize> = (0..t).collect();
        order.shuffle(&mut rng);
        let px: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let py: Vec<Vec<f64>> = order.iter().map(|&i| y[i].clone()).collect();
        let dp = mcd(&px, &py)?;
        let tol = 1e-9 * (1.0 + d);
        if (ds - k.abs() * d).abs() > tol * (1.0 + k.abs()) || (dp - d).abs() > tol || d < 0.0 {
            bad += 1;
        }
    }
    ok &= bad == 0;
    notes.push(format!("scale/permutation failures {bad}/500"));
    Ok((ok, notes.join(", ")))
}

fn harmonic_tone(f0: f64, secs: f64) -> Waveform {
    let n = (secs * 16000.0) as usize;
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / 16000.0;
            (1..=12).map(|h| 0.3 / h as f64 * (2.0 * PI * f0 * h as f64 * t).sin()).sum::<f64>()
        })
        .collect();
    Waveform::new(x, 16000).unwrap()
}

fn vocoder_checks() -> Outcome {
    let cfg = AnalysisConfig::default();
    let sine = Waveform::new(
        (0..16000).map(|i| 0.5 * (2.0 * PI * 220.0 * i as f64 / 16000.0).sin()).collect(),
        16000,
    )?;
    let (_, f0) = analyze(&sine, &cfg)?;
    let voiced: Vec<f64> = f0.iter().copied().filter(|&f| f > 0.0).collect();
    let close = voiced.iter().filter(|&&f| (f - 220.0).abs() / 220.0 <= 0.03).count();
    let frac = close as f64 / voiced.len().max(1) as f64;
    let voiced_frac = voiced.len() as f64 / f0.len() as f64;
    // Round trip as MCD(analyze(x), analyze(synthesize(analyze(x)))): every
    // window lies inside its signal. The output is shorter by the frames the
    // first analysis drops, so the common prefix is compared.
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for tone in [110.0, 150.0, 220.0, 330.0, 500.0] {
        let x = harmonic_tone(tone, 1.0);
        let (m, f0) = analyze(&x, &cfg)?;
        let y = synthesize(&m, &f0, &cfg, 1)?;
        let (m2, _) = analyze(&y, &cfg)?;
        let n = m2.n_frames();
        let d = mcd(&m.mcep()[..n], &m2.mcep())?;
        worst = worst.max(d);
        // Centred framing zero-pads the edges; reported, not asserted.
        let (c, cf0) = analyze_centered(&x, &cfg)?;
        let (c2, _) = analyze_centered(&synthesize(&c, &cf0, &cfg, 1)?, &cfg)?;
        let centred = mcd(&c.mcep(), &c2.mcep())?;
        parts.push(format!("{tone} Hz {d:.2} (centred incl. edges {centred:.2})"));
    }
    Ok((
        frac >= 0.95 && voiced_frac >= 0.95 && worst < 8.0,
        format!(
            "220 Hz sine: {:.1}% voiced, {:.1}% of voiced within 3%; round-trip MCD dB [{}]",
            100.0 * voiced_frac,
            100.0 * frac,
            parts.join(", ")
        ),
    ))
}

fn gan_vanishing_gradient() -> Outcome {
    let cfg = ModelConfig::tiny(5, 2);
    let params = init_params(6, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cond = rand_tensor(&mut rng, cfg.condition.channels(), cfg.block_len);
    let (half, d_half) = generator_grad_norm(&Gan, &params, &cfg, &cond, Some(0.5))?;
    let (sure, d_sure) = generator_grad_norm(&Gan, &params, &cfg, &cond, Some(1e-4))?;
    let ratio = sure / half;
    Ok((
        d_sure < 1e-3 && ratio < 0.01,
        format!("|grad| {half:.3e} at d_fake {d_half:.2}, {sure:.3e} at d_fake {d_sure:.1e}, ratio {ratio:.2e}"),
    ))
}

fn main() -> ExitCode {
    let data = learning_data();
    let mut trained = None;
    let mut all = true;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= ok;
        println!("criterion {n:>2} {:<24} {}  {detail}", name, if ok { "PASS" } else { "FAIL" });
    };
    report(1, "gradient suite", gradient_suite());
    report(2, "convlstm degeneracy", convlstm_degeneracy());
    report(3, "shape laws", shape_laws());
    report(4, "adjoint identity", adjoint_identity());
    report(5, "w1 oracle", w1_oracle());
    report(6, "critic w1 probe", critic_probe());
    report(7, "learning check", learning_check(&data, &mut trained));
    report(8, "voice change", voice_change(&data, &trained));
    report(9, "pipeline identities", pipeline_identities());
    report(10, "mcd unit values", mcd_units());
    report(11, "vocoder", vocoder_checks());
    report(12, "gan vanishing gradient", gan_vanishing_gradient());
    // Consistency between the trainer's epoch MCD and the evaluator.
    if let Some((cfg, params)) = &trained {
        if let Ok(r) = evaluate_mcd(params, cfg, &data, Split::Train, "tiny", 0) {
            println!("final training-set MCD via evaluator: {:.2} dB", r.mean_db);
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
