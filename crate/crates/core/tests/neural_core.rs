use blocksing::nn::{conv1d, conv1d_out_len, conv1d_transpose, conv1d_transpose_out_len, ConvSpec, Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, c: usize, t: usize) -> Tensor {
    Tensor::new(c, t, (0..c * t).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn shape_laws_over_a_grid() {
    for t in 1..40 {
        for k in [1, 3, 5, 7] {
            for s in 1..4 {
                for p in 0..=k / 2 {
                    let Some(t1) = conv1d_out_len(t, k, s, p) else {
                        assert!(t + 2 * p < k);
                        continue;
                    };
                    assert_eq!(t1, (t + 2 * p - k) / s + 1);
                    let spec = ConvSpec::new(2, 1, k, s, p);
                    let y = conv1d(&Tensor::zeros(1, t), &vec![0.0; 2 * k], &spec).unwrap();
                    assert_eq!(y.length(), t1);
                    let t2 = conv1d_transpose_out_len(t1, k, s, p, 0).unwrap();
                    assert_eq!(t2, (t1 - 1) * s + k - 2 * p);
                    let z = conv1d_transpose(&y, &vec![0.0; 2 * k], &spec, 0).unwrap();
                    assert_eq!(z.length(), t2);
                    // Forward conv of the transposed output restores its input length.
                    assert_eq!(conv1d_out_len(t2, k, s, p), Some(t1));
                }
            }
        }
    }
}

#[test]
fn transpose_is_the_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..100 {
        let cin = rng.gen_range(1..5);
        let cout = rng.gen_range(1..5);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let s = rng.gen_range(1..4);
        let p = rng.gen_range(0..=k / 2);
        let t = rng.gen_range(k..40);
        let spec = ConvSpec::new(cout, cin, k, s, p);
        let w: Vec<f64> = (0..spec.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = random(&mut rng, cin, t);
        let t1 = conv1d_out_len(t, k, s, p).unwrap();
        let y = random(&mut rng, cout, t1);
        let lhs = conv1d(&x, &w, &spec).unwrap().dot(&y);
        // Output padding recovers the tail samples the stride rounded away.
        let out_pad = t - conv1d_transpose_out_len(t1, k, s, p, 0).unwrap();
        let back = conv1d_transpose(&y, &w, &spec, out_pad).unwrap();
        assert_eq!(back.shape(), x.shape());
        let rhs = back.dot(&x);
        assert!((lhs - rhs).abs() < 1e-10, "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn transpose_matches_input_gradient_of_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (cin, cout, k, s, p) = (3, 2, 3, 2, 1);
        let t1 = rng.gen_range(2..12);
        let t = 2 * t1 - 1;
        let spec = ConvSpec::new(cout, cin, k, s, p);
        let w = random(&mut rng, cout, cin * k);
        let y = random(&mut rng, cout, t1);
        let mut g = Graph::new();
        let x = g.input_with_grad(random(&mut rng, cin, t));
        let wn = g.input(w.clone());
        let out = g.conv1d(x, wn, s, p).unwrap();
        let yn = g.input(y.clone());
        let prod = g.mul(out, yn).unwrap();
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        let via_tape = grads.get(x).unwrap();
        let direct = conv1d_transpose(&y, w.data(), &spec, 0).unwrap();
        for (a, b) in via_tape.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn transpose_then_conv_restores_length(t in 1usize..200, k in prop::sample::select(vec![1usize, 3, 5]), s in 1usize..4) {
        let p = k / 2;
        let up = conv1d_transpose_out_len(t, k, s, p, 0);
        if let Some(up) = up {
            prop_assert_eq!(conv1d_out_len(up, k, s, p), Some(t));
        }
    }
}
