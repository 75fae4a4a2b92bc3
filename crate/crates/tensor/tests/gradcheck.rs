use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sed_tensor::gradcheck::check;
use sed_tensor::gradsuite::{op_suites, run, rng, STEP};
use sed_tensor::{BnMode, Graph, GruWeights, Tensor};

const SEEDS: u64 = 20;

fn run_named(prefix: &[&str]) {
    let suites = op_suites();
    let chosen: Vec<_> = suites.iter().filter(|s| prefix.contains(&s.name.as_str())).collect();
    assert_eq!(chosen.len(), prefix.len(), "unknown suite in {:?}", prefix);
    for s in chosen {
        let r = run(s, SEEDS).unwrap();
        assert!(r.passed(), "{} seed {}: rel err {:e} >= {:e}", r.name, r.worst_seed, r.worst, r.tol);
    }
}

#[test]
fn pointwise_binary_ops() {
    run_named(&["add", "sub", "mul", "div"]);
}

#[test]
fn pointwise_unary_ops() {
    run_named(&["relu", "sigmoid", "tanh", "scale", "add_scalar", "dropout"]);
}

#[test]
fn linear_and_convolution() {
    run_named(&["linear", "conv2d", "conv2d_rect"]);
}

#[test]
fn conv2d_reference_case() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let x = Tensor::randn(&[2, 3, 5, 7], &mut r);
        let w = Tensor::randn(&[4, 3, 3, 3], &mut r);
        let b = Tensor::randn(&[4], &mut r);
        let rep = check(|g, v| g.conv2d(v[0], v[1], Some(v[2]), 1), &[x, w, b], seed, STEP).unwrap();
        assert!(rep.max_rel_error() < 1e-6, "seed {}: {:?}", seed, rep.rel_errors);
    }
}

#[test]
fn normalization() {
    run_named(&["batch_norm2d", "batch_norm"]);
}

#[test]
fn softmax_and_reductions() {
    run_named(&["softmax", "sum_axis", "mean_axis", "sum_all", "mean_all", "avg_pool2d"]);
}

#[test]
fn shape_ops() {
    run_named(&["reshape", "permute", "concat", "narrow", "expand"]);
}

#[test]
fn temporal_and_frequency_ops() {
    run_named(&["time_diff", "freq_blend"]);
}

#[test]
fn gru_reference_case() {
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let inputs = vec![
            Tensor::randn(&[1, 3, 4], &mut r),
            Tensor::randn(&[15, 4], &mut r).map(|v| 0.5 * v),
            Tensor::randn(&[15, 5], &mut r).map(|v| 0.5 * v),
            Tensor::randn(&[15], &mut r).map(|v| 0.5 * v),
            Tensor::randn(&[15], &mut r).map(|v| 0.5 * v),
        ];
        for reverse in [false, true] {
            let build = move |g: &mut Graph, v: &[sed_tensor::Var]| {
                let w = GruWeights {
                    w_ih: v[1],
                    w_hh: v[2],
                    b_ih: v[3],
                    b_hh: v[4],
                };
                g.gru(v[0], w, reverse)
            };
            let rep = check(build, &inputs, seed, STEP).unwrap();
            assert!(rep.max_rel_error() < 1e-5, "seed {} reverse {}: {:?}", seed, reverse, rep.rel_errors);
        }
    }
    run_named(&["gru"]);
}

#[test]
fn losses_and_chain() {
    run_named(&["bce", "mse", "chain"]);
}

#[test]
fn every_suite_is_covered() {
    let covered = [
        "add", "sub", "mul", "div", "relu", "sigmoid", "tanh", "scale", "add_scalar", "dropout", "linear", "conv2d",
        "conv2d_rect", "batch_norm2d", "batch_norm", "softmax", "sum_axis", "mean_axis", "sum_all", "mean_all",
        "avg_pool2d", "reshape", "permute", "concat", "narrow", "expand", "time_diff", "freq_blend", "gru", "bce",
        "mse", "chain",
    ];
    for s in op_suites() {
        assert!(covered.contains(&s.name.as_str()), "suite {} has no test", s.name);
    }
}

proptest! {
    #[test]
    fn softmax_slices_sum_to_one(data in prop::collection::vec(-30.0f64..30.0, 12), axis in 0usize..3) {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 3, 2], data).unwrap());
        let y = g.softmax(x, axis).unwrap();
        let sums = g.sum_axis(y, axis).unwrap();
        prop_assert!(g.value(y).data().iter().all(|&v| v > 0.0));
        for &s in g.value(sums).data() {
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dilated_conv_touches_expected_offsets(d in 1usize..4, k in prop::sample::select(vec![1usize, 3, 5])) {
        let f = 2 * d * (k / 2) + 5;
        let centre = f / 2;
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_fn(&[1, 1, f, 3], |i| if i[2] == centre && i[3] == 1 { 1.0 } else { 0.0 }));
        let w = g.leaf(Tensor::full(&[1, 1, k, 1], 1.0));
        let y = g.conv2d(x, w, None, d).unwrap();
        let y = g.value(y);
        let half = (k / 2) as isize * d as isize;
        for row in 0..f {
            let off = row as isize - centre as isize;
            let expect = off.abs() <= half && off % d as isize == 0;
            prop_assert_eq!(y.get(&[0, 0, row, 1]) != 0.0, expect);
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let x = g.leaf(Tensor::randn(&[2, 2, 5, 4], &mut r));
            let w = g.leaf(Tensor::randn(&[3, 2, 3, 3], &mut r));
            let y = g.conv2d(x, w, None, 2).unwrap();
            let y = g.softmax(y, 3).unwrap();
            g.value(y).clone()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn finite_inputs_give_finite_outputs(data in prop::collection::vec(-1e3f64..1e3, 24)) {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![1, 2, 3, 4], data).unwrap());
        let s = g.sigmoid(x);
        let t = g.tanh(x);
        let m = g.softmax(x, 3).unwrap();
        let gamma = g.leaf(Tensor::full(&[2], 1.0));
        let beta = g.leaf(Tensor::zeros(&[2]));
        let (b, _) = g.batch_norm2d(x, gamma, beta, BnMode::Train, 1e-5).unwrap();
        for v in [s, t, m, b] {
            prop_assert!(g.value(v).is_finite());
        }
    }
}
