//! Cross-checks against independent reference computations: dense linear
//! algebra from nalgebra, Monte Carlo integration and brute-force search.

use nalgebra::{DMatrix, DVector};
use offlang::baseline::{best_split, gini};
use offlang::eval::{prf_macro, ConfusionMatrix};
use offlang::hash::{fnv1a32, fnv1a64};
use offlang::hpo::{expected_improvement, GpSurrogate, JITTER};
use offlang::nn::{Conv1d, Lstm, Matrix};
use offlang::rng;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn gp_posterior_matches_dense_solve() {
    let xs = [0.05, 0.3, 0.45, 0.7, 0.95];
    let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
    let y: Vec<f64> = xs.iter().map(|&v| (v - 0.3f64).powi(2) + 0.1 * (7.0 * v).sin()).collect();
    let gp = GpSurrogate::fit(&x, &y).unwrap();

    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        gp.kernel(&x[i], &x[j]) + if i == j { JITTER * gp.prior_variance() } else { 0.0 }
    });
    let resid = DVector::from_iterator(n, y.iter().map(|v| v - gp.prior_mean()));
    let chol = k.cholesky().expect("kernel is SPD");
    let alpha = chol.solve(&resid);

    for q in [0.0, 0.12, 0.3, 0.5, 0.81, 1.0] {
        let kq = DVector::from_iterator(n, x.iter().map(|xi| gp.kernel(&[q], xi)));
        let mean = gp.prior_mean() + kq.dot(&alpha);
        let var = gp.prior_variance() - kq.dot(&chol.solve(&kq));
        let (m, v) = gp.posterior(&[q]);
        assert!((m - mean).abs() < 1e-8, "mean at {q}: {m} vs {mean}");
        assert!((v - var.max(0.0)).abs() < 1e-8, "variance at {q}: {v} vs {var}");
    }
}

#[test]
fn gp_interpolates_training_points() {
    let x = vec![vec![0.1, 0.2], vec![0.6, 0.9], vec![0.8, 0.3], vec![0.4, 0.5]];
    let y = vec![1.0, -0.5, 0.25, 2.0];
    let gp = GpSurrogate::fit(&x, &y).unwrap();
    for (xi, yi) in x.iter().zip(&y) {
        let (m, v) = gp.posterior(xi);
        assert!((m - yi).abs() < 1e-5);
        assert!(v < 1e-5 * gp.prior_variance().max(1.0));
    }
}

#[test]
fn expected_improvement_matches_monte_carlo() {
    let mut rng = rng::seeded(11);
    let samples: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    for &(mean, var, best) in &[(0.0, 1.0, 0.0), (0.3, 0.25, 0.1), (-0.2, 2.0, 0.5), (1.0, 0.04, 0.7)] {
        let sd: f64 = f64::sqrt(var);
        let mc = samples.iter().map(|z: &f64| (best - (mean + sd * z)).max(0.0)).sum::<f64>() / samples.len() as f64;
        let ei = expected_improvement(mean, var, best);
        assert!((ei - mc).abs() < 1e-3, "EI({mean}, {var}, {best}) = {ei}, Monte Carlo {mc}");
    }
    assert_eq!(expected_improvement(0.5, 0.0, 0.2), 0.0);
    assert!((expected_improvement(0.1, 0.0, 0.4) - 0.3).abs() < 1e-12);
}

/// Weighted Gini of every midpoint threshold, recomputed from scratch.
fn exhaustive_split(samples: &[(f64, usize, u32)], k: usize) -> Option<(f64, f64)> {
    let mut values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut best: Option<(f64, f64)> = None;
    for w in values.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let mut left = vec![0u32; k];
        let mut right = vec![0u32; k];
        for &(v, c, m) in samples {
            if v <= t {
                left[c] += m;
            } else {
                right[c] += m;
            }
        }
        let impurity_of = |counts: &[u32]| {
            let n: u32 = counts.iter().sum();
            let n = f64::from(n);
            n * (1.0 - counts.iter().map(|&c| (f64::from(c) / n).powi(2)).sum::<f64>())
        };
        let total: u32 = samples.iter().map(|s| s.2).sum();
        let imp = (impurity_of(&left) + impurity_of(&right)) / f64::from(total);
        if best.is_none_or(|(_, b)| imp < b - 1e-15) {
            best = Some((t, imp));
        }
    }
    best
}

#[test]
fn best_split_matches_exhaustive_search() {
    let six = [(0.0, 0, 1), (1.0, 0, 1), (2.0, 1, 1), (2.0, 0, 1), (3.0, 1, 1), (5.0, 1, 1)];
    let s = best_split(&six, 2).unwrap();
    let (t, imp) = exhaustive_split(&six, 2).unwrap();
    assert_eq!(s.threshold, t);
    assert!((s.impurity - imp).abs() < 1e-12);
    assert_eq!(t, 1.5);

    let mut rng = rng::seeded(5);
    for _ in 0..500 {
        let n = rng.random_range(2..12);
        let k = rng.random_range(2..4);
        let samples: Vec<(f64, usize, u32)> = (0..n)
            .map(|_| (f64::from(rng.random_range(0..5u32)), rng.random_range(0..k), rng.random_range(1..4u32)))
            .collect();
        match (best_split(&samples, k), exhaustive_split(&samples, k)) {
            (Some(s), Some((t, imp))) => {
                assert!((s.impurity - imp).abs() < 1e-12);
                assert_eq!(s.threshold, t);
            }
            (None, None) => {}
            other => panic!("disagreement on {samples:?}: {other:?}"),
        }
    }
}

#[test]
fn gini_hand_values() {
    assert!((gini(&[1, 1, 1]) - 2.0 / 3.0).abs() < 1e-15);
    assert!((gini(&[2, 4]) - 4.0 / 9.0).abs() < 1e-15);
    assert!((gini(&[3, 1, 2]) - 11.0 / 18.0).abs() < 1e-15);
    assert_eq!(gini(&[7, 0]), 0.0);
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn lstm_matches_matrix_reference() {
    let mut r = rng::seeded(21);
    let (input, hidden, steps) = (3, 4, 5);
    let mut lstm = Lstm::init(input, hidden, &mut r);
    for v in &mut lstm.bias.value.data {
        *v += r.random_range(-0.5..0.5);
    }
    let seq = Matrix::uniform(steps, input, 1.0, &mut r);
    let wx = DMatrix::from_row_slice(4 * hidden, input, &lstm.w_input.value.data);
    let wh = DMatrix::from_row_slice(4 * hidden, hidden, &lstm.w_recurrent.value.data);
    let b = DVector::from_column_slice(&lstm.bias.value.data);

    for reverse in [false, true] {
        let (out, _) = lstm.forward_seq(&seq, reverse).unwrap();
        let mut h = DVector::zeros(hidden);
        let mut c = DVector::zeros(hidden);
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let x = DVector::from_column_slice(seq.row(t));
            let z = &wx * x + &wh * &h + &b;
            let i = z.rows(0, hidden).map(sigmoid);
            let f = z.rows(hidden, hidden).map(sigmoid);
            let o = z.rows(2 * hidden, hidden).map(sigmoid);
            let g = z.rows(3 * hidden, hidden).map(f64::tanh);
            c = f.component_mul(&c) + i.component_mul(&g);
            h = o.component_mul(&c.map(f64::tanh));
            for k in 0..hidden {
                assert!((out.get(t, k) - h[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv_matches_naive_loops() {
    let mut r = rng::seeded(8);
    let (width, channels, filters, steps) = (2, 3, 4, 6);
    let conv = Conv1d::init(width, channels, filters, &mut r);
    let seq = Matrix::uniform(steps, channels, 1.0, &mut r);
    let (out, _) = conv.forward(&seq).unwrap();
    assert_eq!((out.rows, out.cols), (steps - width + 1, filters));
    for t in 0..out.rows {
        for f in 0..filters {
            let mut s = conv.bias.value.data[f];
            for dt in 0..width {
                for ch in 0..channels {
                    s += conv.kernel.value.get(f, dt * channels + ch) * seq.get(t + dt, ch);
                }
            }
            assert!((out.get(t, f) - s.max(0.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn fnv_reference_vectors() {
    assert_eq!(fnv1a32(b""), 0x811c_9dc5);
    assert_eq!(fnv1a32(b"a"), 0xe40c_292c);
    assert_eq!(fnv1a32(b"foobar"), 0xbf9c_f968);
    assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
    assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
}

#[test]
fn per_class_f1_from_hand_counts() {
    // true OFF, OFF, NOT, NOT predicted OFF, NOT, OFF, NOT (OFF = 1).
    let m = ConfusionMatrix { k: 2, counts: vec![vec![1, 1], vec![1, 1]] };
    let r = prf_macro(&m);
    for c in &r.per_class {
        assert_eq!((c.precision, c.recall, c.f1), (0.5, 0.5, 0.5));
    }
    let skew = ConfusionMatrix { k: 2, counts: vec![vec![5, 1], vec![2, 2]] };
    let r = prf_macro(&skew);
    assert!((r.per_class[1].precision - 2.0 / 3.0).abs() < 1e-15);
    assert!((r.per_class[1].recall - 0.5).abs() < 1e-15);
    assert!((r.per_class[1].f1 - 4.0 / 7.0).abs() < 1e-15);
    assert!((r.per_class[0].f1 - 10.0 / 13.0).abs() < 1e-15);
    assert!((r.macro_f1 - 0.5 * (4.0 / 7.0 + 10.0 / 13.0)).abs() < 1e-15);
}
