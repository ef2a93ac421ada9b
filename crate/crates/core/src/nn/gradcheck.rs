//! Central finite-difference checks for every differentiable operation.

use rand::Rng as _;

use super::activation::{sigmoid, sigmoid_backward, softmax, softmax_backward, tanh, tanh_backward};
use super::loss::{bce, categorical_ce, soft_f1};
use super::pool::{global_avg_pool, global_avg_pool_backward, global_max_pool, global_max_pool_backward};
use super::tensor::{dot, Matrix, Param};
use super::{BiLstm, Conv1d, Dense, Lstm, Parameterized};
use crate::corpus::EncodedExample;
use crate::embeddings::{pair_gradients, pair_loss, FastTextModel, NgramConfig};
use crate::model::{self, LossKind, ModelArch, ModelParams};
use crate::rng::{self, Rng};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Largest relative error counted as a pass.
pub const TOLERANCE: f64 = 1e-4;

pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both norms
/// are below `1e-8`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = dot(a, a).sqrt().max(dot(b, b).sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub seed: u64,
    pub rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.rel_error <= TOLERANCE
    }
}

fn random_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, rng)
}

fn randomize<L: Parameterized>(layer: &mut L, rng: &mut Rng) {
    for p in layer.params_mut() {
        p.value = Matrix::uniform(p.value.rows, p.value.cols, 0.5, rng);
    }
}

fn unpack(params: Vec<&mut Param>, mut flat: &[f64]) {
    for p in params {
        let n = p.len();
        p.value.data.copy_from_slice(&flat[..n]);
        flat = &flat[n..];
    }
}

/// Compare the analytic gradient with respect to `input` and every parameter
/// of `layer` against finite differences of `objective`.
fn check_parameterized<L: Parameterized + Clone>(
    layer: &L,
    input: &[f64],
    objective: impl Fn(&L, &[f64]) -> f64,
    analytic: impl FnOnce(&mut L, &[f64]) -> Vec<f64>,
) -> f64 {
    let mut work = layer.clone();
    work.zero_grad();
    let mut a = analytic(&mut work, input);
    let mut x0 = input.to_vec();
    for p in work.params() {
        a.extend_from_slice(&p.grad.data);
    }
    for p in layer.params() {
        x0.extend_from_slice(&p.value.data);
    }
    let split = input.len();
    let n = numeric_gradient(
        |x| {
            let mut probe = layer.clone();
            unpack(probe.params_mut(), &x[split..]);
            objective(&probe, &x[..split])
        },
        &x0,
        STEP,
    );
    relative_error(&a, &n)
}

fn as_matrix(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, data.to_vec()).expect("shape")
}

fn check_dense(rng: &mut Rng) -> f64 {
    let mut layer = Dense::zeros(3, 5);
    randomize(&mut layer, rng);
    let x = random_vec(3, 1.0, rng);
    let r = random_vec(5, 1.0, rng);
    check_parameterized(&layer, &x, |l, x| dot(&l.forward(x).expect("shape"), &r), |l, x| l.backward(x, &r))
}

fn check_activations(rng: &mut Rng) -> f64 {
    let x = random_vec(6, 2.0, rng);
    let r = random_vec(6, 1.0, rng);
    type Act = (fn(&[f64]) -> Vec<f64>, fn(&[f64], &[f64]) -> Vec<f64>);
    let acts: [Act; 3] = [(sigmoid, sigmoid_backward), (tanh, tanh_backward), (softmax, softmax_backward)];
    acts.iter()
        .map(|(f, b)| {
            let a = b(&f(&x), &r);
            let n = numeric_gradient(|x| dot(&f(x), &r), &x, STEP);
            relative_error(&a, &n)
        })
        .fold(0.0, f64::max)
}

fn check_lstm_step(rng: &mut Rng) -> f64 {
    let (input, hidden) = (3, 2);
    let mut layer = Lstm::zeros(input, hidden);
    randomize(&mut layer, rng);
    let x = random_vec(input + 2 * hidden, 1.0, rng);
    let rh = random_vec(hidden, 1.0, rng);
    let rc = random_vec(hidden, 1.0, rng);
    let split = |v: &[f64]| (v[..input].to_vec(), v[input..input + hidden].to_vec(), v[input + hidden..].to_vec());
    check_parameterized(
        &layer,
        &x,
        |l, v| {
            let (x, h, c) = split(v);
            let (h2, c2, _) = l.step(&x, &h, &c).expect("shape");
            dot(&h2, &rh) + dot(&c2, &rc)
        },
        |l, v| {
            let (x, h, c) = split(v);
            let (_, _, cache) = l.step(&x, &h, &c).expect("shape");
            let (dx, dh, dc) = l.step_backward(&x, &cache, &rh, &rc);
            [dx, dh, dc].concat()
        },
    )
}

fn check_bptt(rng: &mut Rng, reverse: bool) -> f64 {
    let (t, input, hidden) = (4, 3, 2);
    let mut layer = Lstm::zeros(input, hidden);
    randomize(&mut layer, rng);
    let seq = random_vec(t * input, 1.0, rng);
    let r = random_matrix(t, hidden, rng);
    check_parameterized(
        &layer,
        &seq,
        |l, s| dot(&l.forward_seq(&as_matrix(t, input, s), reverse).expect("shape").0.data, &r.data),
        |l, s| {
            let s = as_matrix(t, input, s);
            let (_, cache) = l.forward_seq(&s, reverse).expect("shape");
            l.backward_seq(&s, &cache, &r).data
        },
    )
}

fn check_bilstm(rng: &mut Rng) -> f64 {
    let (t, input, hidden) = (4, 3, 2);
    let mut layer = BiLstm::zeros(input, hidden);
    randomize(&mut layer, rng);
    let seq = random_vec(t * input, 1.0, rng);
    let r = random_matrix(t, 2 * hidden, rng);
    check_parameterized(
        &layer,
        &seq,
        |l, s| dot(&l.forward(&as_matrix(t, input, s)).expect("shape").0.data, &r.data),
        |l, s| {
            let s = as_matrix(t, input, s);
            let (_, cache) = l.forward(&s).expect("shape");
            l.backward(&s, &cache, &r).data
        },
    )
}

fn check_conv(rng: &mut Rng) -> f64 {
    let (t, c, k, f) = (6, 3, 2, 2);
    let mut layer = Conv1d::zeros(k, c, f);
    randomize(&mut layer, rng);
    let seq = random_vec(t * c, 1.0, rng);
    let r = random_matrix(t - k + 1, f, rng);
    check_parameterized(
        &layer,
        &seq,
        |l, s| dot(&l.forward(&as_matrix(t, c, s)).expect("shape").0.data, &r.data),
        |l, s| {
            let s = as_matrix(t, c, s);
            let (_, cache) = l.forward(&s).expect("shape");
            l.backward(&s, &cache, &r).data
        },
    )
}

fn check_pooling(rng: &mut Rng) -> f64 {
    let (t, c) = (5, 4);
    let x = random_vec(t * c, 1.0, rng);
    let r = random_vec(c, 1.0, rng);
    let (_, argmax) = global_max_pool(&as_matrix(t, c, &x));
    let a = global_max_pool_backward(t, &argmax, &r).data;
    let n = numeric_gradient(|x| dot(&global_max_pool(&as_matrix(t, c, x)).0, &r), &x, STEP);
    let max_err = relative_error(&a, &n);
    let a = global_avg_pool_backward(t, &r).data;
    let n = numeric_gradient(|x| dot(&global_avg_pool(&as_matrix(t, c, x)), &r), &x, STEP);
    max_err.max(relative_error(&a, &n))
}

fn random_probs(n: usize, k: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(n, k);
    for i in 0..n {
        m.row_mut(i).copy_from_slice(&softmax(&random_vec(k, 1.5, rng)));
    }
    m
}

fn random_onehot(n: usize, k: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(n, k);
    for i in 0..n {
        m.set(i, rng.random_range(0..k), 1.0);
    }
    m
}

fn check_bce(rng: &mut Rng) -> f64 {
    let p: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.95)).collect();
    let y: Vec<f64> = (0..6).map(|_| f64::from(rng.random_range(0..2u8))).collect();
    let w = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    [None, Some(&w[..])]
        .iter()
        .map(|cw| {
            let a = bce(&p, &y, *cw).expect("shape").1;
            let n = numeric_gradient(|p| bce(p, &y, *cw).expect("shape").0, &p, STEP);
            relative_error(&a, &n)
        })
        .fold(0.0, f64::max)
}

fn check_categorical(rng: &mut Rng) -> f64 {
    let (n, k) = (6, 3);
    let probs = random_probs(n, k, rng);
    let y = random_onehot(n, k, rng);
    let w = random_vec(k, 1.0, rng).iter().map(|v| v + 1.5).collect::<Vec<_>>();
    [None, Some(&w[..])]
        .iter()
        .map(|cw| {
            let a = categorical_ce(&probs, &y, *cw).expect("shape").1.data;
            let num = numeric_gradient(|p| categorical_ce(&as_matrix(n, k, p), &y, *cw).expect("shape").0, &probs.data, STEP);
            relative_error(&a, &num)
        })
        .fold(0.0, f64::max)
}

fn check_soft_f1(rng: &mut Rng) -> f64 {
    let (n, k) = (6, 3);
    let probs = random_probs(n, k, rng);
    let y = random_onehot(n, k, rng);
    let a = soft_f1(&probs, &y).expect("shape").1.data;
    let num = numeric_gradient(|p| soft_f1(&as_matrix(n, k, p), &y).expect("shape").0, &probs.data, STEP);
    relative_error(&a, &num)
}

fn check_cbow_pair(rng: &mut Rng) -> f64 {
    let corpus = vec![vec!["offensive", "tweet", "user"], vec!["tweet", "about", "it"]];
    let ngrams = NgramConfig { n_min: 3, n_max: 4, buckets: 64 };
    let mut model = FastTextModel::init(&corpus, ngrams, 5, rng).expect("toy corpus");
    model.word_output = Matrix::uniform(model.word_output.rows, 5, 0.5, rng);
    let v = model.vocab_size();
    let context: Vec<usize> = (0..3).map(|_| rng.random_range(0..v)).collect();
    let target = rng.random_range(0..v);
    let negatives: Vec<usize> = (0..3).map(|_| rng.random_range(0..v)).collect();

    let g = pair_gradients(&model, &context, target, &negatives);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (&row, grad) in &g.input {
        analytic.extend_from_slice(grad);
        let x0 = model.row(row).to_vec();
        numeric.extend(numeric_gradient(
            |x| {
                let mut m = model.clone();
                m.row_mut(row).copy_from_slice(x);
                pair_loss(&m, &context, target, &negatives)
            },
            &x0,
            STEP,
        ));
    }
    for (&word, grad) in &g.output {
        analytic.extend_from_slice(grad);
        let x0 = model.word_output.row(word).to_vec();
        numeric.extend(numeric_gradient(
            |x| {
                let mut m = model.clone();
                m.word_output.row_mut(word).copy_from_slice(x);
                pair_loss(&m, &context, target, &negatives)
            },
            &x0,
            STEP,
        ));
    }
    let loss_err = (g.loss - pair_loss(&model, &context, target, &negatives)).abs();
    relative_error(&analytic, &numeric).max(loss_err)
}

fn tiny_arch(output_units: usize, use_user_count: bool) -> ModelArch {
    ModelArch {
        seq_len: 5,
        vocab_size: 8,
        embed_dim: 3,
        lstm_hidden: 2,
        conv_width: 2,
        conv_filters: 3,
        ffnn_hidden: 3,
        output_units,
        use_user_count,
    }
}

fn model_objective(params: &ModelParams, arch: &ModelArch, batch: &[EncodedExample], kind: LossKind, w: &[f64], seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let caches: Vec<_> = batch
        .iter()
        .map(|ex| model::forward(params, arch, ex, 0.3, true, &mut rng).expect("shape"))
        .collect();
    let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
    model::loss_and_logit_grads(&caches, &labels, kind, Some(w)).expect("batch").0
}

/// The assembled network end to end, dropout mask held fixed.
fn check_model(rng: &mut Rng, output_units: usize, kind: LossKind) -> f64 {
    let arch = tiny_arch(output_units, output_units == 1);
    let k = output_units.max(2);
    let emb = Matrix::uniform(arch.vocab_size, arch.embed_dim, 1.0, rng);
    let mut params = model::build(&arch, emb, rng.random()).expect("tiny arch");
    randomize(&mut params, rng);
    let batch: Vec<EncodedExample> = (0..4)
        .map(|_| EncodedExample {
            indices: (0..arch.seq_len).map(|_| rng.random_range(0..arch.vocab_size)).collect(),
            user_count: rng.random_range(0..4),
            label: rng.random_range(0..k),
        })
        .collect();
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let mask_seed: u64 = rng.random();
    check_parameterized(
        &params,
        &[],
        |p, _| model_objective(p, &arch, &batch, kind, &w, mask_seed),
        |p, _| {
            let refs: Vec<&EncodedExample> = batch.iter().collect();
            let mut r = rng::seeded(mask_seed);
            model::accumulate_batch(p, &arch, &refs, kind, Some(&w), 0.3, &mut r).expect("batch");
            Vec::new()
        },
    )
}

/// Run every check once for `seed`.
pub fn check_seed(seed: u64) -> Vec<CheckResult> {
    type Check = fn(&mut Rng) -> f64;
    let checks: [(&'static str, Check); 19] = [
        ("dense", check_dense),
        ("activations", check_activations),
        ("lstm_step", check_lstm_step),
        ("lstm_bptt", |r| check_bptt(r, false)),
        ("lstm_bptt_reverse", |r| check_bptt(r, true)),
        ("bilstm", check_bilstm),
        ("conv1d", check_conv),
        ("pooling", check_pooling),
        ("bce", check_bce),
        ("categorical_ce", check_categorical),
        ("soft_f1", check_soft_f1),
        ("cbow_negative_sampling", check_cbow_pair),
        ("model_binary_ce", |r| check_model(r, 1, LossKind::CrossEntropy)),
        ("model_binary_weighted_ce", |r| check_model(r, 1, LossKind::WeightedCrossEntropy)),
        ("model_binary_soft_f1", |r| check_model(r, 1, LossKind::SoftF1)),
        ("model_3class_ce", |r| check_model(r, 3, LossKind::CrossEntropy)),
        ("model_3class_weighted_ce", |r| check_model(r, 3, LossKind::WeightedCrossEntropy)),
        ("model_3class_soft_f1", |r| check_model(r, 3, LossKind::SoftF1)),
        ("embedding_lookup", check_embedding_only),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let mut r = rng::seeded(rng::derive_seed(seed, i as u64));
            CheckResult { name, seed, rel_error: f(&mut r) }
        })
        .collect()
}

/// Gradient reaching only the embedding table, with every other tensor fixed.
fn check_embedding_only(rng: &mut Rng) -> f64 {
    let arch = tiny_arch(1, false);
    let emb = Matrix::uniform(arch.vocab_size, arch.embed_dim, 1.0, rng);
    let params = model::build(&arch, emb, rng.random()).expect("tiny arch");
    let ex = EncodedExample { indices: vec![0, 3, 3, 5, 1], user_count: 0, label: 1 };
    let mut work = params.clone();
    work.zero_grad();
    let mut r = rng::seeded(0);
    model::accumulate_batch(&mut work, &arch, &[&ex], LossKind::CrossEntropy, None, 0.0, &mut r).expect("batch");
    let objective = |e: &[f64]| {
        let mut p = params.clone();
        p.embedding.value.data.copy_from_slice(e);
        let mut r = rng::seeded(0);
        let c = model::forward(&p, &arch, &ex, 0.0, false, &mut r).expect("shape");
        model::loss_and_logit_grads(&[c], &[1], LossKind::CrossEntropy, None).expect("batch").0
    };
    let n = numeric_gradient(objective, &params.embedding.value.data, STEP);
    relative_error(&work.embedding.grad.data, &n)
}

/// Run every check over `seeds`.
pub fn check_all(seeds: impl IntoIterator<Item = u64>) -> Vec<CheckResult> {
    seeds.into_iter().flat_map(check_seed).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0], &[2.0]) - 0.5).abs() < 1e-15);
        assert!(relative_error(&[0.0], &[1e-12]) < 1e-11);
    }

    #[test]
    fn numeric_gradient_of_quadratic() {
        let g = numeric_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], STEP);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn every_check_passes_for_a_few_seeds() {
        for r in check_all(0..3) {
            assert!(r.passed(), "{} seed {}: {:e}", r.name, r.seed, r.rel_error);
        }
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let a = [1.0, 2.0, 3.0];
        let n = numeric_gradient(|x| x.iter().map(|v| v * v).sum(), &a, STEP);
        let bad: Vec<f64> = a.iter().map(|v| v * 2.0 * 1.01).collect();
        assert!(relative_error(&bad, &n) > TOLERANCE);
    }
}
