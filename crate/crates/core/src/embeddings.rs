//! Subword-aware word embeddings trained with CBOW and negative sampling,
//! and a loader for GloVe-style text vectors.
//!
//! A word is represented by its own input vector plus the vectors of the
//! hashed character n-grams of `<word>`. The CBOW hidden layer is the mean
//! of the context words' representations; it is scored against the centre
//! word's output vector and `negatives` noise words drawn from the unigram
//! distribution raised to 0.75.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, PAD_INDEX, UNK_INDEX};
use crate::error::{Error, Result};
use crate::hash::fnv1a32;
use crate::nn::activation::sigmoid_scalar;
use crate::nn::tensor::{axpy, dot, Matrix};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub buckets: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig { n_min: 3, n_max: 6, buckets: 100_000 }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "n-gram range [{}, {}] is invalid",
                self.n_min, self.n_max
            )));
        }
        if self.buckets == 0 {
            return Err(Error::InvalidArgument("bucket count must be positive".into()));
        }
        Ok(())
    }
}

/// Bucket ids of the character n-grams of `<word>`, `n_min ≤ n ≤ n_max`,
/// hashed with FNV-1a over their UTF-8 bytes. When `<word>` itself is short
/// enough it appears as one of the n-grams.
pub fn extract_ngrams(word: &str, cfg: &NgramConfig) -> Vec<usize> {
    let wrapped: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
    let len = wrapped.len();
    let mut out = Vec::new();
    let mut buf = String::new();
    for n in cfg.n_min..=cfg.n_max.min(len) {
        for start in 0..=len - n {
            buf.clear();
            buf.extend(&wrapped[start..start + n]);
            out.push(fnv1a32(buf.as_bytes()) as usize % cfg.buckets);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbowTrainParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for CbowTrainParams {
    fn default() -> Self {
        CbowTrainParams {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            subsample: 1e-4,
            seed: 0,
        }
    }
}

/// Rows of the input embedding tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InputRow {
    Word(usize),
    Bucket(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FastTextModel {
    pub ngrams: NgramConfig,
    pub dim: usize,
    pub words: Vec<String>,
    pub word_index: HashMap<String, usize>,
    pub counts: Vec<u64>,
    /// `V_w × d`
    pub word_input: Matrix,
    /// `B × d`
    pub bucket_input: Matrix,
    /// `V_w × d`
    pub word_output: Matrix,
    word_ngrams: Vec<Vec<usize>>,
}

impl FastTextModel {
    /// Vocabulary (first-occurrence order) with counts, inputs uniform in
    /// `[-1/d, 1/d]`, outputs zero.
    pub fn init<S: AsRef<str>>(token_lists: &[Vec<S>], ngrams: NgramConfig, dim: usize, rng: &mut Rng) -> Result<Self> {
        ngrams.validate()?;
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut words = Vec::new();
        let mut word_index = HashMap::new();
        let mut counts: Vec<u64> = Vec::new();
        for tok in token_lists.iter().flatten() {
            let tok = tok.as_ref();
            let i = *word_index.entry(tok.to_string()).or_insert_with(|| {
                words.push(tok.to_string());
                counts.push(0);
                words.len() - 1
            });
            counts[i] += 1;
        }
        if words.is_empty() {
            return Err(Error::Empty("embedding corpus has no tokens".into()));
        }
        let s = 1.0 / dim as f64;
        let word_input = Matrix::uniform(words.len(), dim, s, rng);
        let bucket_input = Matrix::uniform(ngrams.buckets, dim, s, rng);
        let word_output = Matrix::zeros(words.len(), dim);
        let word_ngrams = words.iter().map(|w| extract_ngrams(w, &ngrams)).collect();
        Ok(FastTextModel { ngrams, dim, words, word_index, counts, word_input, bucket_input, word_output, word_ngrams })
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    /// Input rows composing an in-vocabulary word.
    pub fn word_rows(&self, word: usize) -> Vec<InputRow> {
        std::iter::once(InputRow::Word(word))
            .chain(self.word_ngrams[word].iter().map(|&b| InputRow::Bucket(b)))
            .collect()
    }

    pub fn row(&self, r: InputRow) -> &[f64] {
        match r {
            InputRow::Word(i) => self.word_input.row(i),
            InputRow::Bucket(b) => self.bucket_input.row(b),
        }
    }

    pub fn row_mut(&mut self, r: InputRow) -> &mut [f64] {
        match r {
            InputRow::Word(i) => self.word_input.row_mut(i),
            InputRow::Bucket(b) => self.bucket_input.row_mut(b),
        }
    }

    /// Mean of the word's own vector (if known) and its n-gram vectors.
    pub fn word_vector(&self, word: &str) -> Result<Vec<f64>> {
        let rows: Vec<InputRow> = match self.word_index.get(word) {
            Some(&i) => self.word_rows(i),
            None => extract_ngrams(word, &self.ngrams).into_iter().map(InputRow::Bucket).collect(),
        };
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("`{word}` is out of vocabulary and has no n-grams")));
        }
        let mut v = vec![0.0; self.dim];
        for r in &rows {
            axpy(1.0, self.row(*r), &mut v);
        }
        let inv = 1.0 / rows.len() as f64;
        v.iter_mut().for_each(|x| *x *= inv);
        Ok(v)
    }

    /// Text format: header `V_w B d`, one `token v1 … vd` line per word, then
    /// `B` bucket lines `v1 … vd`. Output vectors and counts are not stored.
    pub fn save_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.vocab_size(), self.ngrams.buckets, self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in self.word_input.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        for b in 0..self.ngrams.buckets {
            let row = self.bucket_input.row(b);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    write!(w, " ")?;
                }
                write!(w, "{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Read a model written by [`FastTextModel::save_text`]. `n_min`/`n_max`
    /// come from `ngrams`; the bucket count comes from the file.
    pub fn load_text<R: BufRead>(reader: R, ngrams: NgramConfig) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })??;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Parse { line: 1, msg: format!("bad header field `{s}`") }))
            .collect::<Result<_>>()?;
        let [v_w, buckets, dim] = nums[..] else {
            return Err(Error::Parse { line: 1, msg: "header must be `V_w B d`".into() });
        };
        let ngrams = NgramConfig { buckets, ..ngrams };
        ngrams.validate()?;

        let mut words = Vec::with_capacity(v_w);
        let mut word_input = Matrix::zeros(v_w, dim);
        let mut bucket_input = Matrix::zeros(buckets, dim);
        for i in 0..v_w + buckets {
            let line_no = i + 2;
            let line = lines.next().ok_or(Error::Parse { line: line_no, msg: "unexpected end of file".into() })??;
            let mut fields = line.split(' ');
            let target = if i < v_w {
                words.push(fields.next().unwrap_or_default().to_string());
                word_input.row_mut(i)
            } else {
                bucket_input.row_mut(i - v_w)
            };
            let values = parse_floats(fields, line_no)?;
            if values.len() != dim {
                return Err(Error::Parse { line: line_no, msg: format!("expected {dim} values, found {}", values.len()) });
            }
            target.copy_from_slice(&values);
        }
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let word_ngrams = words.iter().map(|w| extract_ngrams(w, &ngrams)).collect();
        Ok(FastTextModel {
            ngrams,
            dim,
            counts: vec![0; v_w],
            word_output: Matrix::zeros(v_w, dim),
            words,
            word_index,
            word_input,
            bucket_input,
            word_ngrams,
        })
    }
}

fn parse_floats<'a>(fields: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<f64>> {
    fields
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("non-numeric component `{s}`") }))
        .collect()
}

/// Gradients of one CBOW negative-sampling pair.
#[derive(Clone, Debug, Default)]
pub struct PairGradients {
    pub loss: f64,
    pub input: BTreeMap<InputRow, Vec<f64>>,
    pub output: BTreeMap<usize, Vec<f64>>,
}

/// Input rows of a context with their weight in the hidden mean.
fn context_weights(model: &FastTextModel, context: &[usize]) -> Vec<(InputRow, f64)> {
    let mut out = Vec::new();
    let per_word = 1.0 / context.len() as f64;
    for &c in context {
        let rows = model.word_rows(c);
        let w = per_word / rows.len() as f64;
        out.extend(rows.into_iter().map(|r| (r, w)));
    }
    out
}

fn hidden(model: &FastTextModel, weights: &[(InputRow, f64)]) -> Vec<f64> {
    let mut h = vec![0.0; model.dim];
    for &(r, w) in weights {
        axpy(w, model.row(r), &mut h);
    }
    h
}

/// `−ln σ(u_t·h) − Σ_n ln σ(−u_n·h)` for one context/target pair.
pub fn pair_loss(model: &FastTextModel, context: &[usize], target: usize, negatives: &[usize]) -> f64 {
    let h = hidden(model, &context_weights(model, context));
    let mut loss = -sigmoid_scalar(dot(model.word_output.row(target), &h)).ln();
    for &n in negatives {
        loss -= sigmoid_scalar(-dot(model.word_output.row(n), &h)).ln();
    }
    loss
}

/// Loss and gradient of [`pair_loss`] with respect to every touched row.
pub fn pair_gradients(model: &FastTextModel, context: &[usize], target: usize, negatives: &[usize]) -> PairGradients {
    let weights = context_weights(model, context);
    let h = hidden(model, &weights);
    let mut g = PairGradients::default();
    let mut d_hidden = vec![0.0; model.dim];
    let labelled = std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (word, label) in labelled {
        let u = model.word_output.row(word);
        let score = sigmoid_scalar(dot(u, &h));
        g.loss -= if label == 1.0 { score.ln() } else { (1.0 - score).ln() };
        let coeff = score - label;
        axpy(coeff, u, &mut d_hidden);
        let out = g.output.entry(word).or_insert_with(|| vec![0.0; model.dim]);
        axpy(coeff, &h, out);
    }
    for (r, w) in weights {
        let e = g.input.entry(r).or_insert_with(|| vec![0.0; model.dim]);
        axpy(w, &d_hidden, e);
    }
    g
}

fn apply(model: &mut FastTextModel, g: &PairGradients, lr: f64) {
    for (&word, grad) in &g.output {
        axpy(-lr, grad, model.word_output.row_mut(word));
    }
    for (&row, grad) in &g.input {
        axpy(-lr, grad, model.row_mut(row));
    }
}

/// Cumulative unigram^0.75 distribution for negative sampling.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Train a CBOW model with hashed character n-grams. Single-threaded and
/// bit-reproducible for a fixed seed.
pub fn train_cbow<S: AsRef<str>>(token_lists: &[Vec<S>], ngrams: NgramConfig, params: &CbowTrainParams) -> Result<FastTextModel> {
    if params.window == 0 || params.negatives == 0 {
        return Err(Error::InvalidArgument("window and negatives must be at least 1".into()));
    }
    let mut rng = rng::seeded(params.seed);
    let mut model = FastTextModel::init(token_lists, ngrams, params.dim, &mut rng)?;
    let docs: Vec<Vec<usize>> = token_lists
        .iter()
        .map(|d| d.iter().map(|t| model.word_index[t.as_ref()]).collect())
        .collect();
    let total_tokens: u64 = model.counts.iter().sum();
    let noise = NoiseTable::new(&model.counts);
    let keep_prob: Vec<f64> = model
        .counts
        .iter()
        .map(|&c| {
            if params.subsample <= 0.0 {
                return 1.0;
            }
            let f = c as f64 / total_tokens as f64;
            let r = params.subsample / f;
            (r.sqrt() + r).min(1.0)
        })
        .collect();
    let vocab = model.vocab_size();
    let budget = (params.epochs as u64 * total_tokens).max(1) as f64;
    let mut seen: u64 = 0;

    for _ in 0..params.epochs {
        for doc in &docs {
            let progress = seen as f64 / budget;
            let lr = params.learning_rate * (1.0 - progress).max(0.0);
            seen += doc.len() as u64;

            let kept: Vec<usize> = doc.iter().copied().filter(|&w| rng.random::<f64>() < keep_prob[w]).collect();
            for pos in 0..kept.len() {
                let reach = rng.random_range(1..=params.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                let context: Vec<usize> = (lo..=hi).filter(|&j| j != pos).map(|j| kept[j]).collect();
                if context.is_empty() {
                    continue;
                }
                let target = kept[pos];
                let mut negs = Vec::with_capacity(params.negatives);
                if vocab > 1 {
                    while negs.len() < params.negatives {
                        let n = noise.sample(&mut rng);
                        if n != target {
                            negs.push(n);
                        }
                    }
                }
                let g = pair_gradients(&model, &context, target, &negs);
                apply(&mut model, &g, lr);
            }
        }
    }
    Ok(model)
}

/// Vectors read from a `token v1 … vd` text file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TextEmbeddings {
    pub dim: Option<usize>,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl TextEmbeddings {
    pub fn dim(&self) -> Result<usize> {
        self.dim.ok_or_else(|| Error::Empty("embedding file has no vectors".into()))
    }
}

/// Parse GloVe-style text embeddings; the dimension is fixed by the first line.
pub fn load_text_embeddings<R: BufRead>(reader: R) -> Result<TextEmbeddings> {
    let mut out = TextEmbeddings::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let mut fields = line.split(' ');
        let token = match fields.next() {
            Some(t) if !t.is_empty() => t.to_string(),
            _ => continue,
        };
        let values = parse_floats(fields, line_no)?;
        match out.dim {
            None => out.dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse { line: line_no, msg: format!("expected {d} values, found {}", values.len()) })
            }
            _ => {}
        }
        out.vectors.insert(token, values);
    }
    Ok(out)
}

/// Where the initial embedding matrix comes from.
pub enum EmbeddingSource<'a> {
    FastText(&'a FastTextModel),
    Vectors(&'a TextEmbeddings),
}

/// `V × d` matrix aligned with `vocab`. PAD is zero; UNK and tokens the
/// source does not know get the mean of the rows that were found. A
/// FastText source covers unknown words through their n-grams.
pub fn build_embedding_matrix(vocab: &Vocabulary, source: EmbeddingSource<'_>) -> Result<Matrix> {
    let dim = match &source {
        EmbeddingSource::FastText(m) => m.dim,
        EmbeddingSource::Vectors(v) => v.dim()?,
    };
    let mut matrix = Matrix::zeros(vocab.len(), dim);
    let mut found = vec![false; vocab.len()];
    for (i, token) in vocab.tokens().iter().enumerate().skip(2) {
        let v = match &source {
            EmbeddingSource::FastText(m) => m.word_vector(token).ok(),
            EmbeddingSource::Vectors(e) => e.vectors.get(token).cloned(),
        };
        if let Some(v) = v {
            if v.len() != dim {
                return Err(Error::Shape(format!("vector for `{token}` has {} values, expected {dim}", v.len())));
            }
            matrix.row_mut(i).copy_from_slice(&v);
            found[i] = true;
        }
    }
    let n_found = found.iter().filter(|&&f| f).count();
    let mut mean = vec![0.0; dim];
    if n_found > 0 {
        for (i, _) in found.iter().enumerate().filter(|(_, &f)| f) {
            axpy(1.0 / n_found as f64, matrix.row(i), &mut mean);
        }
    }
    for i in 0..vocab.len() {
        if i == PAD_INDEX || found[i] {
            continue;
        }
        debug_assert!(i == UNK_INDEX || i >= 2);
        matrix.row_mut(i).copy_from_slice(&mean);
    }
    Ok(matrix)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
