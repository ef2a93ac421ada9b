//! Bag-of-words random forest baseline and cross-validated choice of `p_u`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::eval;
use crate::resample;
use crate::rng::{self, Rng};

/// Sparse document-term counts. Rows hold `(column, count)` pairs sorted by
/// column; zero entries are not stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BowMatrix {
    cols: usize,
    rows: Vec<Vec<(u32, u32)>>,
}

impl BowMatrix {
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, u32)>>) -> Result<Self> {
        for r in &rows {
            if r.windows(2).any(|w| w[0].0 >= w[1].0) || r.iter().any(|&(c, n)| c as usize >= cols || n == 0) {
                return Err(Error::InvalidArgument("rows must hold sorted, in-range, non-zero entries".into()));
            }
        }
        Ok(BowMatrix { cols, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        let r = &self.rows[row];
        r.binary_search_by_key(&(col as u32), |e| e.0).map_or(0, |i| r[i].1)
    }

    pub fn row(&self, row: usize) -> &[(u32, u32)] {
        &self.rows[row]
    }

    /// Dense copy of one row.
    pub fn dense_row(&self, row: usize) -> Vec<u32> {
        let mut v = vec![0; self.cols];
        for &(c, n) in &self.rows[row] {
            v[c as usize] = n;
        }
        v
    }

    /// Rows picked by index; repeats allowed.
    pub fn select(&self, indices: &[usize]) -> Self {
        BowMatrix { cols: self.cols, rows: indices.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    /// Column-major copy: per column, `(row, count)` pairs.
    fn columns(&self) -> Vec<Vec<(u32, u32)>> {
        let mut cols = vec![Vec::new(); self.cols];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, n) in row {
                cols[c as usize].push((r as u32, n));
            }
        }
        cols
    }
}

/// Occurrence counts per document; tokens outside the vocabulary and the two
/// reserved entries are ignored.
pub fn bow_matrix<S: AsRef<str>>(token_lists: &[Vec<S>], vocab: &Vocabulary) -> BowMatrix {
    let rows = token_lists
        .iter()
        .map(|doc| {
            let mut ids: Vec<u32> = doc
                .iter()
                .filter_map(|t| vocab.index(t.as_ref()))
                .filter(|&i| i > crate::corpus::UNK_INDEX)
                .map(|i| i as u32)
                .collect();
            ids.sort_unstable();
            let mut row: Vec<(u32, u32)> = Vec::new();
            for id in ids {
                match row.last_mut() {
                    Some((c, n)) if *c == id => *n += 1,
                    _ => row.push((id, 1)),
                }
            }
            row
        })
        .collect();
    BowMatrix { cols: vocab.len(), rows }
}

/// Gini impurity `1 − Σ (n_i / N)²`; 0 for an empty node.
pub fn gini(class_counts: &[u32]) -> f64 {
    let total: u32 = class_counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = f64::from(total);
    1.0 - class_counts.iter().map(|&c| (f64::from(c) / n).powi(2)).sum::<f64>()
}

/// A candidate split: samples with `value <= threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub threshold: f64,
    /// Sample-weighted Gini of the two children.
    pub impurity: f64,
}

/// Best threshold on a single feature. `samples` are `(value, class,
/// multiplicity)`; thresholds are midpoints between consecutive distinct
/// values. `None` when every sample has the same value.
pub fn best_split(samples: &[(f64, usize, u32)], num_classes: usize) -> Option<Split> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = vec![0u32; num_classes];
    for &(_, c, m) in &sorted {
        total[c] += m;
    }
    let n = f64::from(total.iter().sum::<u32>());
    let mut left = vec![0u32; num_classes];
    let mut best: Option<Split> = None;
    for i in 0..sorted.len() {
        left[sorted[i].1] += sorted[i].2;
        if i + 1 == sorted.len() || sorted[i + 1].0 == sorted[i].0 {
            continue;
        }
        let right: Vec<u32> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let nl = f64::from(left.iter().sum::<u32>());
        let impurity = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
        if best.is_none_or(|b| impurity < b.impurity) {
            best = Some(Split { threshold: 0.5 * (sorted[i].0 + sorted[i + 1].0), impurity });
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf { counts: Vec<u32> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf(&self, x: &BowMatrix, row: usize) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    i = if f64::from(x.get(row, *feature)) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &BowMatrix, row: usize) -> usize {
        argmax_lowest(self.leaf(x, row))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Leaf class counts; their sum is the number of (bootstrap) samples.
    pub fn leaf_counts(&self) -> Vec<&[u32]> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { counts } => Some(counts.as_slice()),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

fn argmax_lowest<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features examined per node; `None` means `⌊√V⌋`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_features: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub num_classes: usize,
    pub max_features: usize,
    pub seed: u64,
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<(u32, u32)>],
    labels: &'a [usize],
    num_classes: usize,
    max_features: usize,
    /// Multiplicity of each row in the node being split.
    node_mult: Vec<u32>,
    feature_pool: Vec<usize>,
}

impl TreeBuilder<'_> {
    fn counts(&self, samples: &[(usize, u32)]) -> Vec<u32> {
        let mut c = vec![0u32; self.num_classes];
        for &(r, m) in samples {
            c[self.labels[r]] += m;
        }
        c
    }

    /// Best split over a random feature subset. Keeps drawing features past
    /// `max_features` until one can split the node or none are left.
    fn split_node(&mut self, samples: &[(usize, u32)], counts: &[u32], rng: &mut Rng) -> Option<(usize, Split)> {
        for &(r, m) in samples {
            self.node_mult[r] = m;
        }
        let mut best: Option<(usize, Split)> = None;
        let pool_len = self.feature_pool.len();
        for drawn in 0..pool_len {
            if drawn >= self.max_features && best.is_some() {
                break;
            }
            let j = rng.random_range(drawn..pool_len);
            self.feature_pool.swap(drawn, j);
            let feature = self.feature_pool[drawn];
            let mut zero = counts.to_vec();
            let mut vals: Vec<(f64, usize, u32)> = Vec::new();
            for &(r, n) in &self.columns[feature] {
                let m = self.node_mult[r as usize];
                if m > 0 {
                    let c = self.labels[r as usize];
                    zero[c] -= m;
                    vals.push((f64::from(n), c, m));
                }
            }
            if vals.is_empty() {
                continue;
            }
            vals.extend(zero.iter().enumerate().filter(|(_, &m)| m > 0).map(|(c, &m)| (0.0, c, m)));
            if let Some(s) = best_split(&vals, self.num_classes) {
                if best.is_none_or(|(_, b)| s.impurity < b.impurity) {
                    best = Some((feature, s));
                }
            }
        }
        for &(r, _) in samples {
            self.node_mult[r] = 0;
        }
        best
    }

    fn build(&mut self, samples: Vec<(usize, u32)>, x: &BowMatrix, rng: &mut Rng) -> DecisionTree {
        let mut nodes = Vec::new();
        let mut stack = vec![(samples, usize::MAX, false)];
        while let Some((samples, parent, is_right)) = stack.pop() {
            let id = nodes.len();
            if parent != usize::MAX {
                if let Node::Split { left, right, .. } = &mut nodes[parent] {
                    if is_right {
                        *right = id;
                    } else {
                        *left = id;
                    }
                }
            }
            let counts = self.counts(&samples);
            let n: u32 = counts.iter().sum();
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || n < 2 { None } else { self.split_node(&samples, &counts, rng) };
            match split {
                None => nodes.push(Node::Leaf { counts }),
                Some((feature, s)) => {
                    nodes.push(Node::Split { feature, threshold: s.threshold, left: 0, right: 0 });
                    let (l, r): (Vec<_>, Vec<_>) =
                        samples.into_iter().partition(|&(row, _)| f64::from(x.get(row, feature)) <= s.threshold);
                    stack.push((r, id, true));
                    stack.push((l, id, false));
                }
            }
        }
        DecisionTree { nodes }
    }
}

/// Bootstrap-aggregated Gini trees grown until pure or fewer than two samples.
pub fn train_forest(x: &BowMatrix, y: &[usize], config: &ForestConfig) -> Result<ForestModel> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Empty("random forest needs at least one document and one feature".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::Shape(format!("{} labels for {} documents", y.len(), x.rows())));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
    }
    let num_classes = y.iter().max().map_or(0, |m| m + 1).max(2);
    let max_features = config.max_features.unwrap_or_else(|| (x.cols() as f64).sqrt().floor() as usize).clamp(1, x.cols());
    let columns = x.columns();
    let n = x.rows();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::seeded(rng::derive_seed(config.seed, t as u64));
            let mut mult = vec![0u32; n];
            for _ in 0..n {
                mult[rng.random_range(0..n)] += 1;
            }
            let samples: Vec<(usize, u32)> = mult.iter().enumerate().filter(|(_, &m)| m > 0).map(|(r, &m)| (r, m)).collect();
            let mut builder = TreeBuilder {
                columns: &columns,
                labels: y,
                num_classes,
                max_features,
                node_mult: vec![0; n],
                feature_pool: (0..x.cols()).collect(),
            };
            builder.build(samples, x, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees, num_classes, max_features, seed: config.seed })
}

/// Majority vote over trees; ties go to the lowest label.
pub fn predict_forest(model: &ForestModel, x: &BowMatrix) -> Result<Vec<usize>> {
    if model.trees.is_empty() {
        return Err(Error::Empty("forest has no trees".into()));
    }
    Ok((0..x.rows())
        .into_par_iter()
        .map(|r| {
            let mut votes = vec![0u32; model.num_classes];
            for t in &model.trees {
                votes[t.predict_row(x, r)] += 1;
            }
            argmax_lowest(&votes)
        })
        .collect())
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least two folds".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut fold_of = vec![0; labels.len()];
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < folds {
            return Err(Error::InvalidArgument(format!("class {c} has {} examples, fewer than {folds} folds", members.len())));
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = j % folds;
        }
    }
    Ok(fold_of)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PuScore {
    pub p_u: f64,
    pub fold_scores: Vec<f64>,
    pub mean_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PuSelection {
    pub best_p_u: f64,
    pub table: Vec<PuScore>,
}

/// `{0.0, 0.1, …, 1.0}`.
pub fn default_pu_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// k-fold cross-validation of the forest for each `p_u`, rebalancing only the
/// training folds. Folds, resampling and forest seeds are shared across
/// candidates so the comparison is paired. Ties go to the smaller `p_u`.
pub fn cv_select_pu(x: &BowMatrix, y: &[usize], grid: &[f64], folds: usize, forest: &ForestConfig) -> Result<PuSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty p_u grid".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::Shape(format!("{} labels for {} documents", y.len(), x.rows())));
    }
    let k = y.iter().max().map_or(0, |m| m + 1).max(2);
    let fold_of = stratified_folds(y, folds, rng::derive_seed(forest.seed, 0))?;
    let mut table = Vec::with_capacity(grid.len());
    for &p_u in grid {
        let mut fold_scores = Vec::with_capacity(folds);
        for f in 0..folds {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
            let train_labels: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let picked = resample::rebalance_indices(&train_labels, p_u, rng::derive_seed(forest.seed, 1000 + f as u64))?;
            let rows: Vec<usize> = picked.iter().map(|&j| train[j]).collect();
            let labels: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
            let cfg = ForestConfig { seed: rng::derive_seed(forest.seed, 2000 + f as u64), ..*forest };
            let model = train_forest(&x.select(&rows), &labels, &cfg)?;
            let pred = predict_forest(&model, &x.select(&test))?;
            let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
            fold_scores.push(eval::evaluate(&truth, &pred, k)?.macro_f1);
        }
        let mean_macro_f1 = fold_scores.iter().sum::<f64>() / folds as f64;
        log::info!("p_u {p_u:.2}: mean macro-F1 {mean_macro_f1:.4}");
        table.push(PuScore { p_u, fold_scores, mean_macro_f1 });
    }
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean_macro_f1 > table[best].mean_macro_f1 {
            best = i;
        }
    }
    Ok(PuSelection { best_p_u: table[best].p_u, table })
}

impl PuSelection {
    /// CSV `p_u,fold_1,…,fold_k,mean_macro_f1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let folds = self.table.first().map_or(0, |r| r.fold_scores.len());
        let mut header = vec!["p_u".to_string()];
        header.extend((1..=folds).map(|f| format!("fold_{f}")));
        header.push("mean_macro_f1".into());
        writeln!(w, "{}", header.join(","))?;
        for r in &self.table {
            let scores: Vec<String> = r.fold_scores.iter().map(|s| format!("{s:.6}")).collect();
            writeln!(w, "{:.2},{},{:.6}", r.p_u, scores.join(","), r.mean_macro_f1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bow_counts() {
        let docs = vec![vec!["a", "a", "b"], vec![], vec!["zzz"]];
        let vocab = Vocabulary::build(&[vec!["a", "b"]]);
        let m = bow_matrix(&docs, &vocab);
        let (a, b) = (vocab.index("a").unwrap(), vocab.index("b").unwrap());
        assert_eq!((m.get(0, a), m.get(0, b)), (2, 1));
        assert!(m.row(1).is_empty());
        assert!(m.row(2).is_empty());
        assert_eq!(m.cols(), vocab.len());
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5, 5]), 0.5);
        assert_eq!(gini(&[10, 0]), 0.0);
        assert!((gini(&[1, 2, 3]) - 11.0 / 18.0).abs() < 1e-12);
    }

    fn matrix_1d(values: &[u32]) -> BowMatrix {
        let rows = values.iter().map(|&v| if v == 0 { vec![] } else { vec![(0, v)] }).collect();
        BowMatrix::from_rows(1, rows).unwrap()
    }

    #[test]
    fn separable_single_feature() {
        let x = matrix_1d(&[0, 0, 1, 3, 4, 5]);
        let y = [0, 0, 0, 1, 1, 1];
        let forest = train_forest(&x, &y, &ForestConfig { n_trees: 15, ..Default::default() }).unwrap();
        assert_eq!(predict_forest(&forest, &x).unwrap(), y);
        for t in &forest.trees {
            assert!(t.leaf_counts().iter().all(|c| c.iter().sum::<u32>() > 0));
        }
    }

    #[test]
    fn constant_labels() {
        let x = matrix_1d(&[0, 2, 7, 1]);
        let forest = train_forest(&x, &[1, 1, 1, 1], &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        assert_eq!(predict_forest(&forest, &x).unwrap(), vec![1; 4]);
        assert!(forest.trees.iter().all(|t| t.depth() == 0));
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let x = matrix_1d(&[0, 1, 2, 3, 4, 5, 6, 7]);
        let y = [0, 1, 0, 1, 1, 0, 1, 0];
        let cfg = ForestConfig { n_trees: 7, seed: 11, ..Default::default() };
        assert_eq!(train_forest(&x, &y, &cfg).unwrap(), train_forest(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn vote_ties_and_errors() {
        let leaf = |c: usize| DecisionTree { nodes: vec![Node::Leaf { counts: if c == 0 { vec![1, 0] } else { vec![0, 1] } }] };
        let x = matrix_1d(&[1]);
        let mk = |trees: Vec<DecisionTree>| ForestModel { trees, num_classes: 2, max_features: 1, seed: 0 };
        assert_eq!(predict_forest(&mk(vec![leaf(1), leaf(1), leaf(0)]), &x).unwrap(), vec![1]);
        assert_eq!(predict_forest(&mk(vec![leaf(0), leaf(1)]), &x).unwrap(), vec![0]);
        assert!(predict_forest(&mk(vec![]), &x).is_err());
        assert!(train_forest(&BowMatrix::from_rows(3, vec![]).unwrap(), &[], &ForestConfig::default()).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let y: Vec<usize> = (0..23).map(|i| usize::from(i % 3 == 0)).collect();
        let f = stratified_folds(&y, 5, 1).unwrap();
        for fold in 0..5 {
            assert!((0..y.len()).any(|i| f[i] == fold && y[i] == 1));
        }
        assert!(stratified_folds(&[0, 0, 0, 1], 2, 0).is_err());
    }

    proptest! {
        #[test]
        fn gini_bounds(counts in proptest::collection::vec(0u32..50, 2..6)) {
            let g = gini(&counts);
            let k = counts.len() as f64;
            prop_assert!(g >= 0.0 && g <= 1.0 - 1.0 / k + 1e-12);
            let nonzero = counts.iter().filter(|&&c| c > 0).count();
            prop_assert_eq!(g == 0.0, nonzero <= 1);
        }
    }
}
