//! Confusion matrices and macro-averaged F1.

use std::fmt::Write as _;
use std::io::Write;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

/// `k × k` counts, rows = true class, columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![vec![0; k]; k] }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.k).map(|c| self.counts[c][c]).sum::<u64>() as f64 / total as f64
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    let mut m = ConfusionMatrix::zeros(k);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::InvalidArgument(format!("label {} out of range for {k} classes", t.max(p))));
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64, what: &str, class: usize) -> f64 {
    if den == 0 {
        warn!("{what} of class {class} is undefined (zero denominator); reporting 0");
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1, and their unweighted mean F1.
/// Undefined ratios are reported as 0.
pub fn prf_macro(confusion: &ConfusionMatrix) -> MetricsReport {
    let k = confusion.k;
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion.counts[c][c];
            let predicted: u64 = (0..k).map(|r| confusion.counts[r][c]).sum();
            let actual: u64 = confusion.counts[c].iter().sum();
            let precision = ratio(tp, predicted, "precision", c);
            let recall = ratio(tp, actual, "recall", c);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { precision, recall, f1, support: actual }
        })
        .collect();
    let macro_f1 = if k == 0 { 0.0 } else { per_class.iter().map(|m| m.f1).sum::<f64>() / k as f64 };
    MetricsReport { confusion: confusion.clone(), per_class, macro_f1, accuracy: confusion.accuracy() }
}

/// Convenience: confusion + report in one call.
pub fn evaluate(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<MetricsReport> {
    Ok(prf_macro(&confusion(y_true, y_pred, k)?))
}

impl MetricsReport {
    /// Aligned text table, one row per class plus the macro average.
    pub fn to_table(&self, class_names: &[&str]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>9} {:>9} {:>9} {:>9}", "label", "precision", "recall", "f1", "support");
        for (c, m) in self.per_class.iter().enumerate() {
            let name = class_names.get(c).copied().unwrap_or("?");
            let _ = writeln!(s, "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>9}", name, m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(s, "{:<10} {:>9} {:>9} {:>9.2} {:>9}", "macro", "", "", self.macro_f1, self.confusion.total());
        let _ = writeln!(s, "accuracy {:.4}", self.accuracy);
        s
    }

    /// CSV `label,precision,recall,f1,support`, then a `macro` row.
    pub fn write_csv<W: Write>(&self, class_names: &[&str], mut w: W) -> Result<()> {
        writeln!(w, "label,precision,recall,f1,support")?;
        for (c, m) in self.per_class.iter().enumerate() {
            let name = class_names.get(c).copied().unwrap_or("?");
            writeln!(w, "{name},{:.6},{:.6},{:.6},{}", m.precision, m.recall, m.f1, m.support)?;
        }
        writeln!(w, "macro,,,{:.6},{}", self.macro_f1, self.confusion.total())?;
        Ok(())
    }
}
