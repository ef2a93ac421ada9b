//! Losses over a batch. Each returns the batch loss and its gradient with
//! respect to the predicted probabilities.

use super::tensor::Matrix;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

fn clamp(p: f64) -> (f64, bool) {
    if p < EPS {
        (EPS, true)
    } else if p > 1.0 - EPS {
        (1.0 - EPS, true)
    } else {
        (p, false)
    }
}

fn weight(class_weights: Option<&[f64]>, class: usize) -> f64 {
    class_weights.map_or(1.0, |w| w[class])
}

/// Binary cross-entropy, batch mean. `y ∈ {0, 1}`; with `class_weights`, each
/// example's term is scaled by the weight of its class.
pub fn bce(p: &[f64], y: &[f64], class_weights: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    if p.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    if p.len() != y.len() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", p.len(), y.len())));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let w = weight(class_weights, usize::from(yi > 0.5));
        let (pc, clamped) = clamp(pi);
        loss += -w * (yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln());
        let g = if clamped { 0.0 } else { -w * (yi / pc - (1.0 - yi) / (1.0 - pc)) / n };
        grad.push(g);
    }
    Ok((loss / n, grad))
}

/// Categorical cross-entropy over `N × K` probabilities and one-hot labels.
pub fn categorical_ce(probs: &Matrix, onehot: &Matrix, class_weights: Option<&[f64]>) -> Result<(f64, Matrix)> {
    if probs.rows == 0 {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    if !probs.same_shape(onehot) {
        return Err(Error::Shape("probabilities and labels differ in shape".into()));
    }
    let n = probs.rows as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(probs.rows, probs.cols);
    for i in 0..probs.rows {
        let y = onehot.row(i);
        let class = y.iter().position(|&v| v > 0.5).unwrap_or(0);
        let w = weight(class_weights, class);
        for (k, (&pk, &yk)) in probs.row(i).iter().zip(y).enumerate() {
            if yk == 0.0 {
                continue;
            }
            let (pc, clamped) = clamp(pk);
            loss -= w * yk * pc.ln();
            if !clamped {
                grad.set(i, k, -w * yk / pc / n);
            }
        }
    }
    Ok((loss / n, grad))
}

/// Differentiable F1 surrogate: `1 − mean_c 2·sTP/(2·sTP + sFP + sFN)` with
/// soft counts built from probabilities. Classes with no predicted mass and
/// no labels count as perfectly classified.
pub fn soft_f1(probs: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    if probs.rows == 0 {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    if !probs.same_shape(labels) {
        return Err(Error::Shape("probabilities and labels differ in shape".into()));
    }
    let k = probs.cols;
    let mut grad = Matrix::zeros(probs.rows, k);
    let mut f1_sum = 0.0;
    for c in 0..k {
        let mut tp = 0.0;
        let mut sum_p = 0.0;
        let mut sum_y = 0.0;
        for i in 0..probs.rows {
            let (p, y) = (probs.get(i, c), labels.get(i, c));
            tp += p * y;
            sum_p += p;
            sum_y += y;
        }
        // 2·TP + FP + FN = Σp + Σy
        let denom = sum_p + sum_y;
        if denom == 0.0 {
            f1_sum += 1.0;
            continue;
        }
        f1_sum += 2.0 * tp / denom;
        for i in 0..probs.rows {
            let y = labels.get(i, c);
            let d_f1 = 2.0 * y / denom - 2.0 * tp / (denom * denom);
            grad.set(i, c, -d_f1 / k as f64);
        }
    }
    Ok((1.0 - f1_sum / k as f64, grad))
}

/// Per-class weights `N / (K · n_c)`, so that rarer classes weigh more.
pub fn inverse_frequency_weights(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (num_classes as f64 * c as f64) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        let (l, _) = bce(&[1.0], &[1.0], None).unwrap();
        assert!(l < 1e-6);
        let (l, _) = bce(&[0.5], &[1.0], None).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce(&[0.5], &[1.0], Some(&[1.0, 3.0])).unwrap();
        assert!((l - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce(&[], &[], None).is_err());
    }

    #[test]
    fn categorical_matches_bce_on_two_classes() {
        let probs = Matrix::from_vec(2, 2, vec![0.3, 0.7, 0.9, 0.1]).unwrap();
        let onehot = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (l, _) = categorical_ce(&probs, &onehot, None).unwrap();
        let (lb, _) = bce(&[0.7, 0.1], &[1.0, 0.0], None).unwrap();
        assert!((l - lb).abs() < 1e-12);
    }

    #[test]
    fn soft_f1_perfect_is_zero() {
        let y = Matrix::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let (l, _) = soft_f1(&y, &y).unwrap();
        assert!(l.abs() < 1e-15);
    }

    #[test]
    fn soft_f1_hard_predictions_equal_macro_f1() {
        // Binary, hard probabilities: y=[1,1,0,0], pred=[1,0,1,0] gives F1 0.5 per class.
        let p = Matrix::from_vec(4, 2, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let y = Matrix::from_vec(4, 2, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let (l, _) = soft_f1(&p, &y).unwrap();
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weights() {
        let w = inverse_frequency_weights(&[0, 0, 0, 1], 2);
        assert!((w[0] - 4.0 / 6.0).abs() < 1e-12);
        assert!((w[1] - 2.0).abs() < 1e-12);
    }
}
