//! Global pooling over time and vector concatenation.

use super::tensor::Matrix;

/// Per-channel maximum over time, with the (first) argmax row per channel.
pub fn global_max_pool(seq: &Matrix) -> (Vec<f64>, Vec<usize>) {
    let mut best = seq.row(0).to_vec();
    let mut arg = vec![0; seq.cols];
    for t in 1..seq.rows {
        for (c, &v) in seq.row(t).iter().enumerate() {
            if v > best[c] {
                best[c] = v;
                arg[c] = t;
            }
        }
    }
    (best, arg)
}

/// Routes each channel's gradient to its argmax timestep.
pub fn global_max_pool_backward(rows: usize, argmax: &[usize], dy: &[f64]) -> Matrix {
    let mut dx = Matrix::zeros(rows, dy.len());
    for (c, (&t, &g)) in argmax.iter().zip(dy).enumerate() {
        dx.set(t, c, g);
    }
    dx
}

pub fn global_avg_pool(seq: &Matrix) -> Vec<f64> {
    let mut sum = vec![0.0; seq.cols];
    for t in 0..seq.rows {
        super::tensor::axpy(1.0, seq.row(t), &mut sum);
    }
    let n = seq.rows as f64;
    sum.into_iter().map(|s| s / n).collect()
}

pub fn global_avg_pool_backward(rows: usize, dy: &[f64]) -> Matrix {
    let inv = 1.0 / rows as f64;
    let row: Vec<f64> = dy.iter().map(|g| g * inv).collect();
    let mut dx = Matrix::zeros(rows, dy.len());
    for t in 0..rows {
        dx.row_mut(t).copy_from_slice(&row);
    }
    dx
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence() {
        let m = Matrix::filled(4, 3, 2.5);
        assert_eq!(global_max_pool(&m).0, vec![2.5; 3]);
        assert_eq!(global_avg_pool(&m), vec![2.5; 3]);
    }

    #[test]
    fn single_column() {
        let m = Matrix::from_vec(3, 1, vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(global_max_pool(&m), (vec![3.0], vec![1]));
        assert_eq!(global_avg_pool(&m), vec![2.0]);
    }

    #[test]
    fn max_ties_route_to_first() {
        let m = Matrix::from_vec(3, 1, vec![5.0, 5.0, 1.0]).unwrap();
        let (_, arg) = global_max_pool(&m);
        let dx = global_max_pool_backward(3, &arg, &[1.0]);
        assert_eq!(dx.data, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_width() {
        assert_eq!(concat(&[0.0; 64], &[1.0; 64]).len(), 128);
    }
}
