use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, glorot_limit, Matrix, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Valid 1-D convolution over time followed by ReLU.
///
/// The kernel is stored as `F × (k·C)`: filter `f` row holds the `k` taps in
/// time order, each tap `C` channels wide, matching the layout of `k`
/// consecutive rows of a time-major sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub kernel: Param,
    pub bias: Param,
    pub width: usize,
    pub channels: usize,
}

pub struct ConvCache {
    /// Pre-ReLU outputs.
    pre: Matrix,
}

impl Conv1d {
    pub fn zeros(width: usize, channels: usize, filters: usize) -> Self {
        Conv1d {
            kernel: Param::zeros(filters, width * channels),
            bias: Param::zeros(1, filters),
            width,
            channels,
        }
    }

    pub fn init(width: usize, channels: usize, filters: usize, rng: &mut Rng) -> Self {
        let s = glorot_limit(width * channels, width * filters);
        Conv1d {
            kernel: Param::new(Matrix::uniform(filters, width * channels, s, rng)),
            bias: Param::zeros(1, filters),
            width,
            channels,
        }
    }

    pub fn filters(&self) -> usize {
        self.kernel.value.rows
    }

    pub fn param_count(width: usize, channels: usize, filters: usize) -> usize {
        width * channels * filters + filters
    }

    pub fn num_params(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    /// `T × C` → `(T−k+1) × F`, ReLU applied.
    pub fn forward(&self, seq: &Matrix) -> Result<(Matrix, ConvCache)> {
        if seq.cols != self.channels {
            return Err(Error::Shape(format!("conv expects {} channels, got {}", self.channels, seq.cols)));
        }
        if seq.rows < self.width {
            return Err(Error::Shape(format!(
                "sequence length {} shorter than kernel width {}",
                seq.rows, self.width
            )));
        }
        let t_out = seq.rows - self.width + 1;
        let span = self.width * self.channels;
        let f = self.filters();
        let mut pre = Matrix::zeros(t_out, f);
        for t in 0..t_out {
            let window = &seq.data[t * self.channels..t * self.channels + span];
            let row = pre.row_mut(t);
            for (j, r) in row.iter_mut().enumerate() {
                *r = dot(self.kernel.value.row(j), window) + self.bias.value.data[j];
            }
        }
        let mut out = pre.clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok((out, ConvCache { pre }))
    }

    /// Accumulates gradients; returns `dL/d seq`.
    pub fn backward(&mut self, seq: &Matrix, cache: &ConvCache, d_out: &Matrix) -> Matrix {
        let span = self.width * self.channels;
        let mut dx = Matrix::zeros(seq.rows, seq.cols);
        for t in 0..cache.pre.rows {
            let off = t * self.channels;
            for j in 0..self.filters() {
                if cache.pre.get(t, j) <= 0.0 {
                    continue;
                }
                let g = d_out.get(t, j);
                if g == 0.0 {
                    continue;
                }
                self.bias.grad.data[j] += g;
                axpy(g, &seq.data[off..off + span], self.kernel.grad.row_mut(j));
                axpy(g, self.kernel.value.row(j), &mut dx.data[off..off + span]);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.kernel, &self.bias]
    }
}
