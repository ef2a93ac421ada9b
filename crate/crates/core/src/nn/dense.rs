use serde::{Deserialize, Serialize};

use super::tensor::{glorot_limit, Matrix, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer `y = W·x + b`. Activations are applied by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`
    pub weight: Param,
    /// `1 × out`
    pub bias: Param,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense { weight: Param::zeros(output, input), bias: Param::zeros(1, output) }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let s = glorot_limit(input, output);
        Dense {
            weight: Param::new(Matrix::uniform(output, input, s, rng)),
            bias: Param::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows
    }

    pub fn param_count(input: usize, output: usize) -> usize {
        input * output + output
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "dense expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut y = self.bias.value.data.clone();
        self.weight.value.matvec_acc(x, &mut y);
        Ok(y)
    }

    /// Accumulates parameter gradients; returns `dL/dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        self.weight.grad.add_outer(dy, x);
        super::tensor::axpy(1.0, dy, &mut self.bias.grad.data);
        let mut dx = vec![0.0; x.len()];
        self.weight.value.matvec_t_acc(dy, &mut dx);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}
