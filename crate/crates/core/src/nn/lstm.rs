//! LSTM cell, sequence unrolling with backpropagation through time, and the
//! bidirectional wrapper.
//!
//! Gate rows are stacked in the order input, forget, output, candidate:
//! rows `[0,h)` input gate, `[h,2h)` forget, `[2h,3h)` output, `[3h,4h)` candidate.

use serde::{Deserialize, Serialize};

use super::activation::sigmoid_scalar;
use super::tensor::{axpy, glorot_limit, Matrix, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    /// `4h × in`
    pub w_input: Param,
    /// `4h × h`
    pub w_recurrent: Param,
    /// `1 × 4h`
    pub bias: Param,
}

/// Activations saved by one step for the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache {
    /// Post-nonlinearity gates `[i, f, o, g]`, length 4h.
    pub gates: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// Forward trace of a whole sequence.
#[derive(Clone, Debug)]
pub struct SeqCache {
    pub steps: Vec<StepCache>,
    pub reverse: bool,
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            w_input: Param::zeros(4 * hidden, input),
            w_recurrent: Param::zeros(4 * hidden, hidden),
            bias: Param::zeros(1, 4 * hidden),
        }
    }

    /// Glorot-uniform weights; biases zero except the forget gate, which starts at 1.
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut l = Lstm {
            w_input: Param::new(Matrix::uniform(4 * hidden, input, glorot_limit(input, 4 * hidden), rng)),
            w_recurrent: Param::new(Matrix::uniform(
                4 * hidden,
                hidden,
                glorot_limit(hidden, 4 * hidden),
                rng,
            )),
            bias: Param::zeros(1, 4 * hidden),
        };
        l.bias.value.data[hidden..2 * hidden].fill(1.0);
        l
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.value.cols
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.value.cols
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        4 * ((input + hidden) * hidden + hidden)
    }

    pub fn num_params(&self) -> usize {
        self.w_input.len() + self.w_recurrent.len() + self.bias.len()
    }

    fn check(&self, x_len: usize, h_len: usize, c_len: usize) -> Result<()> {
        let hd = self.hidden();
        if x_len != self.input_dim() || h_len != hd || c_len != hd {
            return Err(Error::Shape(format!(
                "lstm expects x={}, h=c={hd}; got x={x_len}, h={h_len}, c={c_len}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Single step from pre-computed input projection `W_x·x + b`.
    fn step_projected(&self, mut z: Vec<f64>, h: &[f64], c: &[f64]) -> (Vec<f64>, StepCache) {
        let hd = self.hidden();
        self.w_recurrent.value.matvec_acc(h, &mut z);
        for v in &mut z[..3 * hd] {
            *v = sigmoid_scalar(*v);
        }
        for v in &mut z[3 * hd..] {
            *v = v.tanh();
        }
        let (i, rest) = z.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (o, g) = rest.split_at(hd);
        let mut c_new = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h_new = vec![0.0; hd];
        for k in 0..hd {
            c_new[k] = f[k] * c[k] + i[k] * g[k];
            tanh_c[k] = c_new[k].tanh();
            h_new[k] = o[k] * tanh_c[k];
        }
        let cache = StepCache { gates: z, c_prev: c.to_vec(), h_prev: h.to_vec(), c: c_new, tanh_c };
        (h_new, cache)
    }

    /// One LSTM step: returns `(h', c')` and the cache for [`Lstm::step_backward`].
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, StepCache)> {
        self.check(x.len(), h.len(), c.len())?;
        let mut z = self.bias.value.data.clone();
        self.w_input.value.matvec_acc(x, &mut z);
        let (h_new, cache) = self.step_projected(z, h, c);
        Ok((h_new, cache.c.clone(), cache))
    }

    /// Backward through one step. Given `dL/dh'` and `dL/dc'` (the latter
    /// excluding the path through `h'`), accumulates weight gradients and
    /// returns `(dL/dx, dL/dh, dL/dc)`.
    pub fn step_backward(
        &mut self,
        x: &[f64],
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let dz = self.gate_grads(cache, dh, dc);
        let (dh_prev, dc_prev) = self.recurrent_backward(cache, &dz, dc, dh);
        self.w_input.grad.add_outer(&dz, x);
        let mut dx = vec![0.0; x.len()];
        self.w_input.value.matvec_t_acc(&dz, &mut dx);
        (dx, dh_prev, dc_prev)
    }

    /// Pre-activation gate gradients for one step.
    fn gate_grads(&self, cache: &StepCache, dh: &[f64], dc_in: &[f64]) -> Vec<f64> {
        let hd = self.hidden();
        let g = &cache.gates;
        let mut dz = vec![0.0; 4 * hd];
        for k in 0..hd {
            let (i, f, o, gg) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
            let tc = cache.tanh_c[k];
            let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = dc * gg * i * (1.0 - i);
            dz[hd + k] = dc * cache.c_prev[k] * f * (1.0 - f);
            dz[2 * hd + k] = dh[k] * tc * o * (1.0 - o);
            dz[3 * hd + k] = dc * i * (1.0 - gg * gg);
        }
        dz
    }

    /// Recurrent-weight and bias gradients; returns `(dL/dh_prev, dL/dc_prev)`.
    fn recurrent_backward(&mut self, cache: &StepCache, dz: &[f64], dc_in: &[f64], dh: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden();
        self.w_recurrent.grad.add_outer(dz, &cache.h_prev);
        axpy(1.0, dz, &mut self.bias.grad.data);
        let mut dh_prev = vec![0.0; hd];
        self.w_recurrent.value.matvec_t_acc(dz, &mut dh_prev);
        let g = &cache.gates;
        let dc_prev = (0..hd)
            .map(|k| {
                let (f, o) = (g[hd + k], g[2 * hd + k]);
                let tc = cache.tanh_c[k];
                (dc_in[k] + dh[k] * o * (1.0 - tc * tc)) * f
            })
            .collect();
        (dh_prev, dc_prev)
    }

    /// Run over a `T × in` sequence from zero state. With `reverse`, steps run
    /// from the last timestep to the first; output row `t` is always the hidden
    /// state produced at input position `t`.
    pub fn forward_seq(&self, seq: &Matrix, reverse: bool) -> Result<(Matrix, SeqCache)> {
        if seq.cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "lstm expects {} input channels, got {}",
                self.input_dim(),
                seq.cols
            )));
        }
        let hd = self.hidden();
        let t_len = seq.rows;
        // Input projections for every timestep at once.
        let mut proj = seq.matmul_t(&self.w_input.value);
        for t in 0..t_len {
            axpy(1.0, &self.bias.value.data, proj.row_mut(t));
        }
        let mut out = Matrix::zeros(t_len, hd);
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut steps = Vec::with_capacity(t_len);
        for s in 0..t_len {
            let t = if reverse { t_len - 1 - s } else { s };
            let (h_new, cache) = self.step_projected(proj.row(t).to_vec(), &h, &c);
            out.row_mut(t).copy_from_slice(&h_new);
            c.clone_from(&cache.c);
            h = h_new;
            steps.push(cache);
        }
        Ok((out, SeqCache { steps, reverse }))
    }

    /// BPTT given `dL/d out` (`T × h`). Accumulates gradients and returns `dL/d seq`.
    pub fn backward_seq(&mut self, seq: &Matrix, cache: &SeqCache, d_out: &Matrix) -> Matrix {
        let hd = self.hidden();
        let t_len = seq.rows;
        let mut dz_all = Matrix::zeros(t_len, 4 * hd);
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        for s in (0..t_len).rev() {
            let t = if cache.reverse { t_len - 1 - s } else { s };
            let step = &cache.steps[s];
            let mut dh = d_out.row(t).to_vec();
            axpy(1.0, &dh_next, &mut dh);
            let dz = self.gate_grads(step, &dh, &dc_next);
            let (dh_prev, dc_prev) = self.recurrent_backward(step, &dz, &dc_next, &dh);
            dz_all.row_mut(t).copy_from_slice(&dz);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        self.w_input.grad.add_t_matmul(&dz_all, seq);
        dz_all.matmul(&self.w_input.value)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_input, &mut self.w_recurrent, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w_input, &self.w_recurrent, &self.bias]
    }
}

/// Forward and backward LSTMs with per-timestep concatenated outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache {
    fwd: SeqCache,
    bwd: SeqCache,
}

impl BiLstm {
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let forward = Lstm::init(input, hidden, rng);
        let backward = Lstm::init(input, hidden, rng);
        BiLstm { forward, backward }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstm { forward: Lstm::zeros(input, hidden), backward: Lstm::zeros(input, hidden) }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        2 * Lstm::param_count(input, hidden)
    }

    pub fn num_params(&self) -> usize {
        self.forward.num_params() + self.backward.num_params()
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    /// `T × in` → `T × 2h`, row `t` = `[h_fwd(t); h_bwd(t)]`.
    pub fn forward(&self, seq: &Matrix) -> Result<(Matrix, BiLstmCache)> {
        if self.forward.hidden() != self.backward.hidden() || self.forward.input_dim() != self.backward.input_dim() {
            return Err(Error::Shape("forward and backward LSTM shapes differ".into()));
        }
        let (of, fwd) = self.forward.forward_seq(seq, false)?;
        let (ob, bwd) = self.backward.forward_seq(seq, true)?;
        let hd = self.hidden();
        let mut out = Matrix::zeros(seq.rows, 2 * hd);
        for t in 0..seq.rows {
            let row = out.row_mut(t);
            row[..hd].copy_from_slice(of.row(t));
            row[hd..].copy_from_slice(ob.row(t));
        }
        Ok((out, BiLstmCache { fwd, bwd }))
    }

    pub fn backward(&mut self, seq: &Matrix, cache: &BiLstmCache, d_out: &Matrix) -> Matrix {
        let hd = self.hidden();
        let mut df = Matrix::zeros(seq.rows, hd);
        let mut db = Matrix::zeros(seq.rows, hd);
        for t in 0..seq.rows {
            df.row_mut(t).copy_from_slice(&d_out.row(t)[..hd]);
            db.row_mut(t).copy_from_slice(&d_out.row(t)[hd..]);
        }
        let mut dx = self.forward.backward_seq(seq, &cache.fwd, &df);
        let dxb = self.backward.backward_seq(seq, &cache.bwd, &db);
        dx.add_assign(&dxb);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.forward.params_mut();
        v.extend(self.backward.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.forward.params();
        v.extend(self.backward.params());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(Lstm::param_count(100, 128), 4 * ((100 + 128) * 128 + 128));
        assert_eq!(BiLstm::param_count(100, 128), 234_496);
        assert_eq!(BiLstm::zeros(100, 128).num_params(), 234_496);
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let l = Lstm::zeros(3, 2);
        let (h, c, _) = l.step(&[1.0, -4.0, 2.0], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
        assert!(l.step(&[1.0], &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn scalar_saturated_gates() {
        let mut l = Lstm::zeros(1, 1);
        // i, f, o saturated at ~1; candidate bias 1 so g = tanh(1).
        l.bias.value.data = vec![40.0, 40.0, 40.0, 1.0];
        let (h, c, _) = l.step(&[0.3], &[0.0], &[0.0]).unwrap();
        let expect_c = 1.0f64.tanh();
        assert!((c[0] - expect_c).abs() < 1e-12);
        assert!((c[0] - 0.761_594_155_955_764_9).abs() < 1e-12);
        assert!((h[0] - expect_c.tanh()).abs() < 1e-12);
        assert!((h[0] - 0.642).abs() < 1e-3);
    }

    #[test]
    fn palindrome_symmetry() {
        let mut rng = crate::rng::seeded(11);
        let f = Lstm::init(3, 4, &mut rng);
        let bi = BiLstm { forward: f.clone(), backward: f };
        let rows: [[f64; 3]; 5] = [[0.1, 0.2, -0.3], [1.0, 0.0, 0.5], [-0.7, 0.4, 0.9], [1.0, 0.0, 0.5], [0.1, 0.2, -0.3]];
        let seq = Matrix::from_vec(5, 3, rows.concat()).unwrap();
        let (out, _) = bi.forward(&seq).unwrap();
        for t in 0..5 {
            for k in 0..4 {
                assert!((out.get(t, k) - out.get(4 - t, 4 + k)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_bilstm_outputs_zero() {
        let bi = BiLstm::zeros(3, 2);
        let seq = Matrix::filled(4, 3, 0.7);
        let (out, _) = bi.forward(&seq).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert_eq!((out.rows, out.cols), (4, 4));
    }
}
