use rand::Rng as _;

use super::tensor::Matrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Channel mask shared over every timestep: each entry is either 0 or
/// `1/(1-rate)`.
#[derive(Clone, Debug)]
pub struct ChannelMask(pub Vec<f64>);

/// Spatial dropout on a `T × C` sequence. Identity (and no RNG draws) when
/// `train` is false or `rate` is zero.
pub fn spatial_dropout(seq: &Matrix, rate: f64, train: bool, rng: &mut Rng) -> Result<(Matrix, Option<ChannelMask>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
    }
    if !train || rate == 0.0 {
        return Ok((seq.clone(), None));
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mask: Vec<f64> = (0..seq.cols)
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect();
    let mut out = seq.clone();
    for t in 0..out.rows {
        for (v, m) in out.row_mut(t).iter_mut().zip(&mask) {
            *v *= m;
        }
    }
    Ok((out, Some(ChannelMask(mask))))
}

pub fn spatial_dropout_backward(d_out: &Matrix, mask: Option<&ChannelMask>) -> Matrix {
    let mut dx = d_out.clone();
    if let Some(ChannelMask(m)) = mask {
        for t in 0..dx.rows {
            for (v, s) in dx.row_mut(t).iter_mut().zip(m) {
                *v *= s;
            }
        }
    }
    dx
}
