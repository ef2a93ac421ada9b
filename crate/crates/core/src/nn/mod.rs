//! Layer primitives with hand-derived backward passes.
//!
//! Layers own their parameters as [`Param`]s; `backward` methods accumulate
//! into `Param::grad` and return the gradient for the layer input.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod pool;
pub mod tensor;

pub use adam::AdamState;
pub use conv::Conv1d;
pub use dense::Dense;
pub use lstm::{BiLstm, Lstm};
pub use tensor::{Matrix, Param};

/// Anything holding an ordered list of trainable tensors.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

macro_rules! impl_parameterized {
    ($($t:ty),*) => {$(
        impl Parameterized for $t {
            fn params(&self) -> Vec<&Param> {
                <$t>::params(self)
            }
            fn params_mut(&mut self) -> Vec<&mut Param> {
                <$t>::params_mut(self)
            }
        }
    )*};
}

impl_parameterized!(Dense, Lstm, BiLstm, Conv1d);
