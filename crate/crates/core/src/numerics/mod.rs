//! Dense tensors, stable elementary functions, seeded randomness and the
//! finite-difference gradient oracle.

mod ops;
mod rng;
mod tensor;

pub(crate) use ops::softmax_in_place;
pub use ops::{argmax, finite_diff_grad, softmax};
pub use rng::{derive_seed, RngState};
pub use tensor::Tensor;
