//! Differentiable computation in 64-bit floating point.

mod gradcheck;
mod layers;
mod optim;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_grads, grad_check};
pub use layers::{gru_cell, linear_forward, softmax_row, GruCell, Linear};
pub use optim::{OptimizerKind, OptimizerState};
pub use rng::{rng_from_seed, RngState, SeededRng};
pub use tape::{softmax_in_place, Bound, Gradients, Tape, Var};
pub use tensor::{ParameterSet, Tensor};
