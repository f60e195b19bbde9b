//! Dense linear algebra, differentiable primitives, gradient checking and
//! the momentum optimizer. All arithmetic is `f64`.

pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_ids, GradCheckReport};
pub use lstm::{lstm_cell, lstm_cell_backward, CellCache, Lstm, LstmLayer, LstmState, StepCache};
pub use ops::{affine, affine_backward, log_softmax, softmax_xent, weighted_bce_logit};
pub use optim::{sgd_momentum_step, OptimizerState};
pub use params::{Grads, ParamId, ParamStore, Params};
pub use rng::{RngState, SeededRng};
pub use tensor::Tensor;
