//! Dense event captioning: a multi-stride LSTM event proposal module, a
//! caption decoder conditioned on past and future event context, their
//! joint training, and the evaluation protocols for dense captioning,
//! localization recall and video/paragraph retrieval.

pub mod captioning;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod proposals;
pub mod retrieval;
pub mod training;

pub use error::{Error, Result};
