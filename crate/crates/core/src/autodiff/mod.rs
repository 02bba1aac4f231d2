//! Minimal reverse-mode autodiff and optimizer used by the neural models.

mod params;
mod tape;

pub use params::{Adam, ParamId, ParamStore, TensorSnapshot};
pub use tape::{huber, Grads, Tape, Var};
