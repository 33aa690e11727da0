//! Reverse-mode gradients and the AdamW update.

mod optim;
mod tape;

pub use optim::{adamw_step, AdamWConfig, AdamWState, LrSchedule};
pub use tape::{cross_entropy_value, Gradients, Tape, Var, LN_EPS};

pub(crate) use tape::softmax_in_place;
