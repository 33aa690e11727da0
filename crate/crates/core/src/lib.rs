//! EEG emotion classification with spectral, spatial and temporal attention.
//!
//! Modules follow the pipeline order: [`signal`] turns raw recordings into
//! feature tensors, [`model`] defines the forward computation, [`engine`]
//! supplies gradients and the optimizer, [`attribution`] ranks channels, and
//! [`harness`] drives experiments. [`data`] holds the synthetic generator and
//! file formats.

pub mod attribution;
pub mod data;
pub mod engine;
pub mod model;
pub mod error;
pub mod harness;
pub mod signal;
pub mod tensor;

pub use error::{AmdetError, Result};
