//! Sound event detection with frequency-dynamic and temporal-attention
//! convolutions, mean-teacher training and intersection-based scoring.

pub mod config;
pub mod data;
pub mod checkpoint;
pub mod dynamic;
mod error;
pub mod eval;
pub mod gradsuite;
pub mod frontend;
pub mod infer;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tap;
pub mod train;

pub use error::{Result, SedError};
