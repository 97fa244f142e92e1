//! Streaming spoken language understanding: alignment-free sequence losses,
//! a small convolutional-recurrent model with two heads at different rates,
//! incremental decoding, and a synthetic corpus to train it on.

pub mod ctc;
pub mod ctl;
pub mod decoder;
pub mod error;
pub mod features;
pub mod harness;
pub mod math;
pub mod network;
pub mod objective;
pub mod synthdata;

pub use error::{Error, Result};
