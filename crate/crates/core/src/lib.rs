pub mod device;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod network;
pub mod neuron;
pub mod rng;

pub use error::{Error, Result};
