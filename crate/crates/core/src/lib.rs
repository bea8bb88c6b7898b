//! Spike accumulation forwarding (SAF) for spiking neural networks.

pub mod data;
pub mod error;
pub mod grad;
pub mod kv;
pub mod lab;
pub mod math;
pub mod neuron;
pub mod par;
pub mod surrogate;
pub mod topology;
pub mod train;

pub use error::{Error, Result};
