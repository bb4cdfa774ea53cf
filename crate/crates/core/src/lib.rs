//! Tracking a high-dimensional first-order autoregressive process over a
//! slotted channel with a fixed bit budget per slot.
//!
//! The core is generic over the scalar type (`f32` or `f64`); `*64`
//! aliases fix it to `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arprocess;
pub mod error;
pub mod quantizer;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod theory;
pub mod tracking;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ProcessParams64 = arprocess::ProcessParams<f64>;
pub type Trajectory64 = arprocess::Trajectory<f64>;
pub type QuantizerProfile64 = quantizer::QuantizerProfile<f64>;
pub type ProfileFit64 = quantizer::ProfileFit<f64>;
pub type GainShapeQuantizer64 = quantizer::GainShapeQuantizer<f64>;
pub type UniformVectorQuantizer64 = quantizer::UniformVectorQuantizer<f64>;
pub type LosslessQuantizer64 = quantizer::LosslessQuantizer<f64>;
pub type TheoryParams64 = theory::TheoryParams<f64>;
pub type TheoryReport64 = theory::TheoryReport<f64>;
pub use sim::{run_experiment, ExperimentSpec, SummaryRow};
pub use tracking::TrackingConfig;
