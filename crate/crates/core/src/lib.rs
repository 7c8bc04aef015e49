//! Prediction of large conditional expected volatility matrices from
//! high-frequency prices with a projected low-rank-plus-sparse tensor model.
//!
//! The numerical core is generic over [`Real`]; the aliases below fix it to
//! `f64`, which is what the simulation, I/O and CLI layers use.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod market_sim;
pub mod portfolio;
pub mod ptpoet;
pub mod realized_vol;
pub mod rng;
pub mod scalar;
pub mod study;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::{Mode, Tensor3, TuckerFactors};

/// Daily volatility matrices stacked along the third mode.
pub type VolTensor = Tensor3<f64>;
pub type VolTensorF32 = Tensor3<f32>;
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Panel = realized_vol::IntradayPanel<f64>;
pub type Model = ptpoet::PtPoetModel<f64>;
pub type Sieve = ptpoet::SieveDesign<f64>;
