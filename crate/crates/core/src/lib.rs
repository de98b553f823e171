//! Graph neural network for the decision traveling salesperson problem.
//!
//! The numeric core ([`tensor`], [`autodiff`], [`nn`], [`model`]) is
//! generic over [`Scalar`]; the aliases below fix it to `f64`, which is
//! what training, evaluation and the CLI use.

pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod generate;
pub mod graph;
pub mod model;
pub mod nn;
pub mod oracles;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod tsplib;

pub use error::{Error, Result};
pub use graph::{build_incidence, DecisionInstance, IncidenceMatrices, TspInstance};
pub use model::ModelConfig;
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type ParamStore = autodiff::ParamStore<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type AdamState = autodiff::AdamState<f64>;
pub type ModelParams = model::ModelParams<f64>;
