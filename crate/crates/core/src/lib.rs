//! Determinantal point process toolkit for diverse batch selection:
//! kernel construction, exact and MCMC k-DPP sampling, conditioning, mode
//! approximation, and batch active-learning strategies with an experiment
//! harness.

pub mod data;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod learner;
pub mod linalg;
pub mod mode;
pub mod sampler;
pub mod scalar;
pub mod strategies;

pub use error::{Error, Result};
pub use sampler::Subset;
pub use scalar::Scalar;

/// Concrete `f64` aliases for the generic core types.
pub type Similarity64 = kernel::SimilarityMatrix<f64>;
pub type Scores64 = kernel::ScoreVector<f64>;
pub type Kernel64 = kernel::KernelMatrix<f64>;
pub type Dpp64 = sampler::DppDistribution<f64>;
pub type Relaxation64 = mode::RelaxationPoint<f64>;
pub type Mode64 = mode::ModeResult<f64>;

/// Concrete `f32` aliases.
pub type Similarity32 = kernel::SimilarityMatrix<f32>;
pub type Scores32 = kernel::ScoreVector<f32>;
pub type Kernel32 = kernel::KernelMatrix<f32>;
pub type Dpp32 = sampler::DppDistribution<f32>;
pub type Relaxation32 = mode::RelaxationPoint<f32>;
pub type Mode32 = mode::ModeResult<f32>;
