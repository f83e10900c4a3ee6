//! Collapsed Gibbs sampling for finite Gaussian mixtures, a blocked sampler for
//! groups of strongly correlated outlier allocations, and exact analysis of the
//! joint distribution of those allocations.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to double precision, which is what the CLI uses.

pub mod analysis;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod sampler;
pub mod scalar;
pub mod simulate;
pub mod symmat;

pub use error::{Error, Result};
pub use model::{AllocationState, BlockSet, ComponentStats, Dataset, Hyperparameters, Model};
pub use scalar::Scalar;
pub use symmat::{DetFactorization, Matrix, SpdMatrix};

pub type Matrix64 = Matrix<f64>;
pub type SpdMatrix64 = SpdMatrix<f64>;
pub type DetFactorization64 = DetFactorization<f64>;
pub type Dataset64 = Dataset<f64>;
pub type Hyperparameters64 = Hyperparameters<f64>;
pub type Model64 = Model<f64>;
pub type AllocationState64 = AllocationState<f64>;


pub type JointAllocationTable64 = analysis::JointAllocationTable<f64>;
pub type SurfaceSpec64 = analysis::SurfaceSpec<f64>;
