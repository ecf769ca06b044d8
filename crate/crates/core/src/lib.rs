pub mod env;
pub mod error;
pub mod io;
pub mod moea;
pub mod nn;
pub mod policy;
pub mod scalar;
pub mod train;
pub mod vrptw;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by the command-line tools and checkpoints.
pub type Real = f32;
pub type Instance = vrptw::Instance<Real>;
pub type Objectives = vrptw::ObjectiveValues<Real>;
pub type WeightVector = env::WeightVector<Real>;
pub type PolicyNet = policy::PolicyNet<Real>;
pub type Individual = moea::Individual<Real>;
pub type Population = moea::Population<Real>;
