//! Posterior-regularised Bayesian hierarchical mixture clustering.
//!
//! A tree of mixture weights is grown with a nested Chinese restaurant process,
//! child weights are diffused from their parent with a Dirichlet draw, and data
//! are emitted at the leaves from a shared book of Gaussian kernels. Sibling
//! nodes carry margin vectors, and a hinge penalty on sibling margins is folded
//! into the posterior. Inference is by an augmented MCMC sampler ([`mcmc`]) or
//! by regularised coordinate-ascent VI ([`vi`]).

pub mod error;
pub mod export;
pub mod gauss;
pub mod mcmc;
pub mod metrics;
pub mod model;
pub mod randkit;
pub mod regularizer;
pub mod vi;

pub use error::{Error, Result};
pub use model::{Dataset, Hyperparams, NodeId, PathAssignment, Tree};
