//! A desk-scale laboratory for the stochastic thermodynamics of stochastic
//! gradient descent.
//!
//! The crate trains three small models (a two-neuron tanh regression network,
//! its linearized three-parameter cousin, and a linear MNIST classifier) with
//! several minibatching dynamics, computes the analytic minibatch diffusion
//! matrices and linearized stationary-state predictions, and checks them
//! against trajectory statistics: covariance, circulation, entropy production
//! and its fluctuation theorems, and the posterior accuracy of Langevin
//! samplers.
//!
//! Module map:
//!
//! - [`models`]: datasets, the three models and their exact derivatives.
//! - [`engines`]: GD, SGD with and without replacement, the earthquake model,
//!   SGLD and SGWORLD, with seeded minibatch samplers.
//! - [`diffusion`]: WR/WOR diffusion matrices, the WOR effective-loss
//!   perturbation and exhaustive-enumeration oracles.
//! - [`stationary`]: minima, Lyapunov solvers, circulation, entropy rate and
//!   exact-posterior KL divergence.
//! - [`trajstats`]: empirical moments, area matrices, entropy production and
//!   fluctuation-theorem checks.
//! - [`experiment`]: declarative experiment configs, the ensemble runner and
//!   the oracle suite behind the `sgdthermo` binary.
//!
//! Runnable walkthroughs live in `examples/`, one per capability.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod engines;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod stationary;
pub mod trajstats;

pub use error::{Error, Result};
