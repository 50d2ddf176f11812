//! Elastic-cloth toolkit: a mass-spring cloth simulator with stretch-test
//! material characterization, and a from-scratch graph neural network that
//! forecasts grasp forces and node positions for cloths of unseen elasticity.

pub mod clothsim;
pub mod eccontext;
pub mod error;
pub mod expbench;
pub mod gnn;
pub mod material;
pub mod tensornet;

pub use error::{Error, Result};
