//! Numerical toolkit for stochastic control problems whose cost is defined
//! through a backward SDE (recursive cost).
//!
//! The pipeline is: load a [`problem::Problem`], smooth its coefficients
//! ([`mollifier`]), solve the regularised HJB equation on a grid and read
//! off the feedback policy ([`hjb`]), evaluate costs and simulate the
//! controlled forward-backward system ([`sim`]), and audit the convexity
//! conditions under which the limit control exists ([`convexity`]).
//! [`harness`] strings these together into reproducible studies.

pub mod convexity;
pub mod error;
pub mod harness;
pub mod hjb;
pub mod mollifier;
pub mod problem;
pub mod sim;

pub use error::{Error, Result};
