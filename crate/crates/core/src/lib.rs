//! Stein method-of-moments and generalized score matching estimators for
//! exponential families, combined across weight functions by generalized
//! method of moments, plus the gamma simulation studies built on them.
//!
//! The layers build on each other in this order: [`numerics`], [`models`],
//! [`weights`], [`moments`], [`gmm`], [`estimators`], [`simulation`] and
//! finally the [`cli`] front end.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod gmm;
pub mod models;
pub mod moments;
pub mod numerics;
pub mod simulation;
pub mod weights;

pub use error::{Error, Result};
pub use exec::Execution;
