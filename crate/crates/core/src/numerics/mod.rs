//! Numerical building blocks shared by every estimator.

pub mod linalg;
pub mod rng;
pub mod special;
pub mod stats;

pub use linalg::{default_ridge, solve_linear, Cholesky, LinearSolution, Lu, Matrix, Vector};
pub use rng::{sample_gamma, RngStream};
pub use special::{digamma, trigamma};
pub use stats::{mean, summary_stats, NeumaierSum, Summary};
