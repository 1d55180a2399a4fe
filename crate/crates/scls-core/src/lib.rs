//! Simplicial-simplicial regression.
//!
//! Both the response and the predictor are compositional: every row lives on
//! the standard simplex. The expected response is a Markov transition of the
//! predictor, `E(Y|X) = X B`, with a row-stochastic coefficient matrix `B`.
//!
//! Two estimators of `B` are provided:
//!
//! * [`scls`] — simplicial constrained least squares, solved as a convex
//!   quadratic program by the dual active-set method in [`qp`];
//! * [`tflr`] — transformation-free linear regression, the same link fitted
//!   by minimizing the Kullback-Leibler divergence with an EM-style
//!   multiplicative algorithm.
//!
//! [`simplex`] holds the compositional data types, log-ratio and power
//! transformations, divergences and Dirichlet sampling. [`inference`]
//! provides permutation tests, bootstrap coefficient distributions and
//! confidence ellipses on the ternary plane. [`simulation`] is the
//! Monte-Carlo harness (type-I error, power, coefficient discrepancy,
//! timing, cross-validation).
//!
//! With the default `parallel` feature, permutation and Monte-Carlo
//! replicates run on rayon. Results are identical regardless of thread
//! count: every replicate draws from its own seed stream.

pub mod inference;
pub mod io;
mod linalg;
pub mod parallel;
pub mod qp;
pub mod scls;
pub mod simplex;
pub mod simulation;
pub mod tflr;

pub use qp::{QpError, QpSolution, QpStatus, QuadraticProgram};
pub use scls::{CoefficientMatrix, FitError, PredictorWeights, SclsFit};
pub use simplex::{Composition, CompositionMatrix, SimplexError};
pub use tflr::TflrFit;
