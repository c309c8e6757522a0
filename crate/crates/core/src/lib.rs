//! Entrywise ℓp low-rank approximation for 1 ≤ p < 2.
//!
//! The crate provides Lewis-weight sampling, randomized column subset
//! selection, a poly(k) reduction to rank exactly k, a p-stable median
//! sketch, and the guess-and-round (1+ε) scheme built on them, plus oracles
//! (brute force, planted and hard instances) for checking every result.

pub mod css;
pub mod error;
pub mod factor;
pub mod fpt;
pub mod io;
pub mod lewis;
pub mod linalg;
pub mod matrix;
pub mod oracle;
pub mod rankreduce;
pub mod rng;
pub mod sketch;
pub mod solvers;

pub use error::{Error, Result};
pub use factor::FactorPair;
pub use matrix::{entrywise_norm, norm_1p, select_columns, ColumnIndexSet, DenseMatrix};
pub use rng::SeededRng;
