//! ℓp regression, the median-constrained minimum-norm solve and left-factor
//! fitting, all on top of a self-contained simplex.

pub mod left_factor;
pub mod median;
pub mod regression;
pub mod simplex;

pub use left_factor::{best_left_factor, LeftFactorFit};
pub use median::{min_norm_with_median_constraint, MedianSolution, MEDIAN_SUBSET_CAP};
pub use regression::{lp_regression, multi_response_regression, Design, MultiRegression, RegressionResult};
