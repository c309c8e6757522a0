use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, RANK_RTOL};
use crate::matrix::{entrywise_norm, DenseMatrix};

/// A low-rank factorization `left · right` with its ℓp error against the
/// instance it was fitted to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorPair {
    pub left: DenseMatrix,
    pub right: DenseMatrix,
    pub target_rank: usize,
    pub achieved_error_p: f64,
    pub algorithm_tag: String,
    pub seed: u64,
}

impl FactorPair {
    /// Builds the pair and records ‖left·right − a‖_p.
    pub fn evaluate(
        left: DenseMatrix,
        right: DenseMatrix,
        target_rank: usize,
        a: &DenseMatrix,
        p: f64,
        algorithm_tag: &str,
        seed: u64,
    ) -> Result<Self> {
        if left.cols() != right.rows() {
            return Err(Error::dims(format!(
                "left has {} columns, right has {} rows",
                left.cols(),
                right.rows()
            )));
        }
        let achieved_error_p = entrywise_norm(&left.matmul(&right)?.sub(a)?, p)?;
        Ok(FactorPair {
            left,
            right,
            target_rank,
            achieved_error_p,
            algorithm_tag: algorithm_tag.to_string(),
            seed,
        })
    }

    pub fn product(&self) -> DenseMatrix {
        self.left
            .matmul(&self.right)
            .expect("factor dimensions checked at construction")
    }

    /// Numerical rank of left · right.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.product(), RANK_RTOL)
    }

    pub fn inner_dim(&self) -> usize {
        self.left.cols()
    }
}
