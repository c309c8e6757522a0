//! ℓp regression: exact LP for p = 1, least squares for p = 2 and clamped
//! IRLS in between.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simplex::{LinearProgram, LpStatus, Relation};
use crate::error::{Error, Result};
use crate::linalg::{self, LeastSquares};
use crate::matrix::{sum_abs_pow, vector_norm, DenseMatrix};

pub const IRLS_MAX_ITERS: usize = 500;
pub const IRLS_REL_TOL: f64 = 1e-9;
pub const IRLS_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    /// ‖U·coefficients − b‖_p, recomputed from the returned coefficients.
    pub residual_p: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Column-wise regression of a whole response matrix.
#[derive(Debug, Clone)]
pub struct MultiRegression {
    /// r × m coefficient matrix, one column per response column.
    pub coefficients: DenseMatrix,
    /// ℓp residual of each response column.
    pub costs: Vec<f64>,
    pub converged: bool,
}

impl MultiRegression {
    /// Total entrywise ℓp error (Σ costs^p)^{1/p}.
    pub fn total_error(&self, p: f64) -> f64 {
        vector_norm(&self.costs, p)
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} outside [1, 2]")));
    }
    Ok(())
}

/// A design matrix reduced to an orthonormal basis of its column space.
/// Regression runs on the basis (full column rank, no redundant LP rows)
/// and coefficients are mapped back with the minimum-norm lift.
pub struct Design {
    basis: DenseMatrix,
    lift: DenseMatrix,
    cols: usize,
    rows: usize,
}

impl Design {
    pub fn new(u: &DenseMatrix) -> Self {
        let basis = linalg::column_basis(u);
        let lift = if basis.cols() == 0 {
            DenseMatrix::zeros(u.cols(), 0)
        } else {
            let ls = LeastSquares::new(u);
            let cols: Vec<Vec<f64>> = (0..basis.cols()).map(|j| ls.solve(&basis.column(j))).collect();
            DenseMatrix::from_columns(u.cols(), &cols)
        };
        Design {
            basis,
            lift,
            cols: u.cols(),
            rows: u.rows(),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn solve(&self, b: &[f64], p: f64) -> RegressionResult {
        assert_eq!(b.len(), self.rows, "response length");
        if self.rank() == 0 {
            return RegressionResult {
                coefficients: vec![0.0; self.cols],
                residual_p: vector_norm(b, p),
                converged: true,
                iterations: 0,
            };
        }
        let (y, converged, iterations) = if p == 1.0 {
            l1_fit(&self.basis, b)
        } else if p == 2.0 {
            (self.basis.transpose().matvec(b), true, 1)
        } else {
            irls_fit(&self.basis, b, p)
        };
        let coefficients = self.lift.matvec(&y);
        RegressionResult {
            residual_p: residual_norm(&self.basis, &y, b, p),
            coefficients,
            converged,
            iterations,
        }
    }
}

fn residual(u: &DenseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    u.matvec(x).iter().zip(b).map(|(a, c)| a - c).collect()
}

fn residual_norm(u: &DenseMatrix, x: &[f64], b: &[f64], p: f64) -> f64 {
    vector_norm(&residual(u, x, b), p)
}

/// ℓ1 regression through its dual: max bᵀy s.t. Uᵀy = 0, |y| ≤ 1. With
/// y = z − 1 the LP has one row per design column and box-bounded variables;
/// the primal coefficients are the negated row multipliers.
fn l1_fit(q: &DenseMatrix, b: &[f64]) -> (Vec<f64>, bool, usize) {
    let r = q.cols();
    let mut lp = LinearProgram::new(b.iter().map(|v| -v).collect());
    for (i, &bi) in b.iter().enumerate() {
        lp.set_upper(i, 2.0);
        if bi > 0.0 {
            lp.start_at_upper(i);
        }
    }
    for j in 0..r {
        let col = q.column(j);
        let rhs: f64 = col.iter().sum();
        lp.add_dense(col, Relation::Eq, rhs);
    }
    let sol = lp.solve();
    if sol.status == LpStatus::Optimal {
        let x: Vec<f64> = sol.duals.iter().map(|v| -v).collect();
        let lp_value = -sol.objective - b.iter().sum::<f64>();
        let achieved = sum_abs_pow(&residual(q, &x, b), 1.0);
        let scale = sum_abs_pow(b, 1.0).max(1e-300);
        if (achieved - lp_value).abs() <= 1e-9 * scale {
            return (x, true, sol.iterations);
        }
    }
    l1_fit_primal(q, b)
}

/// Direct formulation min Σ(e⁺ + e⁻) s.t. Ux⁺ − Ux⁻ + e⁺ − e⁻ = b.
fn l1_fit_primal(q: &DenseMatrix, b: &[f64]) -> (Vec<f64>, bool, usize) {
    let (n, r) = (q.rows(), q.cols());
    let nv = 2 * r + 2 * n;
    let mut cost = vec![0.0; nv];
    for c in cost[2 * r..].iter_mut() {
        *c = 1.0;
    }
    let mut lp = LinearProgram::new(cost);
    for i in 0..n {
        let mut row = vec![0.0; nv];
        for j in 0..r {
            row[j] = q.get(i, j);
            row[r + j] = -q.get(i, j);
        }
        row[2 * r + i] = 1.0;
        row[2 * r + n + i] = -1.0;
        lp.add_dense(row, Relation::Eq, b[i]);
    }
    let sol = lp.solve();
    let x: Vec<f64> = (0..r).map(|j| sol.x[j] - sol.x[r + j]).collect();
    (x, sol.status == LpStatus::Optimal, sol.iterations)
}

/// Weighted least squares on a full-column-rank design via normal equations,
/// falling back to SVD when the Cholesky factorization fails.
fn weighted_ls(q: &DenseMatrix, b: &[f64], w: &[f64]) -> Vec<f64> {
    let r = q.cols();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(r, r);
    let mut rhs = nalgebra::DVector::<f64>::zeros(r);
    for i in 0..q.rows() {
        let row = q.row(i);
        for a in 0..r {
            let wa = w[i] * row[a];
            rhs[a] += wa * b[i];
            for c in a..r {
                gram[(a, c)] += wa * row[c];
            }
        }
    }
    for a in 0..r {
        for c in 0..a {
            gram[(a, c)] = gram[(c, a)];
        }
    }
    if let Some(ch) = gram.clone().cholesky() {
        return ch.solve(&rhs).iter().copied().collect();
    }
    let scaled = DenseMatrix::from_fn(q.rows(), r, |i, j| q.get(i, j) * w[i].sqrt());
    let sb: Vec<f64> = b.iter().zip(w).map(|(v, wi)| v * wi.sqrt()).collect();
    linalg::least_squares(&scaled, &sb)
}

/// IRLS with weights max(|res|, ε)^{p−2}; stops on relative objective change
/// below `IRLS_REL_TOL` or after `IRLS_MAX_ITERS` iterations.
fn irls_fit(q: &DenseMatrix, b: &[f64], p: f64) -> (Vec<f64>, bool, usize) {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (IRLS_SMOOTHING * scale).max(1e-300);
    let mut x = q.transpose().matvec(b);
    let mut obj = sum_abs_pow(&residual(q, &x, b), p);
    let mut best = (x.clone(), obj);
    for it in 1..=IRLS_MAX_ITERS {
        let res = residual(q, &x, b);
        let w: Vec<f64> = res.iter().map(|v| v.abs().max(floor).powf(p - 2.0)).collect();
        x = weighted_ls(q, b, &w);
        let next = sum_abs_pow(&residual(q, &x, b), p);
        if next < best.1 {
            best = (x.clone(), next);
        }
        let change = (obj - next).abs();
        obj = next;
        if change <= IRLS_REL_TOL * obj.max(f64::MIN_POSITIVE) || obj == 0.0 {
            return (best.0, true, it);
        }
    }
    (best.0, false, IRLS_MAX_ITERS)
}

/// min_x ‖Ux − b‖_p.
pub fn lp_regression(u: &DenseMatrix, b: &[f64], p: f64) -> Result<RegressionResult> {
    check_p(p)?;
    if u.rows() != b.len() {
        return Err(Error::dims(format!(
            "design has {} rows, response has {}",
            u.rows(),
            b.len()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite response"));
    }
    if u.rows() == 0 {
        return Err(Error::invalid("regression needs at least one row"));
    }
    Ok(Design::new(u).solve(b, p))
}

/// Regresses every column of `b` onto `u`.
pub fn multi_response_regression(u: &DenseMatrix, b: &DenseMatrix, p: f64) -> Result<MultiRegression> {
    check_p(p)?;
    if u.rows() != b.rows() {
        return Err(Error::dims(format!(
            "design has {} rows, responses have {}",
            u.rows(),
            b.rows()
        )));
    }
    let design = Design::new(u);
    let fits: Vec<RegressionResult> = (0..b.cols())
        .into_par_iter()
        .map(|j| design.solve(&b.column(j), p))
        .collect();
    let columns: Vec<Vec<f64>> = fits.iter().map(|f| f.coefficients.clone()).collect();
    Ok(MultiRegression {
        coefficients: DenseMatrix::from_columns(u.cols(), &columns),
        costs: fits.iter().map(|f| f.residual_p).collect(),
        converged: fits.iter().all(|f| f.converged),
    })
}
