use super::regression::{check_p, lp_regression, multi_response_regression};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// A fitted left factor together with the solver convergence flag.
#[derive(Debug, Clone)]
pub struct LeftFactorFit {
    pub left: DenseMatrix,
    pub converged: bool,
}

/// argmin_U ‖UV − A‖_p, row by row. With `constraint_basis` R the factor is
/// restricted to R·U₀, where U₀ minimizes ‖R U₀ V − A‖_p jointly.
///
/// A zero V leaves every U equally good; the zero matrix is returned.
pub fn best_left_factor(
    v: &DenseMatrix,
    a: &DenseMatrix,
    p: f64,
    constraint_basis: Option<&DenseMatrix>,
) -> Result<LeftFactorFit> {
    check_p(p)?;
    if v.cols() != a.cols() {
        return Err(Error::dims(format!(
            "right factor has {} columns, target has {}",
            v.cols(),
            a.cols()
        )));
    }
    let k = v.rows();
    match constraint_basis {
        None => {
            let fit = multi_response_regression(&v.transpose(), &a.transpose(), p)?;
            Ok(LeftFactorFit {
                left: fit.coefficients.transpose(),
                converged: fit.converged,
            })
        }
        Some(r) => {
            if r.rows() != a.rows() {
                return Err(Error::dims(format!(
                    "constraint basis has {} rows, target has {}",
                    r.rows(),
                    a.rows()
                )));
            }
            let (n, d, t) = (a.rows(), a.cols(), r.cols());
            // (R U₀ V)_{ij} = Σ_{a,l} R_{ia} U₀_{al} V_{lj}
            let design = DenseMatrix::from_fn(n * d, t * k, |row, col| {
                let (i, j) = (row / d, row % d);
                let (ai, l) = (col / k, col % k);
                r.get(i, ai) * v.get(l, j)
            });
            let fit = lp_regression(&design, a.data(), p)?;
            let u0 = DenseMatrix::new(t, k, fit.coefficients)?;
            Ok(LeftFactorFit {
                left: r.matmul(&u0)?,
                converged: fit.converged,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::matrix::entrywise_norm;
    use crate::rng::SeededRng;

    fn gaussian(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gaussian())
    }

    #[test]
    fn recovers_planted_left_factor() {
        let mut rng = SeededRng::new(1);
        let u = gaussian(6, 2, &mut rng);
        let v = DenseMatrix::from_fn(2, 5, |i, j| if i == j { 1.0 } else { 0.0 });
        let a = u.matmul(&v).unwrap();
        for p in [1.0, 1.5, 2.0] {
            let fit = best_left_factor(&v, &a, p, None).unwrap();
            assert!(fit.left.sub(&u).unwrap().max_abs() < 1e-8);
        }
    }

    #[test]
    fn zero_right_factor_convention() {
        let mut rng = SeededRng::new(2);
        let a = gaussian(4, 3, &mut rng);
        let fit = best_left_factor(&DenseMatrix::zeros(2, 3), &a, 1.0, None).unwrap();
        assert!(fit.left.is_zero());
        let cost = entrywise_norm(&fit.left.matmul(&DenseMatrix::zeros(2, 3)).unwrap().sub(&a).unwrap(), 1.0).unwrap();
        assert_eq!(cost, entrywise_norm(&a, 1.0).unwrap());
    }

    #[test]
    fn identity_constraint_matches_unconstrained() {
        let mut rng = SeededRng::new(3);
        let v = gaussian(2, 6, &mut rng);
        let a = gaussian(4, 6, &mut rng);
        for p in [1.0, 1.5] {
            let free = best_left_factor(&v, &a, p, None).unwrap();
            let tied = best_left_factor(&v, &a, p, Some(&DenseMatrix::identity(4))).unwrap();
            let e_free = entrywise_norm(&free.left.matmul(&v).unwrap().sub(&a).unwrap(), p).unwrap();
            let e_tied = entrywise_norm(&tied.left.matmul(&v).unwrap().sub(&a).unwrap(), p).unwrap();
            assert!((e_free - e_tied).abs() < 1e-7 * e_free, "p={p}");
            assert!(free.left.sub(&tied.left).unwrap().max_abs() < 1e-5, "p={p}");
        }
    }

    #[test]
    fn constrained_columns_stay_in_span() {
        let mut rng = SeededRng::new(4);
        let r = gaussian(8, 2, &mut rng);
        let v = gaussian(2, 5, &mut rng);
        let a = gaussian(8, 5, &mut rng);
        let fit = best_left_factor(&v, &a, 1.0, Some(&r)).unwrap();
        let q = linalg::column_basis(&r);
        let proj = q.matmul(&q.transpose()).unwrap().matmul(&fit.left).unwrap();
        assert!(proj.sub(&fit.left).unwrap().max_abs() < 1e-8);
    }
}
