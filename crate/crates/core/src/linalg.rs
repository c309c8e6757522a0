//! ℓ2 linear algebra helpers built on a thin SVD.

use faer::Mat;

use crate::matrix::DenseMatrix;

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Thin SVD A = U·diag(s)·Vᵀ with singular values in non-increasing order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// n × m, m = min(n, d).
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    /// d × m.
    pub v: DenseMatrix,
}

impl ThinSvd {
    /// Number of singular values above `rtol · σ_max`.
    pub fn rank(&self, rtol: f64) -> usize {
        match self.s.first() {
            Some(&top) if top > 0.0 => self.s.iter().filter(|&&v| v > rtol * top).count(),
            _ => 0,
        }
    }
}

pub fn thin_svd(a: &DenseMatrix) -> ThinSvd {
    let (n, d) = (a.rows(), a.cols());
    let m = n.min(d);
    if m == 0 {
        return ThinSvd {
            u: DenseMatrix::zeros(n, 0),
            s: Vec::new(),
            v: DenseMatrix::zeros(d, 0),
        };
    }
    let mat = Mat::<f64>::from_fn(n, d, |i, j| a.get(i, j));
    let svd = mat.thin_svd().expect("SVD iteration failed to converge");
    let (su, ss, sv) = (svd.U(), svd.S(), svd.V());
    let sc = ss.column_vector();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| sc[y].total_cmp(&sc[x]).then(x.cmp(&y)));
    ThinSvd {
        u: DenseMatrix::from_fn(n, m, |i, j| su[(i, order[j])]),
        s: order.iter().map(|&j| sc[j].max(0.0)).collect(),
        v: DenseMatrix::from_fn(d, m, |i, j| sv[(i, order[j])]),
    }
}

pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    thin_svd(a).s
}

/// Number of singular values above `rtol · σ_max`.
pub fn numerical_rank(a: &DenseMatrix, rtol: f64) -> usize {
    thin_svd(a).rank(rtol)
}

/// Rank-k truncated SVD as a factor pair (U_k Σ_k, V_kᵀ). Missing
/// components (k above min(n, d)) are zero.
pub fn truncated_svd(a: &DenseMatrix, k: usize) -> (DenseMatrix, DenseMatrix) {
    let (n, d) = (a.rows(), a.cols());
    let svd = thin_svd(a);
    let kk = k.min(svd.s.len());
    let left = DenseMatrix::from_fn(n, k, |i, j| if j < kk { svd.u.get(i, j) * svd.s[j] } else { 0.0 });
    let right = DenseMatrix::from_fn(k, d, |i, j| if i < kk { svd.v.get(j, i) } else { 0.0 });
    (left, right)
}

/// Orthonormal basis of the column space (numerical rank by `RANK_RTOL`).
pub fn column_basis(a: &DenseMatrix) -> DenseMatrix {
    let svd = thin_svd(a);
    let rank = svd.rank(RANK_RTOL);
    DenseMatrix::from_fn(a.rows(), rank, |i, j| svd.u.get(i, j))
}

/// Minimum-norm least-squares solver for a fixed design, reusable across
/// right-hand sides.
pub struct LeastSquares {
    /// r × n pseudo-inverse.
    pinv: DenseMatrix,
}

impl LeastSquares {
    pub fn new(u: &DenseMatrix) -> Self {
        let (n, r) = (u.rows(), u.cols());
        let svd = thin_svd(u);
        let rank = svd.rank(RANK_RTOL);
        let pinv = DenseMatrix::from_fn(r, n, |i, j| {
            (0..rank).map(|t| svd.v.get(i, t) * svd.u.get(j, t) / svd.s[t]).sum()
        });
        LeastSquares { pinv }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.pinv.matvec(b)
    }
}

/// Minimum-norm least squares for a single right-hand side.
pub fn least_squares(u: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    LeastSquares::new(u).solve(b)
}

/// ℓ2 leverage scores diag(A (AᵀA)⁺ Aᵀ) through the left singular vectors.
pub fn leverage_scores(a: &DenseMatrix) -> Vec<f64> {
    let svd = thin_svd(a);
    let rank = svd.rank(RANK_RTOL);
    (0..a.rows())
        .map(|i| (0..rank).map(|j| svd.u.get(i, j).powi(2)).sum())
        .collect()
}
