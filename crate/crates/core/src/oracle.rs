//! Ground truth for tests and reports: planted and hard instances, a
//! brute-force upper bound on OPT and the ℓ2 SVD baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, numerical_rank, truncated_svd, RANK_RTOL};
use crate::matrix::{entrywise_norm, sum_abs_pow, vector_norm, DenseMatrix};
use crate::rng::SeededRng;
use crate::solvers::regression::check_p;
use crate::solvers::simplex::{LinearProgram, LpStatus, Relation};
use crate::solvers::{best_left_factor, multi_response_regression};

pub const DEFAULT_RESTARTS: usize = 50;
const MAX_ALTERNATIONS: usize = 100;
const STALL_RTOL: f64 = 1e-10;
const STALL_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Standard Cauchy entries: heavy tails that hurt ℓ2 fits.
    Cauchy,
}

/// A = U*·V* + E with ‖E‖_p recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedInstance {
    pub a: DenseMatrix,
    pub u_star: DenseMatrix,
    pub v_star: DenseMatrix,
    pub noise_norm_p: f64,
    pub noise: NoiseKind,
    pub p: f64,
    pub k: usize,
    pub seed: u64,
}

impl PlantedInstance {
    /// The planted factorization rescaled so every row of V* has unit ℓp
    /// norm (U* absorbs the scale). Zero rows are left untouched.
    pub fn balanced_factors(&self) -> (DenseMatrix, DenseMatrix) {
        balance(&self.u_star, &self.v_star, self.p)
    }
}

/// Rescales (U, V) → (U·D, D⁻¹·V) with D = diag(‖V_j‖_p).
pub fn balance(u: &DenseMatrix, v: &DenseMatrix, p: f64) -> (DenseMatrix, DenseMatrix) {
    let norms: Vec<f64> = (0..v.rows()).map(|j| vector_norm(v.row(j), p)).collect();
    let scale = |j: usize| if norms[j] > 0.0 { norms[j] } else { 1.0 };
    (
        DenseMatrix::from_fn(u.rows(), u.cols(), |i, j| u.get(i, j) * scale(j)),
        DenseMatrix::from_fn(v.rows(), v.cols(), |i, j| v.get(i, j) / scale(i)),
    )
}

pub fn planted_instance(n: usize, d: usize, k: usize, noise_scale: f64, p: f64, rng: &mut SeededRng) -> Result<PlantedInstance> {
    planted_instance_with_noise(n, d, k, noise_scale, p, NoiseKind::Gaussian, rng)
}

pub fn planted_instance_with_noise(
    n: usize,
    d: usize,
    k: usize,
    noise_scale: f64,
    p: f64,
    noise: NoiseKind,
    rng: &mut SeededRng,
) -> Result<PlantedInstance> {
    check_p(p)?;
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::invalid("noise scale must be finite and non-negative"));
    }
    let seed = rng.seed();
    let u_star = DenseMatrix::from_fn(n, k, |_, _| rng.gaussian());
    let v_star = DenseMatrix::from_fn(k, d, |_, _| rng.gaussian());
    let e = DenseMatrix::from_fn(n, d, |_, _| {
        let z = match noise {
            NoiseKind::Gaussian => rng.gaussian(),
            NoiseKind::Cauchy => (std::f64::consts::PI * (rng.uniform_open() - 0.5)).tan(),
        };
        noise_scale * z
    });
    let clean = u_star.matmul(&v_star)?;
    let a = clean.add(&e)?;
    let noise_norm_p = entrywise_norm(&a.sub(&clean)?, p)?;
    Ok(PlantedInstance {
        a,
        u_star,
        v_star,
        noise_norm_p,
        noise,
        p,
        k,
        seed,
    })
}

/// M = [G; I_n] with G a k × n standard Gaussian block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardInstance {
    pub m: DenseMatrix,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
}

impl HardInstance {
    /// Σ|·|^p error of the rank-k candidate that keeps the Gaussian block
    /// and zeroes the identity: exactly n.
    pub fn opt_upper_bound_pow(&self) -> f64 {
        self.n as f64
    }

    /// The rank-k candidate [G; 0].
    pub fn upper_bound_candidate(&self) -> DenseMatrix {
        let k = self.k;
        DenseMatrix::from_fn(self.k + self.n, self.n, |i, j| if i < k { self.m.get(i, j) } else { 0.0 })
    }
}

pub fn hard_instance(k: usize, n: usize, rng: &mut SeededRng) -> HardInstance {
    let seed = rng.seed();
    let g = DenseMatrix::from_fn(k, n, |_, _| rng.gaussian());
    let m = DenseMatrix::from_fn(k + n, n, |i, j| {
        if i < k {
            g.get(i, j)
        } else if i - k == j {
            1.0
        } else {
            0.0
        }
    });
    HardInstance { m, k, n, seed }
}

/// ℓp error of the rank-k truncated SVD.
pub fn svd_baseline(a: &DenseMatrix, k: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    let (l, r) = truncated_svd(a, k);
    entrywise_norm(&l.matmul(&r)?.sub(a)?, p)
}

/// Alternating ℓp fits from a right-factor start. Returns the best
/// (error, U, V) seen.
fn alternate(a: &DenseMatrix, mut v: DenseMatrix, p: f64) -> Result<(f64, DenseMatrix, DenseMatrix)> {
    let mut best: Option<(f64, DenseMatrix, DenseMatrix)> = None;
    let mut stall = 0;
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_ALTERNATIONS {
        let u = best_left_factor(&v, a, p, None)?.left;
        let fit = multi_response_regression(&u, a, p)?;
        let err = fit.total_error(p);
        v = fit.coefficients;
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, u, v.clone()));
        }
        if prev.is_finite() && prev - err <= STALL_RTOL * prev {
            stall += 1;
            if stall >= STALL_ROUNDS {
                break;
            }
        } else {
            stall = 0;
        }
        prev = prev.min(err);
        if err == 0.0 {
            break;
        }
    }
    Ok(best.expect("at least one alternation"))
}

/// Best rank-k factorization found by alternating minimization from the
/// SVD start, `restarts` random starts and a warm start from the rank-(k−1)
/// result. An upper bound on OPT, not a certificate.
pub fn brute_force_factor(
    a: &DenseMatrix,
    k: usize,
    p: f64,
    restarts: usize,
    rng: &mut SeededRng,
) -> Result<(f64, DenseMatrix, DenseMatrix)> {
    check_p(p)?;
    let (n, d) = (a.rows(), a.cols());
    if k == 0 {
        return Ok((entrywise_norm(a, p)?, DenseMatrix::zeros(n, 0), DenseMatrix::zeros(0, d)));
    }
    let (sl, sr) = truncated_svd(a, k);
    let svd_err = entrywise_norm(&sl.matmul(&sr)?.sub(a)?, p)?;
    if k >= n.min(d) || numerical_rank(a, RANK_RTOL) <= k || svd_err == 0.0 {
        return Ok((svd_err, sl, sr));
    }
    let mut starts = vec![sr.clone()];
    let lower = brute_force_factor(a, k - 1, p, restarts, &mut rng.split())?;
    let mut warm = lower.2.clone();
    let mut extra = rng.split();
    let pad: Vec<f64> = (0..d).map(|_| extra.gaussian()).collect();
    warm = DenseMatrix::from_fn(k, d, |i, j| if i < k - 1 { warm.get(i, j) } else { pad[j] });
    starts.push(warm);
    for _ in 0..restarts {
        starts.push(DenseMatrix::from_fn(k, d, |_, _| rng.gaussian()));
    }
    let runs: Vec<(f64, DenseMatrix, DenseMatrix)> =
        starts.into_par_iter().map(|v| alternate(a, v, p)).collect::<Result<_>>()?;
    let mut best = (svd_err, sl, sr);
    let lower_padded = (
        lower.0,
        DenseMatrix::from_fn(n, k, |i, j| if j < k - 1 { lower.1.get(i, j) } else { 0.0 }),
        DenseMatrix::from_fn(k, d, |i, j| if i < k - 1 { lower.2.get(i, j) } else { 0.0 }),
    );
    for cand in runs.into_iter().chain(std::iter::once(lower_padded)) {
        if cand.0 < best.0 {
            best = cand;
        }
    }
    if k + 1 == n.min(d) {
        let exact = rank_deficiency_one(a, p, restarts, rng)?;
        if exact < best.0 {
            best.0 = exact;
        }
    }
    Ok(best)
}

/// Upper bound on min over rank-k B of ‖B − A‖_p.
pub fn brute_force_opt(a: &DenseMatrix, k: usize, p: f64, restarts: usize, rng: &mut SeededRng) -> Result<f64> {
    Ok(brute_force_factor(a, k, p, restarts, rng)?.0)
}

/// min over rank-(d−1) B of ‖B − A‖_p for tall A (n ≥ d), which equals
/// min_{‖x‖_{p*} = 1} ‖Ax‖_p. At p = 1 this is d linear programs
/// (x_j = 1, |x_i| ≤ 1); otherwise projected gradient from several starts.
pub fn rank_deficiency_one(a: &DenseMatrix, p: f64, restarts: usize, rng: &mut SeededRng) -> Result<f64> {
    check_p(p)?;
    let a = if a.rows() < a.cols() { a.transpose() } else { a.clone() };
    if p == 1.0 {
        return Ok((0..a.cols())
            .map(|j| sup_norm_ball_l1(&a, j))
            .fold(f64::INFINITY, f64::min));
    }
    let q = p / (p - 1.0);
    let mut best = f64::INFINITY;
    for _ in 0..restarts.max(1) {
        let x0: Vec<f64> = (0..a.cols()).map(|_| rng.gaussian()).collect();
        best = best.min(dual_sphere_descent(&a, p, q, x0));
    }
    Ok(best)
}

/// min ‖Ax‖_1 subject to x_j = 1 and |x_i| ≤ 1.
fn sup_norm_ball_l1(a: &DenseMatrix, j: usize) -> f64 {
    let (n, d) = (a.rows(), a.cols());
    let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
    let m = others.len();
    // Variables: y⁺, y⁻ ∈ [0, 1] per free coordinate, then e⁺, e⁻ ≥ 0 per row.
    let nv = 2 * m + 2 * n;
    let mut cost = vec![0.0; nv];
    for c in cost[2 * m..].iter_mut() {
        *c = 1.0;
    }
    let mut lp = LinearProgram::new(cost);
    for t in 0..2 * m {
        lp.set_upper(t, 1.0);
    }
    for i in 0..n {
        let mut terms = Vec::with_capacity(2 * m + 2);
        for (t, &c) in others.iter().enumerate() {
            terms.push((t, a.get(i, c)));
            terms.push((m + t, -a.get(i, c)));
        }
        terms.push((2 * m + i, -1.0));
        terms.push((2 * m + n + i, 1.0));
        lp.add_sparse(&terms, Relation::Eq, -a.get(i, j));
    }
    let sol = lp.solve();
    if sol.status != LpStatus::Optimal {
        return f64::INFINITY;
    }
    let x: Vec<f64> = (0..d)
        .map(|c| match others.iter().position(|&o| o == c) {
            Some(t) => sol.x[t] - sol.x[m + t],
            None => 1.0,
        })
        .collect();
    let scale = x.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    sum_abs_pow(&a.matvec(&x), 1.0) / scale
}

/// Minimizes g(x) = ‖Ax‖_p^p / ‖x‖_q^p by normalized gradient steps with
/// backtracking, keeping x on the unit q-sphere.
fn dual_sphere_descent(a: &DenseMatrix, p: f64, q: f64, x0: Vec<f64>) -> f64 {
    let normalize = |x: &[f64]| -> Vec<f64> {
        let s = vector_norm(x, q);
        x.iter().map(|v| v / s).collect()
    };
    let value = |x: &[f64]| vector_norm(&a.matvec(x), p) / vector_norm(x, q);
    let mut x = normalize(&x0);
    let mut f = value(&x);
    let mut step = 0.1;
    for _ in 0..2000 {
        let ax = a.matvec(&x);
        let w: Vec<f64> = ax.iter().map(|v| v.signum() * v.abs().powf(p - 1.0)).collect();
        let g_num = a.transpose().matvec(&w);
        let num = sum_abs_pow(&ax, p);
        let dq: Vec<f64> = x.iter().map(|v| v.signum() * v.abs().powf(q - 1.0)).collect();
        // ∇(‖Ax‖_p^p / ‖x‖_q^p) at ‖x‖_q = 1.
        let grad: Vec<f64> = g_num.iter().zip(&dq).map(|(g, h)| p * g - p * num * h).collect();
        let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let cand: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v - step * g / gnorm).collect();
            let cand = normalize(&cand);
            let fc = value(&cand);
            if fc < f {
                x = cand;
                f = fc;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    f
}

/// Least-squares coefficients X with U·X ≈ A (minimum norm).
pub fn ls_right_factor(u: &DenseMatrix, a: &DenseMatrix) -> DenseMatrix {
    let cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| least_squares(u, &a.column(j))).collect();
    DenseMatrix::from_columns(u.cols(), &cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_records_noise() {
        let mut rng = SeededRng::new(1);
        let inst = planted_instance(10, 12, 2, 0.3, 1.0, &mut rng).unwrap();
        let resid = inst.a.sub(&inst.u_star.matmul(&inst.v_star).unwrap()).unwrap();
        let again = entrywise_norm(&resid, 1.0).unwrap();
        assert!((again - inst.noise_norm_p).abs() <= 1e-9 * again);
        let clean = planted_instance(10, 12, 2, 0.0, 1.0, &mut SeededRng::new(1)).unwrap();
        assert_eq!(clean.noise_norm_p, 0.0);
        assert_eq!(numerical_rank(&clean.a, RANK_RTOL), 2);
        let twin = planted_instance(10, 12, 2, 0.3, 1.0, &mut SeededRng::new(1)).unwrap();
        assert_eq!(twin.a, inst.a);
    }

    #[test]
    fn balanced_rows_are_unit() {
        let inst = planted_instance(6, 9, 2, 0.0, 1.5, &mut SeededRng::new(2)).unwrap();
        let (u, v) = inst.balanced_factors();
        for j in 0..2 {
            assert!((vector_norm(v.row(j), 1.5) - 1.0).abs() < 1e-12);
        }
        assert!(u.matmul(&v).unwrap().sub(&inst.a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn hard_instance_structure() {
        let h = hard_instance(3, 5, &mut SeededRng::new(3));
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(h.m.get(3 + i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let cand = h.upper_bound_candidate();
        assert!(numerical_rank(&cand, RANK_RTOL) <= 3);
        let pow = sum_abs_pow(cand.sub(&h.m).unwrap().data(), 1.0);
        assert_eq!(pow, h.opt_upper_bound_pow());
        assert_eq!(hard_instance(3, 5, &mut SeededRng::new(3)).m, h.m);
    }

    #[test]
    fn diagonal_example() {
        let a = DenseMatrix::from_rows(&[vec![10.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let opt = brute_force_opt(&a, 1, 1.0, 10, &mut SeededRng::new(4)).unwrap();
        assert!((opt - 1.0).abs() < 1e-9, "{opt}");
        assert_eq!(brute_force_opt(&a, 2, 1.0, 10, &mut SeededRng::new(4)).unwrap(), 0.0);
    }

    #[test]
    fn exact_rank_is_zero() {
        let inst = planted_instance(8, 7, 2, 0.0, 1.0, &mut SeededRng::new(5)).unwrap();
        let opt = brute_force_opt(&inst.a, 2, 1.0, 5, &mut SeededRng::new(5)).unwrap();
        assert!(opt <= 1e-9 * entrywise_norm(&inst.a, 1.0).unwrap());
    }

    #[test]
    fn dominated_by_svd_and_monotone() {
        let mut rng = SeededRng::new(6);
        for _ in 0..10 {
            let a = DenseMatrix::from_fn(6, 5, |_, _| rng.gaussian());
            let mut prev = f64::INFINITY;
            for k in 1..=3 {
                let opt = brute_force_opt(&a, k, 1.0, 5, &mut rng).unwrap();
                let svd = svd_baseline(&a, k, 1.0).unwrap();
                assert!(opt <= svd + 1e-12);
                let nd = 30.0f64;
                assert!(svd <= nd.powf(0.5) * opt * 1.1);
                assert!(opt <= prev + 1e-12);
                prev = opt;
            }
        }
    }

    #[test]
    fn rank_deficiency_one_matches_alternation() {
        let mut rng = SeededRng::new(7);
        for p in [1.0, 1.5] {
            let a = DenseMatrix::from_fn(6, 3, |_, _| rng.gaussian());
            let exact = rank_deficiency_one(&a, p, 10, &mut rng).unwrap();
            let (alt, u, v) = brute_force_factor(&a, 2, p, 20, &mut rng).unwrap();
            let _ = (u, v);
            assert!(exact <= alt + 1e-9);
            assert!(alt <= exact * 1.05, "p={p}: alternating {alt} vs exact {exact}");
        }
    }
}
