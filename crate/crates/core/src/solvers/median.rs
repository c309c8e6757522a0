//! Minimum-norm right-factor column under a sketched median constraint.
//!
//! `med(Mv − s) ≤ c·med_p` holds exactly when at least h = ⌈r/2⌉ residual
//! coordinates are within `c·med_p`, so the problem is solved by enumerating
//! the h-subsets T of coordinates and minimizing ‖v‖_p subject to
//! `|(Mv − s)_j| ≤ c·med_p` for j ∈ T. Each subproblem is an LP for p = 1
//! and a small convex program (log-barrier Newton) otherwise.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::regression::check_p;
use super::simplex::{LinearProgram, LpStatus, Relation};
use crate::error::{Error, Result};
use crate::matrix::{vector_norm, DenseMatrix};
use crate::sketch::{med_p, median_abs};

/// Largest sketch dimension for which subsets are enumerated.
pub const MEDIAN_SUBSET_CAP: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSolution {
    pub v: Vec<f64>,
    pub norm_p: f64,
    /// med(Mv − s) / med_p for the returned v.
    pub sketched_cost: f64,
    pub subsets_solved: usize,
}

/// min ‖v‖_p subject to med(Mv − s)/med_p ≤ c. `None` when no subset is
/// feasible.
pub fn min_norm_with_median_constraint(
    m: &DenseMatrix,
    s: &[f64],
    c: f64,
    p: f64,
) -> Result<Option<MedianSolution>> {
    check_p(p)?;
    let medp = med_p(p)?.value;
    min_norm_with_median_constraint_scaled(m, s, c, p, medp, MEDIAN_SUBSET_CAP)
}

/// As [`min_norm_with_median_constraint`] with an explicit med_p value and
/// enumeration cap.
pub fn min_norm_with_median_constraint_scaled(
    m: &DenseMatrix,
    s: &[f64],
    c: f64,
    p: f64,
    medp: f64,
    cap: usize,
) -> Result<Option<MedianSolution>> {
    let (r, k) = (m.rows(), m.cols());
    if r == 0 {
        return Err(Error::invalid("median constraint needs at least one row"));
    }
    if s.len() != r {
        return Err(Error::dims(format!("M has {r} rows, s has {}", s.len())));
    }
    if !(c >= 0.0) {
        return Err(Error::invalid(format!("cost bound {c} must be nonnegative")));
    }
    if r > cap {
        return Err(Error::BudgetExceeded(format!(
            "median-constrained solve with r = {r} exceeds the subset cap {cap}"
        )));
    }
    let gamma = c * medp;
    let h = r.div_ceil(2);
    let finish = |v: Vec<f64>, solved: usize| -> Result<MedianSolution> {
        let res: Vec<f64> = m.matvec(&v).iter().zip(s).map(|(a, b)| a - b).collect();
        Ok(MedianSolution {
            norm_p: vector_norm(&v, p),
            sketched_cost: median_abs(&res)? / medp,
            v,
            subsets_solved: solved,
        })
    };

    if median_abs(s)? <= gamma {
        return finish(vec![0.0; k], 0).map(Some);
    }
    if k == 0 {
        return Ok(None);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut solved = 0;
    for subset in (0..r).combinations(h) {
        let mt = m.select_rows(&subset);
        let st: Vec<f64> = subset.iter().map(|&j| s[j]).collect();
        solved += 1;
        if let Some(v) = min_norm_in_slab(&mt, &st, gamma, p) {
            let norm = vector_norm(&v, p);
            if best.as_ref().is_none_or(|(_, b)| norm < *b) {
                best = Some((v, norm));
            }
        }
    }
    match best {
        Some((v, _)) => finish(v, solved).map(Some),
        None => Ok(None),
    }
}

/// min ‖v‖_1 s.t. |Mv − s| ≤ γ, as an LP over v = v⁺ − v⁻.
fn l1_in_slab(m: &DenseMatrix, s: &[f64], gamma: f64) -> Option<Vec<f64>> {
    let k = m.cols();
    let mut lp = LinearProgram::new(vec![1.0; 2 * k]);
    for (j, &sj) in s.iter().enumerate() {
        let row = m.row(j);
        let mut coeffs: Vec<f64> = row.to_vec();
        coeffs.extend(row.iter().map(|v| -v));
        lp.add_dense(coeffs.clone(), Relation::Le, sj + gamma);
        lp.add_dense(coeffs, Relation::Ge, sj - gamma);
    }
    let sol = lp.solve();
    (sol.status == LpStatus::Optimal).then(|| (0..k).map(|i| sol.x[i] - sol.x[k + i]).collect())
}

/// A point maximizing the uniform slack t in |Mv − s| ≤ γ − t.
fn slab_center(m: &DenseMatrix, s: &[f64], gamma: f64) -> Option<(Vec<f64>, f64)> {
    let k = m.cols();
    let mut cost = vec![0.0; 2 * k + 1];
    cost[2 * k] = -1.0;
    let mut lp = LinearProgram::new(cost);
    lp.set_upper(2 * k, gamma);
    for (j, &sj) in s.iter().enumerate() {
        let row = m.row(j);
        let mut up: Vec<f64> = row.to_vec();
        up.extend(row.iter().map(|v| -v));
        let mut down: Vec<f64> = up.iter().map(|v| -v).collect();
        up.push(1.0);
        down.push(1.0);
        lp.add_dense(up, Relation::Le, sj + gamma);
        lp.add_dense(down, Relation::Le, gamma - sj);
    }
    let sol = lp.solve();
    (sol.status == LpStatus::Optimal)
        .then(|| ((0..k).map(|i| sol.x[i] - sol.x[k + i]).collect(), sol.x[2 * k]))
}

fn min_norm_in_slab(m: &DenseMatrix, s: &[f64], gamma: f64, p: f64) -> Option<Vec<f64>> {
    let v1 = l1_in_slab(m, s, gamma)?;
    if p == 1.0 {
        return Some(v1);
    }
    let Some((center, slack)) = slab_center(m, s, gamma) else {
        return Some(v1);
    };
    if slack <= 1e-9 * gamma.max(f64::MIN_POSITIVE) {
        return Some(v1);
    }
    let v = barrier_min_norm(m, s, gamma, p, center);
    if strictly_inside(m, s, gamma, &v) && vector_norm(&v, p) < vector_norm(&v1, p) {
        Some(v)
    } else {
        Some(v1)
    }
}

fn strictly_inside(m: &DenseMatrix, s: &[f64], gamma: f64, v: &[f64]) -> bool {
    m.matvec(v).iter().zip(s).all(|(a, b)| (a - b).abs() < gamma)
}

/// Log-barrier Newton for min Σ (v_i² + μ²)^{p/2} over |Mv − s| < γ,
/// started from a strictly interior point.
fn barrier_min_norm(m: &DenseMatrix, s: &[f64], gamma: f64, p: f64, start: Vec<f64>) -> Vec<f64> {
    let k = m.cols();
    let h = m.rows();
    let scale = start.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mu2 = (1e-9 * scale).powi(2);
    let objective = |v: &[f64]| v.iter().map(|x| (x * x + mu2).powf(p / 2.0)).sum::<f64>();
    let barrier = |v: &[f64]| -> Option<f64> {
        let mut acc = 0.0;
        for (a, b) in m.matvec(v).iter().zip(s) {
            let r = a - b;
            let (lo, hi) = (gamma + r, gamma - r);
            if lo <= 0.0 || hi <= 0.0 {
                return None;
            }
            acc -= lo.ln() + hi.ln();
        }
        Some(acc)
    };

    let mut v = start;
    let mut tau = 1.0 / (objective(&v) + 1.0);
    for _outer in 0..60 {
        for _inner in 0..100 {
            let res: Vec<f64> = m.matvec(&v).iter().zip(s).map(|(a, b)| a - b).collect();
            let mut grad = DVector::<f64>::zeros(k);
            let mut hess = DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                let q = v[i] * v[i] + mu2;
                grad[i] = tau * p * v[i] * q.powf(p / 2.0 - 1.0);
                hess[(i, i)] = tau * p * q.powf(p / 2.0 - 2.0) * ((p - 1.0) * v[i] * v[i] + mu2);
            }
            for j in 0..h {
                let row = m.row(j);
                let (lo, hi) = (gamma + res[j], gamma - res[j]);
                let g = 1.0 / hi - 1.0 / lo;
                let w = 1.0 / (hi * hi) + 1.0 / (lo * lo);
                for a in 0..k {
                    grad[a] += g * row[a];
                    for b in 0..k {
                        hess[(a, b)] += w * row[a] * row[b];
                    }
                }
            }
            let Some(chol) = hess.clone().cholesky() else {
                break;
            };
            let step = chol.solve(&(-&grad));
            let decrement = -grad.dot(&step);
            if decrement <= 1e-14 {
                break;
            }
            let f0 = tau * objective(&v) + barrier(&v).unwrap_or(f64::INFINITY);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
                if let Some(b) = barrier(&cand) {
                    if tau * objective(&cand) + b <= f0 - 0.25 * t * decrement {
                        v = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let gap = 2.0 * h as f64 / tau;
        if gap <= 1e-11 * (objective(&v) + f64::MIN_POSITIVE).max(1e-300) {
            break;
        }
        tau *= 20.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn zero_target_gives_zero() {
        let m = DenseMatrix::from_fn(5, 2, |i, j| (i + j) as f64);
        let sol = min_norm_with_median_constraint(&m, &[0.0; 5], 0.3, 1.0).unwrap().unwrap();
        assert_eq!(sol.v, vec![0.0, 0.0]);
        assert_eq!(sol.norm_p, 0.0);
    }

    #[test]
    fn identity_two_by_two() {
        // r = 2, h = 1: either singleton subset suffices; c chosen so that a
        // single coordinate must be matched exactly-ish (γ = 1 < 5).
        let sol = min_norm_with_median_constraint(&DenseMatrix::identity(2), &[5.0, 5.0], 1e-9, 1.0)
            .unwrap()
            .unwrap();
        assert!((sol.norm_p - 5.0).abs() < 1e-6, "{sol:?}");
        let nonzero = sol.v.iter().filter(|x| x.abs() > 1e-6).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn vacuous_constraint() {
        let s = [3.0, -1.0, 2.0];
        let medp = med_p(1.5).unwrap().value;
        let c = 3.0 / medp;
        let m = DenseMatrix::identity(3);
        let sol = min_norm_with_median_constraint(&m, &s, c, 1.5).unwrap().unwrap();
        assert_eq!(sol.norm_p, 0.0);
    }

    #[test]
    fn cap_and_infeasible() {
        let m = DenseMatrix::zeros(15, 1);
        assert!(matches!(
            min_norm_with_median_constraint(&m, &[1.0; 15], 0.1, 1.0),
            Err(Error::BudgetExceeded(_))
        ));
        // Zero design cannot reduce residuals of magnitude 1 below 0.1.
        let m = DenseMatrix::zeros(3, 1);
        assert!(min_norm_with_median_constraint(&m, &[1.0; 3], 0.1, 1.0).unwrap().is_none());
    }

    fn random_instance(seed: u64) -> (DenseMatrix, Vec<f64>) {
        let mut rng = SeededRng::new(seed);
        let m = DenseMatrix::from_fn(7, 2, |_, _| rng.gaussian());
        let s: Vec<f64> = (0..7).map(|_| 3.0 * rng.gaussian()).collect();
        (m, s)
    }

    #[test]
    fn constraint_holds_and_relaxing_never_hurts() {
        for p in [1.0, 1.5] {
            for seed in 0..10 {
                let (m, s) = random_instance(seed);
                let medp = med_p(p).unwrap().value;
                let mut prev = f64::INFINITY;
                for step in 0..12 {
                    let c = 0.05 * 1.5f64.powi(step);
                    let Some(sol) = min_norm_with_median_constraint(&m, &s, c, p).unwrap() else {
                        continue;
                    };
                    let res: Vec<f64> = m.matvec(&sol.v).iter().zip(&s).map(|(a, b)| a - b).collect();
                    let recheck = median_abs(&res).unwrap() / medp;
                    assert!(recheck <= c * (1.0 + 1e-7) + 1e-12, "p={p} seed={seed}: {recheck} > {c}");
                    assert!(sol.norm_p <= prev * (1.0 + 1e-6) + 1e-12, "p={p} seed={seed}");
                    prev = sol.norm_p;
                }
            }
        }
    }

    #[test]
    fn p_three_halves_matches_grid_search() {
        // Single-variable case: brute-force v on a fine grid.
        let mut rng = SeededRng::new(21);
        let p = 1.5;
        let medp = med_p(p).unwrap().value;
        for _ in 0..5 {
            let m = DenseMatrix::from_fn(5, 1, |_, _| rng.gaussian());
            let s: Vec<f64> = (0..5).map(|_| rng.gaussian()).collect();
            let c = 0.4;
            let feasible = |v: f64| {
                let res: Vec<f64> = (0..5).map(|j| m.get(j, 0) * v - s[j]).collect();
                median_abs(&res).unwrap() <= c * medp
            };
            let oracle = (-400_000..=400_000)
                .map(|i| i as f64 * 1e-5)
                .filter(|&v| feasible(v))
                .map(f64::abs)
                .fold(f64::INFINITY, f64::min);
            let sol = min_norm_with_median_constraint(&m, &s, c, p).unwrap();
            match sol {
                Some(sol) => assert!((sol.norm_p - oracle).abs() < 2e-5, "{} vs {oracle}", sol.norm_p),
                None => assert!(oracle.is_infinite()),
            }
        }
    }
}
