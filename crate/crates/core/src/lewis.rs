//! ℓp Lewis weights and the row-sampling matrices built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::leverage_scores;
use crate::matrix::DenseMatrix;
use crate::rng::SeededRng;

pub const LEWIS_MAX_ITERS: usize = 200;
pub const LEWIS_TOL: f64 = 1e-8;
/// Default multiplier c₀ in the sample-count formula.
pub const SAMPLE_CONSTANT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LewisWeights {
    pub weights: Vec<f64>,
    pub p: f64,
    /// max_i |log w_i⁺ − log w_i| of the last iteration (zero rows excluded).
    pub fixed_point_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Residual after each iteration.
    pub residual_history: Vec<f64>,
}

impl LewisWeights {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Sampling probabilities w_i / Σw.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::invalid("all Lewis weights are zero"));
        }
        Ok(self.weights.iter().map(|w| w / total).collect())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} outside [1, 2]")));
    }
    Ok(())
}

/// Fixed-point iteration w_i ← (τ_i(W^{1/2−1/p}A) · w_i^{2/p−1})^{p/2},
/// which is w_i ← (a_iᵀ(AᵀW^{1−2/p}A)⁺a_i)^{p/2}. Starts from w = d/n.
pub fn lewis_weights(a: &DenseMatrix, p: f64, max_iters: usize, tol: f64) -> Result<LewisWeights> {
    check_p(p)?;
    let (n, d) = (a.rows(), a.cols());
    let active: Vec<bool> = (0..n).map(|i| a.row(i).iter().any(|&v| v != 0.0)).collect();
    if p == 2.0 {
        let weights = leverage_scores(a);
        return Ok(LewisWeights {
            weights,
            p,
            fixed_point_residual: 0.0,
            converged: true,
            iterations: 1,
            residual_history: vec![0.0],
        });
    }
    let init = if n == 0 { 0.0 } else { d.min(n) as f64 / n as f64 };
    let mut w: Vec<f64> = active.iter().map(|&on| if on { init } else { 0.0 }).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let exponent = 0.5 - 1.0 / p;
    for _ in 0..max_iters {
        let scaled = DenseMatrix::from_fn(n, d, |i, j| {
            if active[i] {
                w[i].powf(exponent) * a.get(i, j)
            } else {
                0.0
            }
        });
        let tau = leverage_scores(&scaled);
        let mut next = vec![0.0; n];
        residual = 0.0;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let v = (tau[i] * w[i].powf(2.0 / p - 1.0)).max(0.0).powf(p / 2.0);
            let v = v.max(f64::MIN_POSITIVE);
            residual = f64::max(residual, (v.ln() - w[i].ln()).abs());
            next[i] = v;
        }
        w = next;
        history.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    Ok(LewisWeights {
        weights: w,
        p,
        fixed_point_residual: residual,
        converged,
        iterations: history.len(),
        residual_history: history,
    })
}

/// Row sampler: output row j is `scale_j · A[source_row_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMatrix {
    pub entries: Vec<(usize, f64)>,
    pub source_rows_count: usize,
    pub p: f64,
}

impl SamplingMatrix {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// r i.i.d. rows drawn with probability w_i/Σw, each rescaled by
/// 1/(r·p_i)^{1/p}.
pub fn sampling_matrix(w: &LewisWeights, r: usize, rng: &mut SeededRng) -> Result<SamplingMatrix> {
    if r == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let probs = w.probabilities()?;
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &q in &probs {
        acc += q;
        cumulative.push(acc);
    }
    let entries = (0..r)
        .map(|_| {
            let i = rng.draw_cumulative(&cumulative);
            (i, 1.0 / (r as f64 * probs[i]).powf(1.0 / w.p))
        })
        .collect();
    Ok(SamplingMatrix {
        entries,
        source_rows_count: probs.len(),
        p: w.p,
    })
}

pub fn apply_sampling(s: &SamplingMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
    if s.source_rows_count != a.rows() {
        return Err(Error::dims(format!(
            "sampler expects {} rows, matrix has {}",
            s.source_rows_count,
            a.rows()
        )));
    }
    let d = a.cols();
    let mut data = Vec::with_capacity(s.entries.len() * d);
    for &(i, scale) in &s.entries {
        data.extend(a.row(i).iter().map(|v| v * scale));
    }
    DenseMatrix::new(s.entries.len(), d, data)
}

/// Lewis sample count for a t-dimensional subspace:
/// ⌈c₀·t·ln t⌉ at p = 1 and ⌈c₀·t·ln t·(ln ln(t+2))²⌉ for 1 < p < 2,
/// never below t.
pub fn default_sample_count(t: usize, p: f64, c0: f64) -> usize {
    let tf = t.max(1) as f64;
    let mut r = c0 * tf * tf.ln().max(1.0);
    if p > 1.0 && p < 2.0 {
        r *= (tf + 2.0).ln().ln().powi(2).max(1.0);
    }
    (r.ceil() as usize).max(t).max(1)
}

/// Lewis-weight sampler of `u` with the given number of rows.
pub fn lewis_sampler(u: &DenseMatrix, p: f64, rows: usize, rng: &mut SeededRng) -> Result<SamplingMatrix> {
    let w = lewis_weights(u, p, LEWIS_MAX_ITERS, LEWIS_TOL)?;
    sampling_matrix(&w, rows, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::entrywise_norm;

    fn random(n: usize, d: usize, rng: &mut SeededRng) -> DenseMatrix {
        DenseMatrix::from_fn(n, d, |_, _| rng.gaussian())
    }

    #[test]
    fn identity_has_unit_weights() {
        for p in [1.0, 1.3, 2.0] {
            let w = lewis_weights(&DenseMatrix::identity(4), p, 200, 1e-10).unwrap();
            for v in &w.weights {
                assert!((v - 1.0).abs() < 1e-9, "p={p}: {v}");
            }
        }
    }

    #[test]
    fn stacked_identity_halves() {
        let a = DenseMatrix::identity(3).transpose();
        let stacked = DenseMatrix::from_fn(6, 3, |i, j| a.get(i % 3, j));
        let w = lewis_weights(&stacked, 1.0, 200, 1e-12).unwrap();
        assert!(w.converged);
        for v in &w.weights {
            assert!((v - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_sum_to_rank_and_residual_shrinks() {
        let mut rng = SeededRng::new(3);
        for p in [1.0, 1.5] {
            let a = random(40, 4, &mut rng);
            let w = lewis_weights(&a, p, 200, 1e-10).unwrap();
            assert!((w.total() - 4.0).abs() < 1e-3);
            assert!(w.weights.iter().all(|&v| v <= 1.0 + 1e-6));
            for pair in w.residual_history.windows(2).skip(3) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-15);
            }
        }
    }

    #[test]
    fn rank_deficient_input() {
        let mut rng = SeededRng::new(4);
        let base = random(30, 2, &mut rng);
        let a = base.hstack(&base.columns_at(&[0])).unwrap();
        let w = lewis_weights(&a, 1.0, 200, 1e-10).unwrap();
        assert!((w.total() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn uniform_scales() {
        let w = LewisWeights {
            weights: vec![1.0; 8],
            p: 1.0,
            fixed_point_residual: 0.0,
            converged: true,
            iterations: 0,
            residual_history: vec![],
        };
        let s = sampling_matrix(&w, 4, &mut SeededRng::new(1)).unwrap();
        assert!(s.entries.iter().all(|&(_, c)| (c - 2.0).abs() < 1e-12));
        let s1 = sampling_matrix(&w, 1, &mut SeededRng::new(1)).unwrap();
        assert_eq!(s1.len(), 1);
        assert!((s1.entries[0].1 - 8.0).abs() < 1e-12);
        let again = sampling_matrix(&w, 4, &mut SeededRng::new(1)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn apply_examples() {
        let a = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let id = SamplingMatrix {
            entries: (0..3).map(|i| (i, 1.0)).collect(),
            source_rows_count: 3,
            p: 1.0,
        };
        assert_eq!(apply_sampling(&id, &a).unwrap(), a);
        let empty = SamplingMatrix {
            entries: vec![],
            source_rows_count: 3,
            p: 1.0,
        };
        let e = apply_sampling(&empty, &a).unwrap();
        assert_eq!((e.rows(), e.cols()), (0, 2));
        let twice = SamplingMatrix {
            entries: vec![(1, 2.0), (1, 2.0)],
            source_rows_count: 3,
            p: 1.0,
        };
        let t = apply_sampling(&twice, &a).unwrap();
        assert_eq!(t.row(0), &[4.0, 6.0]);
        assert_eq!(t.row(1), &[4.0, 6.0]);
        let bad = SamplingMatrix {
            entries: vec![],
            source_rows_count: 4,
            p: 1.0,
        };
        assert!(apply_sampling(&bad, &a).is_err());
    }

    #[test]
    fn zero_weights_rejected() {
        let w = lewis_weights(&DenseMatrix::zeros(3, 2), 1.0, 10, 1e-8).unwrap();
        assert!(sampling_matrix(&w, 2, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn dilation_of_unrelated_matrix() {
        let mut rng = SeededRng::new(11);
        let u = random(200, 3, &mut rng);
        let m = random(200, 6, &mut rng);
        let w = lewis_weights(&u, 1.0, 200, 1e-8).unwrap();
        let base = entrywise_norm(&m, 1.0).unwrap();
        let mut ok = 0;
        for _ in 0..100 {
            let s = sampling_matrix(&w, 60, &mut rng).unwrap();
            let sm = apply_sampling(&s, &m).unwrap();
            if entrywise_norm(&sm, 1.0).unwrap() <= 5.0 * base {
                ok += 1;
            }
        }
        assert!(ok >= 85, "{ok}");
    }
}
