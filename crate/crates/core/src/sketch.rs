//! p-stable sketches and median estimators of ℓp norms.
//!
//! Normalization: a standard p-stable variable Z has characteristic function
//! `exp(−|t|^p)`, so that `Σ x_i Z_i` has the law of `‖x‖_p Z` exactly. At
//! p = 1 this is the standard Cauchy law; at p = 2 it is N(0, 2).

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{entrywise_norm, sum_abs_pow, DenseMatrix};
use crate::rng::SeededRng;

fn check_p(p: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} outside [1, 2]")));
    }
    Ok(())
}

/// One standard p-stable draw (Chambers–Mallows–Stuck, symmetric case).
pub fn sample_p_stable(p: f64, rng: &mut SeededRng) -> f64 {
    debug_assert!((1.0..=2.0).contains(&p));
    let u = rng.uniform_range(-FRAC_PI_2, FRAC_PI_2);
    if p == 1.0 {
        return u.tan();
    }
    let w = rng.exponential();
    (p * u).sin() / u.cos().powf(1.0 / p) * (((1.0 - p) * u).cos() / w).powf((1.0 - p) / p)
}

/// An r × n matrix of i.i.d. standard p-stable entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PStableSketch {
    pub matrix: DenseMatrix,
    pub p: f64,
    pub seed: u64,
}

impl PStableSketch {
    pub fn new(rows: usize, cols: usize, p: f64, rng: &mut SeededRng) -> Result<Self> {
        check_p(p)?;
        let seed = rng.seed();
        let matrix = DenseMatrix::from_fn(rows, cols, |_, _| sample_p_stable(p, rng));
        Ok(PStableSketch { matrix, p, seed })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.matrix.matmul(a)
    }
}

/// Median of |Z| for a standard p-stable Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedPConstant {
    pub p: f64,
    pub value: f64,
    pub quadrature_points: usize,
}

/// Endpoint truncation of the CDF integral.
pub const QUADRATURE_DELTA: f64 = 1e-12;
const BASE_PANELS: usize = 64;
const MAX_PANELS: usize = 1 << 22;
const QUADRATURE_TOL: f64 = 1e-11;

/// log(m^{p/(p−1)} V(θ; p)) with
/// V(θ; p) = (cos θ / sin pθ)^{p/(p−1)} · cos((p−1)θ) / cos θ.
fn log_exponent(theta: f64, p: f64, log_m: f64) -> f64 {
    let a = p / (p - 1.0);
    a * (log_m + theta.cos().ln() - (p * theta).sin().ln()) + ((p - 1.0) * theta).cos().ln()
        - theta.cos().ln()
}

fn integrand(theta: f64, p: f64, log_m: f64) -> f64 {
    let e = log_exponent(theta, p, log_m);
    if e > 700.0 {
        0.0
    } else {
        (-e.exp()).exp()
    }
}

fn simpson(p: f64, log_m: f64, panels: usize) -> f64 {
    let (a, b) = (QUADRATURE_DELTA, FRAC_PI_2 - QUADRATURE_DELTA);
    let h = (b - a) / panels as f64;
    let mut s = integrand(a, p, log_m) + integrand(b, p, log_m);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * integrand(a + i as f64 * h, p, log_m);
    }
    s * h / 3.0
}

/// I(m) = ∫ exp(−m^{p/(p−1)} V(θ; p)) dθ over the truncated interval.
/// Panel count doubles from `base` until successive estimates agree.
fn tail_integral(p: f64, m: f64, base: usize) -> Result<(f64, usize)> {
    if m <= 0.0 {
        return Ok((FRAC_PI_2 - 2.0 * QUADRATURE_DELTA, base));
    }
    let log_m = m.ln();
    let mut panels = base;
    let mut prev = simpson(p, log_m, panels);
    while panels < MAX_PANELS {
        panels *= 2;
        let next = simpson(p, log_m, panels);
        if (next - prev).abs() < QUADRATURE_TOL {
            return Ok((next, panels));
        }
        prev = next;
    }
    Err(Error::Numerical(format!(
        "CDF quadrature did not settle for p = {p}, m = {m} (last two estimates differ at {MAX_PANELS} panels)"
    )))
}

/// P(|Z| ≤ m) = 1 − (2/π) I(m), so the median solves I(m) = π/4.
pub fn abs_cdf(p: f64, m: f64) -> Result<f64> {
    check_p(p)?;
    if p == 1.0 {
        return Ok(2.0 / PI * m.max(0.0).atan());
    }
    Ok(1.0 - 2.0 / PI * tail_integral(p, m, BASE_PANELS)?.0)
}

/// med_p at a given starting panel count.
pub fn med_p_with_resolution(p: f64, base_panels: usize) -> Result<MedPConstant> {
    check_p(p)?;
    if p == 1.0 {
        // tan(π/4)
        return Ok(MedPConstant {
            p,
            value: 1.0,
            quadrature_points: 0,
        });
    }
    let mut hi = 1.0;
    let mut points = base_panels;
    loop {
        let (v, n) = tail_integral(p, hi, base_panels)?;
        points = points.max(n);
        if v < FRAC_PI_4 {
            break;
        }
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numerical(format!("median bracket failed for p = {p}")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let (v, n) = tail_integral(p, mid, base_panels)?;
        points = points.max(n);
        if v > FRAC_PI_4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MedPConstant {
        p,
        value: 0.5 * (lo + hi),
        quadrature_points: points + 1,
    })
}

/// med_p, cached per p.
pub fn med_p(p: f64) -> Result<MedPConstant> {
    static CACHE: OnceLock<Mutex<HashMap<u64, MedPConstant>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().expect("med_p cache").get(&p.to_bits()) {
        return Ok(*c);
    }
    let c = med_p_with_resolution(p, BASE_PANELS)?;
    cache.lock().expect("med_p cache").insert(p.to_bits(), c);
    Ok(c)
}

/// ⌈αn⌉-th smallest absolute value (1-based).
pub fn quantile_abs(v: &[f64], alpha: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::invalid("quantile of an empty vector"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("quantile level {alpha} outside (0, 1]")));
    }
    let rank = ((alpha * v.len() as f64).ceil() as usize).clamp(1, v.len());
    let mut abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let (_, kth, _) = abs.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    Ok(*kth)
}

/// The ⌈n/2⌉-th smallest absolute value.
pub fn median_abs(v: &[f64]) -> Result<f64> {
    quantile_abs(v, 0.5)
}

/// (Σ_i q_α(M_i)^p)^{1/p} / med_p over the columns M_i.
pub fn quantile_sketch_cost(m: &DenseMatrix, alpha: f64, medp: &MedPConstant, p: f64) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..m.cols() {
        total += quantile_abs(&m.column(j), alpha)?.powf(p);
    }
    Ok(total.powf(1.0 / p) / medp.value)
}

/// (Σ_i med(M_i)^p)^{1/p} / med_p: the sketched estimate of ‖A‖_p when
/// M = S·A.
pub fn median_sketch_cost(m: &DenseMatrix, medp: &MedPConstant, p: f64) -> Result<f64> {
    quantile_sketch_cost(m, 0.5, medp, p)
}

/// Outcome of one empirical property in the sketch suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub successes: usize,
    pub trials: usize,
    pub required: usize,
    pub passed: bool,
}

impl PropertyOutcome {
    fn new(name: &str, successes: usize, trials: usize, required: usize) -> Self {
        PropertyOutcome {
            name: name.to_string(),
            successes,
            trials,
            required,
            passed: successes >= required,
        }
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gaussian())
}

/// Median estimate of ‖A‖_1 from a 2000-row Cauchy sketch of a 50 × 20
/// Gaussian matrix lands within 10% in at least 90 of 100 draws.
pub fn check_median_concentration(rng: &mut SeededRng) -> Result<PropertyOutcome> {
    let p = 1.0;
    let medp = med_p(p)?;
    let a = gaussian_matrix(50, 20, &mut rng.derive("matrix"));
    let truth = entrywise_norm(&a, p)?;
    let mut draws = rng.derive("sketches");
    let mut hits = 0;
    for _ in 0..100 {
        let s = PStableSketch::new(2000, 50, p, &mut draws.split())?;
        let est = median_sketch_cost(&s.apply(&a)?, &medp, p)?;
        if (est - truth).abs() <= 0.1 * truth {
            hits += 1;
        }
    }
    Ok(PropertyOutcome::new("median_preserves_norms", hits, 100, 90))
}

/// Sketched cost of UV − A never drops below 0.8 × the true cost over 50
/// random V, for at least 9 of 10 sketch draws (n = 100, k = 2, r = 3000).
pub fn check_one_sided_embedding(rng: &mut SeededRng) -> Result<PropertyOutcome> {
    let p = 1.0;
    let medp = med_p(p)?;
    let mut data = rng.derive("data");
    let u = gaussian_matrix(100, 2, &mut data);
    let a = gaussian_matrix(100, 10, &mut data);
    let vs: Vec<DenseMatrix> = (0..50).map(|_| gaussian_matrix(2, 10, &mut data)).collect();
    let mut draws = rng.derive("sketches");
    let mut good = 0;
    for _ in 0..10 {
        let s = PStableSketch::new(3000, 100, p, &mut draws.split())?;
        let su = s.apply(&u)?;
        let sa = s.apply(&a)?;
        let mut ok = true;
        for v in &vs {
            let sketched = median_sketch_cost(&su.matmul(v)?.sub(&sa)?, &medp, p)?;
            let truth = entrywise_norm(&u.matmul(v)?.sub(&a)?, p)?;
            if sketched < 0.8 * truth {
                ok = false;
                break;
            }
        }
        if ok {
            good += 1;
        }
    }
    Ok(PropertyOutcome::new("one_sided_embedding", good, 10, 9))
}

/// Top (1 − ε/2)-quantile estimate stays below (10/ε)‖M‖_p, ε = 0.2.
pub fn check_top_quantile_dilation(rng: &mut SeededRng) -> Result<PropertyOutcome> {
    let p = 1.0;
    let eps = 0.2;
    let medp = med_p(p)?;
    let m = gaussian_matrix(50, 10, &mut rng.derive("matrix"));
    let truth = entrywise_norm(&m, p)?;
    let mut draws = rng.derive("sketches");
    let mut hits = 0;
    for _ in 0..10 {
        let s = PStableSketch::new(200, 50, p, &mut draws.split())?;
        let est = quantile_sketch_cost(&s.apply(&m)?, 1.0 - eps / 2.0, &medp, p)?;
        if est <= 10.0 / eps * truth {
            hits += 1;
        }
    }
    Ok(PropertyOutcome::new("top_quantile_dilation", hits, 10, 9))
}

/// ‖SM‖_p^p ≤ 20 · r · ln(d + 1) · ‖M‖_p^p.
pub fn check_lp_distortion(rng: &mut SeededRng) -> Result<PropertyOutcome> {
    let p = 1.0;
    let (r, n, d) = (50, 30, 10);
    let m = gaussian_matrix(n, d, &mut rng.derive("matrix"));
    let truth = sum_abs_pow(m.data(), p);
    let bound = 20.0 * r as f64 * ((d + 1) as f64).ln() * truth;
    let mut draws = rng.derive("sketches");
    let mut hits = 0;
    for _ in 0..10 {
        let s = PStableSketch::new(r, n, p, &mut draws.split())?;
        if sum_abs_pow(s.apply(&m)?.data(), p) <= bound {
            hits += 1;
        }
    }
    Ok(PropertyOutcome::new("lp_distortion", hits, 10, 9))
}

/// Runs every sketch property check.
pub fn sketch_property_suite(rng: &SeededRng) -> Result<Vec<PropertyOutcome>> {
    Ok(vec![
        check_median_concentration(&mut rng.derive("median"))?,
        check_one_sided_embedding(&mut rng.derive("one-sided"))?,
        check_top_quantile_dilation(&mut rng.derive("quantile"))?,
        check_lp_distortion(&mut rng.derive("distortion"))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(median_abs(&[3.0, -3.0, 3.0]).unwrap(), 3.0);
        assert_eq!(quantile_abs(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(), 4.0);
        assert_eq!(median_abs(&[-5.0, 0.0, 5.0]).unwrap(), 5.0);
        assert_eq!(median_abs(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.0);
        assert!(median_abs(&[]).is_err());
        assert!(quantile_abs(&[1.0], 0.0).is_err());
    }

    #[test]
    fn sketch_cost_examples() {
        let medp = med_p(1.5).unwrap();
        let col = DenseMatrix::from_fn(5, 1, |_, _| -2.0);
        let c = median_sketch_cost(&col, &medp, 1.5).unwrap();
        assert!((c - 2.0 / medp.value).abs() < 1e-12);
        assert_eq!(median_sketch_cost(&DenseMatrix::zeros(4, 3), &medp, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn cauchy_absolute_median_is_one() {
        let mut rng = SeededRng::new(10);
        let v: Vec<f64> = (0..100_000).map(|_| sample_p_stable(1.0, &mut rng)).collect();
        assert!((median_abs(&v).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn gaussian_boundary_has_variance_two() {
        let mut rng = SeededRng::new(11);
        let n = 100_000;
        let v: Vec<f64> = (0..n).map(|_| sample_p_stable(2.0, &mut rng)).collect();
        let var = v.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 2.0).abs() < 0.04, "{var}");
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn stability_of_linear_combinations() {
        let mut rng = SeededRng::new(12);
        let n = 100_000;
        for p in [2.0, 1.5] {
            let x = [3.0f64, 4.0];
            let norm = (x[0].abs().powf(p) + x[1].abs().powf(p)).powf(1.0 / p);
            let combo: Vec<f64> = (0..n)
                .map(|_| x[0] * sample_p_stable(p, &mut rng) + x[1] * sample_p_stable(p, &mut rng))
                .collect();
            let scaled: Vec<f64> = (0..n).map(|_| norm * sample_p_stable(p, &mut rng)).collect();
            let stat = ks(combo, scaled);
            assert!(stat < 0.02, "p={p}: KS {stat}");
        }
    }

    #[test]
    fn med_p_at_the_boundaries() {
        assert_eq!(med_p(1.0).unwrap().value, 1.0);
        // N(0, 2): √2 · Φ⁻¹(3/4).
        let expected = 2f64.sqrt() * 0.674_489_750_196_081_7;
        assert!((med_p(2.0).unwrap().value - expected).abs() < 1e-4);
    }

    #[test]
    fn med_p_cdf_matches_cauchy_limit_nearby() {
        // Continuity near p = 1 and across the grid.
        let mut prev = med_p(1.0).unwrap().value;
        for i in 1..=20 {
            let p = 1.0 + i as f64 * 0.05;
            let v = med_p(p).unwrap().value;
            assert!(v >= 0.1);
            assert!((v - prev).abs() < 0.05, "jump at p={p}");
            prev = v;
            let w = med_p((p + 1e-3).min(2.0)).unwrap().value;
            assert!((v - w).abs() <= 1e-2);
        }
    }

    #[test]
    fn med_p_matches_monte_carlo_at_three_halves() {
        let mut rng = SeededRng::new(13);
        let v: Vec<f64> = (0..200_000).map(|_| sample_p_stable(1.5, &mut rng)).collect();
        let mc = median_abs(&v).unwrap();
        assert!((mc - med_p(1.5).unwrap().value).abs() < 1e-2);
    }

    #[test]
    fn med_p_is_stable_under_refinement() {
        let a = med_p_with_resolution(1.5, 64).unwrap().value;
        let b = med_p_with_resolution(1.5, 128).unwrap().value;
        assert!((a - b).abs() <= 1e-3);
    }
}
