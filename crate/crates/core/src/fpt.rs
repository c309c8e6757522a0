//! Guess-and-round (1+ε) approximation: guessed sketched left factors,
//! per-column median-constrained solves, a cost-bound LP and randomized
//! rounding, plus the OPT-grid wrapper with bicriteria rank 3k.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorPair;
use crate::linalg::{numerical_rank, truncated_svd, RANK_RTOL};
use crate::matrix::{entrywise_norm, DenseMatrix};
use crate::oracle::{balance, ls_right_factor, svd_baseline};
use crate::rankreduce::{poly_k_not_bicriteria, PolyKConfig};
use crate::rng::SeededRng;
use crate::sketch::{med_p, PStableSketch};
use crate::solvers::median::min_norm_with_median_constraint_scaled;
use crate::solvers::regression::check_p;
use crate::solvers::simplex::{LinearProgram, LpStatus, Relation};
use crate::solvers::{best_left_factor, MEDIAN_SUBSET_CAP};

pub const DEFAULT_SKETCH_ROWS: usize = 9;
pub const DEFAULT_GRID_CAP: usize = 7;
pub const DEFAULT_MAX_GUESSES: u64 = 1_000_000;
/// Guesses evaluated per parallel batch before merging results in order.
const GUESS_BATCH: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FptMode {
    /// Every sketched left factor over a coarsened grid is tried.
    FullEnumeration,
    /// A single sketched left factor derived from a supplied guide.
    #[default]
    OracleGuided,
}

/// Explicit sizes and constants for the guessing search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FptBudget {
    /// Rows r of the p-stable sketch S.
    pub sketch_rows: usize,
    /// Values per entry of a guessed M in full enumeration.
    pub grid_values_cap: usize,
    pub max_guesses: u64,
    /// Norm-budget constant q; `None` means q = k.
    pub q_norm_constant: Option<f64>,
    /// Largest sketch size for which median-constrained solves enumerate
    /// subsets.
    pub subset_cap: usize,
    pub mode: FptMode,
    /// Exponent e in poly(k/ε) = (k/ε)^e.
    pub poly_exponent: f64,
    /// Δ uses (1 + c_eps·ε)^p.
    pub c_eps: f64,
    /// Largest cost bound is c_hi·‖A‖_p.
    pub c_hi: f64,
    /// Rounding draws per guess; `None` means ⌈10/ε⌉.
    pub trials: Option<usize>,
    /// Factor f handed to the guessing step by the wrapper.
    pub initializer_factor: f64,
    /// The wrapper tries t = 0..=⌈opt_grid_constant·ln(nd)/ε⌉.
    pub opt_grid_constant: f64,
    /// Ratio between consecutive magnitudes of the coarsened grid, which is
    /// centred on ‖A‖_p.
    pub coarse_spacing: f64,
}

impl Default for FptBudget {
    fn default() -> Self {
        FptBudget {
            sketch_rows: DEFAULT_SKETCH_ROWS,
            grid_values_cap: DEFAULT_GRID_CAP,
            max_guesses: DEFAULT_MAX_GUESSES,
            q_norm_constant: None,
            subset_cap: MEDIAN_SUBSET_CAP,
            mode: FptMode::default(),
            poly_exponent: 3.0,
            c_eps: 2.0,
            c_hi: 2.0,
            trials: None,
            initializer_factor: 8.0,
            opt_grid_constant: 1.0,
            coarse_spacing: 2.0,
        }
    }
}

impl FptBudget {
    pub fn validate(&self) -> Result<()> {
        if self.sketch_rows == 0 {
            return Err(Error::invalid("sketch_rows must be at least 1"));
        }
        if self.sketch_rows > self.subset_cap {
            return Err(Error::BudgetExceeded(format!(
                "sketch_rows = {} exceeds subset_cap = {}",
                self.sketch_rows, self.subset_cap
            )));
        }
        if self.grid_values_cap == 0 {
            return Err(Error::invalid("grid_values_cap must be at least 1"));
        }
        if self.max_guesses == 0 {
            return Err(Error::invalid("max_guesses must be at least 1"));
        }
        if let Some(q) = self.q_norm_constant {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::invalid(format!("q_norm_constant = {q} must be positive")));
            }
        }
        if !(self.poly_exponent > 0.0) || !(self.c_eps >= 0.0) || !(self.c_hi > 0.0) {
            return Err(Error::invalid("poly_exponent and c_hi must be positive, c_eps nonnegative"));
        }
        if !(self.initializer_factor > 1.0) {
            return Err(Error::invalid("initializer_factor must exceed 1"));
        }
        if !(self.coarse_spacing > 1.0) {
            return Err(Error::invalid("coarse_spacing must exceed 1"));
        }
        if !(self.opt_grid_constant > 0.0) {
            return Err(Error::invalid("opt_grid_constant must be positive"));
        }
        Ok(())
    }

    pub fn q(&self, k: usize) -> f64 {
        self.q_norm_constant.unwrap_or(k as f64)
    }

    pub fn trials_for(&self, eps: f64) -> usize {
        self.trials.unwrap_or_else(|| (10.0 / eps).ceil() as usize)
    }

    pub fn poly(&self, k: usize, eps: f64) -> f64 {
        (k as f64 / eps).powf(self.poly_exponent)
    }
}

/// Optional inputs of the guessing step.
#[derive(Debug, Clone, Default)]
pub struct FptExtras {
    /// n × k left factor whose balanced sketch S·U is rounded to the grid
    /// and used as the single guess in oracle-guided mode.
    pub guide: Option<DenseMatrix>,
    /// Restricts the fitted left factor to R·U₀.
    pub constraint_basis: Option<DenseMatrix>,
}

/// {0} ∪ {±ratio^t : min_mag ≤ ratio^t ≤ max_mag}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessGrid {
    pub ratio: f64,
    pub min_mag: f64,
    pub max_mag: f64,
    pub include_zero: bool,
}

impl GuessGrid {
    /// ratio = 1 + 1/(f·poly), min_mag = ‖A‖_p/(f·poly), max_mag = poly·‖A‖_p.
    pub fn new(norm_a: f64, f: f64, poly: f64) -> Result<Self> {
        if !(norm_a > 0.0 && norm_a.is_finite()) {
            return Err(Error::invalid("grid needs a positive finite norm"));
        }
        let grid = GuessGrid {
            ratio: 1.0 + 1.0 / (f * poly),
            min_mag: norm_a / (f * poly),
            max_mag: poly * norm_a,
            include_zero: true,
        };
        let (lo, hi) = grid.exponent_range();
        if lo > hi {
            return Err(Error::invalid("guess grid has no nonzero values"));
        }
        Ok(grid)
    }

    fn log_ratio(&self) -> f64 {
        self.ratio.ln()
    }

    /// Smallest and largest t with ratio^t inside [min_mag, max_mag].
    pub fn exponent_range(&self) -> (i64, i64) {
        let l = self.log_ratio();
        (
            (self.min_mag.ln() / l).ceil() as i64,
            (self.max_mag.ln() / l).floor() as i64,
        )
    }

    pub fn magnitude(&self, t: i64) -> f64 {
        (t as f64 * self.log_ratio()).exp()
    }

    /// Nearest grid value in log scale; magnitudes outside the range are
    /// clamped, and values below half the smallest magnitude go to 0.
    pub fn round(&self, x: f64) -> f64 {
        let (lo, hi) = self.exponent_range();
        let a = x.abs();
        if a < 0.5 * self.magnitude(lo) {
            return 0.0;
        }
        let t = ((a.ln() / self.log_ratio()).round() as i64).clamp(lo, hi);
        self.magnitude(t).copysign(x)
    }

    pub fn round_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        m.map(|x| self.round(x))
    }

    pub fn contains(&self, x: f64) -> bool {
        x == 0.0 || self.round(x) == x
    }

    /// At most `cap` grid values: 0 and ±(cap−1)/2 magnitudes, the grid
    /// points nearest to center·spacing^j for j symmetric around 0, ordered
    /// 0, +m₁, −m₁, +m₂, −m₂, … with m₁ < m₂ < ….
    pub fn coarse_values(&self, cap: usize, center: f64, spacing: f64) -> Vec<f64> {
        let (lo, hi) = self.exponent_range();
        let m = cap.saturating_sub(1) / 2;
        let l = self.log_ratio();
        let mid = (m as f64 - 1.0) / 2.0;
        let mut exps: Vec<i64> = (0..m)
            .map(|j| {
                let target = center.ln() + (j as f64 - mid) * spacing.ln();
                ((target / l).round() as i64).clamp(lo, hi)
            })
            .collect();
        exps.dedup();
        let mut values = vec![0.0];
        for t in exps {
            let v = self.magnitude(t);
            values.push(v);
            values.push(-v);
        }
        values
    }
}

/// Integer powers of (1+ε) in [(ε²/f)‖A‖_p/d^{1/p}, c_hi‖A‖_p], ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBoundGrid {
    pub values: Vec<f64>,
    pub base: f64,
}

impl CostBoundGrid {
    pub fn new(norm_a: f64, d: usize, eps: f64, f: f64, p: f64, c_hi: f64) -> Result<Self> {
        let lo = eps * eps / f * norm_a / (d as f64).powf(1.0 / p);
        let hi = c_hi * norm_a;
        if !(lo > 0.0 && lo.is_finite() && hi >= lo) {
            return Err(Error::invalid("cost-bound range is empty"));
        }
        let l = (1.0 + eps).ln();
        let (tlo, thi) = ((lo.ln() / l).ceil() as i64, (hi.ln() / l).floor() as i64);
        let values: Vec<f64> = (tlo..=thi).map(|t| (t as f64 * l).exp()).collect();
        if values.is_empty() {
            return Err(Error::invalid("cost-bound range contains no power of 1+ε"));
        }
        Ok(CostBoundGrid { values, base: 1.0 + eps })
    }
}

/// Δ = (1 + c_eps·ε)^p·(opt_hat + ‖A‖_p/(f·poly))^p + (ε²/f)^p·‖A‖_p^p.
pub fn cost_budget(opt_hat: f64, norm_a: f64, eps: f64, f: f64, poly: f64, p: f64, c_eps: f64) -> f64 {
    (1.0 + c_eps * eps).powf(p) * (opt_hat + norm_a / (f * poly)).powf(p) + (eps * eps / f).powf(p) * norm_a.powf(p)
}

/// Distribution over candidate cost bounds for each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLpSolution {
    /// x[i][j]: weight of the j-th candidate of column i.
    pub x: Vec<Vec<f64>>,
    pub feasible: bool,
    /// Σ x·C^p at the optimum (when feasible).
    pub objective: f64,
}

/// Solves: Σ_j x[i][j] = 1 per column, Σ x·‖V‖_p^p ≤ norm_budget,
/// Σ x·C^p ≤ Δ, x ≥ 0, minimizing Σ x·C^p. A column without candidates
/// makes the program infeasible.
pub fn build_cost_bound_lp(
    costs: &[Vec<f64>],
    norms_pow: &[Vec<f64>],
    delta: f64,
    norm_budget: f64,
    p: f64,
) -> Result<ColumnLpSolution> {
    if costs.len() != norms_pow.len() || costs.iter().zip(norms_pow).any(|(c, n)| c.len() != n.len()) {
        return Err(Error::dims("costs and norms must have the same shape"));
    }
    let finite = costs.iter().chain(norms_pow).flatten().all(|v| v.is_finite());
    if !finite || !delta.is_finite() || !norm_budget.is_finite() {
        return Err(Error::invalid("cost-bound LP inputs must be finite"));
    }
    let infeasible = || ColumnLpSolution {
        x: costs.iter().map(|c| vec![0.0; c.len()]).collect(),
        feasible: false,
        objective: f64::INFINITY,
    };
    if costs.iter().any(|c| c.is_empty()) {
        return Ok(infeasible());
    }
    let cost_pow: Vec<f64> = costs.iter().flatten().map(|c| c.powf(p)).collect();
    let norms: Vec<f64> = norms_pow.iter().flatten().copied().collect();
    let mut lp = LinearProgram::new(cost_pow.clone());
    let mut offset = 0;
    for c in costs {
        let terms: Vec<(usize, f64)> = (offset..offset + c.len()).map(|v| (v, 1.0)).collect();
        lp.add_sparse(&terms, Relation::Eq, 1.0);
        offset += c.len();
    }
    lp.add_dense(norms, Relation::Le, norm_budget);
    lp.add_dense(cost_pow, Relation::Le, delta);
    let sol = lp.solve();
    if sol.status != LpStatus::Optimal {
        return Ok(infeasible());
    }
    let mut x = Vec::with_capacity(costs.len());
    let mut offset = 0;
    for c in costs {
        x.push(sol.x[offset..offset + c.len()].iter().map(|v| v.max(0.0)).collect());
        offset += c.len();
    }
    Ok(ColumnLpSolution {
        x,
        feasible: true,
        objective: sol.objective,
    })
}

/// One candidate right-factor column V_{i,c} with its sketched cost C_{i,c}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateColumn {
    pub v: Vec<f64>,
    pub cost: f64,
    pub norm_pow: f64,
}

/// Thresholds a rounded right factor must meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceTest {
    /// ‖V'‖_p^p ≤ 2kq^p/ε.
    pub max_norm_pow: f64,
    /// Σ C^p ≤ (1+2ε)Δ.
    pub max_cost_pow: f64,
}

impl AcceptanceTest {
    pub fn passes(&self, norm_pow: f64, cost_pow: f64) -> bool {
        norm_pow <= self.max_norm_pow && cost_pow <= self.max_cost_pow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundedRightFactor {
    pub v: DenseMatrix,
    /// Candidate index chosen for each column in the returned draw.
    pub choices: Vec<usize>,
    pub accepted: bool,
    pub draws_used: usize,
    pub norm_pow: f64,
    pub cost_pow: f64,
}

fn draw_index(weights: &[f64], rng: &mut SeededRng) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.uniform_open() * total;
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if *w > 0.0 && acc >= target {
            return j;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Draws column i's candidate with probability x[i][·], up to `trials`
/// times, stopping at the first draw that passes `test`. Without an
/// accepted draw the last one is returned (all zeros when trials = 0).
pub fn sample_rounded_right_factor(
    lp: &ColumnLpSolution,
    catalog: &[Vec<CandidateColumn>],
    k: usize,
    p: f64,
    trials: usize,
    test: &AcceptanceTest,
    rng: &mut SeededRng,
) -> Result<RoundedRightFactor> {
    if !lp.feasible {
        return Err(Error::invalid("rounding needs a feasible LP solution"));
    }
    if lp.x.len() != catalog.len() || lp.x.iter().zip(catalog).any(|(x, c)| x.len() != c.len()) {
        return Err(Error::dims("LP solution and catalog differ in shape"));
    }
    let d = catalog.len();
    let mut out = RoundedRightFactor {
        v: DenseMatrix::zeros(k, d),
        choices: Vec::new(),
        accepted: false,
        draws_used: 0,
        norm_pow: 0.0,
        cost_pow: 0.0,
    };
    for draw in 1..=trials {
        let choices: Vec<usize> = lp.x.iter().map(|x| draw_index(x, rng)).collect();
        let picked: Vec<&CandidateColumn> = choices.iter().zip(catalog).map(|(&j, c)| &c[j]).collect();
        let norm_pow: f64 = picked.iter().map(|c| c.norm_pow).sum();
        let cost_pow: f64 = picked.iter().map(|c| c.cost.powf(p)).sum();
        out = RoundedRightFactor {
            v: DenseMatrix::from_fn(k, d, |r, i| picked[i].v[r]),
            choices,
            accepted: test.passes(norm_pow, cost_pow),
            draws_used: draw,
            norm_pow,
            cost_pow,
        };
        if out.accepted {
            break;
        }
    }
    Ok(out)
}

/// Per-guess record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessAudit {
    pub index: u64,
    pub lp_feasible: bool,
    pub lp_objective: Option<f64>,
    pub accepted: bool,
    pub draws_used: usize,
    /// ‖U'V' − A‖_p, when the LP was feasible.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FptOutcome {
    pub factors: FactorPair,
    pub audits: Vec<GuessAudit>,
    pub guesses_total: u64,
    pub best_guess: Option<u64>,
    /// Fewer guesses were evaluated than the grid holds.
    pub budget_exhausted: bool,
    /// No guess produced a feasible LP; the factors are zero.
    pub all_infeasible: bool,
    /// A had rank ≤ k and was returned through its truncated SVD.
    pub early_return: bool,
    pub delta: f64,
    pub cost_bounds: Option<CostBoundGrid>,
    pub grid: Option<GuessGrid>,
}

impl FptOutcome {
    /// Smallest error among evaluated guesses.
    pub fn min_guess_error(&self) -> Option<f64> {
        self.audits.iter().filter_map(|a| a.error).min_by(f64::total_cmp)
    }
}

struct GuessContext<'a> {
    a: &'a DenseMatrix,
    sa: DenseMatrix,
    k: usize,
    p: f64,
    medp: f64,
    subset_cap: usize,
    bounds: &'a CostBoundGrid,
    delta: f64,
    norm_budget: f64,
    test: AcceptanceTest,
    trials: usize,
    constraint_basis: Option<&'a DenseMatrix>,
}

struct GuessResult {
    audit: GuessAudit,
    factors: Option<(DenseMatrix, DenseMatrix)>,
}

impl GuessContext<'_> {
    fn evaluate(&self, index: u64, m: &DenseMatrix, rng: &mut SeededRng) -> Result<GuessResult> {
        let d = self.a.cols();
        let mut catalog: Vec<Vec<CandidateColumn>> = Vec::with_capacity(d);
        for i in 0..d {
            let s = self.sa.column(i);
            let mut column = Vec::new();
            for &c in &self.bounds.values {
                if let Some(sol) = min_norm_with_median_constraint_scaled(m, &s, c, self.p, self.medp, self.subset_cap)? {
                    column.push(CandidateColumn {
                        norm_pow: sol.norm_p.powf(self.p),
                        cost: sol.sketched_cost,
                        v: sol.v,
                    });
                }
            }
            catalog.push(column);
        }
        let costs: Vec<Vec<f64>> = catalog.iter().map(|c| c.iter().map(|x| x.cost).collect()).collect();
        let norms: Vec<Vec<f64>> = catalog.iter().map(|c| c.iter().map(|x| x.norm_pow).collect()).collect();
        let lp = build_cost_bound_lp(&costs, &norms, self.delta, self.norm_budget, self.p)?;
        if !lp.feasible {
            return Ok(GuessResult {
                audit: GuessAudit {
                    index,
                    lp_feasible: false,
                    lp_objective: None,
                    accepted: false,
                    draws_used: 0,
                    error: None,
                },
                factors: None,
            });
        }
        let rounded = sample_rounded_right_factor(&lp, &catalog, self.k, self.p, self.trials, &self.test, rng)?;
        let u = best_left_factor(&rounded.v, self.a, self.p, self.constraint_basis)?.left;
        let error = entrywise_norm(&u.matmul(&rounded.v)?.sub(self.a)?, self.p)?;
        Ok(GuessResult {
            audit: GuessAudit {
                index,
                lp_feasible: true,
                lp_objective: Some(lp.objective),
                accepted: rounded.accepted,
                draws_used: rounded.draws_used,
                error: Some(error),
            },
            factors: Some((u, rounded.v)),
        })
    }
}

fn guess_from_index(index: u64, values: &[f64], r: usize, k: usize) -> DenseMatrix {
    let base = values.len() as u64;
    let mut rest = index;
    let mut data = vec![0.0; r * k];
    for slot in data.iter_mut() {
        *slot = values[(rest % base) as usize];
        rest /= base;
    }
    DenseMatrix::new(r, k, data).expect("r·k entries")
}

fn check_common(a: &DenseMatrix, k: usize, eps: f64, p: f64, budget: &FptBudget) -> Result<()> {
    check_p(p)?;
    budget.validate()?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps = {eps} outside (0, 1)")));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    Ok(())
}

/// Guesses sketched left factors M, solves for right-factor columns under
/// median-sketched cost bounds, picks a distribution over bounds by LP,
/// rounds it, fits U', and returns the best (U', V') by true ℓp error.
#[allow(clippy::too_many_arguments)]
pub fn guessing_additive_eps_approximation(
    a: &DenseMatrix,
    k: usize,
    eps: f64,
    f: f64,
    opt_hat: f64,
    p: f64,
    budget: &FptBudget,
    extras: &FptExtras,
    rng: &mut SeededRng,
) -> Result<FptOutcome> {
    check_common(a, k, eps, p, budget)?;
    if !(f > 1.0) {
        return Err(Error::invalid(format!("f = {f} must exceed 1")));
    }
    if !(opt_hat >= 0.0 && opt_hat.is_finite()) {
        return Err(Error::invalid("opt_hat must be finite and nonnegative"));
    }
    let seed = rng.seed();
    let (n, d) = (a.rows(), a.cols());
    if numerical_rank(a, RANK_RTOL) <= k {
        let (u, v) = truncated_svd(a, k);
        return Ok(FptOutcome {
            factors: FactorPair::evaluate(u, v, k, a, p, "fpt", seed)?,
            audits: Vec::new(),
            guesses_total: 0,
            best_guess: None,
            budget_exhausted: false,
            all_infeasible: false,
            early_return: true,
            delta: 0.0,
            cost_bounds: None,
            grid: None,
        });
    }
    let norm_a = entrywise_norm(a, p)?;
    let poly = budget.poly(k, eps);
    let grid = GuessGrid::new(norm_a, f, poly)?;
    let bounds = CostBoundGrid::new(norm_a, d, eps, f, p, budget.c_hi)?;
    let delta = cost_budget(opt_hat, norm_a, eps, f, poly, p, budget.c_eps);
    let q = budget.q(k);
    let norm_budget = k as f64 * q.powf(p);
    let r = budget.sketch_rows;
    let sketch = PStableSketch::new(r, n, p, &mut rng.derive("sketch"))?;
    let ctx = GuessContext {
        a,
        sa: sketch.apply(a)?,
        k,
        p,
        medp: med_p(p)?.value,
        subset_cap: budget.subset_cap,
        bounds: &bounds,
        delta,
        norm_budget,
        test: AcceptanceTest {
            max_norm_pow: 2.0 * norm_budget / eps,
            max_cost_pow: (1.0 + 2.0 * eps) * delta,
        },
        trials: budget.trials_for(eps),
        constraint_basis: extras.constraint_basis.as_ref(),
    };
    if let Some(basis) = &extras.constraint_basis {
        if basis.rows() != n {
            return Err(Error::dims(format!("constraint basis has {} rows, A has {n}", basis.rows())));
        }
    }

    let mut audits = Vec::new();
    let mut best: Option<(f64, u64, DenseMatrix, DenseMatrix)> = None;
    let mut merge = |results: Vec<GuessResult>| {
        for res in results {
            if let (Some(err), Some((u, v))) = (res.audit.error, res.factors) {
                if best.as_ref().is_none_or(|(e, _, _, _)| err < *e) {
                    best = Some((err, res.audit.index, u, v));
                }
            }
            audits.push(res.audit);
        }
    };
    let (guesses_total, budget_exhausted) = match budget.mode {
        FptMode::OracleGuided => {
            let guide = extras
                .guide
                .as_ref()
                .ok_or_else(|| Error::invalid("oracle-guided mode needs a guide left factor"))?;
            if guide.rows() != n || guide.cols() != k {
                return Err(Error::dims(format!(
                    "guide is {}×{}, expected {n}×{k}",
                    guide.rows(),
                    guide.cols()
                )));
            }
            let (u_bal, _) = balance(guide, &ls_right_factor(guide, a), p);
            let m = grid.round_matrix(&sketch.apply(&u_bal)?);
            merge(vec![ctx.evaluate(0, &m, &mut rng.derive("guess-0"))?]);
            (1, false)
        }
        FptMode::FullEnumeration => {
            let values = grid.coarse_values(budget.grid_values_cap, norm_a, budget.coarse_spacing);
            let total = (values.len() as u128).checked_pow((r * k) as u32).unwrap_or(u128::MAX);
            let total = u64::try_from(total).unwrap_or(u64::MAX);
            let count = total.min(budget.max_guesses);
            let mut start = 0;
            while start < count {
                let end = (start + GUESS_BATCH).min(count);
                let batch: Vec<GuessResult> = (start..end)
                    .into_par_iter()
                    .map(|idx| {
                        let m = guess_from_index(idx, &values, r, k);
                        ctx.evaluate(idx, &m, &mut rng.derive(&format!("guess-{idx}")))
                    })
                    .collect::<Result<_>>()?;
                merge(batch);
                start = end;
            }
            (total, count < total)
        }
    };

    let all_infeasible = best.is_none();
    let (left, right, best_guess) = match best {
        Some((err, idx, u, v)) if err <= norm_a => (u, v, Some(idx)),
        _ => (DenseMatrix::zeros(n, k), DenseMatrix::zeros(k, d), None),
    };
    Ok(FptOutcome {
        factors: FactorPair::evaluate(left, right, k, a, p, "fpt", seed)?,
        audits,
        guesses_total,
        best_guess,
        budget_exhausted,
        all_infeasible,
        early_return: false,
        delta,
        cost_bounds: Some(bounds),
        grid: Some(grid),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WrapperOutcome {
    /// [W | U] · [Z ; V], inner dimension 3k.
    pub factors: FactorPair,
    /// The rank-k starting point B = W·Z.
    pub base: FactorPair,
    /// ‖C − C_{SVD,2k}‖_p for the residual C = A − B.
    pub svd_error: f64,
    /// SvdError/(1+ε)^t for every t tried.
    pub opt_grid: Vec<f64>,
    /// ‖B + UV − A‖_p for every t tried.
    pub errors: Vec<f64>,
    pub best_t: Option<usize>,
    /// The residual had rank ≤ 2k, so later guesses were skipped.
    pub stopped_early: bool,
    /// Some guessing step stopped at `max_guesses`.
    pub budget_exhausted: bool,
}

/// Rank-k start B, then the guessing step on C = A − B at rank 2k for every
/// guess SvdError/(1+ε)^t of OPT, keeping the best B + UV.
pub fn rounding_guessing_eps_approximation(
    a: &DenseMatrix,
    k: usize,
    eps: f64,
    p: f64,
    budget: &FptBudget,
    extras: &FptExtras,
    polyk: &PolyKConfig,
    rng: &mut SeededRng,
) -> Result<WrapperOutcome> {
    check_common(a, k, eps, p, budget)?;
    let seed = rng.seed();
    let (n, d) = (a.rows(), a.cols());
    let base = poly_k_not_bicriteria(a, k, p, &mut rng.derive("polyk"), polyk)?;
    let c = a.sub(&base.product())?;
    let k2 = 2 * k;
    let svd_error = svd_baseline(&c, k2, p)?;
    let mut inner = extras.clone();
    if budget.mode == FptMode::OracleGuided && inner.guide.is_none() {
        inner.guide = Some(truncated_svd(&c, k2).0);
    }
    let steps = (budget.opt_grid_constant * ((n * d) as f64).ln() / eps).ceil() as usize;
    let l = (1.0 + eps).ln();
    let mut best: Option<(usize, f64, DenseMatrix, DenseMatrix)> = None;
    let mut best_err = entrywise_norm(a, p)?;
    let (mut opt_grid, mut errors) = (Vec::new(), Vec::new());
    let (mut stopped_early, mut budget_exhausted) = (false, false);
    for t in 0..=steps {
        let opt_hat = svd_error / (t as f64 * l).exp();
        let out = guessing_additive_eps_approximation(
            &c,
            k2,
            eps,
            budget.initializer_factor,
            opt_hat,
            p,
            budget,
            &inner,
            &mut rng.derive(&format!("opt-{t}")),
        )?;
        budget_exhausted |= out.budget_exhausted;
        let err = out.factors.achieved_error_p;
        opt_grid.push(opt_hat);
        errors.push(err);
        if err <= best_err {
            best_err = err;
            best = Some((t, err, out.factors.left, out.factors.right));
        }
        if out.early_return {
            stopped_early = t < steps;
            break;
        }
    }
    let (best_t, u, v) = match best {
        Some((t, _, u, v)) => (Some(t), u, v),
        None => (None, DenseMatrix::zeros(n, k2), DenseMatrix::zeros(k2, d)),
    };
    let (w, z) = if best_t.is_some() {
        (base.left.clone(), base.right.clone())
    } else {
        (DenseMatrix::zeros(n, k), DenseMatrix::zeros(k, d))
    };
    let left = w.hstack(&u)?;
    let right = z.transpose().hstack(&v.transpose())?.transpose();
    Ok(WrapperOutcome {
        factors: FactorPair::evaluate(left, right, 3 * k, a, p, "fpt-wrapper", seed)?,
        base,
        svd_error,
        opt_grid,
        errors,
        best_t,
        stopped_early,
        budget_exhausted,
    })
}
