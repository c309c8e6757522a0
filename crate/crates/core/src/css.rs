//! Randomized column subset selection by repeated block sampling.
//!
//! Each round samples several candidate blocks of 2r columns from the
//! remaining set T, regresses every other remaining column onto each block,
//! keeps the block whose cheapest ⌈δ·m⌉ columns are cheapest in total, and
//! removes that block together with those well-covered columns from T.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorPair;
use crate::lewis::{apply_sampling, default_sample_count, lewis_sampler, SAMPLE_CONSTANT};
use crate::matrix::{vector_norm, ColumnIndexSet, DenseMatrix};
use crate::rng::SeededRng;
use crate::solvers::multi_response_regression;
use crate::solvers::regression::check_p;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CssConfig {
    /// c₁ in r = ⌈c₁·k·ln(k+1)⌉.
    pub r_constant: f64,
    /// δ: fraction of the remaining columns retired with the winning block.
    pub discard_fraction: f64,
    /// Candidate blocks per round; `None` means ⌈log₂ d⌉ + 1.
    pub repeats: Option<usize>,
    /// Maximum number of rounds; `None` means ⌈log_{1/(1−δ)} d⌉ + 1.
    pub round_cap: Option<usize>,
    /// Score candidate blocks on a Lewis-sampled sketch of the rows.
    pub fast_sketch: bool,
}

impl Default for CssConfig {
    fn default() -> Self {
        CssConfig {
            r_constant: 2.0,
            discard_fraction: 0.25,
            repeats: None,
            round_cap: None,
            fast_sketch: false,
        }
    }
}

impl CssConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_constant > 0.0) {
            return Err(Error::invalid("r_constant must be positive"));
        }
        if !(self.discard_fraction > 0.0 && self.discard_fraction < 1.0) {
            return Err(Error::invalid("discard_fraction must lie in (0, 1)"));
        }
        if self.repeats == Some(0) {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        Ok(())
    }

    /// Half the block size: r = max(k, ⌈c₁·k·ln(k+1)·L⌉) where L = 1 for
    /// p = 1 and L = max(1, ln ln(k+2))² otherwise.
    pub fn block_half_size(&self, k: usize, p: f64) -> usize {
        let kf = k as f64;
        let mut r = self.r_constant * kf * (kf + 1.0).ln();
        if p > 1.0 {
            r *= (kf + 2.0).ln().ln().max(1.0).powi(2);
        }
        (r.ceil() as usize).max(k).max(1)
    }

    pub fn repeats_for(&self, d: usize) -> usize {
        self.repeats
            .unwrap_or_else(|| (d.max(1) as f64).log2().ceil() as usize + 1)
    }

    /// Upper bound on the number of rounds implied by the geometric shrink.
    pub fn round_bound(&self, d: usize) -> usize {
        let base = 1.0 / (1.0 - self.discard_fraction);
        ((d.max(1) as f64).ln() / base.ln()).ceil() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CssResult {
    /// Union of the sampled blocks.
    pub selected: ColumnIndexSet,
    /// Winning block of each round, in round order.
    pub blocks: Vec<ColumnIndexSet>,
    /// Columns retired as well covered by each round's block.
    pub covered_per_round: Vec<ColumnIndexSet>,
    /// Σ cost^p over each round's retired columns.
    pub round_costs: Vec<f64>,
    /// Columns never retired (nonempty only when the round cap binds).
    pub remaining: ColumnIndexSet,
    pub r: usize,
    pub p: f64,
    pub k: usize,
    pub converged: bool,
}

impl CssResult {
    pub fn rounds(&self) -> usize {
        self.blocks.len()
    }
}

struct Candidate {
    block: Vec<usize>,
    covered: Vec<usize>,
    cost: f64,
    converged: bool,
}

fn evaluate_block(
    a: &DenseMatrix,
    universe: &[usize],
    block: Vec<usize>,
    retire: usize,
    p: f64,
    sketch_rng: Option<SeededRng>,
) -> Result<Candidate> {
    let rest: Vec<usize> = universe.iter().copied().filter(|c| block.binary_search(c).is_err()).collect();
    let u = a.columns_at(&block);
    let b = a.columns_at(&rest);
    let fit = match sketch_rng {
        None => multi_response_regression(&u, &b, p)?,
        Some(mut rng) => {
            let rows = default_sample_count(block.len(), p, SAMPLE_CONSTANT);
            let s = lewis_sampler(&u, p, rows, &mut rng)?;
            multi_response_regression(&apply_sampling(&s, &u)?, &apply_sampling(&s, &b)?, p)?
        }
    };
    let mut order: Vec<usize> = (0..rest.len()).collect();
    order.sort_by(|&x, &y| fit.costs[x].total_cmp(&fit.costs[y]).then(x.cmp(&y)));
    order.truncate(retire);
    let cost = order.iter().map(|&t| fit.costs[t].powf(p)).sum();
    let mut covered: Vec<usize> = order.iter().map(|&t| rest[t]).collect();
    covered.sort_unstable();
    Ok(Candidate {
        block,
        covered,
        cost,
        converged: fit.converged,
    })
}

pub fn random_column_subset_selection(
    a: &DenseMatrix,
    k: usize,
    p: f64,
    rng: &mut SeededRng,
    cfg: &CssConfig,
) -> Result<CssResult> {
    check_p(p)?;
    cfg.validate()?;
    let d = a.cols();
    if k == 0 {
        return Err(Error::invalid("target rank k must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("matrix has no columns"));
    }
    let r = cfg.block_half_size(k, p);
    let repeats = cfg.repeats_for(d);
    let cap = cfg.round_cap.unwrap_or_else(|| cfg.round_bound(d));
    let mut universe: Vec<usize> = (0..d).collect();
    let (mut blocks, mut covered_sets, mut costs) = (Vec::new(), Vec::new(), Vec::new());
    let mut converged = true;
    while !universe.is_empty() && blocks.len() < cap {
        if universe.len() <= 2 * r {
            blocks.push(ColumnIndexSet::new(std::mem::take(&mut universe), d)?);
            covered_sets.push(ColumnIndexSet::empty());
            costs.push(0.0);
            break;
        }
        let m = universe.len() - 2 * r;
        let retire = ((cfg.discard_fraction * m as f64).ceil() as usize).min(m);
        let draws: Vec<(Vec<usize>, Option<SeededRng>)> = (0..repeats)
            .map(|_| {
                let block = rng.choose_subset(&universe, 2 * r);
                let sketch = cfg.fast_sketch.then(|| rng.split());
                (block, sketch)
            })
            .collect();
        let candidates: Vec<Candidate> = draws
            .into_par_iter()
            .map(|(block, sketch)| evaluate_block(a, &universe, block, retire, p, sketch))
            .collect::<Result<_>>()?;
        let best = candidates
            .into_iter()
            .reduce(|best, c| if c.cost < best.cost { c } else { best })
            .expect("at least one candidate");
        converged &= best.converged;
        universe.retain(|c| best.block.binary_search(c).is_err() && best.covered.binary_search(c).is_err());
        blocks.push(ColumnIndexSet::new(best.block, d)?);
        covered_sets.push(ColumnIndexSet::new(best.covered, d)?);
        costs.push(best.cost);
    }
    let selected = blocks.iter().fold(ColumnIndexSet::empty(), |acc, b| acc.union(b));
    Ok(CssResult {
        selected,
        blocks,
        covered_per_round: covered_sets,
        round_costs: costs,
        remaining: ColumnIndexSet::new(universe, d)?,
        r,
        p,
        k,
        converged,
    })
}

/// ℓp error of the best fit of every column of A onto the columns in S.
pub fn css_error(a: &DenseMatrix, s: &ColumnIndexSet, p: f64) -> Result<f64> {
    let fit = multi_response_regression(&a.select_columns(s)?, a, p)?;
    Ok(vector_norm(&fit.costs, p))
}

/// The factorization A_S · X with X the best right factor for A_S.
pub fn css_factor(a: &DenseMatrix, s: &ColumnIndexSet, k: usize, p: f64, seed: u64) -> Result<FactorPair> {
    let u = a.select_columns(s)?;
    let fit = multi_response_regression(&u, a, p)?;
    FactorPair::evaluate(u, fit.coefficients, k, a, p, "css", seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::entrywise_norm;

    fn planted(n: usize, d: usize, k: usize, rng: &mut SeededRng) -> DenseMatrix {
        let u = DenseMatrix::from_fn(n, k, |_, _| rng.gaussian());
        let v = DenseMatrix::from_fn(k, d, |_, _| rng.gaussian());
        u.matmul(&v).unwrap()
    }

    #[test]
    fn exact_rank_recovered() {
        let mut rng = SeededRng::new(5);
        let a = planted(30, 40, 2, &mut rng);
        let res = random_column_subset_selection(&a, 2, 1.0, &mut rng, &CssConfig::default()).unwrap();
        let err = css_error(&a, &res.selected, 1.0).unwrap();
        assert!(err <= 1e-6 * entrywise_norm(&a, 1.0).unwrap(), "{err}");
    }

    #[test]
    fn small_d_takes_everything() {
        let mut rng = SeededRng::new(6);
        let a = DenseMatrix::from_fn(8, 5, |_, _| rng.gaussian());
        let res = random_column_subset_selection(&a, 2, 1.0, &mut rng, &CssConfig::default()).unwrap();
        assert_eq!(res.selected, ColumnIndexSet::all(5));
        assert!(css_error(&a, &res.selected, 1.0).unwrap() < 1e-9);
    }

    #[test]
    fn structure_invariants() {
        let mut rng = SeededRng::new(7);
        for p in [1.0, 1.5] {
            let a = DenseMatrix::from_fn(20, 70, |_, _| rng.gaussian());
            let cfg = CssConfig::default();
            let res = random_column_subset_selection(&a, 1, p, &mut rng, &cfg).unwrap();
            assert!(res.remaining.is_empty());
            assert!(res.rounds() <= cfg.round_bound(70));
            assert!(res.selected.len() <= 2 * res.r * res.rounds());
            for (i, b) in res.blocks.iter().enumerate() {
                if i + 1 < res.rounds() {
                    assert_eq!(b.len(), 2 * res.r);
                }
                for later in &res.blocks[i + 1..] {
                    assert!(b.is_disjoint(later));
                }
                for c in &res.covered_per_round {
                    assert!(b.is_disjoint(c));
                }
                for later in &res.blocks[i + 1..] {
                    assert!(res.covered_per_round[i].is_disjoint(later));
                }
            }
            let mut all = res.selected.clone();
            for c in &res.covered_per_round {
                assert!(all.is_disjoint(c));
                all = all.union(c);
            }
            assert_eq!(all, ColumnIndexSet::all(70));
        }
    }

    #[test]
    fn css_error_edge_cases() {
        let mut rng = SeededRng::new(8);
        let a = DenseMatrix::from_fn(6, 4, |_, _| rng.gaussian());
        assert!(css_error(&a, &ColumnIndexSet::all(4), 1.0).unwrap() < 1e-9);
        let e = css_error(&a, &ColumnIndexSet::empty(), 1.3).unwrap();
        assert!((e - entrywise_norm(&a, 1.3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn css_error_superset_monotone() {
        let mut rng = SeededRng::new(9);
        for _ in 0..100 {
            let a = DenseMatrix::from_fn(8, 7, |_, _| rng.gaussian());
            let big = rng.choose_subset(&(0..7).collect::<Vec<_>>(), 4);
            let small = rng.choose_subset(&big, 2);
            let eb = css_error(&a, &ColumnIndexSet::new(big, 7).unwrap(), 1.0).unwrap();
            let es = css_error(&a, &ColumnIndexSet::new(small, 7).unwrap(), 1.0).unwrap();
            assert!(eb <= es + 1e-9);
        }
    }

    #[test]
    fn deterministic_and_fast_mode() {
        let a = planted(25, 50, 2, &mut SeededRng::new(10));
        let cfg = CssConfig {
            fast_sketch: true,
            ..CssConfig::default()
        };
        let r1 = random_column_subset_selection(&a, 2, 1.0, &mut SeededRng::new(1), &cfg).unwrap();
        let r2 = random_column_subset_selection(&a, 2, 1.0, &mut SeededRng::new(1), &cfg).unwrap();
        assert_eq!(r1, r2);
        assert!(css_error(&a, &r1.selected, 1.0).unwrap() <= 1e-6 * entrywise_norm(&a, 1.0).unwrap());
    }

    #[test]
    fn full_rank_k_equals_d() {
        let mut rng = SeededRng::new(12);
        let a = DenseMatrix::from_fn(6, 6, |_, _| rng.gaussian());
        let res = random_column_subset_selection(&a, 6, 1.0, &mut rng, &CssConfig::default()).unwrap();
        assert!(css_error(&a, &res.selected, 1.0).unwrap() < 1e-9);
    }
}
