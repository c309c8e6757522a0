//! poly(k) approximations: choosing a few CSS blocks (bicriteria rank
//! O(r²)) and reducing the result to rank exactly k.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::css::{random_column_subset_selection, CssConfig, CssResult};
use crate::error::{Error, Result};
use crate::factor::FactorPair;
use crate::lewis::{apply_sampling, default_sample_count, lewis_sampler, SamplingMatrix, SAMPLE_CONSTANT};
use crate::linalg::{column_basis, numerical_rank, thin_svd, truncated_svd, RANK_RTOL};
use crate::matrix::{entrywise_norm, ColumnIndexSet, DenseMatrix};
use crate::rng::SeededRng;
use crate::sketch::PStableSketch;
use crate::solvers::regression::check_p;
use crate::solvers::{best_left_factor, multi_response_regression};

/// Default bound on the number of block subsets scored exhaustively.
pub const SUBSET_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockEnumConfig {
    pub epsilon: f64,
    pub big_constant_c: f64,
    /// Score subsets on one shared Lewis sample of the rows instead of
    /// exactly.
    pub shared_sketch: bool,
    pub subset_budget: u64,
    pub css: CssConfig,
}

impl Default for BlockEnumConfig {
    fn default() -> Self {
        BlockEnumConfig {
            epsilon: 0.1,
            big_constant_c: 8.0,
            shared_sketch: false,
            subset_budget: SUBSET_BUDGET,
            css: CssConfig::default(),
        }
    }
}

impl BlockEnumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon = {} outside (0, 1)", self.epsilon)));
        }
        if !(self.big_constant_c > 0.0) {
            return Err(Error::invalid("big_constant_c must be positive"));
        }
        self.css.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionBranch {
    /// Few blocks: every block is kept.
    AllBlocks,
    /// Every r-subset of blocks was scored.
    Enumerated,
    /// Too many subsets: blocks were added greedily.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub blocks: Vec<usize>,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSelection {
    /// A_T for the chosen union T of blocks.
    pub left: DenseMatrix,
    pub columns: ColumnIndexSet,
    /// Indices (into `css.blocks`) of the chosen blocks.
    pub chosen_blocks: Vec<usize>,
    pub branch: SelectionBranch,
    /// Score of the chosen subset (exact or sketched), when subsets were
    /// scored.
    pub min_error: Option<f64>,
    /// Every scored subset, in evaluation order.
    pub scores: Vec<SubsetScore>,
    pub css: CssResult,
}

struct Scorer<'a> {
    a: &'a DenseMatrix,
    blocks: &'a [ColumnIndexSet],
    p: f64,
    sketch: Option<(SamplingMatrix, DenseMatrix)>,
}

impl Scorer<'_> {
    fn columns(&self, subset: &[usize]) -> ColumnIndexSet {
        subset
            .iter()
            .fold(ColumnIndexSet::empty(), |acc, &i| acc.union(&self.blocks[i]))
    }

    fn score(&self, subset: &[usize]) -> Result<f64> {
        let u = self.a.select_columns(&self.columns(subset))?;
        let fit = match &self.sketch {
            None => multi_response_regression(&u, self.a, self.p)?,
            Some((s, sa)) => multi_response_regression(&apply_sampling(s, &u)?, sa, self.p)?,
        };
        Ok(fit.total_error(self.p))
    }

    fn score_all(&self, subsets: Vec<Vec<usize>>) -> Result<Vec<SubsetScore>> {
        subsets
            .into_par_iter()
            .map(|blocks| {
                let error = self.score(&blocks)?;
                Ok(SubsetScore { blocks, error })
            })
            .collect()
    }
}

/// First minimum, so ties go to the earliest subset in evaluation order.
fn argmin(scores: &[SubsetScore]) -> Option<&SubsetScore> {
    scores.iter().fold(None, |best: Option<&SubsetScore>, s| match best {
        Some(b) if b.error <= s.error => Some(b),
        _ => Some(s),
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Runs CSS, then keeps either all blocks (when b < (C/ε)·r) or the best
/// r-subset of blocks by ℓp fitting error.
pub fn poly_k_error_and_rank(
    a: &DenseMatrix,
    k: usize,
    p: f64,
    rng: &mut SeededRng,
    cfg: &BlockEnumConfig,
) -> Result<BlockSelection> {
    check_p(p)?;
    cfg.validate()?;
    let css = random_column_subset_selection(a, k, p, &mut rng.split(), &cfg.css)?;
    let b = css.blocks.len();
    let r = css.r;
    let threshold = cfg.big_constant_c / cfg.epsilon * r as f64;
    let finish = |chosen: Vec<usize>, branch, min_error, scores, css: CssResult| -> Result<BlockSelection> {
        let columns = chosen
            .iter()
            .fold(ColumnIndexSet::empty(), |acc, &i| acc.union(&css.blocks[i]));
        Ok(BlockSelection {
            left: a.select_columns(&columns)?,
            columns,
            chosen_blocks: chosen,
            branch,
            min_error,
            scores,
            css,
        })
    };
    if (b as f64) < threshold || b <= r {
        return finish((0..b).collect(), SelectionBranch::AllBlocks, None, Vec::new(), css);
    }
    let sketch = if cfg.shared_sketch {
        let u = a.select_columns(&css.selected)?;
        let t = numerical_rank(&u, RANK_RTOL).max(1);
        let s = lewis_sampler(&u, p, default_sample_count(t, p, SAMPLE_CONSTANT), &mut rng.split())?;
        let sa = apply_sampling(&s, a)?;
        Some((s, sa))
    } else {
        None
    };
    let scorer = Scorer {
        a,
        blocks: &css.blocks,
        p,
        sketch,
    };
    if binomial(b, r) <= cfg.subset_budget {
        let scores = scorer.score_all((0..b).combinations(r).collect())?;
        let best = argmin(&scores).expect("at least one subset").clone();
        return finish(best.blocks, SelectionBranch::Enumerated, Some(best.error), scores, css);
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut scores = Vec::new();
    let mut best_error = f64::INFINITY;
    while chosen.len() < r {
        let trials: Vec<Vec<usize>> = (0..b)
            .filter(|i| !chosen.contains(i))
            .map(|i| {
                let mut s = chosen.clone();
                s.push(i);
                s.sort_unstable();
                s
            })
            .collect();
        let round = scorer.score_all(trials)?;
        let best = argmin(&round).expect("blocks remain").clone();
        chosen = best.blocks;
        best_error = best.error;
        scores.extend(round);
    }
    finish(chosen, SelectionBranch::Greedy, Some(best_error), scores, css)
}

/// Rows of the p-stable sketch used to seed the row space.
fn sketch_rows(k: usize) -> usize {
    (10 * k).max(20)
}

/// Top-k right singular vectors of `m` as a k × d matrix.
fn top_right_vectors(m: &DenseMatrix, k: usize) -> DenseMatrix {
    let svd = thin_svd(m);
    let kk = k.min(svd.s.len());
    DenseMatrix::from_fn(k, m.cols(), |i, j| if i < kk { svd.v.get(j, i) } else { 0.0 })
}

/// Reduces B = U_B·V_B to rank at most k. Two row-space seeds are tried:
/// the top-k right singular vectors of a p-stable sketch S·B and those of B
/// itself. From each, two rounds of alternating ℓp fits follow, each factor
/// restricted to the column (resp. row) space of B, ending with a
/// right-factor fit. The best pair seen is returned.
pub fn remove_bicriteria_rank(
    u_b: &DenseMatrix,
    v_b: &DenseMatrix,
    k: usize,
    p: f64,
    rng: &mut SeededRng,
) -> Result<FactorPair> {
    check_p(p)?;
    let seed = rng.seed();
    let b = u_b.matmul(v_b)?;
    if k >= u_b.cols() {
        return FactorPair::evaluate(u_b.clone(), v_b.clone(), k, &b, p, "remove-bicriteria-rank", seed);
    }
    let col_basis = column_basis(&b);
    if col_basis.cols() <= k {
        let (w, z) = truncated_svd(&b, k);
        return FactorPair::evaluate(w, z, k, &b, p, "remove-bicriteria-rank", seed);
    }
    let row_basis = column_basis(&b.transpose());
    let sketch = PStableSketch::new(sketch_rows(k), b.rows(), p, rng)?;
    let seeds = [top_right_vectors(&sketch.apply(&b)?, k), top_right_vectors(&b, k)];
    let mut best: Option<(f64, DenseMatrix, DenseMatrix)> = None;
    let mut keep = |w: &DenseMatrix, z: &DenseMatrix| -> Result<()> {
        let err = entrywise_norm(&w.matmul(z)?.sub(&b)?, p)?;
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, w.clone(), z.clone()));
        }
        Ok(())
    };
    for start in seeds {
        let mut z = start;
        for _ in 0..2 {
            let w = best_left_factor(&z, &b, p, Some(&col_basis))?.left;
            keep(&w, &z)?;
            z = best_left_factor(&w.transpose(), &b.transpose(), p, Some(&row_basis))?
                .left
                .transpose();
            keep(&w, &z)?;
        }
    }
    let (_, w, z) = best.expect("at least one candidate");
    FactorPair::evaluate(w, z, k, &b, p, "remove-bicriteria-rank", seed)
}

/// Options for [`poly_k_not_bicriteria`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolyKConfig {
    pub blocks: BlockEnumConfig,
    /// Fit the intermediate right factor on a Lewis sample of the rows of
    /// the chosen columns (used only when the sample is smaller than n).
    pub sketch_right_factor: bool,
}

impl Default for PolyKConfig {
    fn default() -> Self {
        PolyKConfig {
            blocks: BlockEnumConfig::default(),
            sketch_right_factor: true,
        }
    }
}

/// Block selection, a right factor for the chosen columns, then reduction
/// to rank k. The result is evaluated against `a`.
pub fn poly_k_not_bicriteria(
    a: &DenseMatrix,
    k: usize,
    p: f64,
    rng: &mut SeededRng,
    cfg: &PolyKConfig,
) -> Result<FactorPair> {
    let seed = rng.seed();
    let sel = poly_k_error_and_rank(a, k, p, rng, &cfg.blocks)?;
    let u = sel.left;
    let t = numerical_rank(&u, RANK_RTOL).max(1);
    let rows = default_sample_count(t, p, SAMPLE_CONSTANT);
    let v = if cfg.sketch_right_factor && rows < a.rows() {
        let s = lewis_sampler(&u, p, rows, &mut rng.split())?;
        multi_response_regression(&apply_sampling(&s, &u)?, &apply_sampling(&s, a)?, p)?.coefficients
    } else {
        multi_response_regression(&u, a, p)?.coefficients
    };
    let reduced = remove_bicriteria_rank(&u, &v, k, p, &mut rng.split())?;
    FactorPair::evaluate(reduced.left, reduced.right, k, a, p, "polyk", seed)
}
