//! Batch front end: run configuration, instance loading, algorithm dispatch
//! and versioned JSON reports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use lplra::css::{css_error, css_factor, random_column_subset_selection, CssConfig};
use lplra::fpt::{rounding_guessing_eps_approximation, FptBudget, FptExtras};
use lplra::io::{read_matrix, write_matrix_market};
use lplra::oracle::{brute_force_factor, brute_force_opt, hard_instance, planted_instance_with_noise, svd_baseline, NoiseKind};
use lplra::rankreduce::{poly_k_error_and_rank, poly_k_not_bicriteria, BlockEnumConfig, PolyKConfig};
use lplra::sketch::sketch_property_suite;
use lplra::solvers::multi_response_regression;
use lplra::{entrywise_norm, ColumnIndexSet, DenseMatrix, FactorPair, SeededRng};

pub const SCHEMA_VERSION: u32 = 1;

/// Ratios divide by max(baseline, RATIO_FLOOR_RELATIVE · ‖A‖_p).
pub const RATIO_FLOOR_RELATIVE: f64 = 1e-12;

/// Restarts used by `--algo oracle` when `oracle_restarts` is 0.
pub const DEFAULT_ORACLE_RESTARTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Randomized column subset selection.
    #[default]
    Css,
    /// Block selection with poly(k) rank and a fitted right factor.
    Polyk,
    /// Block selection reduced to rank exactly k.
    PolykExact,
    /// Guess-and-round (1+ε) scheme around a rank-k start.
    Fpt,
    /// Empirical checks of the p-stable sketch properties.
    SketchCheck,
    /// Best random half-subset of columns on the hard instance.
    HardnessScan,
    /// Alternating-minimization reference solution.
    Oracle,
}

/// A generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GenSpec {
    /// Rank-`rank` Gaussian product plus scaled noise.
    Planted {
        rows: usize,
        cols: usize,
        rank: usize,
        noise: f64,
        #[serde(default)]
        noise_kind: NoiseKind,
    },
    /// Independent standard Gaussian entries.
    Gaussian { rows: usize, cols: usize },
    /// [G; I_n] with G a `rank` × n Gaussian block.
    Hard { rank: usize, n: usize },
}

/// Parses `kind:key=value,key=value`, for example
/// `planted:rows=40,cols=40,rank=2,noise=0.1,noise_kind=cauchy`.
impl FromStr for GenSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut map = Map::new();
        map.insert("kind".into(), Value::String(kind.trim().to_string()));
        for pair in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("generator field `{pair}` is not key=value")))?;
            let value = value.trim();
            let parsed = if let Ok(u) = value.parse::<u64>() {
                json!(u)
            } else if let Ok(x) = value.parse::<f64>() {
                json!(x)
            } else {
                json!(value)
            };
            map.insert(key.trim().to_string(), parsed);
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::config(format!("generator `{s}`: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Matrix Market or CSV file.
    pub input: Option<PathBuf>,
    pub gen: Option<GenSpec>,
    pub k: usize,
    pub p: f64,
    pub eps: f64,
    pub seed: u64,
    /// Restarts of the brute-force oracle; 0 skips it.
    pub oracle_restarts: usize,
    /// Random subsets tried by the hardness scan.
    pub hardness_subsets: usize,
    /// Prefix for `<prefix>.left.mtx` and `<prefix>.right.mtx`.
    pub factors_out: Option<PathBuf>,
    /// Report a guess enumeration cut short by `fpt.max_guesses` instead of
    /// failing with a budget error.
    pub allow_truncated_search: bool,
    pub css: CssConfig,
    pub blocks: BlockEnumConfig,
    pub sketch_right_factor: bool,
    pub fpt: FptBudget,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::default(),
            input: None,
            gen: None,
            k: 1,
            p: 1.0,
            eps: 0.25,
            seed: 0,
            oracle_restarts: 0,
            hardness_subsets: 200,
            factors_out: None,
            allow_truncated_search: false,
            css: CssConfig::default(),
            blocks: BlockEnumConfig::default(),
            sketch_right_factor: true,
            fpt: FptBudget::default(),
        }
    }
}

impl RunConfig {
    /// Reads TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::config("k must be at least 1"));
        }
        if !(self.p >= 1.0 && self.p < 2.0) {
            return Err(CliError::config(format!("p = {} outside [1, 2)", self.p)));
        }
        match self.algorithm {
            Algorithm::SketchCheck => {}
            Algorithm::HardnessScan => {
                if self.input.is_some() || !matches!(self.gen, None | Some(GenSpec::Hard { .. })) {
                    return Err(CliError::config("hardness-scan only accepts a `hard` generator"));
                }
                if self.hardness_subsets == 0 {
                    return Err(CliError::config("hardness_subsets must be at least 1"));
                }
            }
            _ => match (&self.input, &self.gen) {
                (Some(_), Some(_)) => return Err(CliError::config("give either an input file or a generator, not both")),
                (None, None) => return Err(CliError::config("an input file or a generator is required")),
                _ => {}
            },
        }
        if self.algorithm == Algorithm::Fpt && !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(CliError::config(format!("eps = {} outside (0, 1)", self.eps)));
        }
        self.css.validate()?;
        self.blocks.validate()?;
        self.fpt.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Numerical,
    Budget,
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn budget(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Budget,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Budget => 4,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "error": {
                "kind": self.kind,
                "message": self.message,
                "exit_code": self.exit_code(),
            }
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} error: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<lplra::Error> for CliError {
    fn from(e: lplra::Error) -> Self {
        let kind = match e {
            lplra::Error::BudgetExceeded(_) => ErrorKind::Budget,
            lplra::Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Config,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub input_norm_p: Option<f64>,
    pub achieved_error_p: Option<f64>,
    pub baseline_svd_error: Option<f64>,
    pub oracle_opt: Option<f64>,
    /// Smallest denominator used for the ratios.
    pub ratio_floor: Option<f64>,
    pub ratio_vs_svd: Option<f64>,
    pub ratio_vs_oracle: Option<f64>,
    pub rank_of_output: Option<usize>,
    pub inner_dimension: Option<usize>,
    pub columns_selected: Option<Vec<usize>>,
    pub planted_noise_norm_p: Option<f64>,
    /// Algorithm-specific diagnostics.
    pub details: Value,
    pub wall_time_seconds: f64,
    pub config: RunConfig,
}

/// The outcome of a run: the report plus the factors, when there are any.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub factors: Option<FactorPair>,
}

struct Instance {
    a: DenseMatrix,
    planted_noise: Option<f64>,
}

struct Fit {
    factors: FactorPair,
    columns: Option<Vec<usize>>,
    details: Value,
    oracle: Option<f64>,
}

/// ratio = value / max(baseline, floor), undefined when the denominator is 0.
pub fn ratio(value: f64, baseline: f64, floor: f64) -> Option<f64> {
    let denom = baseline.max(floor);
    (denom > 0.0).then(|| value / denom)
}

fn load_instance(cfg: &RunConfig, rng: &SeededRng) -> Result<Instance, CliError> {
    if let Some(path) = &cfg.input {
        let a = read_matrix(path).map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("{}: {}", path.display(), err.message);
            err
        })?;
        return Ok(Instance {
            a,
            planted_noise: None,
        });
    }
    let mut rng = rng.derive("instance");
    match cfg.gen.as_ref().expect("validated") {
        GenSpec::Planted {
            rows,
            cols,
            rank,
            noise,
            noise_kind,
        } => {
            let inst = planted_instance_with_noise(*rows, *cols, *rank, *noise, cfg.p, *noise_kind, &mut rng)?;
            Ok(Instance {
                a: inst.a,
                planted_noise: Some(inst.noise_norm_p),
            })
        }
        GenSpec::Gaussian { rows, cols } => Ok(Instance {
            a: DenseMatrix::from_fn(*rows, *cols, |_, _| rng.gaussian()),
            planted_noise: None,
        }),
        GenSpec::Hard { rank, n } => Ok(Instance {
            a: hard_instance(*rank, *n, &mut rng).m,
            planted_noise: None,
        }),
    }
}

fn fit(cfg: &RunConfig, a: &DenseMatrix, rng: &SeededRng) -> Result<Fit, CliError> {
    let (k, p) = (cfg.k, cfg.p);
    let mut rng = rng.derive("algorithm");
    let seed = cfg.seed;
    let polyk = PolyKConfig {
        blocks: cfg.blocks.clone(),
        sketch_right_factor: cfg.sketch_right_factor,
    };
    let fit = match cfg.algorithm {
        Algorithm::Css => {
            let res = random_column_subset_selection(a, k, p, &mut rng, &cfg.css)?;
            Fit {
                factors: css_factor(a, &res.selected, k, p, seed)?,
                columns: Some(res.selected.indices().to_vec()),
                details: json!({
                    "block_half_size": res.r,
                    "rounds": res.rounds(),
                    "converged": res.converged,
                }),
                oracle: None,
            }
        }
        Algorithm::Polyk => {
            let sel = poly_k_error_and_rank(a, k, p, &mut rng, &cfg.blocks)?;
            let right = multi_response_regression(&sel.left, a, p)?.coefficients;
            Fit {
                factors: FactorPair::evaluate(sel.left.clone(), right, k, a, p, "polyk", seed)?,
                columns: Some(sel.columns.indices().to_vec()),
                details: json!({
                    "branch": sel.branch,
                    "chosen_blocks": sel.chosen_blocks,
                    "blocks_available": sel.css.blocks.len(),
                }),
                oracle: None,
            }
        }
        Algorithm::PolykExact => Fit {
            factors: poly_k_not_bicriteria(a, k, p, &mut rng, &polyk)?,
            columns: None,
            details: json!({}),
            oracle: None,
        },
        Algorithm::Fpt => {
            let out = rounding_guessing_eps_approximation(a, k, cfg.eps, p, &cfg.fpt, &FptExtras::default(), &polyk, &mut rng)?;
            if out.budget_exhausted && !cfg.allow_truncated_search {
                return Err(CliError::budget(format!(
                    "guess enumeration exceeded max_guesses = {}",
                    cfg.fpt.max_guesses
                )));
            }
            Fit {
                details: json!({
                    "start_error": out.base.achieved_error_p,
                    "residual_svd_error": out.svd_error,
                    "opt_grid": out.opt_grid,
                    "errors": out.errors,
                    "best_t": out.best_t,
                    "stopped_early": out.stopped_early,
                    "budget_exhausted": out.budget_exhausted,
                }),
                factors: out.factors,
                columns: None,
                oracle: None,
            }
        }
        Algorithm::Oracle => {
            let restarts = if cfg.oracle_restarts == 0 { DEFAULT_ORACLE_RESTARTS } else { cfg.oracle_restarts };
            let (err, u, v) = brute_force_factor(a, k, p, restarts, &mut rng)?;
            Fit {
                factors: FactorPair::evaluate(u, v, k, a, p, "oracle", seed)?,
                columns: None,
                details: json!({ "restarts": restarts }),
                oracle: Some(err),
            }
        }
        Algorithm::HardnessScan => {
            let n = a.cols();
            let all: Vec<usize> = (0..n).collect();
            let size = (n / 2).max(1);
            let mut best: Option<(f64, ColumnIndexSet)> = None;
            for _ in 0..cfg.hardness_subsets {
                let set = ColumnIndexSet::from_unsorted(rng.choose_subset(&all, size), n)?;
                let err = css_error(a, &set, p)?;
                if best.as_ref().is_none_or(|(b, _)| err < *b) {
                    best = Some((err, set));
                }
            }
            let (err, set) = best.expect("at least one subset");
            let upper = (n as f64).powf(1.0 / p);
            Fit {
                factors: css_factor(a, &set, k, p, seed)?,
                columns: Some(set.indices().to_vec()),
                details: json!({
                    "subsets": cfg.hardness_subsets,
                    "subset_size": size,
                    "opt_upper_bound": upper,
                    "best_over_upper_bound": err / upper,
                }),
                oracle: None,
            }
        }
        Algorithm::SketchCheck => unreachable!("handled before instance loading"),
    };
    Ok(fit)
}

fn hardness_config(cfg: &RunConfig) -> RunConfig {
    let mut cfg = cfg.clone();
    if cfg.gen.is_none() {
        cfg.gen = Some(GenSpec::Hard { rank: cfg.k, n: 2 * cfg.k });
    }
    cfg
}

/// Runs one configuration. Deterministic in everything but
/// `wall_time_seconds`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let rng = SeededRng::new(cfg.seed);

    if cfg.algorithm == Algorithm::SketchCheck {
        let props = sketch_property_suite(&rng.derive("sketch-check"))?;
        let passed = props.iter().filter(|o| o.passed).count();
        let report = Report {
            schema_version: SCHEMA_VERSION,
            algorithm: cfg.algorithm,
            seed: cfg.seed,
            rows: None,
            cols: None,
            input_norm_p: None,
            achieved_error_p: None,
            baseline_svd_error: None,
            oracle_opt: None,
            ratio_floor: None,
            ratio_vs_svd: None,
            ratio_vs_oracle: None,
            rank_of_output: None,
            inner_dimension: None,
            columns_selected: None,
            planted_noise_norm_p: None,
            details: json!({
                "passed": passed,
                "failed": props.len() - passed,
                "properties": props,
            }),
            wall_time_seconds: start.elapsed().as_secs_f64(),
            config: cfg.clone(),
        };
        return Ok(RunOutput { report, factors: None });
    }

    let effective = if cfg.algorithm == Algorithm::HardnessScan { hardness_config(cfg) } else { cfg.clone() };
    let inst = load_instance(&effective, &rng)?;
    let a = &inst.a;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(CliError::config("the input matrix is empty"));
    }
    let norm_a = entrywise_norm(a, cfg.p)?;
    let fit = fit(&effective, a, &rng)?;
    let achieved = fit.factors.achieved_error_p;
    if !achieved.is_finite() {
        return Err(CliError::numerical(format!("achieved error is {achieved}")));
    }
    let svd = svd_baseline(a, cfg.k.min(a.rows()).min(a.cols()), cfg.p)?;
    let oracle = match fit.oracle {
        Some(o) => Some(o),
        None if cfg.oracle_restarts > 0 => Some(brute_force_opt(a, cfg.k, cfg.p, cfg.oracle_restarts, &mut rng.derive("oracle"))?),
        None => None,
    };
    let floor = RATIO_FLOOR_RELATIVE * norm_a;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        rows: Some(a.rows()),
        cols: Some(a.cols()),
        input_norm_p: Some(norm_a),
        achieved_error_p: Some(achieved),
        baseline_svd_error: Some(svd),
        oracle_opt: oracle,
        ratio_floor: Some(floor),
        ratio_vs_svd: ratio(achieved, svd, floor),
        ratio_vs_oracle: oracle.and_then(|o| ratio(achieved, o, floor)),
        rank_of_output: Some(fit.factors.rank()),
        inner_dimension: Some(fit.factors.inner_dim()),
        columns_selected: fit.columns,
        planted_noise_norm_p: inst.planted_noise,
        details: fit.details,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok(RunOutput {
        report,
        factors: Some(fit.factors),
    })
}

/// Writes `<prefix>.left.mtx` and `<prefix>.right.mtx`.
pub fn write_factors(factors: &FactorPair, prefix: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let with_suffix = |suffix: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(suffix);
        PathBuf::from(name)
    };
    let (left, right) = (with_suffix(".left.mtx"), with_suffix(".right.mtx"));
    for (m, path) in [(&factors.left, &left), (&factors.right, &right)] {
        let file = fs::File::create(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        write_matrix_market(m, std::io::BufWriter::new(file))?;
    }
    Ok((left, right))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_text(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}
