use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lplra::fpt::FptMode;
use lplra_cli::{run, to_json_text, write_factors, Algorithm, CliError, GenSpec, RunConfig};

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    FullEnumeration,
    OracleGuided,
}

/// Entrywise lp low-rank approximation. Flags override the config file.
#[derive(Debug, Parser)]
#[command(name = "lplra", version)]
struct Cli {
    /// JSON or TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    algo: Option<Algorithm>,
    /// Matrix Market (.mtx) or CSV (.csv) input.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generator such as `planted:rows=40,cols=40,rank=2,noise=0.1`,
    /// `gaussian:rows=20,cols=30` or `hard:rank=10,n=20`.
    #[arg(long)]
    gen: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Factor f of the guessing step.
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the factors to `<prefix>.left.mtx` and `<prefix>.right.mtx`.
    #[arg(long)]
    factors_out: Option<PathBuf>,
    #[arg(long)]
    oracle_restarts: Option<usize>,
    #[arg(long)]
    hardness_subsets: Option<usize>,
    #[arg(long)]
    budget_sketch_rows: Option<usize>,
    #[arg(long)]
    budget_grid_cap: Option<usize>,
    #[arg(long)]
    budget_max_guesses: Option<u64>,
    #[arg(long, value_enum)]
    budget_mode: Option<ModeArg>,
    /// Report a guess enumeration cut short by the guess budget.
    #[arg(long)]
    allow_truncated_search: bool,
    #[arg(long)]
    budget_trials: Option<usize>,
    /// Most block subsets scored by the poly(k) selection.
    #[arg(long)]
    budget_subsets: Option<u64>,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(a) = cli.algo {
        cfg.algorithm = a;
    }
    if let Some(path) = &cli.input {
        cfg.input = Some(path.clone());
        cfg.gen = None;
    }
    if let Some(spec) = &cli.gen {
        cfg.gen = Some(spec.parse::<GenSpec>()?);
        cfg.input = None;
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = cli.$flag { cfg.$($field).+ = v; })*
        };
    }
    set!(
        k => k,
        p => p,
        eps => eps,
        f => fpt.initializer_factor,
        seed => seed,
        oracle_restarts => oracle_restarts,
        hardness_subsets => hardness_subsets,
        budget_sketch_rows => fpt.sketch_rows,
        budget_grid_cap => fpt.grid_values_cap,
        budget_max_guesses => fpt.max_guesses,
        budget_subsets => blocks.subset_budget,
    );
    if let Some(t) = cli.budget_trials {
        cfg.fpt.trials = Some(t);
    }
    if let Some(m) = cli.budget_mode {
        cfg.fpt.mode = match m {
            ModeArg::FullEnumeration => FptMode::FullEnumeration,
            ModeArg::OracleGuided => FptMode::OracleGuided,
        };
    }
    if cli.allow_truncated_search {
        cfg.allow_truncated_search = true;
    }
    if let Some(prefix) = &cli.factors_out {
        cfg.factors_out = Some(prefix.clone());
    }
    Ok(cfg)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::config(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    let output = run(&cfg)?;
    if let (Some(prefix), Some(factors)) = (&cfg.factors_out, &output.factors) {
        write_factors(factors, prefix)?;
    }
    emit(&to_json_text(&output.report), cli.out.as_ref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{err}");
            print!("{}", to_json_text(&err.to_json()));
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            let text = to_json_text(&err.to_json());
            if emit(&text, cli.out.as_ref()).is_err() {
                print!("{text}");
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
