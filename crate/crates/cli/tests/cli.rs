use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lplra::io::{read_matrix_market, write_matrix_market};
use lplra::{entrywise_norm, DenseMatrix, SeededRng};
use lplra_cli::{ratio, run, Algorithm, CliError, GenSpec, Report, RunConfig, SCHEMA_VERSION};
use serde_json::Value;

fn lplra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lplra")).args(args).output().expect("binary runs")
}

fn without_wall_time(text: &str) -> String {
    text.lines().filter(|l| !l.contains("\"wall_time_seconds\"")).collect::<Vec<_>>().join("\n")
}

fn assert_ratios_consistent(r: &Report) {
    let floor = r.ratio_floor.unwrap();
    let achieved = r.achieved_error_p.unwrap();
    let expected = achieved / r.baseline_svd_error.unwrap().max(floor);
    assert!((r.ratio_vs_svd.unwrap() - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    if let Some(o) = r.oracle_opt {
        let expected = achieved / o.max(floor);
        assert!((r.ratio_vs_oracle.unwrap() - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }
}

fn planted_exact(rows: usize, cols: usize, rank: usize) -> GenSpec {
    GenSpec::Planted {
        rows,
        cols,
        rank,
        noise: 0.0,
        noise_kind: Default::default(),
    }
}

#[test]
fn css_on_exact_rank_instance_is_exact() {
    let cfg = RunConfig {
        gen: Some(planted_exact(30, 30, 2)),
        k: 2,
        seed: 11,
        ..RunConfig::default()
    };
    let out = run(&cfg).unwrap();
    let r = &out.report;
    assert_eq!(r.schema_version, SCHEMA_VERSION);
    assert!(r.achieved_error_p.unwrap() <= 1e-6 * r.input_norm_p.unwrap());
    assert!(r.ratio_vs_svd.unwrap() <= 1.0 + 1e-6);
    assert_eq!(r.rank_of_output, Some(2));
    assert!(!r.columns_selected.as_ref().unwrap().is_empty());
    assert_ratios_consistent(r);
}

#[test]
fn every_matrix_algorithm_reports_consistent_ratios() {
    for algorithm in [Algorithm::Css, Algorithm::Polyk, Algorithm::PolykExact, Algorithm::Fpt, Algorithm::Oracle] {
        let cfg = RunConfig {
            algorithm,
            gen: Some(GenSpec::Planted {
                rows: 8,
                cols: 8,
                rank: 1,
                noise: 0.1,
                noise_kind: Default::default(),
            }),
            k: 1,
            eps: 0.5,
            oracle_restarts: 5,
            seed: 4,
            ..RunConfig::default()
        };
        let out = run(&cfg).unwrap();
        assert_ratios_consistent(&out.report);
        let rank = out.report.rank_of_output.unwrap();
        match algorithm {
            Algorithm::PolykExact | Algorithm::Oracle => assert!(rank <= 1, "{algorithm:?}: rank {rank}"),
            Algorithm::Fpt => assert!(rank <= 3, "fpt: rank {rank}"),
            _ => {}
        }
    }
}

#[test]
fn ratio_uses_the_floor() {
    assert_eq!(ratio(2.0, 1.0, 0.5), Some(2.0));
    assert_eq!(ratio(2.0, 0.0, 0.5), Some(4.0));
    assert_eq!(ratio(2.0, 0.0, 0.0), None);
}

#[test]
fn same_config_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2).map(|i| dir.path().join(format!("r{i}.json"))).collect();
    for path in &paths {
        let out = lplra(&[
            "--algo",
            "polyk-exact",
            "--gen",
            "planted:rows=20,cols=16,rank=2,noise=0.2,noise_kind=cauchy",
            "--k",
            "2",
            "--p",
            "1.5",
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read_to_string(&paths[0]).unwrap();
    let b = fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(without_wall_time(&a), without_wall_time(&b));
    let report: Report = serde_json::from_str(&a).unwrap();
    assert_eq!(report.algorithm, Algorithm::PolykExact);
    assert_eq!(report.config.p, 1.5);
}

#[test]
fn input_file_and_factor_output_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(21);
    let a = DenseMatrix::from_fn(12, 9, |_, _| rng.gaussian());
    let input = dir.path().join("a.mtx");
    write_matrix_market(&a, fs::File::create(&input).unwrap()).unwrap();
    let back = read_matrix_market(fs::File::open(&input).unwrap()).unwrap();
    assert_eq!(back.data(), a.data());

    let prefix = dir.path().join("fit");
    let out = lplra(&[
        "--algo",
        "css",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "2",
        "--factors-out",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    let read = |suffix: &str| read_matrix_market(fs::File::open(Path::new(&format!("{}{suffix}", prefix.display()))).unwrap()).unwrap();
    let (left, right) = (read(".left.mtx"), read(".right.mtx"));
    let err = entrywise_norm(&left.matmul(&right).unwrap().sub(&a).unwrap(), 1.0).unwrap();
    assert_eq!(err.to_bits(), report.achieved_error_p.unwrap().to_bits());
    assert_eq!(report.inner_dimension, Some(left.cols()));
}

#[test]
fn csv_input_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("a.csv");
    fs::write(&input, "1,2,3\n2,4,6\n3,6,9.5\n").unwrap();
    let out = lplra(&["--input", input.to_str().unwrap(), "--k", "1"]);
    assert!(out.status.success());
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((report.rows, report.cols), (Some(3), Some(3)));
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        r#"
algorithm = "css"
k = 3
seed = 5

[gen]
kind = "gaussian"
rows = 10
cols = 12

[css]
r_constant = 1.5
"#,
    )
    .unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.css.r_constant, 1.5);
    assert_eq!(cfg.gen, Some(GenSpec::Gaussian { rows: 10, cols: 12 }));

    let out = lplra(&["--config", path.to_str().unwrap(), "--k", "2", "--seed", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((report.config.k, report.seed, report.config.css.r_constant), (2, 6, 1.5));
}

#[test]
fn generator_specs_parse() {
    let g: GenSpec = "planted:rows=4,cols=5,rank=1,noise=0.5,noise_kind=cauchy".parse().unwrap();
    assert_eq!(
        g,
        GenSpec::Planted {
            rows: 4,
            cols: 5,
            rank: 1,
            noise: 0.5,
            noise_kind: lplra::oracle::NoiseKind::Cauchy,
        }
    );
    assert_eq!("hard:rank=3,n=6".parse::<GenSpec>().unwrap(), GenSpec::Hard { rank: 3, n: 6 });
    assert!("planted:rows=4".parse::<GenSpec>().is_err());
    assert!("gaussian:rows=4,cols=4,depth=2".parse::<GenSpec>().is_err());
    assert!("gaussian:rows".parse::<GenSpec>().is_err());
}

fn error_of(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stdout).expect("error JSON on stdout");
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    v["error"].clone()
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        vec!["--gen", "gaussian:rows=3,cols=3", "--k", "0"],
        vec!["--gen", "gaussian:rows=3,cols=3", "--p", "2"],
        vec!["--input", "/definitely/missing.mtx"],
        vec!["--algo", "css"],
        vec!["--algo", "nonsense"],
        vec!["--algo", "fpt", "--gen", "gaussian:rows=3,cols=3", "--eps", "1.5"],
    ] {
        let out = lplra(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = error_of(&out);
        assert_eq!(err["kind"], "config");
        assert_eq!(err["exit_code"], 2);
    }
}

#[test]
fn budget_errors_exit_with_four() {
    let out = lplra(&[
        "--algo",
        "fpt",
        "--gen",
        "gaussian:rows=5,cols=5",
        "--eps",
        "0.5",
        "--budget-mode",
        "full-enumeration",
        "--budget-sketch-rows",
        "2",
        "--budget-max-guesses",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_of(&out)["kind"], "budget");

    let out = lplra(&["--algo", "fpt", "--gen", "gaussian:rows=5,cols=5", "--budget-sketch-rows", "40"]);
    assert_eq!(out.status.code(), Some(4));

    let out = lplra(&[
        "--algo",
        "fpt",
        "--gen",
        "gaussian:rows=5,cols=5",
        "--eps",
        "0.5",
        "--budget-mode",
        "full-enumeration",
        "--budget-sketch-rows",
        "2",
        "--budget-max-guesses",
        "3",
        "--allow-truncated-search",
    ]);
    assert!(out.status.success());
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.details["budget_exhausted"], true);
}

#[test]
fn library_errors_map_to_exit_codes() {
    let code = |e: lplra::Error| CliError::from(e).exit_code();
    assert_eq!(code(lplra::Error::InvalidInput("x".into())), 2);
    assert_eq!(code(lplra::Error::Parse("x".into())), 2);
    assert_eq!(code(lplra::Error::Numerical("x".into())), 3);
    assert_eq!(code(lplra::Error::BudgetExceeded("x".into())), 4);
}

#[test]
fn sketch_check_reports_counts() {
    let out = lplra(&["--algo", "sketch-check", "--seed", "2"]);
    assert!(out.status.success());
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    let props = report.details["properties"].as_array().unwrap();
    let passed = report.details["passed"].as_u64().unwrap() as usize;
    let failed = report.details["failed"].as_u64().unwrap() as usize;
    assert_eq!(passed + failed, props.len());
    assert_eq!(passed, props.iter().filter(|p| p["passed"] == true).count());
    assert!(report.achieved_error_p.is_none());
}

#[test]
fn hardness_scan_keeps_the_best_half_subset() {
    let out = lplra(&["--algo", "hardness-scan", "--k", "4", "--hardness-subsets", "20"]);
    assert!(out.status.success());
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((report.rows, report.cols), (Some(12), Some(8)));
    assert_eq!(report.columns_selected.as_ref().unwrap().len(), 4);
    assert!(report.achieved_error_p.unwrap() > 0.0);
    assert_ratios_consistent(&report);
}
