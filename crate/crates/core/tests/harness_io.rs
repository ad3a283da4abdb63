use std::process::Command;

use cliquehit::edge::Edge;
use cliquehit::harness::{
    csv_columns, emit_report, load_preset, render_report, run_experiment,
    run_experiment_with_workers, wilson_interval, Check, ExperimentConfig, ExperimentKind,
    ExperimentReport, Format, Preset,
};
use cliquehit::hypergraph::UniformHypergraph;

fn small(kind: ExperimentKind, n: Vec<u32>, r: u32, trials: usize) -> ExperimentConfig {
    ExperimentConfig::new(kind, n, r, trials, 7)
}

#[test]
fn wilson_reference_values() {
    let (lo, hi) = wilson_interval(50, 100, 0.95).unwrap();
    assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
    let (lo, hi) = wilson_interval(0, 10, 0.95).unwrap();
    assert_eq!(lo, 0.0);
    assert!((hi - 0.2775).abs() < 1e-4);
    let (lo, hi) = wilson_interval(10, 10, 0.95).unwrap();
    assert!((lo - 0.7225).abs() < 1e-4 && hi == 1.0);
    assert!(wilson_interval(1, 0, 0.95).is_err());
    assert!(wilson_interval(3, 2, 0.95).is_err());
}

#[test]
fn text_format_round_trip() {
    let h = UniformHypergraph::from_edges(
        7,
        3,
        [
            Edge::from_vertices(&[1, 2, 3]),
            Edge::from_vertices(&[3, 5, 7]),
        ],
    )
    .unwrap();
    let text = h.to_text();
    assert_eq!(text, "7 3\n1 2 3\n3 5 7\n");
    assert_eq!(UniformHypergraph::from_text(&text).unwrap(), h);
    assert!(UniformHypergraph::from_text("7 3\n1 2\n").is_err());
    assert!(UniformHypergraph::from_text("7 3\n1 2 9\n").is_err());
}

#[test]
fn json_report_round_trip() {
    let report =
        run_experiment(&small(ExperimentKind::AvoidableOracle, vec![6, 7], 3, 20)).unwrap();
    let bytes = render_report(&report, Format::Json).unwrap();
    let back: ExperimentReport = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(back, report);
}

#[test]
fn csv_schema_and_aggregates() {
    let report = run_experiment(&small(ExperimentKind::Thinning, vec![12], 3, 10)).unwrap();
    let bytes = render_report(&report, Format::Csv).unwrap();
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, csv_columns());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert!(rows
        .iter()
        .all(|r| r.len() == csv_columns().len() && &r[0] == "thinning"));
    let per_trial = rows
        .iter()
        .filter(|r| &r[2] != "aggregate" && &r[5] == "min_degree_ok")
        .count();
    assert_eq!(per_trial, 10);
    for suffix in ["estimate", "lo", "hi"] {
        let name = format!("min_degree_ok.{suffix}");
        assert!(rows.iter().any(|r| &r[2] == "aggregate" && r[5] == name));
    }
    assert!(rows.iter().any(|r| &r[5] == "t_h.mean"));
}

#[test]
fn empty_report_is_header_only() {
    let mut report = run_experiment(&small(ExperimentKind::Analytic, vec![], 4, 1)).unwrap();
    report.rows.clear();
    report.aggregates.clear();
    report.statistics.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_report(&report, Format::Csv, &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(path).unwrap(),
        "experiment,n,trial,seed,label,metric,value\n"
    );
}

#[test]
fn reports_are_deterministic_across_worker_counts() {
    let cfg = small(ExperimentKind::FactorAtHitting, vec![9, 12], 3, 24);
    let a = render_report(
        &run_experiment_with_workers(&cfg, Some(1)).unwrap(),
        Format::Csv,
    )
    .unwrap();
    let b = render_report(
        &run_experiment_with_workers(&cfg, Some(4)).unwrap(),
        Format::Csv,
    )
    .unwrap();
    let c = render_report(
        &run_experiment_with_workers(&cfg, None).unwrap(),
        Format::Csv,
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn invalid_configs_are_rejected() {
    use ExperimentKind::*;
    let bad = [
        small(FactorAtHitting, vec![10], 3, 5),
        small(FactorAtHitting, vec![9], 2, 5),
        small(RiordanCoupling, vec![9], 3, 5),
        small(ModifiedCouplingR3, vec![9], 4, 5),
        small(Thinning, vec![], 3, 5),
        small(Thinning, vec![12], 3, 0),
        small(Chain, vec![200], 3, 5),
        ExperimentConfig {
            delta: 1.5,
            ..small(Thinning, vec![12], 3, 5)
        },
        ExperimentConfig {
            s: 2,
            ..small(SuniformChain, vec![12], 4, 5)
        },
        ExperimentConfig {
            c_i: Some(-1.0),
            ..small(RandomSet, vec![12], 3, 5)
        },
    ];
    for cfg in bad {
        assert!(run_experiment(&cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn checks_cover_thresholds_trends_and_vacuous_metrics() {
    let mut cfg = small(ExperimentKind::AvoidableOracle, vec![6, 7], 3, 30);
    cfg.checks = vec![
        Check {
            metric: "agree".into(),
            min: Some(1.0),
            ..Default::default()
        },
        Check {
            metric: "agree".into(),
            max: Some(0.5),
            ..Default::default()
        },
        Check {
            metric: "agree".into(),
            trend: Some(cliquehit::harness::Trend::NonDecreasing),
            ..Default::default()
        },
        Check {
            metric: "missing".into(),
            min: Some(0.0),
            ..Default::default()
        },
        Check {
            metric: "missing".into(),
            min: Some(0.0),
            vacuous_ok: true,
            ..Default::default()
        },
    ];
    let report = run_experiment(&cfg).unwrap();
    let verdicts: Vec<bool> = report.checks.iter().map(|c| c.pass).collect();
    assert_eq!(verdicts, [true, false, true, false, true]);
    assert!(!report.passed());
}

#[test]
fn presets_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let preset: Preset = load_preset(&entry.unwrap().path()).unwrap();
        assert!(!preset.experiments.is_empty());
        count += 1;
    }
    assert!(count >= 9);
}

#[test]
fn unknown_preset_fields_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "[[experiment]]\nkind = \"thinning\"\nn = [12]\nbogus = 1\n",
    )
    .unwrap();
    assert!(load_preset(&path).is_err());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cliquehit"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let ok = cli()
        .args([
            "hitting", "--target", "matching", "--n", "12", "--r", "3", "--trials", "5",
            "--format", "json", "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));

    let csv = dir.path().join("r.csv");
    let re = cli()
        .args(["report", "--input"])
        .arg(&out)
        .arg("--out")
        .arg(&csv)
        .status()
        .unwrap();
    assert_eq!(re.code(), Some(0));
    assert!(std::fs::read_to_string(&csv)
        .unwrap()
        .starts_with("experiment,n,trial"));

    let invalid = cli()
        .args(["hitting", "--n", "10", "--trials", "5"])
        .output()
        .unwrap();
    assert_eq!(invalid.status.code(), Some(1));

    let preset = dir.path().join("p.toml");
    std::fs::write(
        &preset,
        "[[experiment]]\nkind = \"avoidable_oracle\"\nn = [6]\ntrials = 5\n\
         [[experiment.check]]\nmetric = \"agree\"\nmax = 0.0\n",
    )
    .unwrap();
    let failed = cli()
        .args(["simulate", "--check", "--preset"])
        .arg(&preset)
        .arg("--out")
        .arg(dir.path().join("p.csv"))
        .output()
        .unwrap();
    assert_eq!(failed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("FAIL"));
}
