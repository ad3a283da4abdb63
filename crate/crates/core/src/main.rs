use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cliquehit::harness::{
    load_preset, render_report, run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport,
    Format, HarnessError,
};

#[derive(Parser)]
#[command(
    name = "cliquehit",
    version,
    about = "Hitting-time experiments for clique factors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment kind, or every experiment in a preset file.
    Simulate {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long)]
        preset: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Factor or matching at the hitting time.
    Hitting {
        #[arg(long, value_enum, default_value_t = Target::Factor)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
    /// Static coupling of the graph and hypergraph models.
    Couple {
        #[command(flatten)]
        common: Common,
    },
    /// Full chain for graph cliques.
    Chain {
        #[command(flatten)]
        common: Common,
    },
    /// Full chain over an s-uniform base hypergraph.
    Suniform {
        #[command(flatten)]
        common: Common,
    },
    /// Bad-event frequencies at the end of the window.
    Badevents {
        #[command(flatten)]
        common: Common,
    },
    /// Counting lemmas for all 3 <= s < r <= R.
    Analytic {
        #[command(flatten)]
        common: Common,
    },
    /// Re-emit a saved JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Comma-separated vertex counts.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u32>,
    #[arg(long)]
    r: Option<u32>,
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c_i: Option<f64>,
    #[arg(long)]
    c_r: Option<f64>,
    #[arg(long)]
    pi_r: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Evaluate the configured checks and exit with status 2 on failure.
    #[arg(long)]
    check: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Factor,
    Matching,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    FactorAtHitting,
    MatchingAtHitting,
    RiordanCoupling,
    ModifiedCouplingR3,
    Thinning,
    RandomSet,
    Chain,
    SuniformChain,
    BadEvents,
    CondProbOracle,
    PiStarOracle,
    AvoidableOracle,
    ExtraCliqueClassification,
    Analytic,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        use ExperimentKind as E;
        match k {
            KindArg::FactorAtHitting => E::FactorAtHitting,
            KindArg::MatchingAtHitting => E::MatchingAtHitting,
            KindArg::RiordanCoupling => E::RiordanCoupling,
            KindArg::ModifiedCouplingR3 => E::ModifiedCouplingR3,
            KindArg::Thinning => E::Thinning,
            KindArg::RandomSet => E::RandomSet,
            KindArg::Chain => E::Chain,
            KindArg::SuniformChain => E::SuniformChain,
            KindArg::BadEvents => E::BadEvents,
            KindArg::CondProbOracle => E::CondProbOracle,
            KindArg::PiStarOracle => E::PiStarOracle,
            KindArg::AvoidableOracle => E::AvoidableOracle,
            KindArg::ExtraCliqueClassification => E::ExtraCliqueClassification,
            KindArg::Analytic => E::Analytic,
        }
    }
}

enum Failure {
    Validation(HarnessError),
    Checks,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Validation(e)
    }
}

fn config(kind: ExperimentKind, c: &Common) -> ExperimentConfig {
    let r = c.r.unwrap_or(match kind {
        ExperimentKind::RiordanCoupling => 4,
        ExperimentKind::SuniformChain => 4,
        ExperimentKind::Analytic => 10,
        _ => 3,
    });
    let mut cfg = ExperimentConfig::new(
        kind,
        c.n.clone(),
        r,
        c.trials.unwrap_or(100),
        c.seed.unwrap_or(0),
    );
    if let Some(s) = c.s {
        cfg.s = s;
    } else if kind == ExperimentKind::SuniformChain {
        cfg.s = 3;
    }
    if let Some(d) = c.delta {
        cfg.delta = d;
    }
    cfg.c_i = c.c_i;
    cfg.c_r = c.c_r;
    cfg.pi_r = c.pi_r;
    cfg.p = c.p;
    cfg
}

/// Applies command-line overrides on top of a preset entry.
fn overlay(cfg: &mut ExperimentConfig, c: &Common) {
    if !c.n.is_empty() {
        cfg.n = c.n.clone();
    }
    if let Some(v) = c.r {
        cfg.r = v;
    }
    if let Some(v) = c.s {
        cfg.s = v;
    }
    if let Some(v) = c.trials {
        cfg.trials = v;
    }
    if let Some(v) = c.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = c.delta {
        cfg.delta = v;
    }
    cfg.c_i = c.c_i.or(cfg.c_i);
    cfg.c_r = c.c_r.or(cfg.c_r);
    cfg.pi_r = c.pi_r.or(cfg.pi_r);
    cfg.p = c.p.or(cfg.p);
}

fn write_out(bytes: &[u8], out: Option<&PathBuf>) -> Result<(), HarnessError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|source| HarnessError::Write {
            path: path.clone(),
            source,
        }),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|source| HarnessError::Write {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn print_checks(report: &ExperimentReport) {
    for c in &report.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let label = c.check.label.as_deref().unwrap_or("-");
        eprintln!("{verdict} [{label}] {}: {}", c.check.metric, c.detail);
    }
}

fn run_configs(configs: Vec<ExperimentConfig>, c: &Common) -> Result<(), Failure> {
    let mut all_pass = true;
    let several = configs.len() > 1;
    for (i, mut cfg) in configs.into_iter().enumerate() {
        if let Some(f) = c.format {
            cfg.format = f.into();
        }
        let out = match (&c.out, several) {
            (Some(p), true) => Some(p.with_file_name(format!(
                "{}-{i}.{}",
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("report"),
                p.extension().and_then(|s| s.to_str()).unwrap_or("csv")
            ))),
            (Some(p), false) => Some(p.clone()),
            (None, _) => cfg.output.clone(),
        };
        let report = run_experiment(&cfg)?;
        write_out(&render_report(&report, cfg.format)?, out.as_ref())?;
        if c.check {
            print_checks(&report);
            all_pass &= report.passed();
        }
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (kind, common) = match cli.command {
        Command::Report { input, format, out } => {
            let text = std::fs::read_to_string(&input).map_err(|source| HarnessError::Read {
                path: input.clone(),
                source,
            })?;
            let report: ExperimentReport =
                serde_json::from_str(&text).map_err(HarnessError::from)?;
            write_out(&render_report(&report, format.into())?, out.as_ref())?;
            return Ok(());
        }
        Command::Simulate {
            kind,
            preset: Some(path),
            common,
        } => {
            if kind.is_some() {
                return Err(Failure::Validation(HarnessError::Invalid(
                    "--kind and --preset are exclusive".into(),
                )));
            }
            let mut configs = load_preset(&path)?.experiments;
            for cfg in &mut configs {
                overlay(cfg, &common);
            }
            return run_configs(configs, &common);
        }
        Command::Simulate {
            kind: Some(kind),
            preset: None,
            common,
        } => (kind.into(), common),
        Command::Simulate {
            kind: None,
            preset: None,
            ..
        } => {
            return Err(Failure::Validation(HarnessError::Invalid(
                "one of --kind or --preset is required".into(),
            )))
        }
        Command::Hitting {
            target: Target::Factor,
            common,
        } => (ExperimentKind::FactorAtHitting, common),
        Command::Hitting {
            target: Target::Matching,
            common,
        } => (ExperimentKind::MatchingAtHitting, common),
        Command::Couple { common } => {
            let kind = if common.r == Some(3) {
                ExperimentKind::ModifiedCouplingR3
            } else {
                ExperimentKind::RiordanCoupling
            };
            (kind, common)
        }
        Command::Chain { common } => (ExperimentKind::Chain, common),
        Command::Suniform { common } => (ExperimentKind::SuniformChain, common),
        Command::Badevents { common } => (ExperimentKind::BadEvents, common),
        Command::Analytic { common } => (ExperimentKind::Analytic, common),
    };
    run_configs(vec![config(kind, &common)], &common)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Checks) => ExitCode::from(2),
    }
}
