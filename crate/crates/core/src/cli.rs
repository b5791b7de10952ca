//! Command-line front end.
//!
//! Exit codes: 0 when verdicts match the scenario, 1 on a mismatch, 2 on
//! input errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::load_scenario;
use crate::curvature::estimate_curvature;
use crate::error::{Error, Result};
use crate::field::ProbabilityMeasure;
use crate::flow::{validate_a1, A1Report, FlowSpec};
use crate::gamma::GeneratorSnapshot;
use crate::inequality::bank::TestFunctionBank;
use crate::inequality::suite::{run_suite, Implication};
use crate::propagator::forward_index;
use crate::report::CheckReport;
use crate::scenario::{Expectation, Mismatch, Scenario};
use crate::transport::{e2_margin, wasserstein};

pub const EXIT_MATCH: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ricci-lab", version, about = "Heat flow inequalities on time-dependent finite spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RunConfig {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tolerance override.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed override for test functions and random measures.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regularity constants and structural checks.
    Validate(RunConfig),
    /// Full inequality suite against the scenario's expected verdicts.
    Check {
        #[command(flatten)]
        config: RunConfig,
        /// Also write forward trajectories of the first test functions.
        #[arg(long)]
        trajectories: bool,
    },
    /// Curvature estimate at every grid time.
    Curvature(RunConfig),
    /// Transport distances over the grid and contraction margins.
    Transport {
        #[command(flatten)]
        config: RunConfig,
        /// `uniform`, `dirac:<x>` or comma-separated weights.
        #[arg(long)]
        mu: String,
        #[arg(long)]
        nu: String,
        /// Cost exponent (1 or 2).
        #[arg(long, default_value_t = 2)]
        p: u32,
    },
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_MATCH };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    let config = match &command {
        Command::Validate(c) | Command::Curvature(c) => c,
        Command::Check { config, .. } | Command::Transport { config, .. } => config,
    };
    if let Some(j) = config.jobs {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let scenario = load(config)?;
    if let Some(out) = &config.out {
        std::fs::create_dir_all(out)?;
    }
    match command {
        Command::Validate(c) => cmd_validate(&c, &scenario),
        Command::Check { config, trajectories } => cmd_check(&config, &scenario, trajectories),
        Command::Curvature(c) => cmd_curvature(&c, &scenario),
        Command::Transport { config, mu, nu, p } => cmd_transport(&config, &scenario, &mu, &nu, p),
    }
}

fn load(config: &RunConfig) -> Result<Scenario> {
    let mut s = load_scenario(&config.scenario)?;
    if let Some(t) = config.tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Invalid(format!("tolerance {t}")));
        }
        s.suite.tol = t;
    }
    if let Some(seed) = config.seed {
        s.bank_seed = seed;
        s.suite.seed = seed;
    }
    Ok(s)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

#[derive(Serialize)]
struct ValidateSummary<'a> {
    scenario: &'a str,
    states: usize,
    edges: usize,
    backend: &'a str,
    a1: &'a A1Report,
}

pub fn cmd_validate(config: &RunConfig, scenario: &Scenario) -> Result<i32> {
    let flow = &scenario.flow;
    let report = validate_a1(flow)?;
    let summary = ValidateSummary {
        scenario: &scenario.name,
        states: flow.n(),
        edges: flow.edges().len(),
        backend: flow.backend().name(),
        a1: &report,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Invalid(e.to_string()))?;
    println!("{text}");
    if let Some(out) = &config.out {
        let mut w = create(out, "validate.json")?;
        writeln!(w, "{text}")?;
        w.flush()?;
    }
    Ok(if report.pass && report.ellipticity_pass {
        EXIT_MATCH
    } else {
        EXIT_MISMATCH
    })
}

#[derive(Serialize)]
struct CheckSummary<'a> {
    scenario: &'a str,
    note: &'a str,
    backend: &'a str,
    states: usize,
    grid: (f64, f64, usize),
    tol: f64,
    seed: u64,
    curvature: Option<f64>,
    pairs: &'a [(f64, f64)],
    reports: Vec<&'a CheckReport>,
    implications: &'a [Implication],
    expected: Vec<(&'a str, Expectation)>,
    mismatches: &'a [Mismatch],
    verdicts_match: bool,
}

pub fn cmd_check(config: &RunConfig, scenario: &Scenario, trajectories: bool) -> Result<i32> {
    let flow = &scenario.flow;
    let bank = TestFunctionBank::for_flow(flow, scenario.bank_seed, scenario.bank_size);
    let result = run_suite(flow, &bank, &scenario.suite)?;
    let mismatches = scenario.compare(&result);
    let grid = flow.grid();
    let summary = CheckSummary {
        scenario: &scenario.name,
        note: &scenario.note,
        backend: flow.backend().name(),
        states: flow.n(),
        grid: (grid.t_start(), grid.t_end(), grid.n_steps()),
        tol: result.tol,
        seed: result.seed,
        curvature: result.curvature,
        pairs: &result.pairs,
        reports: result.reports.values().collect(),
        implications: &result.implications,
        expected: scenario.expected.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
        mismatches: &mismatches,
        verdicts_match: mismatches.is_empty(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Invalid(e.to_string()))?;
    if let Some(out) = &config.out {
        result.write_csv(create(out, "report.csv")?)?;
        let mut w = create(out, "summary.json")?;
        writeln!(w, "{text}")?;
        w.flush()?;
        if trajectories {
            write_trajectories(out, flow, &bank)?;
        }
    }
    for r in result.reports.values() {
        let tag = match scenario.expected.get(&r.id) {
            Some(e) => e.as_str(),
            None => "-",
        };
        println!("{:<12} {:>14.6e} {:<4} expected {}", r.id, r.margin, r.verdict.as_str(), tag);
    }
    for m in &mismatches {
        eprintln!(
            "mismatch: {} expected {} observed {}",
            m.id,
            m.expected.as_str(),
            m.observed.map_or("missing", |v| v.as_str())
        );
    }
    Ok(if mismatches.is_empty() { EXIT_MATCH } else { EXIT_MISMATCH })
}

fn write_trajectories(out: &Path, flow: &FlowSpec, bank: &TestFunctionBank) -> Result<()> {
    let last = flow.grid().n_steps();
    for f in bank.non_constant().take(3) {
        let run = forward_index(flow, 0, last, f.values.values())?;
        run.write_csv(flow, create(out, &format!("trajectory_{}.csv", f.id))?)?;
    }
    Ok(())
}

pub fn cmd_curvature(config: &RunConfig, scenario: &Scenario) -> Result<i32> {
    let flow = &scenario.flow;
    let grid = flow.grid();
    let rows: Vec<(f64, f64, usize)> = (0..grid.len())
        .map(|k| {
            let est = estimate_curvature(&GeneratorSnapshot::from_flow(flow, k))?;
            Ok((grid.time(k), est.k_star, est.argmin))
        })
        .collect::<Result<_>>()?;
    let mut text = String::from("t,k_star,argmin\n");
    for (t, k, x) in rows {
        text.push_str(&format!("{t},{k:e},{x}\n"));
    }
    print!("{text}");
    if let Some(out) = &config.out {
        let mut w = create(out, "curvature.csv")?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
    }
    Ok(EXIT_MATCH)
}

/// `uniform`, `dirac:<x>` or comma-separated nonnegative weights.
pub fn parse_measure(spec: &str, n: usize) -> Result<ProbabilityMeasure> {
    let spec = spec.trim();
    if spec == "uniform" {
        return Ok(ProbabilityMeasure::uniform(n));
    }
    if let Some(x) = spec.strip_prefix("dirac:") {
        let x: usize = x
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("measure {spec:?}: bad state index")))?;
        if x >= n {
            return Err(Error::Parse(format!("measure {spec:?}: state {x} out of range")));
        }
        return Ok(ProbabilityMeasure::dirac(n, x));
    }
    let w: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse(format!("measure {spec:?}: expected uniform, dirac:<x> or weights")))?;
    if w.len() != n {
        return Err(Error::Shape { expected: n, got: w.len() });
    }
    ProbabilityMeasure::normalized(w)
}

pub fn cmd_transport(config: &RunConfig, scenario: &Scenario, mu: &str, nu: &str, p: u32) -> Result<i32> {
    let flow = &scenario.flow;
    let n = flow.n();
    let mu = parse_measure(mu, n)?;
    let nu = parse_measure(nu, n)?;
    let grid = flow.grid();
    let mut text = String::from("t,distance,contraction_margin\n");
    for k in 0..grid.len() {
        let t = grid.time(k);
        let w = wasserstein(flow, t, &mu, &nu, p)?.distance();
        let margin = if k > 0 {
            format!("{:e}", e2_margin(flow, 0, k, &mu, &nu, p)?)
        } else {
            String::new()
        };
        text.push_str(&format!("{t},{w:e},{margin}\n"));
    }
    print!("{text}");
    if let Some(out) = &config.out {
        let mut w = create(out, "transport.csv")?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
    }
    Ok(EXIT_MATCH)
}
