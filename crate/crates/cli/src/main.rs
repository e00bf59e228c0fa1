//! `transport`: estimate transported treatment effects from CSV data, run
//! the simulation study, compute the truth oracle, or export simulated data.
//!
//! Exit status: 0 success, 1 usage error, 2 data or I/O error,
//! 3 estimation failure.

mod config;
mod error;
mod io;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use transport_core::datagen::generate_study;
use transport_core::estimators::{
    nonparametric_bounds, positivity_diagnostic, restrict_covariates_gcomp, restrict_covariates_ipw,
    restrict_population_gcomp, restrict_population_ipw, synthesis_gcomp, synthesis_ipw, StratumVar,
};
use transport_core::simstudy::{run_simulation, Arm};
use transport_core::{
    datagen, DesignSpec, EffectEstimate, McSettings, Method, Scenario, ScenarioConfig, SeededRng,
    SimulationConfig, StudyDataset, SynthesisSpec,
};

use error::CliError;

/// Seed used whenever `--seed` is not given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "transport", version, about = "Transport trial effects to a target population when positivity fails")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run estimators on trial and target data.
    Estimate(EstimateArgs),
    /// Run the simulation study and report bias, CLD and coverage.
    Simulate(SimulateArgs),
    /// Approximate the true risk difference of the simulation scenario.
    Truth(TruthArgs),
    /// Export simulated clinic and trial data as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Random seed; every random draw derives from it.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (default: all available cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Estimators to run: restrict-pop-g, restrict-pop-ipw, restrict-cov-g,
    /// restrict-cov-ipw, synth-g, synth-ipw, bounds, diagnose.
    #[arg(long, required = true, value_delimiter = ',')]
    method: Vec<String>,
    /// CSV holding both populations (columns R,A,Y,V,W).
    #[arg(long, conflicts_with_all = ["trial", "target"])]
    data: Option<PathBuf>,
    /// Trial CSV (R may be omitted).
    #[arg(long, requires = "target")]
    trial: Option<PathBuf>,
    /// Target-population CSV (R may be omitted).
    #[arg(long, requires = "trial")]
    target: Option<PathBuf>,
    /// Outcome model terms for g-computation.
    #[arg(long, default_value = "1,A,V,V^2")]
    outcome_design: String,
    /// Selection model terms for IPW.
    #[arg(long, default_value = "1,V,V^2")]
    selection_design: String,
    /// Simulation-model JSON for the synthesis estimators.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monte Carlo repetitions for the synthesis estimators.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    /// Write synthesis draws as one-column CSV (the method tag is inserted
    /// before the extension when several synthesis methods run).
    #[arg(long)]
    draws_out: Option<PathBuf>,
    /// Write JSON lines here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Variables defining positivity strata for `diagnose`.
    #[arg(long, value_delimiter = ',', default_value = "W")]
    strata: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    /// Monte Carlo repetitions per synthesis estimate.
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    /// Report only these scenarios (restriction, strict_null,
    /// uncertain_null, accurate, inaccurate, accurate_with_covariance).
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<String>,
    /// Observations for the truth oracle.
    #[arg(long, default_value_t = 10_000_000)]
    truth_n: usize,
    /// Report CSV path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Text report path (default: standard output).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TruthArgs {
    #[arg(long, default_value_t = 10_000_000)]
    n: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    n_clinic: usize,
    #[arg(long, default_value_t = 1000)]
    n_trial: usize,
    /// Output CSV (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Estimate(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Truth(a) => &a.common,
        Command::Generate(a) => &a.common,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Truth(a) => cmd_truth(a),
        Command::Generate(a) => cmd_generate(a),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn parse_design(text: &str, flag: &str) -> Result<DesignSpec, CliError> {
    text.parse()
        .map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Effect(Method),
    Bounds,
    Diagnose,
}

fn parse_task(s: &str) -> Result<Task, CliError> {
    match s {
        "bounds" => Ok(Task::Bounds),
        "diagnose" => Ok(Task::Diagnose),
        other => other.parse().map(Task::Effect).map_err(CliError::Usage),
    }
}

#[derive(Serialize)]
struct EffectRecord<'a> {
    method: &'a str,
    rd: f64,
    ci_lower: f64,
    ci_upper: f64,
    risk1: f64,
    risk0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_draws: Option<usize>,
}

impl<'a> From<&'a EffectEstimate> for EffectRecord<'a> {
    fn from(e: &'a EffectEstimate) -> Self {
        Self {
            method: e.method.tag(),
            rd: e.rd,
            ci_lower: e.ci_lower,
            ci_upper: e.ci_upper,
            risk1: e.risk1,
            risk0: e.risk0,
            se: e.se,
            n_draws: e.draws.as_ref().map(Vec::len),
        }
    }
}

#[derive(Serialize)]
struct BoundsRecord {
    method: &'static str,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct StratumRecord {
    stratum: serde_json::Map<String, serde_json::Value>,
    target_count: usize,
    trial_count: usize,
}

#[derive(Serialize)]
struct DiagnoseRecord {
    method: &'static str,
    violations: Vec<StratumRecord>,
}

fn stratum_value(x: f64) -> serde_json::Value {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        serde_json::json!(x as i64)
    } else {
        serde_json::json!(x)
    }
}

fn draws_path(base: &Path, method: Method, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{}.{}", method.tag(), ext.to_string_lossy()),
        None => format!("{stem}.{}", method.tag()),
    };
    base.with_file_name(name)
}

fn write_draws(path: &Path, draws: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(["rd"]).map_err(err)?;
    for d in draws {
        w.write_record([d.to_string()]).map_err(err)?;
    }
    w.flush().map_err(io_err)
}

fn run_effect(
    method: Method,
    data: &StudyDataset,
    outcome: &DesignSpec,
    selection: &DesignSpec,
    synthesis: Option<&transport_core::SimulationModel>,
    mc: &McSettings,
) -> Result<EffectEstimate, CliError> {
    let est = |e: transport_core::estimators::EstimatorError| CliError::Estimation(format!("{method}: {e}"));
    match method {
        Method::RestrictPopulationGcomp => restrict_population_gcomp(data, outcome).map_err(est),
        Method::RestrictPopulationIpw => restrict_population_ipw(data, selection).map_err(est),
        Method::RestrictCovariatesGcomp => restrict_covariates_gcomp(data, outcome).map_err(est),
        Method::RestrictCovariatesIpw => restrict_covariates_ipw(data, selection).map_err(est),
        Method::SynthesisGcomp | Method::SynthesisIpw => {
            let simulation = synthesis
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("{method} requires --config")))?;
            let statistical_design = if method == Method::SynthesisGcomp { outcome } else { selection };
            let spec = SynthesisSpec {
                simulation,
                mc: mc.clone(),
                statistical_design: statistical_design.clone(),
            };
            if method == Method::SynthesisGcomp {
                synthesis_gcomp(data, &spec).map_err(est)
            } else {
                synthesis_ipw(data, &spec).map_err(est)
            }
        }
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), CliError> {
    let tasks = a.method.iter().map(|m| parse_task(m)).collect::<Result<Vec<_>, _>>()?;
    let outcome = parse_design(&a.outcome_design, "--outcome-design")?;
    let selection = parse_design(&a.selection_design, "--selection-design")?;
    let strata = a
        .strata
        .iter()
        .map(|s| s.parse::<StratumVar>().map_err(CliError::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let n_synth = tasks
        .iter()
        .filter(|t| matches!(t, Task::Effect(m) if m.is_synthesis()))
        .count();
    let synthesis = match &a.config {
        Some(p) => Some(config::load_simulation_model(p)?),
        None if n_synth > 0 => return Err(CliError::Usage("synthesis methods require --config".into())),
        None => None,
    };
    let data = io::load_dataset(a.data.as_deref(), a.trial.as_deref(), a.target.as_deref())?;
    let mc = McSettings::new(a.reps, a.common.seed);

    let mut lines = Vec::new();
    for task in tasks {
        let line = match task {
            Task::Effect(method) => {
                let e = run_effect(method, &data, &outcome, &selection, synthesis.as_ref(), &mc)?;
                if let (Some(base), Some(draws)) = (&a.draws_out, &e.draws) {
                    write_draws(&draws_path(base, method, n_synth > 1), draws)?;
                }
                serde_json::to_string(&EffectRecord::from(&e))
            }
            Task::Bounds => {
                let b = nonparametric_bounds(&data, &outcome)
                    .map_err(|e| CliError::Estimation(format!("bounds: {e}")))?;
                serde_json::to_string(&BoundsRecord {
                    method: "bounds",
                    lower: b.lower,
                    upper: b.upper,
                })
            }
            Task::Diagnose => {
                let violations = positivity_diagnostic(&data, &strata)
                    .into_iter()
                    .map(|v| StratumRecord {
                        stratum: v
                            .stratum
                            .iter()
                            .map(|(var, value)| (var.to_string(), stratum_value(*value)))
                            .collect(),
                        target_count: v.target_count,
                        trial_count: v.trial_count,
                    })
                    .collect();
                serde_json::to_string(&DiagnoseRecord {
                    method: "diagnose",
                    violations,
                })
            }
        };
        lines.push(line.map_err(|e| CliError::Io(e.to_string()))?);
    }
    let mut out = sink(a.output.as_deref())?;
    for l in lines {
        writeln!(out, "{l}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn select_arms(filters: &[String]) -> Result<Vec<Arm>, CliError> {
    if filters.is_empty() {
        return Ok(Arm::all());
    }
    for f in filters {
        if f != "restriction" {
            f.parse::<Scenario>().map_err(CliError::Usage)?;
        }
    }
    Ok(Arm::all()
        .into_iter()
        .filter(|arm| filters.iter().any(|f| arm.matches(f)))
        .collect())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    if a.iterations == 0 || a.reps == 0 || a.truth_n == 0 {
        return Err(CliError::Usage("--iterations, --reps and --truth-n must be at least 1".into()));
    }
    let config = SimulationConfig {
        scenario: ScenarioConfig {
            master_seed: a.common.seed,
            ..ScenarioConfig::default()
        },
        iterations: a.iterations,
        mc_reps: a.reps,
        truth_n: a.truth_n,
        arms: select_arms(&a.scenario)?,
        ..SimulationConfig::default()
    };
    let report = run_simulation(&config).map_err(|e| CliError::Estimation(e.to_string()))?;
    if let Some(path) = &a.output {
        let mut w = csv::Writer::from_writer(create(path)?);
        for row in &report.rows {
            w.serialize(row)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(io_err)?;
    }
    let mut out = sink(a.report.as_deref())?;
    out.write_all(report.to_text().as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}

fn cmd_truth(a: TruthArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let psi = datagen::true_psi(&ScenarioConfig::default(), a.n, &SeededRng::new(a.common.seed, 0));
    println!("{psi:.6}");
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    if a.n_clinic == 0 || a.n_trial == 0 {
        return Err(CliError::Usage("--n-clinic and --n-trial must be at least 1".into()));
    }
    let config = ScenarioConfig {
        n_clinic: a.n_clinic,
        n_trial: a.n_trial,
        master_seed: a.common.seed,
        ..ScenarioConfig::default()
    };
    let data = generate_study(&config, &SeededRng::new(a.common.seed, 1));
    io::write_rows(sink(a.output.as_deref())?, data.rows())
}
