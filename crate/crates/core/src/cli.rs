//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical instability,
//! 3 infeasible fit or failed bound validation, 4 I/O error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundConstants, BoundsError};
use crate::experiments::{
    calibrate, epsilon_sweep, refinement_study, verify_bounds, verify_diffineq, ExperimentError,
    OrderEstimate, Profile, RefinementConfig, SweepConfig, SweepResult, DEFAULT_DIFFINEQ_TOL,
    DEFAULT_SLACK,
};
use crate::grid::FluxMode;
use crate::io::{
    read_sweep_csv, write_bound_report, write_sweep_csv, write_trajectory, IoError, RunManifest,
    RunStatus,
};
use crate::solver::{
    check_time_step, every_step, simulate, simulate_fkpp, simulate_with_reference, uniform_times,
    SolverError,
};

#[derive(Debug, Parser)]
#[command(
    name = "chemotaxis-fkpp",
    version,
    about = "Chemotaxis-growth vs Fisher-KPP simulator and experiment harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override `sweep.dt`.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Override `sweep.horizon`.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Override `sweep.grid.cells` (comma separated, one per axis).
    #[arg(long, global = true, value_delimiter = ',')]
    pub cells: Option<Vec<usize>>,
    /// Override the ε list of `sweep`, or the single ε of `simulate`/`verify`.
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub epsilons: Option<Vec<f64>>,
    /// Record wall-clock start and end times in the manifest.
    #[arg(long, global = true)]
    pub record_wall_time: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run one chemotaxis simulation and write its trajectory.
    Simulate,
    /// Measure the deviation from the Fisher-KPP solution over the ε list.
    Sweep,
    /// Fit bound constants on the sweep's initial data and validate them on
    /// an independent initial profile.
    Verify,
    /// Observed spatial and temporal orders of accuracy.
    Refine,
    /// Log-log data and fitted line of a finished sweep.
    PlotData {
        /// Sweep table to read; defaults to `<out>/sweep.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Refine => "refine",
            Command::PlotData { .. } => "plot-data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub epsilon: f64,
    pub snapshot_interval: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            snapshot_interval: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub epsilon: f64,
    pub slack: f64,
    pub diffineq_tol: f64,
    pub validation_u0: Profile,
    pub validation_v0: Profile,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            slack: DEFAULT_SLACK,
            diffineq_tol: DEFAULT_DIFFINEQ_TOL,
            validation_u0: Profile::Gaussian {
                base: 0.5,
                amplitude: 0.4,
                center: vec![0.3],
                width: 0.1,
            },
            validation_v0: Profile::Constant { value: 0.5 },
        }
    }
}

/// Contents of the configuration file. The `[sweep]` section describes the
/// grid, parameters and initial data shared by `simulate`, `sweep` and
/// `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "SweepConfig::desk_default")]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default = "RefinementConfig::heat_default")]
    pub refine: RefinementConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::desk_default(),
            simulate: SimulateConfig::default(),
            verify: VerifyConfig::default(),
            refine: RefinementConfig::heat_default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical instability: {0}")]
    Instability(String),
    #[error("infeasible fit: {0}")]
    Infeasible(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Instability(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Instability { .. } | SolverError::NonConvergence { .. } => {
                CliError::Instability(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solver(s) => s.into(),
            ExperimentError::Bounds(b @ BoundsError::Infeasible { .. }) => {
                CliError::Infeasible(b.to_string())
            }
            ExperimentError::PartialSweep { source, .. } => (*source).into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Loads the configuration and applies the command-line overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(dt) = cli.dt {
        cfg.sweep.dt = dt;
    }
    if let Some(h) = cli.horizon {
        cfg.sweep.horizon = h;
    }
    if let Some(cells) = &cli.cells {
        cfg.sweep.grid.cells = cells.clone();
    }
    if let Some(eps) = &cli.epsilons {
        match cli.command {
            Command::Sweep => cfg.sweep.epsilons = eps.clone(),
            Command::Simulate | Command::Verify => {
                if eps.len() != 1 {
                    return Err(CliError::Config(format!(
                        "{} takes a single epsilon, got {}",
                        cli.command.name(),
                        eps.len()
                    )));
                }
                cfg.simulate.epsilon = eps[0];
                cfg.verify.epsilon = eps[0];
            }
            _ => {}
        }
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct ParamsEcho<'a> {
    mu: f64,
    dt: f64,
    horizon: f64,
    flux_mode: FluxMode,
    epsilons: &'a [f64],
}

fn params_echo(s: &SweepConfig) -> ParamsEcho<'_> {
    ParamsEcho {
        mu: s.mu,
        dt: s.dt,
        horizon: s.horizon,
        flux_mode: s.flux_mode,
        epsilons: &s.epsilons,
    }
}

/// Checks everything that can be checked without running, so a bad
/// configuration leaves no files behind.
fn preflight(cmd: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.sweep;
    let grid = s.grid.build()?;
    let dim = grid.dim();
    match cmd {
        Command::Simulate => {
            let p = s.params(cfg.simulate.epsilon);
            p.validate(dim)?;
            if !(cfg.simulate.snapshot_interval > 0.0) {
                return Err(CliError::Config("snapshot_interval must be > 0".into()));
            }
            check_time_step(&p, &s.u0.sample(&grid)?, Some(&s.v0.sample(&grid)?))?;
        }
        Command::Sweep => {
            s.validate()?;
            let p = s.params(s.epsilons[0]);
            check_time_step(&p, &s.u0.sample(&grid)?, Some(&s.v0.sample(&grid)?))?;
        }
        Command::Verify => {
            let v = &cfg.verify;
            let p = s.params(v.epsilon);
            p.validate_uniform(dim)?;
            if !(v.epsilon > 0.0) {
                return Err(CliError::Config("verify needs epsilon > 0".into()));
            }
            if !(v.slack >= 1.0 && v.diffineq_tol >= 0.0) {
                return Err(CliError::Config(
                    "verify needs slack >= 1 and diffineq_tol >= 0".into(),
                ));
            }
            if s.horizon < 3.0 {
                return Err(CliError::Config(format!(
                    "verify needs a horizon of at least 3, got {}",
                    s.horizon
                )));
            }
            check_time_step(&p, &s.u0.sample(&grid)?, Some(&s.v0.sample(&grid)?))?;
            check_time_step(
                &p,
                &v.validation_u0.sample(&grid)?,
                Some(&v.validation_v0.sample(&grid)?),
            )?;
        }
        Command::Refine => cfg.refine.validate()?,
        Command::PlotData { .. } => {}
    }
    Ok(())
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(cli: &Cli, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cli.out).map_err(io_err)?;
        let manifest = RunManifest::begin(
            cli.command.name(),
            cfg,
            &cfg.sweep.grid,
            &params_echo(&cfg.sweep),
            cli.record_wall_time,
        )?;
        let run = Self {
            dir: cli.out.clone(),
            manifest,
        };
        run.save()?;
        Ok(run)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn output(&mut self, name: &str) -> Result<(), CliError> {
        Ok(self.manifest.add_output(&self.dir, name)?)
    }

    fn save(&self) -> Result<(), CliError> {
        Ok(self.manifest.write(&self.path("manifest.toml"))?)
    }

    fn finish(mut self, outcome: Result<(), CliError>) -> Result<(), CliError> {
        match &outcome {
            Ok(()) => self.manifest.finish(RunStatus::Complete, None),
            Err(e) => self.manifest.finish(RunStatus::Failed, Some(e.to_string())),
        }
        self.save()?;
        outcome
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    if let Command::PlotData { input } = &cli.command {
        return plot_data(cli, input.as_deref());
    }
    preflight(&cli.command, &cfg)?;
    let mut run = Run::start(cli, &cfg)?;
    let outcome = match cli.command {
        Command::Simulate => run_simulate(&mut run, &cfg),
        Command::Sweep => run_sweep(&mut run, &cfg),
        Command::Verify => run_verify(&mut run, &cfg),
        Command::Refine => run_refine(&mut run, &cfg),
        Command::PlotData { .. } => unreachable!(),
    };
    run.finish(outcome)
}

fn run_simulate(run: &mut Run, cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.sweep;
    let grid = s.grid.build()?;
    let p = s.params(cfg.simulate.epsilon);
    let times = uniform_times(p.horizon, cfg.simulate.snapshot_interval);
    let traj = simulate(&s.u0.sample(&grid)?, &s.v0.sample(&grid)?, &p, &times)?;
    write_trajectory(&traj, &run.path("trajectory.txt"))?;
    run.output("trajectory.txt")?;
    let last = traj.diagnostics.last().expect("at least one step");
    run.manifest
        .summary
        .insert("final_sup_u".into(), last.sup_u);
    run.manifest
        .summary
        .insert("final_min_u".into(), last.min_u);
    println!(
        "simulated {} steps to t = {}: u in [{:.6}, {:.6}]",
        p.steps(),
        last.time,
        last.min_u,
        last.sup_u
    );
    Ok(())
}

fn record_sweep(run: &mut Run, result: &SweepResult, name: &str) -> Result<(), CliError> {
    write_sweep_csv(result, &run.path(name))?;
    run.output(name)?;
    if let Some(fit) = result.fit {
        run.manifest.summary.insert("slope".into(), fit.slope);
        run.manifest
            .summary
            .insert("intercept".into(), fit.intercept);
        run.manifest.summary.insert("residual".into(), fit.residual);
    }
    Ok(())
}

fn run_sweep(run: &mut Run, cfg: &RunConfig) -> Result<(), CliError> {
    let result = match epsilon_sweep(&cfg.sweep) {
        Ok(r) => r,
        Err(ExperimentError::PartialSweep {
            completed,
            failed_epsilons,
            source,
        }) => {
            if !completed.runs.is_empty() {
                record_sweep(run, &completed, "sweep.partial.csv")?;
            }
            log::error!("sweep members {failed_epsilons:?} failed");
            return Err((*source).into());
        }
        Err(e) => return Err(e.into()),
    };
    record_sweep(run, &result, "sweep.csv")?;
    let ratios = result.ratios();
    for (i, r) in ratios.iter().enumerate() {
        run.manifest.summary.insert(format!("ratio_{i}"), *r);
    }
    run.manifest.summary.insert(
        "tails_ok".into(),
        if result.all_tails_ok() { 1.0 } else { 0.0 },
    );
    for r in &result.runs {
        println!(
            "epsilon {:.4e}  sup error {:.6e}  at t = {:.3}  tail {}",
            r.epsilon,
            r.sup_error,
            r.argmax_time,
            if r.tail_ok { "ok" } else { "NOT DECREASING" }
        );
    }
    if let Some(fit) = result.fit {
        println!(
            "slope {:.4}  intercept {:.4}  rms residual {:.2e}",
            fit.slope, fit.intercept, fit.residual
        );
    }
    Ok(())
}

/// TOML keys must be strings, so the `c6k` map is keyed by `"k"`.
fn constants_toml(c: &BoundConstants) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct View<'a> {
        c1: f64,
        c2: f64,
        lambda1: f64,
        c11: f64,
        c16: f64,
        c18: f64,
        c19: f64,
        y0: f64,
        c6k: BTreeMap<String, &'a f64>,
    }
    let view = View {
        c1: c.c1,
        c2: c.c2,
        lambda1: c.lambda1,
        c11: c.c11,
        c16: c.c16,
        c18: c.c18,
        c19: c.c19,
        y0: c.y0,
        c6k: c.c6k.iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    toml::to_string(&view).map_err(|e| CliError::Config(e.to_string()))
}

fn run_verify(run: &mut Run, cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.sweep;
    let v = &cfg.verify;
    let grid = s.grid.build()?;
    let p = s.params(v.epsilon);
    let ref_params = s.params(0.0);
    let ks = s.ks.clone();
    let paired = |u0: &Profile, v0: &Profile| -> Result<_, CliError> {
        let u0 = u0.sample(&grid)?;
        let v0 = v0.sample(&grid)?;
        let reference = simulate_fkpp(&u0, &ref_params, &every_step(&ref_params))?;
        Ok(simulate_with_reference(&u0, &v0, &p, &[], &reference, &ks)?)
    };
    let cal = paired(&s.u0, &s.v0)?;
    let constants = calibrate(&cal)?;
    let cal_report = verify_bounds(&cal, &constants, 1.0)?;
    let val = paired(&v.validation_u0, &v.validation_v0)?;
    let report = verify_bounds(&val, &constants, v.slack)?;

    fs::write(run.path("constants.toml"), constants_toml(&constants)?).map_err(io_err)?;
    run.output("constants.toml")?;
    write_bound_report(&cal_report, &run.path("calibration_report.csv"))?;
    run.output("calibration_report.csv")?;
    write_bound_report(&report, &run.path("validation_report.csv"))?;
    run.output("validation_report.csv")?;

    let mut diff = String::from("k,c6k,intervals,failures,pass_rate\n");
    let mut diff_failures = 0;
    for &k in constants.c6k.keys() {
        let audit = verify_diffineq(&cal, k, s.mu, v.diffineq_tol, &constants)?;
        diff_failures += audit.failures();
        writeln!(
            diff,
            "{k},{:.16e},{},{},{:.16e}",
            audit.c6k,
            audit.intervals.len(),
            audit.failures(),
            audit.pass_rate()
        )
        .expect("string write");
    }
    fs::write(run.path("diffineq.csv"), &diff).map_err(io_err)?;
    run.output("diffineq.csv")?;

    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    run.manifest
        .summary
        .insert("bounds_checked".into(), report.checks.len() as f64);
    run.manifest
        .summary
        .insert("bounds_failed".into(), failed.len() as f64);
    run.manifest
        .summary
        .insert("diffineq_failures".into(), diff_failures as f64);
    for c in &report.checks {
        println!(
            "{:<26} {}  margin {:+.3e}  worst at t = {:.3}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.margin,
            c.worst_time
        );
    }
    print!("{diff}");
    if !failed.is_empty() || diff_failures > 0 {
        return Err(CliError::Infeasible(format!(
            "fitted constants failed validation: {failed:?}, {diff_failures} differential-inequality intervals"
        )));
    }
    Ok(())
}

fn order_rows(out: &mut String, study: &str, e: &OrderEstimate) {
    for (i, (h, err)) in e.resolutions.iter().zip(&e.errors).enumerate() {
        let order = if i == 0 {
            String::new()
        } else {
            format!("{:.16e}", e.pairwise[i - 1])
        };
        writeln!(out, "{study},{i},{h:.16e},{err:.16e},{order}").expect("string write");
    }
}

fn run_refine(run: &mut Run, cfg: &RunConfig) -> Result<(), CliError> {
    let result = refinement_study(&cfg.refine)?;
    let mut csv = String::from("study,level,resolution,error,pairwise_order\n");
    order_rows(&mut csv, "spatial", &result.spatial);
    order_rows(&mut csv, "temporal", &result.temporal);
    fs::write(run.path("refine.csv"), &csv).map_err(io_err)?;
    run.output("refine.csv")?;
    run.manifest
        .summary
        .insert("spatial_order".into(), result.spatial.order);
    run.manifest
        .summary
        .insert("temporal_order".into(), result.temporal.order);
    println!("oracle {:?}", result.oracle);
    println!(
        "spatial order {:.4} ({:?})",
        result.spatial.order, result.spatial.status
    );
    println!(
        "temporal order {:.4} ({:?})",
        result.temporal.order, result.temporal.status
    );
    Ok(())
}

/// gnuplot-ready `ln ε  ln E` columns; the fitted line is in the comments.
pub fn plot_text(result: &SweepResult) -> String {
    let mut s = String::from("# ln_epsilon ln_sup_error\n");
    if let Some(fit) = result.fit {
        writeln!(s, "# slope {:.16e}", fit.slope).expect("string write");
        writeln!(s, "# intercept {:.16e}", fit.intercept).expect("string write");
        writeln!(s, "# residual {:.16e}", fit.residual).expect("string write");
    }
    for r in &result.runs {
        writeln!(s, "{:.16e} {:.16e}", r.epsilon.ln(), r.sup_error.ln()).expect("string write");
    }
    s
}

fn plot_data(cli: &Cli, input: Option<&Path>) -> Result<(), CliError> {
    let default = cli.out.join("sweep.csv");
    let input = input.unwrap_or(&default);
    let result = read_sweep_csv(input).map_err(|e| match e {
        IoError::Io(io) => CliError::Io(format!("{}: {io}", input.display())),
        other => CliError::Config(format!("{}: {other}", input.display())),
    })?;
    fs::create_dir_all(&cli.out).map_err(io_err)?;
    let path = cli.out.join("plot.dat");
    fs::write(&path, plot_text(&result)).map_err(io_err)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

/// Parses the process arguments, runs, and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("chemotaxis-fkpp").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
        // an empty file means all defaults
        assert_eq!(toml::from_str::<RunConfig>("").unwrap(), cfg);
    }

    #[test]
    fn overrides_apply() {
        let cli = parse(&[
            "sweep",
            "--dt",
            "0.002",
            "--cells",
            "64",
            "--epsilons",
            "0.04,0.02,0.01",
        ]);
        let cfg = load_config(&cli).unwrap();
        assert_eq!(cfg.sweep.dt, 0.002);
        assert_eq!(cfg.sweep.grid.cells, vec![64]);
        assert_eq!(cfg.sweep.epsilons, vec![0.04, 0.02, 0.01]);
        let cli = parse(&["simulate", "--epsilons", "0.1,0.2"]);
        assert!(matches!(load_config(&cli), Err(CliError::Config(_))));
    }

    #[test]
    fn epsilon_windows_per_command() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let o = out.to_str().unwrap();
        // 2mu/n <= eps < 4mu/n: simulate runs (with a warning), sweep and verify refuse
        let sweep = parse(&["sweep", "--out", o, "--epsilons", "3.0,0.02,0.01"]);
        assert_eq!(run(&sweep).unwrap_err().exit_code(), 1);
        let verify = parse(&["verify", "--out", o, "--epsilons", "2.5"]);
        assert_eq!(run(&verify).unwrap_err().exit_code(), 1);
        assert!(!out.exists(), "config errors must not leave outputs");
        let cfg = load_config(&parse(&["simulate", "--epsilons", "2.5", "--dt", "1e-4"])).unwrap();
        preflight(&Command::Simulate, &cfg).unwrap();
        let bad = load_config(&parse(&["simulate", "--epsilons", "4.0"])).unwrap();
        assert_eq!(
            preflight(&Command::Simulate, &bad).unwrap_err().exit_code(),
            1
        );
    }

    #[test]
    fn error_categories() {
        let inst = SolverError::Instability {
            term: "signal v",
            last_good_time: 1.0,
        };
        assert_eq!(CliError::from(inst).exit_code(), 2);
        let inf = ExperimentError::Bounds(BoundsError::Infeasible {
            template: "lower_constant",
            detail: String::new(),
        });
        assert_eq!(CliError::from(inf).exit_code(), 3);
        let io = IoError::Io(std::io::Error::other("disk"));
        assert_eq!(CliError::from(io).exit_code(), 4);
    }

    #[test]
    fn plot_text_has_fit_and_columns() {
        let runs = [0.04, 0.02, 0.01]
            .iter()
            .map(|&e| crate::experiments::SweepRun {
                epsilon: e,
                sup_error: 2.0 * e,
                argmax_time: 0.1,
                tail_ok: true,
            })
            .collect();
        let text = plot_text(&SweepResult::from_runs(runs).unwrap());
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        let cols: Vec<f64> = data[0].split(' ').map(|t| t.parse().unwrap()).collect();
        assert!((cols[0] - 0.04f64.ln()).abs() < 1e-15 && (cols[1] - 0.08f64.ln()).abs() < 1e-15);
        assert!(text.contains("# slope 1.0000000000000"));
    }
}
