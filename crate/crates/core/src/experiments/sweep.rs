//! The ε-sweep: deviation from the Fisher–KPP solution as a function of ε.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{FluxMode, Grid};
use crate::solver::{
    every_step, simulate_fkpp, simulate_with_reference, uniform_window, ModelParams, Trajectory,
};

use super::{ExperimentError, Profile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>, ExperimentError> {
        Ok(Arc::new(Grid::new(&self.lengths, &self.cells)?))
    }
}

fn default_ks() -> Vec<u32> {
    vec![1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: GridSpec,
    pub mu: f64,
    pub u0: Profile,
    pub v0: Profile,
    /// Strictly decreasing, inside `(0, 2μ/n)`.
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub flux_mode: FluxMode,
    /// `L^{2k}` moments of the deviation recorded at every step.
    #[serde(default = "default_ks")]
    pub ks: Vec<u32>,
    /// Skip the advisory time-step check.
    #[serde(default)]
    pub allow_large_dt: bool,
}

impl SweepConfig {
    /// 256 cells on `[0, 1]`, `μ = 1`, `u0 = 0.5 + 0.4 cos(πx)`,
    /// `v0 = 0.5 + 0.2 cos(πx)`, `dt = 1e-3`, `T = 12`,
    /// `ε ∈ {0.04, 0.02, 0.01, 0.005}`.
    pub fn desk_default() -> Self {
        Self {
            grid: GridSpec {
                lengths: vec![1.0],
                cells: vec![256],
            },
            mu: 1.0,
            u0: Profile::Cosine {
                base: 0.5,
                amplitude: 0.4,
                mode: 1,
            },
            v0: Profile::Cosine {
                base: 0.5,
                amplitude: 0.2,
                mode: 1,
            },
            epsilons: vec![0.04, 0.02, 0.01, 0.005],
            horizon: 12.0,
            dt: 1e-3,
            flux_mode: FluxMode::Central,
            ks: default_ks(),
            allow_large_dt: false,
        }
    }

    pub fn params(&self, epsilon: f64) -> ModelParams {
        ModelParams {
            allow_large_dt: self.allow_large_dt,
            ..ModelParams::new(epsilon, self.mu, self.dt, self.horizon)
                .with_flux_mode(self.flux_mode)
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        let dim = self.grid.lengths.len();
        self.grid.build()?;
        self.params(0.0).validate(dim)?;
        if self.epsilons.len() < 3 {
            return bad(format!(
                "a rate fit needs at least 3 epsilons, got {}",
                self.epsilons.len()
            ));
        }
        let window = uniform_window(self.mu, dim);
        for &eps in &self.epsilons {
            if !(eps > 0.0 && eps < window) {
                return bad(format!("epsilon {eps} outside (0, 2mu/n) = (0, {window})"));
            }
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilons must be strictly decreasing".into());
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks must be a nonempty list of integers >= 1".into());
        }
        Ok(())
    }
}

/// Outcome of one ε run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub epsilon: f64,
    /// `max_t sup_x |u_ε - u|` over every step.
    pub sup_error: f64,
    pub argmax_time: f64,
    /// Maximum attained before `0.8 T` and error non-increasing on the last
    /// 20% of the run.
    pub tail_ok: bool,
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of the points from the line.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    /// Absent when fewer than two runs are available.
    pub fit: Option<LogLogFit>,
}

impl SweepResult {
    pub fn from_runs(runs: Vec<SweepRun>) -> Result<Self, ExperimentError> {
        let fit = if runs.len() >= 2 {
            let pts: Vec<(f64, f64)> = runs.iter().map(|r| (r.epsilon, r.sup_error)).collect();
            Some(fit_loglog_slope(&pts)?)
        } else {
            None
        };
        Ok(Self { runs, fit })
    }

    /// `E(ε_{i+1}) / E(ε_i)` for consecutive runs.
    pub fn ratios(&self) -> Vec<f64> {
        self.runs
            .windows(2)
            .map(|w| w[1].sup_error / w[0].sup_error)
            .collect()
    }

    pub fn all_tails_ok(&self) -> bool {
        self.runs.iter().all(|r| r.tail_ok)
    }
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit, ExperimentError> {
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(ExperimentError::Config(format!(
            "log-log fit needs positive finite points, got ({x}, {y})"
        )));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(ExperimentError::Config(
            "log-log fit needs at least two distinct x values".into(),
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LogLogFit {
        slope,
        intercept,
        residual: (rss / n).sqrt(),
    })
}

/// `(max_t ‖u_ε - u‖_∞, argmax t)` over the common snapshot times.
pub fn sup_time_error(
    traj_eps: &Trajectory,
    traj_ref: &Trajectory,
) -> Result<(f64, f64), ExperimentError> {
    if *traj_eps.grid != *traj_ref.grid {
        return Err(ExperimentError::Mismatch(
            "trajectories live on different grids".into(),
        ));
    }
    if traj_eps.snapshots.len() != traj_ref.snapshots.len()
        || traj_eps
            .snapshots
            .iter()
            .zip(&traj_ref.snapshots)
            .any(|(a, b)| a.time != b.time)
    {
        return Err(ExperimentError::Mismatch("recording times differ".into()));
    }
    let mut best = (0.0, 0.0);
    for (a, b) in traj_eps.snapshots.iter().zip(&traj_ref.snapshots) {
        let err =
            a.u.values()
                .iter()
                .zip(b.u.values())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
        if err > best.0 {
            best = (err, a.time);
        }
    }
    Ok(best)
}

/// Summarizes the per-step deviation of a trajectory run against a reference.
pub fn summarize_deviation(traj: &Trajectory) -> Result<SweepRun, ExperimentError> {
    let dev = &traj.deviation;
    if dev.is_empty() {
        return Err(ExperimentError::MissingDiagnostics(
            "trajectory has no attached reference".into(),
        ));
    }
    let mut sup_error = 0.0;
    let mut argmax_time = 0.0;
    for d in dev {
        if d.sup > sup_error {
            sup_error = d.sup;
            argmax_time = d.time;
        }
    }
    let horizon = traj.params.horizon;
    let tail_start = 0.8 * horizon;
    let tail: Vec<f64> = dev
        .iter()
        .filter(|d| d.time >= tail_start)
        .map(|d| d.sup)
        .collect();
    // allow one rounding unit of jitter once the error reaches the roundoff floor
    let monotone = tail.windows(2).all(|w| w[1] <= w[0] + f64::EPSILON);
    Ok(SweepRun {
        epsilon: traj.params.epsilon,
        sup_error,
        argmax_time,
        tail_ok: monotone && argmax_time < tail_start,
    })
}

/// Runs the Fisher–KPP reference once and every ε in parallel, then fits the
/// rate. If any run fails, the successful ones are returned inside
/// [`ExperimentError::PartialSweep`].
pub fn epsilon_sweep(config: &SweepConfig) -> Result<SweepResult, ExperimentError> {
    config.validate()?;
    let grid = config.grid.build()?;
    let u0 = config.u0.sample(&grid)?;
    let v0 = config.v0.sample(&grid)?;
    let ref_params = config.params(0.0);
    let reference = simulate_fkpp(&u0, &ref_params, &every_step(&ref_params))?;
    let outcomes: Vec<Result<SweepRun, ExperimentError>> = config
        .epsilons
        .par_iter()
        .map(|&eps| {
            let traj = simulate_with_reference(
                &u0,
                &v0,
                &config.params(eps),
                &[],
                &reference,
                &config.ks,
            )?;
            summarize_deviation(&traj)
        })
        .collect();
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut failed = Vec::new();
    let mut first_error = None;
    for (outcome, &eps) in outcomes.into_iter().zip(&config.epsilons) {
        match outcome {
            Ok(run) => runs.push(run),
            Err(e) => {
                failed.push(eps);
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(source) = first_error {
        return Err(ExperimentError::PartialSweep {
            completed: Box::new(SweepResult::from_runs(runs)?),
            failed_epsilons: failed,
            source: Box::new(source),
        });
    }
    SweepResult::from_runs(runs)
}
