//! Fitting bound constants on one run and checking them on another.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    fit_constant, fit_grad_v, grad_v_bound, l2k_deviation_bound, linear_comparison_solution,
    logistic_comparison_solution, lower_bound_u, upper_bound_excess, upper_bound_u, BoundConstants,
    Template, LATE_TIME,
};
use crate::grid::face_gradient;
use crate::solver::{StepDiagnostics, Trajectory};

use super::ExperimentError;

/// Multiplier applied to fitted constants when checking an independent run.
pub const DEFAULT_SLACK: f64 = 1.05;

/// Relative tolerance of the differential-inequality audit.
pub const DEFAULT_DIFFINEQ_TOL: f64 = 0.05;

/// Outcome of checking one envelope over a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub constant_names: Vec<String>,
    /// Constants as used in the check, slack included.
    pub fitted_values: Vec<f64>,
    /// Smallest distance between envelope and observation, signed so that
    /// a negative value is a violation.
    pub margin: f64,
    pub pass: bool,
    /// Time and cell-center position of the smallest margin.
    pub worst_time: f64,
    pub worst_position: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub slack: f64,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Smallest integer `k > n/4`.
pub fn transfer_exponent(dim: usize) -> u32 {
    (dim / 4) as u32 + 1
}

/// Resolution of `Δ_h v` in floating point: a perturbation of one rounding
/// unit in each stencil entry of a field of size `sup_v`.
pub fn laplacian_resolution(traj: &Trajectory, sup_v: f64) -> f64 {
    let inv_h2: f64 = traj.grid.spacing().iter().map(|h| 1.0 / (h * h)).sum();
    4.0 * f64::EPSILON * sup_v * inv_h2
}

fn late(diags: &[StepDiagnostics]) -> impl Iterator<Item = &StepDiagnostics> {
    diags.iter().filter(|d| d.time >= LATE_TIME - 1e-9)
}

fn step_at(traj: &Trajectory, time: f64) -> Result<&StepDiagnostics, ExperimentError> {
    let step = (time / traj.params.dt).round() as usize;
    traj.diagnostics
        .get(step)
        .ok_or_else(|| ExperimentError::MissingDiagnostics(format!("no diagnostics at t = {time}")))
}

fn require_late(traj: &Trajectory) -> Result<(), ExperimentError> {
    let end = traj.diagnostics.last().map_or(0.0, |d| d.time);
    if end < LATE_TIME {
        return Err(ExperimentError::MissingDiagnostics(format!(
            "the audit needs a run reaching t = 3, this one ends at t = {end}"
        )));
    }
    Ok(())
}

fn require_deviation(traj: &Trajectory, k: u32) -> Result<(), ExperimentError> {
    if traj.deviation.is_empty() {
        return Err(ExperimentError::MissingDiagnostics(
            "trajectory has no attached reference".into(),
        ));
    }
    if !traj.deviation_ks().contains(&k) {
        return Err(ExperimentError::MissingDiagnostics(format!(
            "moment k = {k} was not recorded (have {:?})",
            traj.deviation_ks()
        )));
    }
    Ok(())
}

/// One finite-difference interval of the `L^{2k}` differential inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalCheck {
    pub t0: f64,
    pub t1: f64,
    /// `(∫ω^{2k}(t1) - ∫ω^{2k}(t0)) / (t1 - t0)`.
    pub slope: f64,
    /// Right-hand side at `t0`.
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffIneqAudit {
    pub k: u32,
    pub c6k: f64,
    pub tol: f64,
    pub intervals: Vec<IntervalCheck>,
}

impl DiffIneqAudit {
    pub fn failures(&self) -> usize {
        self.intervals.iter().filter(|i| !i.pass).count()
    }

    pub fn pass_rate(&self) -> f64 {
        if self.intervals.is_empty() {
            return 1.0;
        }
        1.0 - self.failures() as f64 / self.intervals.len() as f64
    }
}

// (slope, μk∫ω^{2k} + 2kμ∫ω^{2k}(1 - u_ε - u)) per step interval
fn diffineq_terms(
    traj: &Trajectory,
    k: u32,
    mu: f64,
) -> Result<Vec<(f64, f64, f64, f64)>, ExperimentError> {
    require_deviation(traj, k)?;
    let kf = k as f64;
    let mut out = Vec::with_capacity(traj.deviation.len().saturating_sub(1));
    for pair in traj.deviation.windows(2) {
        let a = pair[0].moment(k).expect("checked above");
        let b = pair[1].moment(k).expect("checked above");
        let dt = pair[1].time - pair[0].time;
        let slope = (b.power - a.power) / dt;
        let linear = mu * kf * a.power + 2.0 * kf * mu * a.growth;
        out.push((pair[0].time, pair[1].time, slope, linear));
    }
    Ok(out)
}

/// Smallest `c6(k)` for which the left-endpoint discretization of the
/// differential inequality holds on every step interval.
pub fn fit_c6(traj: &Trajectory, k: u32, mu: f64) -> Result<f64, ExperimentError> {
    let eps = traj.params.epsilon;
    if !(eps > 0.0) {
        return Err(ExperimentError::Config(
            "c6 is only identifiable for epsilon > 0".into(),
        ));
    }
    let scale = eps.powi(2 * k as i32);
    let samples: Vec<(f64, f64)> = diffineq_terms(traj, k, mu)?
        .into_iter()
        .map(|(t0, _, slope, linear)| (t0, (slope - linear) / scale))
        .collect();
    Ok(fit_constant(&samples, &Template::UpperConstant)?)
}

/// Compares the slope of `∫ω^{2k}` on every step interval with the right-hand
/// side `ε^{2k} c6 + μk∫ω^{2k} + 2kμ∫ω^{2k}(1 - u_ε - u)` at its left end.
/// An interval passes when `slope <= rhs + tol * max(1, |rhs|)`.
pub fn verify_diffineq(
    traj: &Trajectory,
    k: u32,
    mu: f64,
    tol: f64,
    constants: &BoundConstants,
) -> Result<DiffIneqAudit, ExperimentError> {
    let c6k = *constants
        .c6k
        .get(&k)
        .ok_or_else(|| ExperimentError::Config(format!("no fitted c6 for k = {k}")))?;
    let source = traj.params.epsilon.powi(2 * k as i32) * c6k;
    let intervals = diffineq_terms(traj, k, mu)?
        .into_iter()
        .map(|(t0, t1, slope, linear)| {
            let rhs = source + linear;
            IntervalCheck {
                t0,
                t1,
                slope,
                rhs,
                pass: slope <= rhs + tol * rhs.abs().max(1.0),
            }
        })
        .collect();
    Ok(DiffIneqAudit {
        k,
        c6k,
        tol,
        intervals,
    })
}

/// Fits every constant on a calibration run, which must carry deviation
/// moments for `k = 1` and reach `t = 3`.
pub fn calibrate(traj: &Trajectory) -> Result<BoundConstants, ExperimentError> {
    require_late(traj)?;
    let p = traj.params;
    let (eps, mu) = (p.epsilon, p.mu);
    let dim = traj.grid.dim();
    let diags = &traj.diagnostics;

    let sup_u: Vec<(f64, f64)> = diags.iter().map(|d| (d.time, d.sup_u)).collect();
    let c1 = fit_constant(&sup_u, &Template::UpperU { eps, mu, dim })?;
    let grad: Vec<(f64, f64)> = diags.iter().map(|d| (d.time, d.sup_grad_v)).collect();
    let (c2, lambda1) = fit_grad_v(&grad)?;

    let mut c6k = std::collections::BTreeMap::new();
    for k in traj.deviation_ks() {
        c6k.insert(k, fit_c6(traj, k, mu)?);
    }

    let kt = transfer_exponent(dim);
    require_deviation(traj, kt)?;
    let mut running = 0.0f64;
    let transfer: Vec<(f64, f64)> = traj
        .deviation
        .iter()
        .map(|d| {
            running = running.max(d.moment(kt).expect("checked").norm());
            (d.time, d.sup / (eps + running))
        })
        .collect();
    let c11 = fit_constant(&transfer, &Template::UpperConstant)?;

    let lap: Vec<(f64, f64)> = late(diags).map(|d| (d.time, d.sup_lap_v)).collect();
    let sup_v = late(diags).map(|d| d.sup_v).fold(0.0, f64::max);
    let c16 = fit_constant(&lap, &Template::UpperConstant)?.max(laplacian_resolution(traj, sup_v));

    let at3 = step_at(traj, LATE_TIME)?;
    let c18 = fit_constant(&[(at3.time, at3.min_u)], &Template::LowerConstant)?;
    let y0 = 0.99 * c18.min(0.5).min((mu - c16 * eps) / mu);

    let low: Vec<(f64, f64)> = late(diags).map(|d| (d.time, d.min_u)).collect();
    let c19 = fit_constant(&low, &Template::LowerU { eps, mu, c16 })?;

    Ok(BoundConstants {
        c1,
        c2,
        lambda1,
        c6k,
        c11,
        c16,
        c18,
        c19,
        y0,
    })
}

struct Tracker {
    margin: f64,
    time: f64,
    cell: usize,
    samples: usize,
    violated: bool,
}

impl Tracker {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            time: 0.0,
            cell: 0,
            samples: 0,
            violated: false,
        }
    }

    /// `bound - observed` for upper envelopes, `observed - bound` for lower
    /// ones. Gaps within a few rounding units of the compared values count
    /// as equality, so a constant fitted on the same data passes.
    fn push(&mut self, bound: f64, observed: f64, upper: bool, time: f64, cell: usize) {
        let margin = if upper {
            bound - observed
        } else {
            observed - bound
        };
        let rounding = 4.0 * f64::EPSILON * bound.abs().max(observed.abs());
        self.violated |= margin < -rounding;
        self.samples += 1;
        if margin < self.margin {
            self.margin = margin;
            self.time = time;
            self.cell = cell;
        }
    }

    fn finish(self, traj: &Trajectory, name: &str, constants: &[(&str, f64)]) -> BoundCheck {
        BoundCheck {
            name: name.to_string(),
            constant_names: constants.iter().map(|c| c.0.to_string()).collect(),
            fitted_values: constants.iter().map(|c| c.1).collect(),
            margin: self.margin,
            pass: !self.violated,
            worst_time: self.time,
            worst_position: traj.grid.center(self.cell),
            samples: self.samples,
        }
    }
}

/// Checks every audited envelope on `traj` with `constants` relaxed by
/// `slack`. The trajectory needs an attached reference with the moments of
/// every fitted `c6(k)` and of the transfer exponent, and must reach `t = 3`.
pub fn verify_bounds(
    traj: &Trajectory,
    constants: &BoundConstants,
    slack: f64,
) -> Result<BoundReport, ExperimentError> {
    if !(slack >= 1.0) {
        return Err(ExperimentError::Config(format!(
            "slack must be >= 1, got {slack}"
        )));
    }
    require_late(traj)?;
    let p = traj.params;
    let (eps, mu) = (p.epsilon, p.mu);
    let dim = traj.grid.dim();
    let kt = transfer_exponent(dim);
    require_deviation(traj, kt)?;
    for &k in constants.c6k.keys() {
        require_deviation(traj, k)?;
    }
    let c = constants.relaxed(slack);
    let diags = &traj.diagnostics;
    let mut checks = Vec::new();

    let mut t = Tracker::new();
    for d in diags {
        t.push(
            upper_bound_u(d.time, eps, mu, dim, c.c1)?,
            d.sup_u,
            true,
            d.time,
            d.argmax_u,
        );
    }
    checks.push(t.finish(traj, "upper_bound_u", &[("c1", c.c1)]));

    // comparison function for z, started from the initial data
    let first = &traj.snapshots[0];
    let v0 = first.v.as_ref().ok_or_else(|| {
        ExperimentError::MissingDiagnostics("initial snapshot has no signal".into())
    })?;
    let y_z0 = first
        .u
        .values()
        .iter()
        .map(|u| (u - 1.0).abs())
        .fold(0.0, f64::max)
        + 0.5 * eps * face_gradient(v0).max_abs().powi(2);
    let excess = upper_bound_excess(eps, mu, dim)?;
    let mut t = Tracker::new();
    for d in diags {
        t.push(
            linear_comparison_solution(d.time, y_z0, excess),
            d.sup_z,
            true,
            d.time,
            d.argmax_u,
        );
    }
    checks.push(t.finish(traj, "z_comparison", &[("y_z0", y_z0)]));

    let mut t = Tracker::new();
    for d in diags {
        t.push(
            grad_v_bound(d.time, c.c2, c.lambda1),
            d.sup_grad_v,
            true,
            d.time,
            d.argmax_grad_v,
        );
    }
    checks.push(t.finish(
        traj,
        "grad_v_bound",
        &[("c2", c.c2), ("lambda1", c.lambda1)],
    ));

    for (&k, &c6) in &c.c6k {
        let mut t = Tracker::new();
        for d in &traj.deviation {
            let norm = d.moment(k).expect("checked").norm();
            t.push(
                l2k_deviation_bound(d.time, eps, k, c6, mu)?,
                norm,
                true,
                d.time,
                d.argmax,
            );
        }
        checks.push(t.finish(
            traj,
            &format!("l2k_deviation_bound_k{k}"),
            &[(&format!("c6_{k}"), c6)],
        ));
    }

    let mut t = Tracker::new();
    let mut running = 0.0f64;
    for d in &traj.deviation {
        running = running.max(d.moment(kt).expect("checked").norm());
        t.push(c.c11 * (eps + running), d.sup, true, d.time, d.argmax);
    }
    checks.push(t.finish(traj, "deviation_sup_transfer", &[("c11", c.c11)]));

    let mut t = Tracker::new();
    for d in late(diags) {
        t.push(c.c16, d.sup_lap_v, true, d.time, d.argmax_lap_v);
    }
    checks.push(t.finish(traj, "laplacian_v_bound", &[("c16", c.c16)]));

    let at3 = step_at(traj, LATE_TIME)?;
    let mut t = Tracker::new();
    t.push(c.c18, at3.min_u, false, at3.time, at3.argmin_u);
    checks.push(t.finish(traj, "lower_bound_at_3", &[("c18", c.c18)]));

    let mut t = Tracker::new();
    for d in late(diags) {
        t.push(
            lower_bound_u(d.time, eps, mu, c.c16, c.c19)?,
            d.min_u,
            false,
            d.time,
            d.argmin_u,
        );
    }
    checks.push(t.finish(traj, "lower_bound_u", &[("c16", c.c16), ("c19", c.c19)]));

    let mut t = Tracker::new();
    for d in late(diags) {
        let y = logistic_comparison_solution(d.time.max(LATE_TIME), c.y0, eps, mu, c.c16)?;
        t.push(y, d.min_u, false, d.time, d.argmin_u);
    }
    checks.push(t.finish(traj, "logistic_comparison", &[("c16", c.c16), ("y0", c.y0)]));

    Ok(BoundReport {
        epsilon: eps,
        slack,
        checks,
    })
}
