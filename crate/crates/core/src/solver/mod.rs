//! First-order IMEX time stepping for the chemotaxis-growth system
//!
//! ```text
//! u_t = Δu - ε ∇·(u ∇v) + μ u (1 - u)
//! v_t = Δv - v + u
//! ```
//!
//! and for its Fisher–KPP limit `u_t = Δu + μ u (1 - u)`, both with
//! homogeneous Neumann boundaries. Diffusion and the linear `-v` decay are
//! taken implicitly; chemotaxis and the logistic source explicitly.

mod implicit;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    chemotaxis_flux, face_gradient, laplacian_neumann, Field, FluxMode, Grid, GridError,
};

pub use implicit::{helmholtz_solve, CgSettings, ImplicitOperator};

/// Values below `-NEGATIVITY_TOL` in `u` or `v` are treated as a blow-up.
pub const NEGATIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error("numerical instability in {term} after t = {last_good_time}")]
    Instability {
        term: &'static str,
        last_good_time: f64,
    },
    #[error("conjugate gradient stalled at relative residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("record time {0} outside [0, horizon]")]
    RecordTime(f64),
    #[error("reference trajectory unusable: {0}")]
    Reference(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Upper end `4μ/n` of the ε-window where the solution stays bounded.
pub fn boundedness_window(mu: f64, dim: usize) -> f64 {
    4.0 * mu / dim as f64
}

/// Upper end `2μ/n` of the ε-window where bounds are uniform in ε.
pub fn uniform_window(mu: f64, dim: usize) -> f64 {
    2.0 * mu / dim as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Chemotactic sensitivity ε.
    pub epsilon: f64,
    /// Logistic rate μ.
    pub mu: f64,
    pub dt: f64,
    /// Final time T.
    pub horizon: f64,
    #[serde(default)]
    pub flux_mode: FluxMode,
    /// Skip the check of `dt` against [`stability_dt`].
    #[serde(default)]
    pub allow_large_dt: bool,
}

impl ModelParams {
    pub fn new(epsilon: f64, mu: f64, dt: f64, horizon: f64) -> Self {
        Self {
            epsilon,
            mu,
            dt,
            horizon,
            flux_mode: FluxMode::Central,
            allow_large_dt: false,
        }
    }

    pub fn with_flux_mode(mut self, mode: FluxMode) -> Self {
        self.flux_mode = mode;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Number of steps to reach the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Checks the scalar ranges and the boundedness window `ε < 4μ/n`.
    pub fn validate(&self, dim: usize) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidParams(msg));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        // μ = 0 (pure diffusion) is admitted only without chemotaxis
        let mu_ok = if self.epsilon == 0.0 {
            self.mu >= 0.0
        } else {
            self.mu > 0.0
        };
        if !(mu_ok && self.mu.is_finite()) {
            return bad(format!(
                "mu must be > 0 (or 0 with epsilon = 0), got {}",
                self.mu
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.steps() == 0 {
            return bad(format!(
                "horizon {} shorter than dt {}",
                self.horizon, self.dt
            ));
        }
        if self.epsilon == 0.0 {
            return Ok(());
        }
        let window = boundedness_window(self.mu, dim);
        if self.epsilon >= window {
            return bad(format!(
                "epsilon {} outside the boundedness window [0, 4mu/n) = [0, {window})",
                self.epsilon
            ));
        }
        if self.epsilon >= uniform_window(self.mu, dim) {
            log::warn!(
                "epsilon {} is above 2mu/n = {}; bound audits are not available",
                self.epsilon,
                uniform_window(self.mu, dim)
            );
        }
        Ok(())
    }

    /// Stricter check `ε < 2μ/n` required by the bound audits and sweeps.
    pub fn validate_uniform(&self, dim: usize) -> Result<(), SolverError> {
        self.validate(dim)?;
        let window = uniform_window(self.mu, dim);
        if self.epsilon >= window {
            return Err(SolverError::InvalidParams(format!(
                "epsilon {} outside the uniform-bound window [0, 2mu/n) = [0, {window})",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Advisory time step.
///
/// `min(h / (4 ε |∇v|max), 1 / (4 μ max(1, u_max)))`: an advective CFL limit
/// for the explicit chemotaxis flux and a reaction time-scale limit. The
/// parabolic `h²/4` guard is not included because diffusion is implicit.
pub fn stability_dt(params: &ModelParams, grid: &Grid, u_max: f64, grad_v_max: f64) -> f64 {
    let drift = params.epsilon * grad_v_max;
    let advective = if drift > 0.0 {
        grid.min_spacing() / (4.0 * drift)
    } else {
        f64::INFINITY
    };
    let reaction = 1.0 / (4.0 * params.mu * u_max.max(1.0));
    advective.min(reaction)
}

/// Cell density and signal at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub time: f64,
}

impl State {
    pub fn new(u: Field, v: Field) -> Result<Self, SolverError> {
        if !u.same_grid(&v) {
            return Err(GridError::Mismatch.into());
        }
        u.check_finite()?;
        v.check_finite()?;
        Ok(Self { u, v, time: 0.0 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }
}

/// A recorded solution. `v` is absent for Fisher–KPP runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub u: Field,
    pub v: Option<Field>,
}

/// Scalar diagnostics recorded after every step (and at t = 0).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub time: f64,
    pub sup_u: f64,
    pub argmax_u: usize,
    pub min_u: f64,
    pub argmin_u: usize,
    pub min_v: f64,
    pub sup_v: f64,
    /// Largest face-normal component of `∇v`; the cell on the low side of
    /// that face is stored in `argmax_grad_v`.
    pub sup_grad_v: f64,
    pub argmax_grad_v: usize,
    /// `sup |Δ_h v|`.
    pub sup_lap_v: f64,
    pub argmax_lap_v: usize,
    /// `sup z` with `z = (u - 1) + (ε/2) |∇v|²`.
    pub sup_z: f64,
}

/// Integrals of `ω^{2k}` for the deviation `ω = u_ε - u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationMoment {
    pub k: u32,
    /// `∫ ω^{2k}`.
    pub power: f64,
    /// `∫ ω^{2k} (1 - u_ε - u)`.
    pub growth: f64,
}

impl DeviationMoment {
    /// `‖ω‖_{L^{2k}}`.
    pub fn norm(&self) -> f64 {
        self.power.powf(1.0 / (2.0 * self.k as f64))
    }
}

/// Per-step comparison against an attached reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRecord {
    pub time: f64,
    /// `sup |u_ε - u|`.
    pub sup: f64,
    pub argmax: usize,
    pub moments: Vec<DeviationMoment>,
}

impl DeviationRecord {
    pub fn moment(&self, k: u32) -> Option<&DeviationMoment> {
        self.moments.iter().find(|m| m.k == k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Chemotaxis,
    FisherKpp,
}

impl TrajectoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryKind::Chemotaxis => "chemotaxis",
            TrajectoryKind::FisherKpp => "fisher-kpp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub grid: Arc<Grid>,
    pub params: ModelParams,
    /// Snapshots with strictly increasing times, the first at t = 0.
    pub snapshots: Vec<Snapshot>,
    /// One entry per step, the first at t = 0.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Present when a reference trajectory was attached; one entry per step.
    pub deviation: Vec<DeviationRecord>,
}

impl Trajectory {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectories hold at least the initial snapshot")
    }

    pub fn snapshot_at(&self, time: f64) -> Option<&Snapshot> {
        let tol = 0.5 * self.params.dt;
        self.snapshots.iter().find(|s| (s.time - time).abs() < tol)
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn deviation_ks(&self) -> Vec<u32> {
        self.deviation
            .first()
            .map(|d| d.moments.iter().map(|m| m.k).collect())
            .unwrap_or_default()
    }
}

/// Record times `0, interval, 2 interval, ...` up to the horizon.
pub fn uniform_times(horizon: f64, interval: f64) -> Vec<f64> {
    let n = (horizon / interval).round() as usize;
    (0..=n)
        .map(|i| (i as f64 * interval).min(horizon))
        .collect()
}

/// Record times at every step.
pub fn every_step(params: &ModelParams) -> Vec<f64> {
    (0..=params.steps()).map(|s| s as f64 * params.dt).collect()
}

fn record_steps(params: &ModelParams, times: &[f64]) -> Result<BTreeSet<usize>, SolverError> {
    let n = params.steps();
    let mut steps = BTreeSet::from([0]);
    for &t in times {
        if !(t.is_finite() && t >= -0.5 * params.dt && t <= params.horizon + 0.5 * params.dt) {
            return Err(SolverError::RecordTime(t));
        }
        steps.insert(((t / params.dt).round() as usize).min(n));
    }
    Ok(steps)
}

/// The IMEX update with its implicit operators factorized once.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    u_op: ImplicitOperator,
    v_op: ImplicitOperator,
}

impl Stepper {
    pub fn new(grid: Arc<Grid>, params: ModelParams) -> Result<Self, SolverError> {
        params.validate(grid.dim())?;
        let u_op = ImplicitOperator::new(grid.clone(), 1.0, params.dt)?;
        let v_op = ImplicitOperator::new(grid, 1.0 + params.dt, params.dt)?;
        Ok(Self { params, u_op, v_op })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// One step of the chemotaxis system.
    ///
    /// `(I - dt Δ) u' = u + dt (-ε ∇·(u∇v) + μ u (1 - u))` and
    /// `((1 + dt) I - dt Δ) v' = v + dt u` with the old `u`.
    pub fn step(&self, state: &State) -> Result<State, SolverError> {
        let ModelParams {
            epsilon, mu, dt, ..
        } = self.params;
        let unstable = |term| SolverError::Instability {
            term,
            last_good_time: state.time,
        };
        let u = state.u.values();
        let mut rhs: Vec<f64> = u.iter().map(|&ui| mu * ui * (1.0 - ui)).collect();
        if rhs.iter().any(|r| !r.is_finite()) {
            return Err(unstable("logistic reaction"));
        }
        if epsilon != 0.0 {
            let grad_v = face_gradient(&state.v);
            let div = chemotaxis_flux(&state.u, &grad_v, self.params.flux_mode).divergence();
            if div.values().iter().any(|d| !d.is_finite()) {
                return Err(unstable("chemotaxis flux"));
            }
            for (r, d) in rhs.iter_mut().zip(div.values()) {
                *r += -epsilon * d;
            }
        }
        for (r, &ui) in rhs.iter_mut().zip(u) {
            *r = ui + dt * *r;
        }
        let u_next = self
            .u_op
            .solve(&Field::from_raw(state.grid().clone(), rhs))?;
        let v_rhs = state.v.zip_map(&state.u, |vi, ui| vi + dt * ui)?;
        let v_next = self.v_op.solve(&v_rhs)?;
        if u_next.check_finite().is_err() || u_next.min() < -NEGATIVITY_TOL {
            return Err(unstable("cell density u"));
        }
        if v_next.check_finite().is_err() || v_next.min() < -NEGATIVITY_TOL {
            return Err(unstable("signal v"));
        }
        Ok(State {
            u: u_next,
            v: v_next,
            time: state.time + dt,
        })
    }

    /// One Fisher–KPP step: the chemotaxis update with ε = 0 and no signal.
    pub fn step_fkpp(&self, u: &Field, time: f64) -> Result<Field, SolverError> {
        let ModelParams { mu, dt, .. } = self.params;
        let rhs: Vec<f64> = u
            .values()
            .iter()
            .map(|&ui| ui + dt * (mu * ui * (1.0 - ui)))
            .collect();
        let next = self.u_op.solve(&Field::from_raw(u.grid().clone(), rhs))?;
        if next.check_finite().is_err() || next.min() < -NEGATIVITY_TOL {
            return Err(SolverError::Instability {
                term: "cell density u",
                last_good_time: time,
            });
        }
        Ok(next)
    }
}

/// Single step with freshly factorized operators.
pub fn step(state: &State, params: &ModelParams) -> Result<State, SolverError> {
    Stepper::new(state.grid().clone(), *params)?.step(state)
}

fn check_initial(name: &str, f: &Field) -> Result<(), SolverError> {
    f.check_finite()
        .map_err(|e| SolverError::InitialData(format!("{name}: {e}")))?;
    if f.min() < 0.0 {
        return Err(SolverError::InitialData(format!(
            "{name} must be nonnegative, min is {}",
            f.min()
        )));
    }
    Ok(())
}

/// Rejects `params.dt` above [`stability_dt`] for the given initial data,
/// unless `allow_large_dt` is set.
pub fn check_time_step(
    params: &ModelParams,
    u0: &Field,
    v0: Option<&Field>,
) -> Result<(), SolverError> {
    let grid = u0.grid();
    if params.allow_large_dt {
        return Ok(());
    }
    let grad = v0.map(|v| face_gradient(v).max_abs()).unwrap_or(0.0);
    let advised = stability_dt(params, grid, u0.max(), grad);
    if params.dt > advised {
        return Err(SolverError::InvalidParams(format!(
            "dt {} exceeds the advisory step {advised:e}; set allow_large_dt to override",
            params.dt
        )));
    }
    Ok(())
}

fn diagnostics(state: &State, epsilon: f64) -> StepDiagnostics {
    let (argmax_u, sup_u) = state.u.argmax();
    let (argmin_u, min_u) = state.u.argmin();
    let grad = face_gradient(&state.v);
    let grid = state.grid();
    let mut sup_grad_v = 0.0;
    let mut argmax_grad_v = 0;
    for axis in 0..grid.dim() {
        let faces = grad.axis(axis);
        for i in 0..grid.len() {
            let face = grid.face_index(i, axis);
            if faces[face].abs() > sup_grad_v {
                sup_grad_v = faces[face].abs();
                // the face at `face` is the low face of cell i, i.e. cell i - stride sits below it
                argmax_grad_v = i - grid.stride(axis);
            }
        }
    }
    let lap = laplacian_neumann(&state.v);
    let (argmax_lap_v, sup_lap_v) = lap.map(f64::abs).argmax();
    let grad_sq = grad.cell_squared_magnitude();
    let sup_z = state
        .u
        .values()
        .iter()
        .zip(grad_sq.values())
        .map(|(u, g)| (u - 1.0) + 0.5 * epsilon * g)
        .fold(f64::NEG_INFINITY, f64::max);
    StepDiagnostics {
        time: state.time,
        sup_u,
        argmax_u,
        min_u,
        argmin_u,
        min_v: state.v.min(),
        sup_v: state.v.max(),
        sup_grad_v,
        argmax_grad_v,
        sup_lap_v,
        argmax_lap_v,
        sup_z,
    }
}

fn fkpp_diagnostics(u: &Field, time: f64) -> StepDiagnostics {
    let (argmax_u, sup_u) = u.argmax();
    let (argmin_u, min_u) = u.argmin();
    StepDiagnostics {
        time,
        sup_u,
        argmax_u,
        min_u,
        argmin_u,
        sup_z: sup_u - 1.0,
        ..Default::default()
    }
}

fn deviation(u_eps: &Field, u_ref: &Field, time: f64, ks: &[u32]) -> DeviationRecord {
    let vol = u_eps.grid().cell_volume();
    let mut sup = 0.0;
    let mut argmax = 0;
    let mut power = vec![0.0; ks.len()];
    let mut growth = vec![0.0; ks.len()];
    for (i, (&a, &b)) in u_eps.values().iter().zip(u_ref.values()).enumerate() {
        let w = a - b;
        if w.abs() > sup {
            sup = w.abs();
            argmax = i;
        }
        let w2 = w * w;
        for (j, &k) in ks.iter().enumerate() {
            let p = w2.powi(k as i32);
            power[j] += p;
            growth[j] += p * (1.0 - a - b);
        }
    }
    DeviationRecord {
        time,
        sup,
        argmax,
        moments: ks
            .iter()
            .enumerate()
            .map(|(j, &k)| DeviationMoment {
                k,
                power: power[j] * vol,
                growth: growth[j] * vol,
            })
            .collect(),
    }
}

/// Per-step reference fields, indexed by step number.
fn reference_steps<'a>(
    reference: &'a Trajectory,
    params: &ModelParams,
    grid: &Arc<Grid>,
) -> Result<Vec<&'a Field>, SolverError> {
    let fail = |msg: &str| Err(SolverError::Reference(msg.to_string()));
    if *reference.grid != **grid {
        return fail("grid differs");
    }
    if reference.params.dt != params.dt {
        return fail("time step differs");
    }
    let n = params.steps();
    if reference.snapshots.len() < n + 1 {
        return fail("reference must be recorded at every step up to the horizon");
    }
    let fields: Vec<&Field> = reference.snapshots[..=n].iter().map(|s| &s.u).collect();
    if reference.snapshots[..=n]
        .iter()
        .enumerate()
        .any(|(i, s)| s.step != i)
    {
        return fail("reference must be recorded at every step up to the horizon");
    }
    Ok(fields)
}

/// Runs the chemotaxis system from `(u0, v0)`.
pub fn simulate(
    u0: &Field,
    v0: &Field,
    params: &ModelParams,
    record_times: &[f64],
) -> Result<Trajectory, SolverError> {
    run_chemotaxis(u0, v0, params, record_times, None, &[])
}

/// Runs the chemotaxis system and compares it at every step with
/// `reference`, which must hold a snapshot at every step (see [`every_step`]).
/// `ks` selects the `L^{2k}` moments of the deviation to record.
pub fn simulate_with_reference(
    u0: &Field,
    v0: &Field,
    params: &ModelParams,
    record_times: &[f64],
    reference: &Trajectory,
    ks: &[u32],
) -> Result<Trajectory, SolverError> {
    run_chemotaxis(u0, v0, params, record_times, Some(reference), ks)
}

fn run_chemotaxis(
    u0: &Field,
    v0: &Field,
    params: &ModelParams,
    record_times: &[f64],
    reference: Option<&Trajectory>,
    ks: &[u32],
) -> Result<Trajectory, SolverError> {
    let grid = u0.grid().clone();
    check_initial("u0", u0)?;
    check_initial("v0", v0)?;
    let mut state = State::new(u0.clone(), v0.clone())?;
    let stepper = Stepper::new(grid.clone(), *params)?;
    check_time_step(params, u0, Some(v0))?;
    let record = record_steps(params, record_times)?;
    let refs = reference
        .map(|r| reference_steps(r, params, &grid))
        .transpose()?;

    let n = params.steps();
    let mut snapshots = Vec::with_capacity(record.len());
    let mut diags = Vec::with_capacity(n + 1);
    let mut devs = Vec::with_capacity(if refs.is_some() { n + 1 } else { 0 });
    for s in 0..=n {
        if s > 0 {
            state = stepper.step(&state)?;
            state.time = s as f64 * params.dt;
        }
        diags.push(diagnostics(&state, params.epsilon));
        if let Some(refs) = &refs {
            devs.push(deviation(&state.u, refs[s], state.time, ks));
        }
        if record.contains(&s) {
            snapshots.push(Snapshot {
                step: s,
                time: state.time,
                u: state.u.clone(),
                v: Some(state.v.clone()),
            });
        }
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Chemotaxis,
        grid,
        params: *params,
        snapshots,
        diagnostics: diags,
        deviation: devs,
    })
}

/// Runs the Fisher–KPP equation from `u0`. `params.epsilon` is ignored.
pub fn simulate_fkpp(
    u0: &Field,
    params: &ModelParams,
    record_times: &[f64],
) -> Result<Trajectory, SolverError> {
    let grid = u0.grid().clone();
    check_initial("u0", u0)?;
    let params = ModelParams {
        epsilon: 0.0,
        ..*params
    };
    let stepper = Stepper::new(grid.clone(), params)?;
    check_time_step(&params, u0, None)?;
    let record = record_steps(&params, record_times)?;
    let n = params.steps();
    let mut u = u0.clone();
    let mut snapshots = Vec::with_capacity(record.len());
    let mut diags = Vec::with_capacity(n + 1);
    for s in 0..=n {
        let time = s as f64 * params.dt;
        if s > 0 {
            u = stepper.step_fkpp(&u, (s - 1) as f64 * params.dt)?;
        }
        diags.push(fkpp_diagnostics(&u, time));
        if record.contains(&s) {
            snapshots.push(Snapshot {
                step: s,
                time,
                u: u.clone(),
                v: None,
            });
        }
    }
    Ok(Trajectory {
        kind: TrajectoryKind::FisherKpp,
        grid,
        params,
        snapshots,
        diagnostics: diags,
        deviation: Vec::new(),
    })
}
