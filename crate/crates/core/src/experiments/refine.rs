//! Observed orders of accuracy under grid and time-step refinement.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};
use crate::solver::{simulate, ModelParams};

use super::{ExperimentError, GridSpec, Profile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    /// Coarsest grid of the spatial study; the temporal study runs on the
    /// finest one.
    pub grid: GridSpec,
    /// Number of refinement levels, at least 3.
    pub levels: usize,
    pub mu: f64,
    pub epsilon: f64,
    pub u0: Profile,
    pub v0: Profile,
    pub horizon: f64,
    /// Time step of every spatial level.
    pub spatial_dt: f64,
    /// Largest time step of the temporal study, halved at every level.
    pub temporal_dt: f64,
}

impl RefinementConfig {
    /// Diffusion-only cosine on `[0, 1]` with cells 8..64 and the logistic
    /// time-step ladder `4e-3, 2e-3, 1e-3`.
    pub fn heat_default() -> Self {
        Self {
            grid: GridSpec {
                lengths: vec![1.0],
                cells: vec![8],
            },
            levels: 4,
            mu: 0.0,
            epsilon: 0.0,
            u0: Profile::Cosine {
                base: 0.5,
                amplitude: 0.4,
                mode: 1,
            },
            v0: Profile::Constant { value: 0.5 },
            horizon: 0.1,
            spatial_dt: 1e-6,
            temporal_dt: 4e-3,
        }
    }

    /// Homogeneous `u0 = v0 = 0.5`, `μ = 1`, `T = 1`.
    pub fn logistic_default() -> Self {
        Self {
            levels: 3,
            mu: 1.0,
            epsilon: 0.04,
            u0: Profile::Constant { value: 0.5 },
            v0: Profile::Constant { value: 0.5 },
            horizon: 1.0,
            spatial_dt: 1e-3,
            ..Self::heat_default()
        }
    }

    fn params(&self, dt: f64) -> ModelParams {
        ModelParams::new(self.epsilon, self.mu, dt, self.horizon)
    }

    fn level_grid(&self, level: usize) -> Result<Arc<Grid>, ExperimentError> {
        let cells: Vec<usize> = self.grid.cells.iter().map(|c| c << level).collect();
        Ok(Arc::new(Grid::new(&self.grid.lengths, &cells)?))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.levels < 3 {
            return Err(ExperimentError::Config(format!(
                "refinement needs at least 3 levels, got {}",
                self.levels
            )));
        }
        let dim = self.grid.lengths.len();
        self.level_grid(0)?;
        self.params(self.spatial_dt).validate(dim)?;
        self.params(self.temporal_dt).validate(dim)?;
        Ok(())
    }

    /// The exact solution used as reference, when one is known.
    pub fn oracle(&self) -> Oracle {
        match (&self.u0, &self.v0) {
            (Profile::Constant { value: u }, Profile::Constant { .. }) => {
                Oracle::Logistic { u0: *u }
            }
            (
                Profile::Cosine {
                    base,
                    amplitude,
                    mode,
                },
                _,
            ) if self.mu == 0.0 && self.epsilon == 0.0 && *base >= amplitude.abs() => {
                Oracle::Heat {
                    base: *base,
                    amplitude: *amplitude,
                    mode: *mode,
                }
            }
            _ => Oracle::FinestLevel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Oracle {
    /// Spatially constant data follow the logistic ODE.
    Logistic { u0: f64 },
    /// A cosine mode of the heat equation decays at its eigenvalue.
    Heat {
        base: f64,
        amplitude: f64,
        mode: u32,
    },
    /// Successive differences between neighbouring levels.
    FinestLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatus {
    Measured,
    /// Errors at rounding level on every level.
    Exact,
    /// Errors do not decrease monotonically.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Mesh width or time step per level (or per level pair for successive
    /// differences), coarsest first.
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log2(e_i / e_{i+1})` for consecutive levels.
    pub pairwise: Vec<f64>,
    /// Least-squares slope of `ln e` against `ln resolution`; NaN unless
    /// measured.
    pub order: f64,
    pub status: OrderStatus,
}

const EXACT_LEVEL: f64 = 1e-13;

fn estimate(resolutions: Vec<f64>, errors: Vec<f64>) -> Result<OrderEstimate, ExperimentError> {
    let pairwise = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let status = if errors.iter().all(|&e| e <= EXACT_LEVEL) {
        OrderStatus::Exact
    } else if errors.windows(2).any(|w| !(w[1] < w[0])) {
        OrderStatus::Inconclusive
    } else {
        OrderStatus::Measured
    };
    let order = match status {
        OrderStatus::Measured => {
            let pts: Vec<(f64, f64)> = resolutions
                .iter()
                .copied()
                .zip(errors.iter().copied())
                .collect();
            super::fit_loglog_slope(&pts)?.slope
        }
        _ => f64::NAN,
    };
    Ok(OrderEstimate {
        resolutions,
        errors,
        pairwise,
        order,
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub oracle: Oracle,
    pub spatial: OrderEstimate,
    pub temporal: OrderEstimate,
}

fn final_u(cfg: &RefinementConfig, grid: &Arc<Grid>, dt: f64) -> Result<Field, ExperimentError> {
    let u0 = cfg.u0.sample(grid)?;
    let v0 = cfg.v0.sample(grid)?;
    let traj = simulate(&u0, &v0, &cfg.params(dt), &[cfg.horizon])?;
    Ok(traj.final_snapshot().u.clone())
}

fn sup_diff(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn logistic(u0: f64, mu: f64, t: f64) -> f64 {
    if u0 == 0.0 {
        return 0.0;
    }
    u0 / (u0 + (1.0 - u0) * (-mu * t).exp())
}

/// Heat-equation decay rate of the cosine mode, continuous or discrete.
fn heat_rate(grid: &Grid, mode: u32, discrete: bool) -> f64 {
    grid.lengths()
        .iter()
        .zip(grid.spacing())
        .map(|(l, h)| {
            let k = mode as f64 * PI / l;
            if discrete {
                4.0 / (h * h) * (0.5 * k * h).sin().powi(2)
            } else {
                k * k
            }
        })
        .sum()
}

/// Reference of the spatial study: exact in space at the study's time step.
/// Reference of the temporal study: exact in time on the study's grid.
#[derive(Debug, Clone, Copy)]
enum Exactness {
    Space { dt: f64 },
    Time,
}

fn oracle_field(
    cfg: &RefinementConfig,
    oracle: Oracle,
    grid: &Arc<Grid>,
    exact: Exactness,
) -> Result<Field, ExperimentError> {
    let t = cfg.horizon;
    match oracle {
        Oracle::Logistic { u0 } => {
            let value = match exact {
                Exactness::Space { dt } => {
                    // the scheme's own scalar recursion
                    let mut u = u0;
                    for _ in 0..cfg.params(dt).steps() {
                        u += dt * (cfg.mu * u * (1.0 - u));
                    }
                    u
                }
                Exactness::Time => logistic(u0, cfg.mu, t),
            };
            Ok(Field::constant(grid.clone(), value))
        }
        Oracle::Heat {
            base,
            amplitude,
            mode,
        } => {
            let discrete = matches!(exact, Exactness::Time);
            let decay = (-heat_rate(grid, mode, discrete) * t).exp();
            Ok(Profile::Cosine {
                base,
                amplitude: amplitude * decay,
                mode,
            }
            .sample(grid)?)
        }
        Oracle::FinestLevel => unreachable!("no closed form"),
    }
}

pub fn spatial_order(cfg: &RefinementConfig) -> Result<OrderEstimate, ExperimentError> {
    cfg.validate()?;
    let oracle = cfg.oracle();
    let grids = (0..cfg.levels)
        .map(|l| cfg.level_grid(l))
        .collect::<Result<Vec<_>, _>>()?;
    let fields = grids
        .iter()
        .map(|g| final_u(cfg, g, cfg.spatial_dt))
        .collect::<Result<Vec<_>, _>>()?;
    let widths: Vec<f64> = grids.iter().map(|g| g.min_spacing()).collect();
    match oracle {
        Oracle::FinestLevel => {
            let errors = fields
                .windows(2)
                .map(|w| Ok(sup_diff(&w[0], &w[1].restrict()?)))
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            estimate(widths[..widths.len() - 1].to_vec(), errors)
        }
        _ => {
            let errors = fields
                .iter()
                .zip(&grids)
                .map(|(f, g)| {
                    Ok(sup_diff(
                        f,
                        &oracle_field(cfg, oracle, g, Exactness::Space { dt: cfg.spatial_dt })?,
                    ))
                })
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            estimate(widths, errors)
        }
    }
}

/// Time-step ladder on the finest spatial level. With the heat oracle the
/// reference is the exact solution of the spatially discrete problem, so
/// only the time error is measured.
pub fn temporal_order(cfg: &RefinementConfig) -> Result<OrderEstimate, ExperimentError> {
    cfg.validate()?;
    let oracle = cfg.oracle();
    let grid = cfg.level_grid(cfg.levels - 1)?;
    let dts: Vec<f64> = (0..cfg.levels)
        .map(|l| cfg.temporal_dt / (1u64 << l) as f64)
        .collect();
    let fields = dts
        .iter()
        .map(|&dt| final_u(cfg, &grid, dt))
        .collect::<Result<Vec<_>, _>>()?;
    match oracle {
        Oracle::FinestLevel => {
            let errors = fields.windows(2).map(|w| sup_diff(&w[0], &w[1])).collect();
            estimate(dts[..dts.len() - 1].to_vec(), errors)
        }
        _ => {
            let reference = oracle_field(cfg, oracle, &grid, Exactness::Time)?;
            let errors = fields.iter().map(|f| sup_diff(f, &reference)).collect();
            estimate(dts, errors)
        }
    }
}

pub fn refinement_study(cfg: &RefinementConfig) -> Result<RefinementResult, ExperimentError> {
    Ok(RefinementResult {
        oracle: cfg.oracle(),
        spatial: spatial_order(cfg)?,
        temporal: temporal_order(cfg)?,
    })
}
