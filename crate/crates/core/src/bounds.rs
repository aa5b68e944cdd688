//! Closed-form envelopes and comparison solutions for the chemotaxis-growth
//! system, and fitting of their free constants from simulated data.
//!
//! None of the constants are known numerically; each envelope is monotone
//! in its free constant, so the tightest constant consistent with a set of
//! samples is found in closed form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{face_gradient, Field};
use crate::solver::{boundedness_window, State};

/// Times from which the lower-bound and Δv envelopes apply.
pub const LATE_TIME: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("{what}: epsilon {epsilon} outside the admissible window [0, {limit})")]
    Window {
        what: &'static str,
        epsilon: f64,
        limit: f64,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no samples to fit")]
    NoSamples,
    #[error("infeasible fit for {template}: {detail}")]
    Infeasible {
        template: &'static str,
        detail: String,
    },
}

fn arg(msg: impl Into<String>) -> BoundsError {
    BoundsError::Argument(msg.into())
}

/// Fitted constants of all audited envelopes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Decaying part of the upper bound on `u`.
    pub c1: f64,
    /// Scale of the gradient bound on `v`.
    pub c2: f64,
    /// Extra decay rate of the gradient bound.
    pub lambda1: f64,
    /// Source constant of the `L^{2k}` differential inequality, per `k`.
    pub c6k: BTreeMap<u32, f64>,
    /// `L^{2k} -> L^∞` transfer constant for the deviation.
    pub c11: f64,
    /// Bound on `|Δv|` for `t >= 3`.
    pub c16: f64,
    /// Lower bound on `u` at `t = 3`.
    pub c18: f64,
    /// Decay constant of the lower envelope.
    pub c19: f64,
    /// Initial value of the logistic comparison solution at `t = 3`.
    pub y0: f64,
}

impl BoundConstants {
    /// Relaxes every constant by `slack` in the direction that loosens its
    /// envelope.
    pub fn relaxed(&self, slack: f64) -> Self {
        Self {
            c1: self.c1 * slack,
            c2: self.c2 * slack,
            lambda1: self.lambda1,
            c6k: self.c6k.iter().map(|(&k, &c)| (k, c * slack)).collect(),
            c11: self.c11 * slack,
            c16: self.c16 * slack,
            c18: self.c18 / slack,
            c19: self.c19 * slack,
            y0: self.y0 / slack,
        }
    }
}

/// `((μ-1)² + nε) / (4μ - nε)`, the asymptotic excess of the upper bound.
pub fn upper_bound_excess(eps: f64, mu: f64, dim: usize) -> Result<f64, BoundsError> {
    if !(mu > 0.0) || dim == 0 {
        return Err(arg(format!("need mu > 0 and n >= 1, got mu={mu}, n={dim}")));
    }
    let limit = boundedness_window(mu, dim);
    if !(eps >= 0.0 && eps < limit) {
        return Err(BoundsError::Window {
            what: "upper bound on u",
            epsilon: eps,
            limit,
        });
    }
    let n = dim as f64;
    Ok(((mu - 1.0).powi(2) + n * eps) / (4.0 * mu - n * eps))
}

/// `c1 e^{-t} + 1 + ((μ-1)² + nε) / (4μ - nε)`.
pub fn upper_bound_u(t: f64, eps: f64, mu: f64, dim: usize, c1: f64) -> Result<f64, BoundsError> {
    if !(t >= 0.0) {
        return Err(arg(format!("t must be >= 0, got {t}")));
    }
    Ok(c1 * (-t).exp() + 1.0 + upper_bound_excess(eps, mu, dim)?)
}

/// Solution of `y' + y = rhs_const`, `y(0) = y0`.
pub fn linear_comparison_solution(t: f64, y0: f64, rhs_const: f64) -> f64 {
    rhs_const + (y0 - rhs_const) * (-t).exp()
}

/// `c2 (1 + e^{-t} + e^{-(1+λ1) t})`.
pub fn grad_v_bound(t: f64, c2: f64, lambda1: f64) -> f64 {
    c2 * (1.0 + (-t).exp() + (-(1.0 + lambda1) * t).exp())
}

/// `c6(k)^{1/(2k)} ε e^{(3μ/2) t}`.
pub fn l2k_deviation_bound(
    t: f64,
    eps: f64,
    k: u32,
    c6k: f64,
    mu: f64,
) -> Result<f64, BoundsError> {
    if k < 1 {
        return Err(arg("k must be >= 1"));
    }
    if !(eps >= 0.0) || !(c6k >= 0.0) {
        return Err(arg(format!("need eps >= 0 and c6k >= 0, got {eps}, {c6k}")));
    }
    Ok(c6k.powf(1.0 / (2.0 * k as f64)) * eps * (1.5 * mu * t).exp())
}

/// Upper end `μ / (2 c16)` of the ε-window of the lower envelope.
pub fn lower_bound_window(mu: f64, c16: f64) -> f64 {
    if c16 > 0.0 {
        mu / (2.0 * c16)
    } else {
        f64::INFINITY
    }
}

/// Solution of `y' = (μ - c16 ε) y - μ y²` on `t >= 3` with `y(3) = y0`.
pub fn logistic_comparison_solution(
    t: f64,
    y0: f64,
    eps: f64,
    mu: f64,
    c16: f64,
) -> Result<f64, BoundsError> {
    if !(t >= LATE_TIME) {
        return Err(arg(format!(
            "comparison solution starts at t = 3, got t = {t}"
        )));
    }
    if !(mu > 0.0 && c16 >= 0.0 && eps >= 0.0) {
        return Err(arg(format!(
            "need mu > 0, c16 >= 0, eps >= 0; got {mu}, {c16}, {eps}"
        )));
    }
    let limit = lower_bound_window(mu, c16);
    if eps >= limit {
        return Err(BoundsError::Window {
            what: "logistic comparison solution",
            epsilon: eps,
            limit,
        });
    }
    let rate = mu - c16 * eps;
    if !(y0 > 0.0 && y0 < rate / mu) {
        return Err(arg(format!("y0 must lie in (0, {}), got {y0}", rate / mu)));
    }
    Ok(rate / (mu + (rate / y0 - mu) * (-rate * (t - LATE_TIME)).exp()))
}

/// `(1 - c16 ε / μ) / (1 + c19 e^{-μ t / 2})` for `t >= 3`.
///
/// Outside `ε < μ / (2 c16)` the algebraic value is still returned, with a
/// logged warning.
pub fn lower_bound_u(t: f64, eps: f64, mu: f64, c16: f64, c19: f64) -> Result<f64, BoundsError> {
    if !(t >= LATE_TIME) {
        return Err(arg(format!("lower bound holds for t >= 3, got t = {t}")));
    }
    if !(mu > 0.0 && c16 >= 0.0 && c19 >= 0.0 && eps >= 0.0) {
        return Err(arg(format!(
            "need mu > 0 and c16, c19, eps >= 0; got {mu}, {c16}, {c19}, {eps}"
        )));
    }
    if eps >= lower_bound_window(mu, c16) {
        log::warn!(
            "lower bound evaluated at epsilon {eps} outside its window [0, {})",
            lower_bound_window(mu, c16)
        );
    }
    Ok((1.0 - c16 * eps / mu) / (1.0 + c19 * (-0.5 * mu * t).exp()))
}

/// `z = (u - 1) + (ε/2) |∇v|²` per cell, with `|∇v|²` averaged from faces.
pub fn compute_z_functional(state: &State, eps: f64) -> Field {
    let grad_sq = face_gradient(&state.v).cell_squared_magnitude();
    state
        .u
        .zip_map(&grad_sq, |u, g| (u - 1.0) + 0.5 * eps * g)
        .expect("state fields share a grid")
}

/// Envelope families with a single free constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Template {
    /// [`upper_bound_u`] with free `c1`.
    UpperU { eps: f64, mu: f64, dim: usize },
    /// [`grad_v_bound`] with free `c2`.
    GradV { lambda1: f64 },
    /// [`l2k_deviation_bound`] with free `c6(k)`.
    L2kDeviation { eps: f64, k: u32, mu: f64 },
    /// `observed <= c`.
    UpperConstant,
    /// `observed >= c`.
    LowerConstant,
    /// [`lower_bound_u`] with free `c19`.
    LowerU { eps: f64, mu: f64, c16: f64 },
}

impl Template {
    pub fn name(&self) -> &'static str {
        match self {
            Template::UpperU { .. } => "upper_bound_u",
            Template::GradV { .. } => "grad_v_bound",
            Template::L2kDeviation { .. } => "l2k_deviation_bound",
            Template::UpperConstant => "upper_constant",
            Template::LowerConstant => "lower_constant",
            Template::LowerU { .. } => "lower_bound_u",
        }
    }

    /// Whether the envelope bounds the observation from above.
    pub fn is_upper(&self) -> bool {
        !matches!(self, Template::LowerConstant | Template::LowerU { .. })
    }

    pub fn evaluate(&self, t: f64, c: f64) -> Result<f64, BoundsError> {
        match *self {
            Template::UpperU { eps, mu, dim } => upper_bound_u(t, eps, mu, dim, c),
            Template::GradV { lambda1 } => Ok(grad_v_bound(t, c, lambda1)),
            Template::L2kDeviation { eps, k, mu } => l2k_deviation_bound(t, eps, k, c, mu),
            Template::UpperConstant | Template::LowerConstant => Ok(c),
            Template::LowerU { eps, mu, c16 } => lower_bound_u(t, eps, mu, c16, c19_guard(c)?),
        }
    }

    /// The constant at which the envelope passes through `(t, observed)`,
    /// or `None` when no constant can (degenerate sample).
    fn pivot(&self, t: f64, observed: f64) -> Result<Option<f64>, BoundsError> {
        Ok(match *self {
            Template::UpperU { eps, mu, dim } => {
                Some((observed - 1.0 - upper_bound_excess(eps, mu, dim)?) * t.exp())
            }
            Template::GradV { lambda1 } => Some(observed / grad_v_bound(t, 1.0, lambda1)),
            Template::L2kDeviation { eps, k, mu } => {
                let scale = eps * (1.5 * mu * t).exp();
                if scale > 0.0 {
                    Some((observed / scale).powi(2 * k as i32))
                } else if observed <= 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            Template::UpperConstant | Template::LowerConstant => Some(observed),
            Template::LowerU { eps, mu, c16 } => {
                if !(t >= LATE_TIME) {
                    return Err(arg(format!("lower bound samples need t >= 3, got {t}")));
                }
                if observed > 0.0 {
                    Some(((1.0 - c16 * eps / mu) / observed - 1.0) * (0.5 * mu * t).exp())
                } else {
                    None
                }
            }
        })
    }
}

fn c19_guard(c: f64) -> Result<f64, BoundsError> {
    if c >= 0.0 {
        Ok(c)
    } else {
        Err(arg(format!("c19 must be >= 0, got {c}")))
    }
}

/// Tightest constant for which `template` bounds every `(t, observed)` sample.
///
/// Upper templates and the decreasing lower envelope get the smallest
/// admissible constant, clamped at zero; the constant lower bound gets the
/// largest, which must be positive.
pub fn fit_constant(samples: &[(f64, f64)], template: &Template) -> Result<f64, BoundsError> {
    if samples.is_empty() {
        return Err(BoundsError::NoSamples);
    }
    let mut pivots = Vec::with_capacity(samples.len());
    for &(t, observed) in samples {
        if !(t.is_finite() && observed.is_finite()) {
            return Err(arg(format!("non-finite sample ({t}, {observed})")));
        }
        match template.pivot(t, observed)? {
            Some(c) => pivots.push(c),
            None => {
                return Err(BoundsError::Infeasible {
                    template: template.name(),
                    detail: format!("no finite constant fits the sample ({t}, {observed})"),
                })
            }
        }
    }
    if let Template::LowerConstant = template {
        let c = pivots.iter().copied().fold(f64::INFINITY, f64::min);
        if c <= 0.0 {
            return Err(BoundsError::Infeasible {
                template: template.name(),
                detail: format!("observed minimum {c} is not positive"),
            });
        }
        return Ok(c);
    }
    Ok(pivots.iter().copied().fold(0.0, f64::max))
}

/// Grid of candidate decay rates `λ1 ∈ {0.1, 0.2, ..., 20}`.
pub fn lambda1_grid() -> impl Iterator<Item = f64> {
    (1..=200).map(|i| i as f64 * 0.1)
}

/// Joint fit of `(c2, λ1)` for the gradient bound: for each candidate `λ1`
/// fit `c2`, keep the pair with the smallest `c2` (first one on ties).
pub fn fit_grad_v(samples: &[(f64, f64)]) -> Result<(f64, f64), BoundsError> {
    let mut best: Option<(f64, f64)> = None;
    for lambda1 in lambda1_grid() {
        let c2 = fit_constant(samples, &Template::GradV { lambda1 })?;
        if best.is_none_or(|(b, _)| c2 < b) {
            best = Some((c2, lambda1));
        }
    }
    best.ok_or(BoundsError::NoSamples)
}
