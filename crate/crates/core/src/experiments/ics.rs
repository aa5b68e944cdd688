//! Named initial profiles.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};

use super::ExperimentError;

fn one() -> u32 {
    1
}

/// An analytic or seeded profile, sampled at cell centers and clamped to be
/// nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `base + amplitude * Π_a cos(mode π x_a / L_a)`.
    Cosine {
        base: f64,
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
    },
    /// `base + amplitude * exp(-|x - center|² / (2 width²))`.
    Gaussian {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `base` plus a random combination of the lowest `modes` cosine modes per
    /// axis with `1/j²`-decaying weights, rescaled to sup-amplitude `amplitude`.
    RandomSmooth {
        base: f64,
        amplitude: f64,
        modes: u32,
        seed: u64,
    },
}

impl Profile {
    pub fn sample(&self, grid: &Arc<Grid>) -> Result<Field, ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        let lengths = grid.lengths().to_vec();
        let values: Vec<f64> = match self {
            Profile::Constant { value } => vec![*value; grid.len()],
            Profile::Cosine {
                base,
                amplitude,
                mode,
            } => (0..grid.len())
                .map(|i| {
                    let x = grid.center(i);
                    let wave: f64 = x
                        .iter()
                        .zip(&lengths)
                        .map(|(xa, la)| (*mode as f64 * PI * xa / la).cos())
                        .product();
                    base + amplitude * wave
                })
                .collect(),
            Profile::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => {
                if center.len() != grid.dim() {
                    return bad(format!(
                        "gaussian center has {} coordinates on a {}-dimensional grid",
                        center.len(),
                        grid.dim()
                    ));
                }
                if !(*width > 0.0) {
                    return bad(format!("gaussian width must be > 0, got {width}"));
                }
                (0..grid.len())
                    .map(|i| {
                        let r2: f64 = grid
                            .center(i)
                            .iter()
                            .zip(center)
                            .map(|(x, c)| (x - c).powi(2))
                            .sum();
                        base + amplitude * (-r2 / (2.0 * width * width)).exp()
                    })
                    .collect()
            }
            Profile::RandomSmooth {
                base,
                amplitude,
                modes,
                seed,
            } => {
                if *modes == 0 {
                    return bad("random_smooth needs at least one mode".into());
                }
                random_smooth(grid, *base, *amplitude, *modes, *seed)
            }
        };
        let clamped = values.into_iter().map(|v| v.max(0.0)).collect();
        Field::new(grid.clone(), clamped)
            .map_err(|e| ExperimentError::Config(format!("profile: {e}")))
    }
}

fn random_smooth(grid: &Arc<Grid>, base: f64, amplitude: f64, modes: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    // mode multi-indices (j_0, .., j_{d-1}) with 0 <= j_a <= modes, not all zero
    let per_axis = modes as usize + 1;
    let total = per_axis.pow(dim as u32);
    let mut terms = Vec::new();
    for flat in 1..total {
        let mut js = Vec::with_capacity(dim);
        let mut rest = flat;
        for _ in 0..dim {
            js.push(rest % per_axis);
            rest /= per_axis;
        }
        let norm2: usize = js.iter().map(|j| j * j).sum();
        let coef = rng.gen_range(-1.0..1.0) / norm2 as f64;
        terms.push((js, coef));
    }
    let lengths = grid.lengths();
    let noise: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.center(i);
            terms
                .iter()
                .map(|(js, c)| {
                    c * js
                        .iter()
                        .zip(&x)
                        .zip(lengths)
                        .map(|((&j, xa), la)| (j as f64 * PI * xa / la).cos())
                        .product::<f64>()
                })
                .sum()
        })
        .collect();
    let peak = noise.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    noise.into_iter().map(|n| base + scale * n).collect()
}
