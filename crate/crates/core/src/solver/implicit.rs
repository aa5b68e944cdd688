//! Linear solves for the implicit half of the IMEX step:
//! `(shift * I - alpha * Δ_h) x = rhs` with Neumann mirror ghosts.

use std::sync::Arc;

use crate::grid::{laplacian_neumann, Field, Grid};

use super::SolverError;

/// Stopping rule for the 2D conjugate-gradient path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    /// Relative residual `|r| / |rhs|` at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
enum Factorization {
    /// Forward-elimination multipliers of the Thomas algorithm. `off` is the
    /// magnitude of the (constant) off-diagonal, `inv_pivot[i]` the inverse
    /// pivot and `upper[i] = off * inv_pivot[i]`.
    Tridiagonal {
        off: f64,
        inv_pivot: Vec<f64>,
        upper: Vec<f64>,
    },
    Cg(CgSettings),
}

/// `shift * I - alpha * Δ_h` on a fixed grid, ready to be inverted repeatedly.
#[derive(Debug, Clone)]
pub struct ImplicitOperator {
    grid: Arc<Grid>,
    shift: f64,
    alpha: f64,
    factorization: Factorization,
}

impl ImplicitOperator {
    pub fn new(grid: Arc<Grid>, shift: f64, alpha: f64) -> Result<Self, SolverError> {
        if !(shift > 0.0 && shift.is_finite()) || !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(SolverError::InvalidParams(format!(
                "implicit operator needs shift > 0 and alpha >= 0, got shift={shift}, alpha={alpha}"
            )));
        }
        let factorization = if grid.dim() == 1 {
            let n = grid.cells()[0];
            let h = grid.spacing()[0];
            let off = alpha / (h * h);
            let mut inv_pivot = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 0..n {
                let neighbours = if i == 0 || i + 1 == n { 1.0 } else { 2.0 };
                let diag = shift + neighbours * off;
                // pivot = diag - off * upper[i-1]; stays >= shift > 0
                let pivot = if i == 0 {
                    diag
                } else {
                    diag - off * upper[i - 1]
                };
                inv_pivot[i] = 1.0 / pivot;
                upper[i] = off * inv_pivot[i];
            }
            Factorization::Tridiagonal {
                off,
                inv_pivot,
                upper,
            }
        } else {
            Factorization::Cg(CgSettings::default())
        };
        Ok(Self {
            grid,
            shift,
            alpha,
            factorization,
        })
    }

    /// Replaces the stopping rule used on 2D grids; no effect in 1D.
    pub fn with_cg_settings(mut self, settings: CgSettings) -> Self {
        if let Factorization::Cg(s) = &mut self.factorization {
            *s = settings;
        }
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Applies the operator.
    pub fn apply(&self, x: &Field) -> Field {
        let lap = laplacian_neumann(x);
        let values = x
            .values()
            .iter()
            .zip(lap.values())
            .map(|(&xi, &li)| self.shift * xi - self.alpha * li)
            .collect();
        Field::from_raw(x.grid().clone(), values)
    }

    pub fn solve(&self, rhs: &Field) -> Result<Field, SolverError> {
        if !(Arc::ptr_eq(rhs.grid(), &self.grid) || **rhs.grid() == *self.grid) {
            return Err(SolverError::Grid(crate::grid::GridError::Mismatch));
        }
        match &self.factorization {
            Factorization::Tridiagonal {
                off,
                inv_pivot,
                upper,
            } => Ok(self.thomas(rhs, *off, inv_pivot, upper)),
            Factorization::Cg(settings) => self.conjugate_gradient(rhs, settings),
        }
    }

    // Every update is a sum of products of nonnegative numbers, so a
    // nonnegative right-hand side gives a nonnegative solution exactly.
    fn thomas(&self, rhs: &Field, off: f64, inv_pivot: &[f64], upper: &[f64]) -> Field {
        let d = rhs.values();
        let n = d.len();
        let mut x = vec![0.0; n];
        x[0] = d[0] * inv_pivot[0];
        for i in 1..n {
            x[i] = (d[i] + off * x[i - 1]) * inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] += upper[i] * x[i + 1];
        }
        Field::from_raw(rhs.grid().clone(), x)
    }

    fn diagonal(&self) -> Vec<f64> {
        let grid = &self.grid;
        (0..grid.len())
            .map(|i| {
                let mut d = self.shift;
                for axis in 0..grid.dim() {
                    let n = grid.cells()[axis];
                    let k = grid.axis_index(i, axis);
                    let h = grid.spacing()[axis];
                    let neighbours = if k == 0 || k + 1 == n { 1.0 } else { 2.0 };
                    d += self.alpha * neighbours / (h * h);
                }
                d
            })
            .collect()
    }

    fn conjugate_gradient(&self, rhs: &Field, settings: &CgSettings) -> Result<Field, SolverError> {
        let b = rhs.values();
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return Ok(Field::zeros(rhs.grid().clone()));
        }
        let inv_diag: Vec<f64> = self.diagonal().iter().map(|d| 1.0 / d).collect();
        // rhs / shift is exact for constants
        let mut x = rhs.map(|b| b / self.shift);
        let ax = self.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(ax.values()).map(|(bi, ai)| bi - ai).collect();
        let mut residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= settings.tolerance {
            return Ok(x);
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = Field::from_raw(rhs.grid().clone(), z.clone());
        let mut rz = dot(&r, &z);
        for _ in 0..settings.max_iterations {
            let ap = self.apply(&p);
            let alpha = rz / dot(p.values(), ap.values());
            for (xi, pi) in x.values_mut().iter_mut().zip(p.values()) {
                *xi += alpha * pi;
            }
            for (ri, api) in r.iter_mut().zip(ap.values()) {
                *ri -= alpha * api;
            }
            residual = dot(&r, &r).sqrt() / b_norm;
            if residual <= settings.tolerance {
                return Ok(x);
            }
            for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
                *zi = ri * di;
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.values_mut().iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        Err(SolverError::NonConvergence {
            residual,
            iterations: settings.max_iterations,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(I - alpha * Δ_h) x = rhs`.
pub fn helmholtz_solve(rhs: &Field, alpha: f64) -> Result<Field, SolverError> {
    ImplicitOperator::new(rhs.grid().clone(), 1.0, alpha)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new_1d(1.0, n).unwrap())
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constants_are_fixed() {
        for g in [line(9), Arc::new(Grid::new_2d([1.0, 1.5], [6, 9]).unwrap())] {
            let rhs = Field::constant(g, 0.8);
            let x = helmholtz_solve(&rhs, 0.3).unwrap();
            assert!(max_diff(&x, &rhs) < 1e-14);
        }
    }

    #[test]
    fn vanishing_alpha_returns_rhs() {
        let g = line(16);
        let rhs = Field::from_fn(g, |x| (3.0 * x[0]).sin() + 2.0);
        let x = helmholtz_solve(&rhs, 1e-12).unwrap();
        assert!(max_diff(&x, &rhs) < 1e-8);
    }

    // Oracle: cos(pi x) sampled at cell centers is an exact eigenvector of the
    // Neumann stencil with eigenvalue -(4/h^2) sin^2(pi h / 2).
    #[test]
    fn discrete_eigenmode_is_recovered() {
        for n in [4usize, 8, 32] {
            let g = line(n);
            let h = 1.0 / n as f64;
            let lambda = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
            let alpha = 0.05;
            let mode = Field::from_fn(g.clone(), |x| (PI * x[0]).cos());
            let rhs = mode.map(|c| (1.0 + alpha * lambda) * c);
            let x = helmholtz_solve(&rhs, alpha).unwrap();
            assert!(max_diff(&x, &mode) < 1e-13, "n={n}");
        }
    }

    #[test]
    fn residual_is_small_in_both_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in [
            line(37),
            Arc::new(Grid::new_2d([1.0, 2.0], [12, 20]).unwrap()),
        ] {
            let rhs = Field::new(
                g.clone(),
                (0..g.len()).map(|_| rng.gen_range(0.0..2.0)).collect(),
            )
            .unwrap();
            let op = ImplicitOperator::new(g, 1.3, 0.02).unwrap();
            let x = op.solve(&rhs).unwrap();
            let r = op.apply(&x);
            assert!(max_diff(&r, &rhs) < 1e-10 * crate::grid::sup_norm(&rhs));
        }
    }

    #[test]
    fn thomas_preserves_nonnegativity() {
        let g = line(50);
        let mut values = vec![0.0; 50];
        values[10] = 1e-300;
        values[40] = 3.0;
        let x = helmholtz_solve(&Field::new(g, values).unwrap(), 10.0).unwrap();
        assert!(x.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let g = Arc::new(Grid::new_2d([1.0, 1.0], [16, 16]).unwrap());
        let rhs = Field::from_fn(g.clone(), |x| (7.0 * x[0]).sin() * (5.0 * x[1]).cos());
        let op = ImplicitOperator::new(g, 1.0, 1.0)
            .unwrap()
            .with_cg_settings(CgSettings {
                tolerance: 1e-14,
                max_iterations: 2,
            });
        match op.solve(&rhs) {
            Err(SolverError::NonConvergence {
                residual,
                iterations,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_coefficients() {
        assert!(ImplicitOperator::new(line(8), 0.0, 1.0).is_err());
        assert!(ImplicitOperator::new(line(8), 1.0, -1.0).is_err());
    }
}
