//! Cell-centered rectangular grids with homogeneous Neumann boundaries.
//!
//! Cells are indexed with the x-axis fastest. Cell `i` along an axis has its
//! center at `(i + 1/2) * spacing`. Boundary conditions are imposed through
//! mirror ghost cells, which makes every boundary face flux exactly zero.

use std::sync::Arc;

use thiserror::Error;

/// Smallest number of cells accepted along any axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis count mismatch: {lengths} lengths for {cells} cell counts")]
    AxisCount { lengths: usize, cells: usize },
    #[error("axis {axis}: need at least {MIN_CELLS} cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: length must be positive and finite, got {length}")]
    Length { axis: usize, length: f64 },
    #[error("fields live on different grids")]
    Mismatch,
    #[error("field has {got} values, grid has {expected} cells")]
    ValueCount { expected: usize, got: usize },
    #[error("non-finite value {value} at cell {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("norm exponent must be >= 1, got {0}")]
    Exponent(f64),
}

/// Rectangular cell-centered mesh in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lengths: Vec<f64>,
    cells: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(lengths: &[f64], cells: &[usize]) -> Result<Self, GridError> {
        if lengths.len() != cells.len() {
            return Err(GridError::AxisCount {
                lengths: lengths.len(),
                cells: cells.len(),
            });
        }
        if !(1..=2).contains(&cells.len()) {
            return Err(GridError::Dimension(cells.len()));
        }
        for (axis, (&length, &n)) in lengths.iter().zip(cells).enumerate() {
            if !(length.is_finite() && length > 0.0) {
                return Err(GridError::Length { axis, length });
            }
            if n < MIN_CELLS {
                return Err(GridError::TooFewCells { axis, cells: n });
            }
        }
        let spacing = lengths
            .iter()
            .zip(cells)
            .map(|(&l, &n)| l / n as f64)
            .collect();
        Ok(Self {
            lengths: lengths.to_vec(),
            cells: cells.to_vec(),
            spacing,
        })
    }

    pub fn new_1d(length: f64, cells: usize) -> Result<Self, GridError> {
        Self::new(&[length], &[cells])
    }

    pub fn new_2d(lengths: [f64; 2], cells: [usize; 2]) -> Result<Self, GridError> {
        Self::new(&lengths, &cells)
    }

    /// Spatial dimension `n`.
    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn measure(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Flat-index stride of an axis.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells[..axis].iter().product()
    }

    /// Index of cell `index` along `axis`.
    pub fn axis_index(&self, index: usize, axis: usize) -> usize {
        (index / self.stride(axis)) % self.cells[axis]
    }

    /// Coordinates of the center of the cell with flat index `index`.
    pub fn center(&self, index: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|axis| (self.axis_index(index, axis) as f64 + 0.5) * self.spacing[axis])
            .collect()
    }

    /// Number of faces normal to `axis`, boundary faces included.
    pub fn face_count(&self, axis: usize) -> usize {
        self.len() / self.cells[axis] * (self.cells[axis] + 1)
    }

    /// Flat index of the face on the low side of cell `index` along `axis`.
    /// The high-side face is `face_index(index, axis) + face_stride(axis)`.
    pub fn face_index(&self, index: usize, axis: usize) -> usize {
        let stride = self.stride(axis);
        let n = self.cells[axis];
        let below = index % stride;
        let along = (index / stride) % n;
        let above = index / (stride * n);
        below + stride * (along + (n + 1) * above)
    }

    pub fn face_stride(&self, axis: usize) -> usize {
        self.stride(axis)
    }

    /// Coarsen by a factor of two along every axis.
    pub fn coarsened(&self) -> Result<Self, GridError> {
        let cells: Vec<usize> = self.cells.iter().map(|n| n / 2).collect();
        Self::new(&self.lengths, &cells)
    }

    /// Refine by a factor of two along every axis.
    pub fn refined(&self) -> Self {
        let cells: Vec<usize> = self.cells.iter().map(|n| n * 2).collect();
        Self::new(&self.lengths, &cells).expect("refinement keeps a valid grid")
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Scalar cell values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ValueCount {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let field = Self { grid, values };
        field.check_finite()?;
        Ok(field)
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.center(i))).collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(GridError::NonFinite {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        same_grid(&self.grid, &other.grid)
    }

    fn ensure_same_grid(&self, other: &Field) -> Result<(), GridError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(GridError::Mismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field, GridError> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field::from_raw(self.grid.clone(), values))
    }

    pub fn sub(&self, other: &Field) -> Result<Field, GridError> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index and value of the largest entry.
    pub fn argmax(&self) -> (usize, f64) {
        extremum(&self.values, |a, b| a > b)
    }

    /// Index and value of the smallest entry.
    pub fn argmin(&self) -> (usize, f64) {
        extremum(&self.values, |a, b| a < b)
    }

    /// Midpoint-rule integral over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.measure()
    }

    /// Cell averages on the grid coarsened by two along every axis.
    pub fn restrict(&self) -> Result<Field, GridError> {
        let coarse = Arc::new(self.grid.coarsened()?);
        let fine = &self.grid;
        let mut values = vec![0.0; coarse.len()];
        let weight = 1.0 / (1usize << fine.dim()) as f64;
        for (i, &v) in self.values.iter().enumerate() {
            let mut target = 0;
            for axis in 0..fine.dim() {
                target += (fine.axis_index(i, axis) / 2) * coarse.stride(axis);
            }
            values[target] += weight * v;
        }
        Ok(Field::from_raw(coarse, values))
    }
}

fn extremum(values: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, best.1) {
            best = (i, v);
        }
    }
    best
}

/// Face-normal components on every face of the grid, one array per axis.
/// Boundary faces always hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Arc<Grid>,
    axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let axes = (0..grid.dim())
            .map(|a| vec![0.0; grid.face_count(a)])
            .collect();
        Self { grid, axes }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    /// Largest face magnitude over all axes.
    pub fn max_abs(&self) -> f64 {
        self.axes
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Per-cell `|grad|^2`: per axis, the mean of the squared components on
    /// the two faces bounding the cell, summed over axes.
    pub fn cell_squared_magnitude(&self) -> Field {
        let grid = &self.grid;
        let mut out = vec![0.0; grid.len()];
        for axis in 0..grid.dim() {
            let faces = &self.axes[axis];
            let fs = grid.face_stride(axis);
            for (i, o) in out.iter_mut().enumerate() {
                let lo = grid.face_index(i, axis);
                let (a, b) = (faces[lo], faces[lo + fs]);
                *o += 0.5 * (a * a + b * b);
            }
        }
        Field::from_raw(grid.clone(), out)
    }

    /// Discrete divergence: net outward flux per cell divided by spacing.
    pub fn divergence(&self) -> Field {
        let grid = &self.grid;
        let mut out = vec![0.0; grid.len()];
        for axis in 0..grid.dim() {
            let faces = &self.axes[axis];
            let fs = grid.face_stride(axis);
            let inv_h = 1.0 / grid.spacing()[axis];
            for (i, o) in out.iter_mut().enumerate() {
                let lo = grid.face_index(i, axis);
                *o += (faces[lo + fs] - faces[lo]) * inv_h;
            }
        }
        Field::from_raw(grid.clone(), out)
    }
}

/// How the cell density is carried to a face in the chemotactic flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxMode {
    /// Arithmetic mean of the two neighbours. Second order.
    #[default]
    Central,
    /// Value from the cell the flux leaves. Positivity preserving under a CFL limit.
    Upwind,
}

impl FluxMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FluxMode::Central => "central",
            FluxMode::Upwind => "upwind",
        }
    }
}

impl std::str::FromStr for FluxMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "central" => Ok(FluxMode::Central),
            "upwind" => Ok(FluxMode::Upwind),
            other => Err(format!("unknown flux mode '{other}'")),
        }
    }
}

/// Difference of adjacent cell values over the spacing, on every interior
/// face; boundary faces are zero.
pub fn face_gradient(f: &Field) -> FaceField {
    let grid = f.grid().clone();
    let mut faces = FaceField::zeros(grid.clone());
    let values = f.values();
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        let n = grid.cells()[axis];
        let inv_h = 1.0 / grid.spacing()[axis];
        let out = &mut faces.axes[axis];
        for (i, &value) in values.iter().enumerate() {
            if grid.axis_index(i, axis) + 1 < n {
                let face = grid.face_index(i, axis) + stride;
                out[face] = (values[i + stride] - value) * inv_h;
            }
        }
    }
    faces
}

/// Second-order Neumann Laplacian (3-point in 1D, 5-point in 2D).
pub fn laplacian_neumann(f: &Field) -> Field {
    face_gradient(f).divergence()
}

/// `div(u grad v)` in flux form, without the chemotactic coefficient.
pub fn chemotaxis_divergence(u: &Field, v: &Field, mode: FluxMode) -> Result<Field, GridError> {
    u.ensure_same_grid(v)?;
    Ok(chemotaxis_flux(u, &face_gradient(v), mode).divergence())
}

/// Face flux `u_face * grad v` given the face gradient of `v`.
pub(crate) fn chemotaxis_flux(u: &Field, grad_v: &FaceField, mode: FluxMode) -> FaceField {
    let grid = u.grid().clone();
    let mut flux = FaceField::zeros(grid.clone());
    let values = u.values();
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        let n = grid.cells()[axis];
        let g = grad_v.axis(axis);
        let out = &mut flux.axes[axis];
        for i in 0..values.len() {
            if grid.axis_index(i, axis) + 1 < n {
                let face = grid.face_index(i, axis) + stride;
                let (left, right) = (values[i], values[i + stride]);
                let u_face = match mode {
                    FluxMode::Central => 0.5 * (left + right),
                    FluxMode::Upwind => {
                        if g[face] > 0.0 {
                            left
                        } else {
                            right
                        }
                    }
                };
                out[face] = u_face * g[face];
            }
        }
    }
    flux
}

pub fn sup_norm(f: &Field) -> f64 {
    f.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// `(sum |f|^p * cellVolume)^(1/p)`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64, GridError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(GridError::Exponent(p));
    }
    let sum: f64 = f.values().iter().map(|v| v.abs().powf(p)).sum();
    Ok((sum * f.grid().cell_volume()).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(cells: usize) -> Arc<Grid> {
        Arc::new(Grid::new_1d(1.0, cells).unwrap())
    }

    fn plane(nx: usize, ny: usize) -> Arc<Grid> {
        Arc::new(Grid::new_2d([1.0, 2.0], [nx, ny]).unwrap())
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(
            Grid::new_1d(1.0, 3),
            Err(GridError::TooFewCells { axis: 0, cells: 3 })
        );
        assert!(matches!(
            Grid::new_1d(0.0, 8),
            Err(GridError::Length { .. })
        ));
        assert!(matches!(
            Grid::new(&[1.0; 3], &[4; 3]),
            Err(GridError::Dimension(3))
        ));
        assert!(matches!(
            Grid::new(&[1.0], &[4, 4]),
            Err(GridError::AxisCount { .. })
        ));
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = line(4);
        let err = Field::new(g.clone(), vec![0.0, f64::NAN, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, GridError::NonFinite { index: 1, .. }));
        assert!(matches!(
            Field::new(g, vec![0.0; 5]),
            Err(GridError::ValueCount {
                expected: 4,
                got: 5
            })
        ));
    }

    #[test]
    fn face_indexing_2d() {
        let g = plane(4, 5);
        assert_eq!(g.face_count(0), 5 * 5);
        assert_eq!(g.face_count(1), 4 * 6);
        // cell (i=2, j=3) -> flat 14
        assert_eq!(g.face_index(14, 0), 2 + 5 * 3);
        assert_eq!(g.face_index(14, 1), 14);
        assert_eq!(g.face_stride(1), 4);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        for g in [line(7), plane(6, 5)] {
            let lap = laplacian_neumann(&Field::constant(g, 3.7));
            assert!(lap.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn laplacian_second_order_on_cosine() {
        let err = |n: usize| {
            let g = line(n);
            let f = Field::from_fn(g, |x| (PI * x[0]).cos());
            let lap = laplacian_neumann(&f);
            lap.values()
                .iter()
                .zip(f.values())
                .map(|(l, c)| (l + PI * PI * c).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(64) / err(128);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn face_gradient_exact_for_affine_data() {
        let g = line(10);
        let f = Field::from_fn(g, |x| 2.5 * x[0] - 1.0);
        let grad = face_gradient(&f);
        let faces = grad.axis(0);
        assert_eq!(faces[0], 0.0);
        assert_eq!(faces[10], 0.0);
        for &v in &faces[1..10] {
            assert!((v - 2.5).abs() < 1e-12);
        }
        assert_eq!(face_gradient(&Field::constant(line(5), 1.0)).max_abs(), 0.0);
    }

    #[test]
    fn face_gradient_second_order_on_cosine() {
        let err = |n: usize| {
            let g = line(n);
            let h = 1.0 / n as f64;
            let grad = face_gradient(&Field::from_fn(g, |x| (PI * x[0]).cos()));
            (1..n)
                .map(|k| (grad.axis(0)[k] + PI * (PI * k as f64 * h).sin()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn chemotaxis_with_flat_signal_is_zero() {
        let g = plane(5, 6);
        let u = Field::from_fn(g.clone(), |x| 1.0 + x[0] * x[1]);
        let v = Field::constant(g, 0.4);
        for mode in [FluxMode::Central, FluxMode::Upwind] {
            let d = chemotaxis_divergence(&u, &v, mode).unwrap();
            assert!(d.values().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn chemotaxis_with_constant_density_is_scaled_laplacian() {
        let g = plane(8, 6);
        let u = Field::constant(g.clone(), 0.7);
        let v = Field::from_fn(g, |x| (x[0] * 3.0).sin() + x[1] * x[1]);
        let d = chemotaxis_divergence(&u, &v, FluxMode::Central).unwrap();
        let lap = laplacian_neumann(&v);
        let scale = sup_norm(&lap);
        for (a, b) in d.values().iter().zip(lap.values()) {
            assert!((a - 0.7 * b).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn chemotaxis_rejects_grid_mismatch() {
        let u = Field::constant(line(8), 1.0);
        let v = Field::constant(line(9), 1.0);
        assert_eq!(
            chemotaxis_divergence(&u, &v, FluxMode::Central).unwrap_err(),
            GridError::Mismatch
        );
    }

    #[test]
    fn norms() {
        let g = line(16);
        assert_eq!(sup_norm(&Field::zeros(g.clone())), 0.0);
        assert_eq!(lp_norm(&Field::zeros(g.clone()), 3.0).unwrap(), 0.0);
        let two = Field::constant(g.clone(), 2.0);
        assert!((lp_norm(&two, 2.0).unwrap() - 2.0).abs() < 1e-14);
        let long = Arc::new(Grid::new_1d(3.0, 12).unwrap());
        let two = Field::constant(long, 2.0);
        assert!((lp_norm(&two, 2.0).unwrap() - 2.0 * 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(lp_norm(&two, 0.5), Err(GridError::Exponent(0.5)));
        let f = Field::new(g, (0..16).map(|i| i as f64 - 10.0).collect()).unwrap();
        assert_eq!(sup_norm(&f), 10.0);
    }

    #[test]
    fn symmetric_input_gives_symmetric_output() {
        let g = plane(8, 8);
        let u = Field::from_fn(g.clone(), |x| {
            1.0 + ((x[0] - 0.5).powi(2) + (x[1] - 1.0).powi(2))
        });
        let v = Field::from_fn(g.clone(), |x| {
            (-(x[0] - 0.5).powi(2) * 4.0).exp() * (x[1] - 1.0).cos()
        });
        let d = chemotaxis_divergence(&u, &v, FluxMode::Central).unwrap();
        let lap = laplacian_neumann(&v);
        let mirror = |i: usize| {
            let (ix, iy) = (g.axis_index(i, 0), g.axis_index(i, 1));
            (7 - ix) + 8 * iy
        };
        for i in 0..g.len() {
            assert!((d.values()[i] - d.values()[mirror(i)]).abs() < 1e-12);
            assert!((lap.values()[i] - lap.values()[mirror(i)]).abs() < 1e-12);
        }
    }

    #[test]
    fn restriction_averages_children() {
        let g = plane(8, 8);
        let f = Field::from_fn(g, |x| x[0] + 10.0 * x[1]);
        let r = f.restrict().unwrap();
        assert_eq!(r.grid().cells(), &[4, 4][..]);
        let c = r.grid().center(3);
        assert!((r.values()[3] - (c[0] + 10.0 * c[1])).abs() < 1e-12);
    }
}
