//! Periodic grids, real and spectral field representations, and exact
//! Fourier differential operators.
//!
//! Transform convention: the forward transform is unnormalized and the
//! inverse carries the factor `1/n^dim`. With this convention Parseval reads
//! `sum |f_j|^2 = (1/n^dim) sum |F_k|^2`, and a single harmonic `sin(kx)` on
//! `n` points has coefficients of modulus `n/2` at `±k`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("value buffer has {got} entries, grid needs {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("non-finite value in field `{0}`")]
    NonFinite(String),
}

/// Plain description of a grid, used in configs and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

fn default_length() -> f64 {
    2.0 * PI
}

struct GridInner {
    dim: usize,
    n: usize,
    length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid in one or two dimensions with cached FFT plans.
///
/// Points are stored row-major: in 2D the flat index is `i * n + j` with `i`
/// running along axis 0 (`x`) and `j` along axis 1 (`y`).
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim())
            .field("n", &self.n())
            .field("length", &self.length())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.spec() == other.spec()
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self, FieldError> {
        if !(dim == 1 || dim == 2) {
            return Err(FieldError::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(FieldError::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(FieldError::InvalidGrid(format!("length must be positive, got {length}")));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(GridInner { dim, n, length, fwd, inv }),
        })
    }

    /// Grid on the standard `2π` torus.
    pub fn periodic(dim: usize, n: usize) -> Result<Self, FieldError> {
        Self::new(dim, n, 2.0 * PI)
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self, FieldError> {
        Self::new(spec.dim, spec.n, spec.length)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim(),
            n: self.n(),
            length: self.length(),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.inner.n.pow(self.inner.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.n() as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length().powi(self.dim() as i32)
    }

    /// Physical wavenumber unit `2π/length`.
    pub fn k_unit(&self) -> f64 {
        2.0 * PI / self.length()
    }

    /// Signed integer wavenumber of FFT index `j` along one axis.
    /// The Nyquist index maps to `-n/2`.
    pub fn int_wavenumber(&self, j: usize) -> i64 {
        let n = self.n();
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n() / 2
    }

    /// Per-axis FFT indices of the flat index `idx`.
    pub fn axis_indices(&self, idx: usize) -> [usize; 2] {
        let n = self.n();
        if self.dim() == 1 {
            [idx, 0]
        } else {
            [idx / n, idx % n]
        }
    }

    /// Integer wavenumber vector of flat spectral index `idx`.
    pub fn int_wavevector(&self, idx: usize) -> [i64; 2] {
        let [i, j] = self.axis_indices(idx);
        if self.dim() == 1 {
            [self.int_wavenumber(i), 0]
        } else {
            [self.int_wavenumber(i), self.int_wavenumber(j)]
        }
    }

    /// Physical wavevector `2π k / length` of flat spectral index `idx`.
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        let [a, b] = self.int_wavevector(idx);
        let s = self.k_unit();
        [a as f64 * s, b as f64 * s]
    }

    /// Squared modulus of the physical wavevector.
    pub fn k_squared(&self, idx: usize) -> f64 {
        let [a, b] = self.wavevector(idx);
        a * a + b * b
    }

    pub fn k_norm(&self, idx: usize) -> f64 {
        self.k_squared(idx).sqrt()
    }

    /// Largest resolved |ξ| (corner of the spectral box in 2D).
    pub fn k_max(&self) -> f64 {
        (self.n() / 2) as f64 * self.k_unit() * (self.dim() as f64).sqrt()
    }

    /// Coordinates of the point with flat index `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.axis_indices(idx);
        let h = self.spacing();
        if self.dim() == 1 {
            [i as f64 * h, 0.0]
        } else {
            [i as f64 * h, j as f64 * h]
        }
    }

    fn check_same(&self, other: &Grid) -> Result<(), FieldError> {
        if self == other {
            Ok(())
        } else {
            Err(FieldError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    fn fft_in_place(&self, data: &mut [Complex64], forward: bool) {
        let plan = if forward { &self.inner.fwd } else { &self.inner.inv };
        let n = self.n();
        if self.dim() == 1 {
            plan.process(data);
            return;
        }
        // rows (contiguous, axis 1)
        for row in data.chunks_exact_mut(n) {
            plan.process(row);
        }
        // columns (axis 0)
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }
}

/// Real-valued field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::BadLength {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every grid point (`y = 0` in 1D).
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let [x, y] = grid.point(i);
                f(x, y)
            })
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    ///
    /// Panics on grid mismatch; callers that accept external fields should
    /// check with [`RealField::same_grid`] first.
    pub fn zip_map(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip_map on mismatched grids");
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn same_grid(&self, other: &RealField) -> Result<(), FieldError> {
        self.grid.check_same(&other.grid)
    }

    pub fn add(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Rectangle-rule integral over the torus (spectrally accurate for
    /// smooth periodic integrands).
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L^p` norm with grid quadrature; `p = ∞` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_of(&self.values, self.grid.cell_volume(), p)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, name: &str) -> Result<(), FieldError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(FieldError::NonFinite(name.to_string()))
        }
    }
}

pub(crate) fn lp_norm_of(values: &[f64], cell: f64, p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 2.0 {
        (values.iter().map(|v| v * v).sum::<f64>() * cell).sqrt()
    } else {
        (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
    }
}

/// Euclidean norm of a vector field, pointwise.
pub fn pointwise_norm(v: &[RealField]) -> RealField {
    let mut out = RealField::zeros(v[0].grid());
    for c in v {
        for (o, x) in out.values.iter_mut().zip(&c.values) {
            *o += x * x;
        }
    }
    out.map(f64::sqrt)
}

/// Complex Fourier coefficients of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Self, FieldError> {
        if coeffs.len() != grid.len() {
            return Err(FieldError::BadLength {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Multiplies every coefficient by a real symbol of the flat index.
    pub fn apply_real(&self, symbol: impl Fn(usize) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * symbol(i))
                .collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.apply_real(|_| c)
    }

    /// Spectral partial derivative along `axis`. The Nyquist mode of an odd
    /// derivative is zeroed so that real fields stay real.
    pub fn derivative(&self, axis: usize) -> Self {
        let g = &self.grid;
        let unit = g.k_unit();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let j = g.axis_indices(idx)[axis];
                if g.is_nyquist(j) {
                    Complex64::new(0.0, 0.0)
                } else {
                    let k = g.int_wavenumber(j) as f64 * unit;
                    c * Complex64::new(0.0, k)
                }
            })
            .collect();
        Self {
            grid: g.clone(),
            coeffs,
        }
    }

    /// Second derivative `∂_a ∂_b`.
    pub fn second_derivative(&self, a: usize, b: usize) -> Self {
        if a == b {
            let g = &self.grid;
            let unit = g.k_unit();
            self.apply_real(|idx| {
                let k = g.int_wavenumber(g.axis_indices(idx)[a]) as f64 * unit;
                -k * k
            })
        } else {
            self.derivative(a).derivative(b)
        }
    }

    pub fn laplacian(&self) -> Self {
        let g = self.grid.clone();
        self.apply_real(|idx| -g.k_squared(idx))
    }

    /// Heat propagator `exp(-nu |ξ|^2 t)`.
    pub fn heat(&self, nu: f64, t: f64) -> Self {
        let g = self.grid.clone();
        self.apply_real(|idx| (-nu * g.k_squared(idx) * t).exp())
    }

    /// 2/3-rule truncation: zeroes modes with `|k_i| > n/3` on any axis.
    pub fn dealias(&self) -> Self {
        let g = &self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| if is_dealiased_mode(g, idx) { Complex64::new(0.0, 0.0) } else { c })
            .collect();
        Self {
            grid: g.clone(),
            coeffs,
        }
    }

    /// Maximum Hermitian-symmetry defect `|F(-k) - conj F(k)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let mirror = |j: usize| (n - j) % n;
        (0..g.len())
            .map(|idx| {
                let [i, j] = g.axis_indices(idx);
                let m = if g.dim() == 1 {
                    mirror(i)
                } else {
                    mirror(i) * n + mirror(j)
                };
                (self.coeffs[m] - self.coeffs[idx].conj()).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Whether the 2/3 rule removes spectral index `idx`.
pub fn is_dealiased_mode(grid: &Grid, idx: usize) -> bool {
    let [a, b] = grid.int_wavevector(idx);
    // |k| > (2/3)(n/2)  <=>  3|k| > n
    let n = grid.n() as i64;
    3 * a.abs() > n || 3 * b.abs() > n
}

pub fn transform(f: &RealField) -> SpectralField {
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    f.grid.fft_in_place(&mut data, true);
    SpectralField {
        grid: f.grid.clone(),
        coeffs: data,
    }
}

pub fn inverse_transform(s: &SpectralField) -> RealField {
    let mut data = s.coeffs.clone();
    s.grid.fft_in_place(&mut data, false);
    let norm = 1.0 / s.grid.len() as f64;
    RealField {
        grid: s.grid.clone(),
        values: data.into_iter().map(|c| c.re * norm).collect(),
    }
}

/// Checked variant of [`inverse_transform`] against an expected grid.
pub fn inverse_transform_on(grid: &Grid, s: &SpectralField) -> Result<RealField, FieldError> {
    grid.check_same(&s.grid)?;
    Ok(inverse_transform(s))
}

pub fn grad(f: &RealField) -> Vec<RealField> {
    let s = transform(f);
    (0..f.grid.dim())
        .map(|a| inverse_transform(&s.derivative(a)))
        .collect()
}

pub fn partial(f: &RealField, axis: usize) -> RealField {
    inverse_transform(&transform(f).derivative(axis))
}

pub fn div(v: &[RealField]) -> Result<RealField, FieldError> {
    let grid = v
        .first()
        .ok_or_else(|| FieldError::InvalidGrid("divergence of an empty vector".into()))?
        .grid()
        .clone();
    if v.len() != grid.dim() {
        return Err(FieldError::GridMismatch(format!(
            "vector has {} components on a {}-d grid",
            v.len(),
            grid.dim()
        )));
    }
    let mut acc = SpectralField::zeros(&grid);
    for (a, c) in v.iter().enumerate() {
        grid.check_same(c.grid())?;
        acc = acc.add(&transform(c).derivative(a));
    }
    Ok(inverse_transform(&acc))
}

pub fn laplacian(f: &RealField) -> RealField {
    inverse_transform(&transform(f).laplacian())
}

/// Hessian matrix `∂_a ∂_b f`, symmetric by construction.
pub fn hessian(f: &RealField) -> Vec<Vec<RealField>> {
    let s = transform(f);
    let d = f.grid.dim();
    let mut h: Vec<Vec<RealField>> = vec![Vec::with_capacity(d); d];
    for a in 0..d {
        for b in 0..d {
            if b < a {
                let sym = h[b][a].clone();
                h[a].push(sym);
            } else {
                h[a].push(inverse_transform(&s.second_derivative(a, b)));
            }
        }
    }
    h
}

pub fn dealias(s: &SpectralField) -> SpectralField {
    s.dealias()
}

/// Projects a real field onto the 2/3-rule band.
pub fn dealias_real(f: &RealField) -> RealField {
    inverse_transform(&transform(f).dealias())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_validation() {
        assert!(Grid::periodic(1, 4).is_err());
        assert!(Grid::periodic(1, 48).is_err());
        assert!(Grid::periodic(3, 16).is_err());
        assert!(Grid::new(1, 16, -1.0).is_err());
        assert!(Grid::periodic(2, 16).is_ok());
    }

    #[test]
    fn constant_has_only_mean_mode() {
        let g = Grid::periodic(2, 16).unwrap();
        let s = transform(&RealField::constant(&g, 3.0));
        assert!((s.coeffs()[0].re - 3.0 * 256.0).abs() < 1e-12);
        for c in &s.coeffs()[1..] {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn single_harmonic_coefficients() {
        let g = Grid::periodic(1, 64).unwrap();
        let s = transform(&RealField::from_fn(&g, |x, _| x.sin()));
        assert!((s.coeffs()[1].norm() - 32.0).abs() < 1e-12);
        assert!((s.coeffs()[63].norm() - 32.0).abs() < 1e-12);
        assert!((s.coeffs()[1] - s.coeffs()[63].conj()).norm() < 1e-12);
        let rest: f64 = s
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 1 && *i != 63)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(rest < 1e-12);
    }

    #[test]
    fn random_round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1, 2] {
            let g = Grid::periodic(dim, 32).unwrap();
            let f = RealField::new(&g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let s = transform(&f);
            assert!(s.hermitian_defect() < 1e-12);
            let back = inverse_transform(&s);
            assert!(back.sub(&f).max_abs() < 1e-12);
            let lhs: f64 = f.values().iter().map(|v| v * v).sum();
            let rhs: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() / g.len() as f64;
            assert!((lhs - rhs).abs() < 1e-10 * lhs);
        }
    }

    #[test]
    fn derivatives_of_harmonics() {
        let g = Grid::periodic(1, 64).unwrap();
        let f = RealField::from_fn(&g, |x, _| (3.0 * x).sin());
        let df = &grad(&f)[0];
        let exact = RealField::from_fn(&g, |x, _| 3.0 * (3.0 * x).cos());
        assert!(df.sub(&exact).max_abs() < 1e-12 * 3.0);
        let f2 = RealField::from_fn(&g, |x, _| (2.0 * x).sin());
        let lap = laplacian(&f2);
        assert!(lap.axpy(4.0, &f2).max_abs() < 1e-12);
        let c = RealField::constant(&g, 2.5);
        assert!(grad(&c)[0].max_abs() < 1e-12);
        assert!(laplacian(&c).max_abs() < 1e-12);
    }

    #[test]
    fn hessian_matches_symbolic() {
        let g = Grid::periodic(2, 32).unwrap();
        let f = RealField::from_fn(&g, |x, y| x.sin() * y.cos());
        let h = hessian(&f);
        let fxx = RealField::from_fn(&g, |x, y| -x.sin() * y.cos());
        let fxy = RealField::from_fn(&g, |x, y| -x.cos() * y.sin());
        let fyy = RealField::from_fn(&g, |x, y| -x.sin() * y.cos());
        assert!(h[0][0].sub(&fxx).max_abs() < 1e-12);
        assert!(h[0][1].sub(&fxy).max_abs() < 1e-12);
        assert!(h[1][0].sub(&fxy).max_abs() < 1e-12);
        assert!(h[1][1].sub(&fyy).max_abs() < 1e-12);
    }

    #[test]
    fn div_grad_is_laplacian() {
        let g = Grid::new(2, 32, 3.0).unwrap();
        let f = dealias_real(&RealField::from_fn(&g, |x, y| {
            let s = 2.0 * PI / 3.0;
            (s * x).sin() * (2.0 * s * y).cos() + (3.0 * s * (x + y)).cos()
        }));
        let lhs = div(&grad(&f)).unwrap();
        let rhs = laplacian(&f);
        assert!(lhs.sub(&rhs).max_abs() < 1e-12 * rhs.max_abs().max(1.0));
    }

    #[test]
    fn div_rejects_wrong_arity() {
        let g = Grid::periodic(2, 16).unwrap();
        assert!(div(&[RealField::zeros(&g)]).is_err());
        let g1 = Grid::periodic(1, 16).unwrap();
        assert!(div(&[RealField::zeros(&g), RealField::zeros(&g1)]).is_err());
    }

    #[test]
    fn dealias_counts_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::periodic(1, 64).unwrap();
        let noise =
            RealField::new(&g, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let s = transform(&noise);
        let d = s.dealias();
        let zeroed = d.coeffs().iter().filter(|c| c.norm() == 0.0).count();
        // kept |k| <= 21 out of 64 modes
        assert_eq!(zeroed, 64 - 43);
        assert_eq!(d.dealias(), d);
        let g2 = Grid::periodic(2, 32).unwrap();
        let zeroed2 = (0..g2.len()).filter(|&i| is_dealiased_mode(&g2, i)).count();
        assert_eq!(zeroed2, 32 * 32 - 21 * 21);
        let smooth = RealField::from_fn(&g, |x, _| (5.0 * x).cos());
        assert!(dealias_real(&smooth).sub(&smooth).max_abs() < 1e-13);
    }
}
