//! Uniform grids on the unit torus `[-1/2, 1/2)^d` and their discrete
//! Fourier transforms.
//!
//! Coefficients are taken against the physical nodes, `c_k = mean_j f(x_j)
//! e^{-2πi k·x_j}`, so the zero mode is the mean of the samples and Parseval
//! reads `mean(f^2) = Σ |c_k|^2`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the Hermitian symmetry check of the inverse transform.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// A uniform periodic grid with `n` points per axis in `d` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct TorusGrid {
    d: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    d: usize,
    n: usize,
}

impl TryFrom<GridSpec> for TorusGrid {
    type Error = Error;
    fn try_from(spec: GridSpec) -> Result<Self> {
        TorusGrid::new(spec.d, spec.n)
    }
}

impl From<TorusGrid> for GridSpec {
    fn from(grid: TorusGrid) -> Self {
        GridSpec { d: grid.d, n: grid.n }
    }
}

impl TorusGrid {
    /// Builds a grid, rejecting `d ∉ {1, 2}` and `n` that is not a power of two `≥ 8`.
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::validation("dimension", format!("d must be 1 or 2, got {d}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::validation("grid size", format!("N must be a power of two and at least 8, got {n}")));
        }
        Ok(TorusGrid { d, n })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn total_points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Physical coordinate of node `j` along one axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -0.5 + j as f64 / self.n as f64
    }

    /// Per-axis node indices of a flat row-major index.
    pub fn axis_indices(&self, flat: usize) -> [usize; 2] {
        if self.d == 1 {
            [flat, 0]
        } else {
            [flat / self.n, flat % self.n]
        }
    }

    /// Physical position of a flat node index; unused trailing components are zero.
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.axis_indices(flat);
        if self.d == 1 {
            [self.coordinate(i), 0.0]
        } else {
            [self.coordinate(i), self.coordinate(j)]
        }
    }

    /// Signed wavenumber in `(-N/2, N/2]` of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Wavevector of a flat spectral index; unused trailing components are zero.
    pub fn wavevector(&self, flat: usize) -> [i64; 2] {
        let [i, j] = self.axis_indices(flat);
        if self.d == 1 {
            [self.wavenumber(i), 0]
        } else {
            [self.wavenumber(i), self.wavenumber(j)]
        }
    }

    /// Flat spectral index of the wavevector `-k`.
    pub fn negated_index(&self, flat: usize) -> usize {
        let [i, j] = self.axis_indices(flat);
        let neg = |a: usize| (self.n - a) % self.n;
        if self.d == 1 {
            neg(i)
        } else {
            neg(i) * self.n + neg(j)
        }
    }

    /// `|2πk|` for every spectral index.
    pub fn frequency_magnitudes(&self) -> Vec<f64> {
        (0..self.total_points())
            .map(|idx| {
                let [k0, k1] = self.wavevector(idx);
                let two_pi = 2.0 * std::f64::consts::PI;
                two_pi * ((k0 * k0 + k1 * k1) as f64).sqrt()
            })
            .collect()
    }

    /// True when any component of the wavevector exceeds `N/3` in magnitude.
    pub fn is_dealiased_mode(&self, flat: usize) -> bool {
        let cutoff = self.n as i64 / 3;
        self.wavevector(flat)[..self.d].iter().any(|k| k.abs() > cutoff)
    }

    /// True when any component of the wavevector sits on the Nyquist frequency.
    pub fn is_nyquist_mode(&self, flat: usize, axis: usize) -> bool {
        self.wavevector(flat)[axis] == self.n as i64 / 2
    }

    /// Sup-norm of the wavevector.
    pub fn max_wavenumber(&self, flat: usize) -> i64 {
        let [k0, k1] = self.wavevector(flat);
        k0.abs().max(k1.abs())
    }
}

/// Builds a grid; see [`TorusGrid::new`].
pub fn make_grid(d: usize, n: usize) -> Result<TorusGrid> {
    TorusGrid::new(d, n)
}

/// Real samples on a torus grid, row-major over axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    /// Wraps samples, rejecting wrong lengths and non-finite entries.
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::validation(
                "field",
                format!("expected {} samples, got {}", grid.total_points(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation("field", format!("sample {i} is not finite")));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.total_points());
        Field { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Field { grid, values: vec![c; grid.total_points()] }
    }

    /// Samples `f` at every node; the closure receives `[x, y]` with `y = 0` in 1-D.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.total_points()).map(|i| f(grid.position(i))).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
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

    /// Mean over the grid, which equals `∫ f` on the unit torus.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    }

    pub fn max(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Pointwise map into a new field on the same grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Trapezoidal `∫ f g` on the unit torus.
    pub fn inner(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let sum: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        sum / self.values.len() as f64
    }
}

/// Fourier coefficients of a field, indexed like the samples (FFT bin order).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: TorusGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.total_points() {
            return Err(Error::validation(
                "spectral field",
                format!("expected {} coefficients, got {}", grid.total_points(), coefficients.len()),
            ));
        }
        Ok(SpectralField { grid, coefficients })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        SpectralField { grid, coefficients: vec![Complex64::new(0.0, 0.0); grid.total_points()] }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    /// Coefficient of the wavevector `k` (trailing component ignored in 1-D).
    pub fn coefficient(&self, k: [i64; 2]) -> Complex64 {
        self.coefficients[self.index_of(k)]
    }

    /// Sets the coefficient of `k` and its Hermitian partner `-k`.
    pub fn set_mode(&mut self, k: [i64; 2], value: Complex64) {
        let idx = self.index_of(k);
        let neg = self.grid.negated_index(idx);
        self.coefficients[idx] = value;
        self.coefficients[neg] = value.conj();
        if idx == neg {
            self.coefficients[idx] = Complex64::new(value.re, 0.0);
        }
    }

    fn index_of(&self, k: [i64; 2]) -> usize {
        let n = self.grid.points_per_axis() as i64;
        let wrap = |x: i64| x.rem_euclid(n) as usize;
        if self.grid.dimension() == 1 {
            wrap(k[0])
        } else {
            wrap(k[0]) * n as usize + wrap(k[1])
        }
    }

    /// Largest `|c(k) - conj(c(-k))|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.grid, &self.coefficients)
    }
}

fn hermitian_defect(grid: &TorusGrid, coefficients: &[Complex64]) -> f64 {
    let scale = coefficients.iter().fold(0.0f64, |a, c| a.max(c.norm()));
    if scale == 0.0 {
        return 0.0;
    }
    let worst = (0..coefficients.len())
        .map(|i| (coefficients[i] - coefficients[grid.negated_index(i)].conj()).norm())
        .fold(0.0f64, f64::max);
    worst / scale
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<usize, PlanPair>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    let (planner, map) = &mut *guard;
    if let Some(pair) = map.get(&n) {
        return pair.clone();
    }
    let pair = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    map.insert(n, pair.clone());
    pair
}

/// Reusable FFT plans and scratch buffers for one grid.
///
/// Hot loops should keep one of these alive instead of calling the
/// allocating free functions.
pub struct SpectralWorkspace {
    grid: TorusGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
    // (-1)^{k_0 + k_1}: shifts the FFT origin from node 0 to x = 0.
    phase: Vec<f64>,
}

impl std::fmt::Debug for SpectralWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralWorkspace").field("grid", &self.grid).finish()
    }
}

impl Clone for SpectralWorkspace {
    fn clone(&self) -> Self {
        SpectralWorkspace::new(self.grid)
    }
}

impl SpectralWorkspace {
    pub fn new(grid: TorusGrid) -> Self {
        let n = grid.points_per_axis();
        let (forward, inverse) = plans(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        let transpose_len = if grid.dimension() == 2 { grid.total_points() } else { 0 };
        let phase = (0..grid.total_points())
            .map(|i| {
                let [k0, k1] = grid.wavevector(i);
                if (k0 + k1).rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        SpectralWorkspace {
            grid,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            transpose: vec![Complex64::new(0.0, 0.0); transpose_len],
            phase,
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let plan = if forward { &self.forward } else { &self.inverse };
        plan.process_with_scratch(data, &mut self.scratch);
        if self.grid.dimension() == 2 {
            let n = self.grid.points_per_axis();
            transpose(data, &mut self.transpose, n);
            plan.process_with_scratch(&mut self.transpose, &mut self.scratch);
            transpose(&self.transpose, data, n);
        }
    }

    /// Forward transform of real samples into `out` (normalized to mean).
    pub fn forward_into(&mut self, values: &[f64], out: &mut [Complex64]) {
        for (o, &v) in out.iter_mut().zip(values) {
            *o = Complex64::new(v, 0.0);
        }
        self.transform(out, true);
        let scale = 1.0 / self.grid.total_points() as f64;
        for (c, p) in out.iter_mut().zip(&self.phase) {
            *c *= scale * p;
        }
    }

    /// Inverse transform of `coeffs` (overwritten) into real samples, without
    /// the symmetry check.
    pub fn inverse_into(&mut self, coeffs: &mut [Complex64], out: &mut [f64]) {
        for (c, p) in coeffs.iter_mut().zip(&self.phase) {
            *c *= p;
        }
        self.transform(coeffs, false);
        for (o, c) in out.iter_mut().zip(coeffs.iter()) {
            *o = c.re;
        }
    }

    pub fn forward(&mut self, f: &Field) -> SpectralField {
        assert_eq!(f.grid, self.grid, "field grid does not match workspace");
        let mut coefficients = vec![Complex64::new(0.0, 0.0); self.grid.total_points()];
        self.forward_into(&f.values, &mut coefficients);
        SpectralField { grid: self.grid, coefficients }
    }

    pub fn inverse(&mut self, spectrum: &SpectralField) -> Result<Field> {
        assert_eq!(spectrum.grid, self.grid, "spectrum grid does not match workspace");
        let asymmetry = spectrum.hermitian_defect();
        if asymmetry > HERMITIAN_TOLERANCE {
            return Err(Error::HermitianSymmetry { asymmetry });
        }
        let mut buffer = spectrum.coefficients.clone();
        let mut values = vec![0.0; self.grid.total_points()];
        self.inverse_into(&mut buffer, &mut values);
        Ok(Field { grid: self.grid, values })
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// Forward transform with `coefficient(0) = mean`.
pub fn forward_transform(f: &Field) -> SpectralField {
    SpectralWorkspace::new(f.grid).forward(f)
}

/// Inverse transform; fails if the coefficients are not Hermitian to
/// [`HERMITIAN_TOLERANCE`].
pub fn inverse_transform(spectrum: &SpectralField) -> Result<Field> {
    SpectralWorkspace::new(spectrum.grid).inverse(spectrum)
}
