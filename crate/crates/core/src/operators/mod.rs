//! Nonlocal operators on the torus: the Riesz potential `g∗f`, its gradient,
//! and the fractional Laplacian `(-Δ)^{α/2}` in spectral and lattice-sum form.

mod lattice;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;
use crate::torus::{Field, SpectralWorkspace, TorusGrid};

pub use lattice::{
    compute_cdalpha, frac_laplacian_latticesum, whole_space_cdalpha, LatticeOperator, DEFAULT_IMAGE_RADIUS,
};

/// Which mobility multiplies the nonlocal velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Mobility `μ^{-m}`: transport is suppressed where the density is large.
    Clogged,
    /// Mobility `μ^{m}` with `m ∈ (0, 1)`.
    FastDiffusion,
}

impl Regime {
    /// `-1` for clogged, `+1` for fast diffusion: the sign in front of `m`
    /// in the mobility exponent.
    pub fn mobility_sign(self) -> f64 {
        match self {
            Regime::Clogged => -1.0,
            Regime::FastDiffusion => 1.0,
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Clogged => "clogged",
            Regime::FastDiffusion => "fast-diffusion",
        })
    }
}

/// Model parameters with their derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub d: usize,
    pub s: f64,
    pub m: f64,
    pub regime: Regime,
    pub epsilon: f64,
    /// `s - d + 2`, the order of the diffusive part.
    pub alpha: f64,
    /// Riesz potential constant `c_{d,s}`.
    pub cds: f64,
    /// Calibrated kernel constant of `(-Δ)^{α/2}`.
    pub cdalpha: f64,
}

impl ModelParams {
    /// Validates `(d-2)_+ < s < d`, the regime's range of `m`, and `ε ≥ 0`,
    /// then computes the constants.
    pub fn new(d: usize, s: f64, m: f64, regime: Regime, epsilon: f64) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::validation("dimension", format!("d must be 1 or 2, got {d}")));
        }
        let lower = (d as f64 - 2.0).max(0.0);
        if !(s.is_finite() && s > lower && s < d as f64) {
            return Err(Error::validation("s", format!("need (d-2)_+ < s < d, i.e. {lower} < s < {d}, got s = {s}")));
        }
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::validation("m", format!("need m > 0, got {m}")));
        }
        if regime == Regime::FastDiffusion && m >= 1.0 {
            return Err(Error::validation("m", format!("fast diffusion needs m in (0, 1), got {m}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::validation("epsilon", format!("need epsilon >= 0, got {epsilon}")));
        }
        let alpha = s - d as f64 + 2.0;
        Ok(ModelParams {
            d,
            s,
            m,
            regime,
            epsilon,
            alpha,
            cds: compute_cds(d, s)?,
            cdalpha: compute_cdalpha(d, alpha)?,
        })
    }

    /// Same model with a different viscosity.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::validation("epsilon", format!("need epsilon >= 0, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Exponent `±m` of the mobility.
    pub fn mobility_exponent(&self) -> f64 {
        self.regime.mobility_sign() * self.m
    }
}

/// Riesz potential constant `c_{d,s}`, defined for `0 <= s < d`.
pub fn compute_cds(d: usize, s: f64) -> Result<f64> {
    let df = d as f64;
    if d == 0 || !(s.is_finite() && (0.0..df).contains(&s)) {
        return Err(Error::validation("s", format!("c_(d,s) needs 0 <= s < d, got d = {d}, s = {s}")));
    }
    if s == 0.0 {
        return Ok(gamma(0.5 * df) * (4.0 * PI).powf(0.5 * df) / 2.0);
    }
    Ok(4f64.powf(0.5 * (df - s)) * gamma(0.5 * (df - s)) * PI.powf(0.5 * df) / gamma(0.5 * s))
}

/// A velocity field, one array of samples per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> Field {
        Field::from_vec_unchecked(self.grid, self.components[axis].clone())
    }
}

/// Fourier multipliers of every linear operator the solver needs, tabulated
/// once per grid and model.
#[derive(Debug, Clone)]
pub struct Multipliers {
    grid: TorusGrid,
    /// `|2πk|^α`, zero at `k = 0`.
    pub fractional: Vec<f64>,
    /// `ĝ(k) = c_{d,s} |2πk|^{s-d}`, zero at `k = 0`.
    pub potential: Vec<f64>,
    /// Real factor `2πk_j ĝ(k)` of `∂_j g∗`, zero on the Nyquist plane of axis `j`.
    pub velocity: Vec<Vec<f64>>,
    /// Real factor `2πk_j` of `∂_j`, zero on the Nyquist plane of axis `j`.
    pub derivative: Vec<Vec<f64>>,
    /// `|2πk|^2`.
    pub laplacian: Vec<f64>,
    /// 1 where the 2/3 rule keeps a mode, 0 where it removes it.
    pub dealias: Vec<f64>,
}

impl Multipliers {
    pub fn new(grid: TorusGrid, params: &ModelParams) -> Self {
        Self::with_orders(grid, params.alpha, params.s, params.cds)
    }

    fn with_orders(grid: TorusGrid, alpha: f64, s: f64, cds: f64) -> Self {
        let d = grid.dimension();
        let freq = grid.frequency_magnitudes();
        let power = |p: f64| -> Vec<f64> { freq.iter().map(|&w| if w == 0.0 { 0.0 } else { w.powf(p) }).collect() };
        let fractional = power(alpha);
        let potential: Vec<f64> = power(s - d as f64).into_iter().map(|v| cds * v).collect();
        let derivative: Vec<Vec<f64>> =
            (0..d)
                .map(|axis| {
                    (0..grid.total_points())
                        .map(|i| {
                            if grid.is_nyquist_mode(i, axis) {
                                0.0
                            } else {
                                2.0 * PI * grid.wavevector(i)[axis] as f64
                            }
                        })
                        .collect()
                })
                .collect();
        let velocity = derivative.iter().map(|dk| dk.iter().zip(&potential).map(|(a, b)| a * b).collect()).collect();
        let laplacian = freq.iter().map(|w| w * w).collect();
        let dealias = (0..grid.total_points()).map(|i| if grid.is_dealiased_mode(i) { 0.0 } else { 1.0 }).collect();
        Multipliers { grid, fractional, potential, velocity, derivative, laplacian, dealias }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }
}

fn apply_real_multiplier(f: &Field, multiplier: impl Fn(usize) -> f64) -> Field {
    let grid = f.grid();
    let mut ws = SpectralWorkspace::new(grid);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    ws.forward_into(f.values(), &mut coeffs);
    for (i, c) in coeffs.iter_mut().enumerate() {
        *c *= multiplier(i);
    }
    let mut out = vec![0.0; grid.total_points()];
    ws.inverse_into(&mut coeffs, &mut out);
    Field::from_vec_unchecked(grid, out)
}

/// `(-Δ)^{α/2} f` through the multiplier `|2πk|^α`; the mean mode is set to zero.
pub fn frac_laplacian_spectral(f: &Field, alpha: f64) -> Result<Field> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::validation("alpha", format!("need 0 < alpha <= 2, got {alpha}")));
    }
    let freq = f.grid().frequency_magnitudes();
    Ok(apply_real_multiplier(f, |i| if freq[i] == 0.0 { 0.0 } else { freq[i].powf(alpha) }))
}

/// `g∗f` with `ĝ(k) = c_{d,s}|2πk|^{s-d}` and `ĝ(0) = 0`.
pub fn riesz_potential(f: &Field, params: &ModelParams) -> Field {
    check_dimension(f.grid(), params);
    let mult = Multipliers::new(f.grid(), params);
    apply_real_multiplier(f, |i| mult.potential[i])
}

/// `∇g∗f`, one component per axis.
pub fn riesz_velocity(f: &Field, params: &ModelParams) -> VectorField {
    let grid = f.grid();
    check_dimension(grid, params);
    let mult = Multipliers::new(grid, params);
    let mut ws = SpectralWorkspace::new(grid);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    ws.forward_into(f.values(), &mut spectrum);
    let components = mult
        .velocity
        .iter()
        .map(|factor| {
            let mut buf: Vec<Complex64> =
                spectrum.iter().zip(factor).map(|(c, v)| Complex64::new(0.0, *v) * c).collect();
            let mut out = vec![0.0; grid.total_points()];
            ws.inverse_into(&mut buf, &mut out);
            out
        })
        .collect();
    VectorField { grid, components }
}

/// Spectral divergence of a vector field.
pub fn divergence(v: &VectorField) -> Field {
    let grid = v.grid;
    let mut ws = SpectralWorkspace::new(grid);
    let derivative = Multipliers::with_orders(grid, 1.0, 0.5, 1.0).derivative;
    let mut total = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    for (component, factor) in v.components.iter().zip(&derivative) {
        ws.forward_into(component, &mut buf);
        for ((t, c), k) in total.iter_mut().zip(&buf).zip(factor) {
            *t += Complex64::new(0.0, *k) * c;
        }
    }
    let mut out = vec![0.0; grid.total_points()];
    ws.inverse_into(&mut total, &mut out);
    Field::from_vec_unchecked(grid, out)
}

fn check_dimension(grid: TorusGrid, params: &ModelParams) {
    assert_eq!(grid.dimension(), params.d, "grid dimension does not match the model");
}
