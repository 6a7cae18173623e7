//! Scalar functionals of a density: mass, `L^p` norms, interaction energy,
//! extrema, spectral resolution, time-integrated dissipation, and power-law
//! fits of time series.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{ModelParams, Multipliers};
use crate::torus::{Field, SpectralWorkspace, TorusGrid};

/// Functionals of one time slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    /// `(p, ‖μ‖_p)` pairs; `p = ∞` is the grid maximum of `|μ|`.
    pub lp_norms: Vec<(f64, f64)>,
    /// `∫ g∗μ μ dx`.
    pub energy: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub argmin: usize,
    pub argmax: usize,
    /// Largest coefficient modulus with `|k|_∞ > N/4`.
    pub spectral_tail: f64,
    /// Step that produced this slice, zero for the initial one.
    pub dt: f64,
    /// Accumulated dissipation up to this time, when recorded along a run.
    pub ledger: LedgerTotals,
}

impl DiagnosticsRecord {
    /// `‖μ‖_p` for a recorded `p`.
    pub fn lp(&self, p: f64) -> Option<f64> {
        self.lp_norms.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }

    pub fn linf(&self) -> f64 {
        self.lp(f64::INFINITY).unwrap_or(self.max_value.abs().max(self.min_value.abs()))
    }

    /// Spectral-tail gate for trusting grid extrema.
    pub fn is_resolved(&self) -> bool {
        self.spectral_tail < RESOLUTION_GATE * self.linf()
    }
}

/// Extrema-based checks are trusted only when the spectral tail is below
/// this fraction of `‖μ‖_∞`.
pub const RESOLUTION_GATE: f64 = 1e-8;

/// The `p` values recorded by default: `1`, `2`, the logarithmic exponent
/// `1 ± m` of the regime, and `∞`.
pub fn default_p_list(params: &ModelParams) -> Vec<f64> {
    vec![1.0, 2.0, 1.0 - params.mobility_exponent(), f64::INFINITY]
}

/// Computes every functional of `f` at time `t`.
pub fn record(f: &Field, params: &ModelParams, t: f64, p_list: &[f64]) -> DiagnosticsRecord {
    let grid = f.grid();
    let mut ws = SpectralWorkspace::new(grid);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    ws.forward_into(f.values(), &mut coeffs);
    let mult = Multipliers::new(grid, params);
    record_with_spectrum(f, &coeffs, &mult, t, p_list)
}

pub(crate) fn record_with_spectrum(
    f: &Field,
    coeffs: &[Complex64],
    mult: &Multipliers,
    t: f64,
    p_list: &[f64],
) -> DiagnosticsRecord {
    let grid = f.grid();
    let (argmin, min_value) = f.min();
    let (argmax, max_value) = f.max();
    let lp_norms = p_list.iter().map(|&p| (p, lp_norm(f, p))).collect();
    let energy = coeffs.iter().zip(&mult.potential).map(|(c, g)| g * c.norm_sqr()).sum();
    DiagnosticsRecord {
        time: t,
        mass: f.mean(),
        lp_norms,
        energy,
        min_value,
        max_value,
        argmin,
        argmax,
        spectral_tail: spectral_tail(grid, coeffs),
        dt: 0.0,
        ledger: LedgerTotals::default(),
    }
}

/// `(∫|f|^p)^{1/p}` on the unit torus; `p = ∞` gives the grid maximum.
pub fn lp_norm(f: &Field, p: f64) -> f64 {
    if p.is_infinite() {
        return f.sup_norm();
    }
    let n = f.values().len() as f64;
    if p == 1.0 {
        return f.values().iter().map(|v| v.abs()).sum::<f64>() / n;
    }
    if p == 2.0 {
        return (f.values().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    }
    (f.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() / n).powf(1.0 / p)
}

fn spectral_tail(grid: TorusGrid, coeffs: &[Complex64]) -> f64 {
    let band = grid.points_per_axis() as i64 / 4;
    coeffs.iter().enumerate().filter(|(i, _)| grid.max_wavenumber(*i) > band).fold(0.0, |a, (_, c)| a.max(c.norm()))
}

/// `(Σ_{k≠0} |2πk|^{2·order} |f̂(k)|^2)^{1/2}` for `order ∈ (-d/2, 1]`.
pub fn gagliardo_seminorm(f: &Field, order: f64) -> Result<f64> {
    let grid = f.grid();
    let d = grid.dimension() as f64;
    if !(order > -0.5 * d && order <= 1.0) {
        return Err(Error::validation("order", format!("need -d/2 < order <= 1, got {order}")));
    }
    let mut ws = SpectralWorkspace::new(grid);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    ws.forward_into(f.values(), &mut coeffs);
    let freq = grid.frequency_magnitudes();
    let sum: f64 =
        coeffs.iter().zip(&freq).filter(|(_, w)| **w > 0.0).map(|(c, w)| w.powf(2.0 * order) * c.norm_sqr()).sum();
    Ok(sum.sqrt())
}

/// Left-endpoint time integral of a rate, with the bound `Σ |ΔI| dt` on
/// its quadrature error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub total: f64,
    pub slack: f64,
}

impl Accumulator {
    /// Adds one step with integrand `left` at its start and `right` at its end.
    pub fn add_step(&mut self, left: f64, right: f64, dt: f64) {
        self.total += left * dt;
        self.slack += (right - left).abs() * dt;
    }
}

/// Per-`p` totals of the `L^p` dissipation ledger.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PTotals {
    pub p: f64,
    /// `∫ p(p-1) c_{d,s} ∫ ψ_q(μ) |∇|^α μ`, with `ψ_q(u) = u^q/q` (or `log u`
    /// when `q = 0`) and `q = p - 1 ∓ m`.
    pub dp: f64,
    pub dp_slack: f64,
    /// `∫ ‖|∇|^{α/2} μ^{(p∓m)/2}‖_2^2`.
    pub sv: f64,
    pub sv_slack: f64,
}

/// Totals of a [`DissipationLedger`] at one time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub per_p: Vec<PTotals>,
    /// `∫ ∫ |∇g∗μ|^2 μ^{∓m}`.
    pub energy: f64,
    pub energy_slack: f64,
}

/// Running time integrals of the dissipation functionals along a trajectory.
#[derive(Debug, Clone)]
pub struct DissipationLedger {
    p_list: Vec<f64>,
    dp: Vec<Accumulator>,
    sv: Vec<Accumulator>,
    energy: Accumulator,
    pending: Option<(DissipationRates, f64)>,
    scratch: Option<LedgerScratch>,
}

#[derive(Debug, Clone)]
struct LedgerScratch {
    grid: TorusGrid,
    ws: SpectralWorkspace,
    mult: Multipliers,
    coeffs: Vec<Complex64>,
    buf: Vec<Complex64>,
    phys: Vec<f64>,
}

/// Integrands of the ledger at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationRates {
    pub dp: Vec<f64>,
    pub sv: Vec<f64>,
    pub energy: f64,
}

impl DissipationLedger {
    pub fn new(p_list: &[f64]) -> Self {
        DissipationLedger {
            p_list: p_list.to_vec(),
            dp: vec![Accumulator::default(); p_list.len()],
            sv: vec![Accumulator::default(); p_list.len()],
            energy: Accumulator::default(),
            pending: None,
            scratch: None,
        }
    }

    pub fn p_list(&self) -> &[f64] {
        &self.p_list
    }

    /// Evaluates the integrands at `f`.
    pub fn rates(&mut self, f: &Field, params: &ModelParams) -> DissipationRates {
        let grid = f.grid();
        if self.scratch.as_ref().map(|s| s.grid) != Some(grid) {
            self.scratch = Some(LedgerScratch {
                grid,
                ws: SpectralWorkspace::new(grid),
                mult: Multipliers::new(grid, params),
                coeffs: vec![Complex64::new(0.0, 0.0); grid.total_points()],
                buf: vec![Complex64::new(0.0, 0.0); grid.total_points()],
                phys: vec![0.0; grid.total_points()],
            });
        }
        let sc = self.scratch.as_mut().expect("scratch initialised above");
        let e = params.mobility_exponent();
        let n = grid.total_points() as f64;
        let values = f.values();
        let positive = |v: f64| v.max(f64::MIN_POSITIVE);
        sc.ws.forward_into(values, &mut sc.coeffs);

        // |∇|^α μ in physical space.
        for ((b, c), w) in sc.buf.iter_mut().zip(&sc.coeffs).zip(&sc.mult.fractional) {
            *b = c * w;
        }
        sc.ws.inverse_into(&mut sc.buf, &mut sc.phys);
        let frac = sc.phys.clone();

        let mut dp = Vec::with_capacity(self.p_list.len());
        let mut sv = Vec::with_capacity(self.p_list.len());
        for &p in &self.p_list {
            let q = p - 1.0 + e;
            let psi = |u: f64| if q == 0.0 { positive(u).ln() } else { positive(u).powf(q) / q };
            let integral: f64 = values.iter().zip(&frac).map(|(&u, l)| psi(u) * l).sum::<f64>() / n;
            dp.push(p * (p - 1.0) * params.cds * integral);

            let r = 0.5 * (p + e);
            let powered: Vec<f64> = values.iter().map(|&u| positive(u).powf(r)).collect();
            sc.ws.forward_into(&powered, &mut sc.buf);
            sv.push(sc.buf.iter().zip(&sc.mult.fractional).map(|(c, w)| w * c.norm_sqr()).sum());
        }

        let mut energy_rate = 0.0;
        for factor in &sc.mult.velocity {
            for ((b, c), v) in sc.buf.iter_mut().zip(&sc.coeffs).zip(factor) {
                *b = Complex64::new(0.0, *v) * c;
            }
            sc.ws.inverse_into(&mut sc.buf, &mut sc.phys);
            energy_rate += values.iter().zip(&sc.phys).map(|(&u, v)| v * v * positive(u).powf(e)).sum::<f64>() / n;
        }
        DissipationRates { dp, sv, energy: energy_rate }
    }

    /// Adds one step of length `dt` from a state with integrands `left` to
    /// one with integrands `right`.
    pub fn advance(&mut self, left: &DissipationRates, right: &DissipationRates, dt: f64) {
        for (i, acc) in self.dp.iter_mut().enumerate() {
            acc.add_step(left.dp[i], right.dp[i], dt);
        }
        for (i, acc) in self.sv.iter_mut().enumerate() {
            acc.add_step(left.sv[i], right.sv[i], dt);
        }
        self.energy.add_step(left.energy, right.energy, dt);
    }

    /// Adds `dt` times the integrands at `f`, closing the previous call's
    /// step with `f` as its right endpoint.
    pub fn accumulate(&mut self, f: &Field, params: &ModelParams, dt: f64) -> DissipationRates {
        let rates = self.rates(f, params);
        if let Some((prev, prev_dt)) = self.pending.take() {
            self.advance(&prev, &rates, prev_dt);
        }
        self.pending = Some((rates.clone(), dt));
        rates
    }

    /// Totals including the open step of [`accumulate`](Self::accumulate),
    /// whose slack is not known yet.
    pub fn totals(&self) -> LedgerTotals {
        if self.pending.is_none() {
            return self.closed_totals();
        }
        let mut closed = self.clone();
        if let Some((prev, dt)) = closed.pending.take() {
            closed.advance(&prev, &prev, dt);
        }
        closed.closed_totals()
    }

    fn closed_totals(&self) -> LedgerTotals {
        LedgerTotals {
            per_p: self
                .p_list
                .iter()
                .zip(self.dp.iter().zip(&self.sv))
                .map(|(&p, (d, s))| PTotals { p, dp: d.total, dp_slack: d.slack, sv: s.total, sv_slack: s.slack })
                .collect(),
            energy: self.energy.total,
            energy_slack: self.energy.slack,
        }
    }
}

/// Functional form of [`DissipationLedger::accumulate`].
pub fn accumulate_dissipation(
    mut ledger: DissipationLedger,
    f: &Field,
    params: &ModelParams,
    dt: f64,
) -> DissipationLedger {
    ledger.accumulate(f, params, dt);
    ledger
}

/// Least-squares line through `(log t, log v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Fits `v ≈ A t^b` over samples with `t_lo < t < t_hi`.
pub fn fit_powerlaw(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<PowerLawFit> {
    const NEEDED: usize = 5;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t > window.0 && **t < window.1)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < NEEDED {
        return Err(Error::InsufficientSamples { needed: NEEDED, found: pts.len() });
    }
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::validation("power-law fit", "times and values must be positive"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("power-law fit", "window holds a single time"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerLawFit { exponent: slope, prefactor: intercept.exp(), r_squared, samples: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Regime;
    use crate::torus::make_grid;
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams::new(1, 0.5, 0.5, Regime::FastDiffusion, 1e-3).unwrap()
    }

    #[test]
    fn constant_record() {
        let g = make_grid(1, 32).unwrap();
        let r = record(&Field::constant(g, 2.0), &params(), 0.0, &[1.0, 2.0, 3.5, f64::INFINITY]);
        assert!((r.mass - 2.0).abs() < 1e-15);
        for (_, v) in &r.lp_norms {
            assert!((v - 2.0).abs() < 1e-14);
        }
        assert_eq!(r.energy, 0.0);
        assert_eq!((r.min_value, r.max_value), (2.0, 2.0));
    }

    #[test]
    fn cosine_record() {
        let p = params();
        let g = make_grid(1, 64).unwrap();
        let a = 0.4;
        let f = Field::from_fn(g, |x| 1.0 + a * (2.0 * PI * x[0]).cos());
        let r = record(&f, &p, 0.0, &[2.0]);
        let energy = p.cds * (2.0 * PI).powf(p.s - 1.0) * a * a / 2.0;
        assert!((r.energy - energy).abs() < 1e-10);
        assert!((r.lp(2.0).unwrap() - (1.0 + a * a / 2.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn seminorm_of_cosine() {
        let g = make_grid(1, 32).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        let s = gagliardo_seminorm(&f, 0.5).unwrap();
        assert!((s - (PI).sqrt()).abs() < 1e-13);
        assert_eq!(gagliardo_seminorm(&Field::constant(g, 1.0), 0.5).unwrap(), 0.0);
        assert!(gagliardo_seminorm(&f, 1.5).is_err());
    }

    #[test]
    fn exact_power_law() {
        let t: Vec<f64> = (1..=20).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|x| x * x).collect();
        let fit = fit_powerlaw(&t, &v, (0.0, 10.0)).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(fit_powerlaw(&t, &v, (0.05, 0.35)), Err(Error::InsufficientSamples { needed: 5, found: 3 })));
    }
}
