//! Space-independent lower barriers and the smoothing exponents.
//!
//! The barrier solves `Φ' = C (μ̄ - Φ) Φ^{-m}` (clogged) or
//! `Φ' = C Φ^m (μ̄ - Φ)` (fast diffusion) from `Φ(0) = φ_0 ≥ 0`. Both are
//! integrated in the variable `ψ = Φ^{1±m}/(1±m)`, for which
//! `ψ' = C (μ̄ - Φ(ψ))` is finite at the origin and the fast-diffusion
//! solution leaving zero is the positive one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{ModelParams, Regime};

/// Inputs of the barrier ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub m: f64,
    /// Mean density `μ̄` the barrier relaxes to.
    pub mass: f64,
    /// Rate constant `C`.
    pub c: f64,
    pub phi0: f64,
    pub regime: Regime,
}

impl BarrierParams {
    pub fn new(m: f64, mass: f64, c: f64, phi0: f64, regime: Regime) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) || (regime == Regime::FastDiffusion && m >= 1.0) {
            return Err(Error::validation("m", format!("m = {m} is outside the range of {regime}")));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::validation("mass", format!("need mass > 0, got {mass}")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::validation("barrier constant", format!("need C > 0, got {c}")));
        }
        if !(phi0.is_finite() && phi0 >= 0.0 && phi0 <= mass) {
            return Err(Error::validation("phi0", format!("need 0 <= phi0 <= mass, got {phi0}")));
        }
        Ok(BarrierParams { m, mass, c, phi0, regime })
    }

    /// `1 + m` (clogged) or `1 - m` (fast diffusion).
    fn power(&self) -> f64 {
        1.0 - self.regime.mobility_sign() * self.m
    }

    /// Time over which the barrier reaches a fixed fraction of the mass:
    /// `μ̄^m / C` (clogged) or `μ̄^{-m} / C` (fast diffusion).
    pub fn time_scale(&self) -> f64 {
        self.mass.powf(-self.regime.mobility_sign() * self.m) / self.c
    }

    fn phi_of_psi(&self, psi: f64) -> f64 {
        let k = self.power();
        (k * psi.max(0.0)).powf(1.0 / k).min(self.mass)
    }

    fn psi_of_phi(&self, phi: f64) -> f64 {
        let k = self.power();
        phi.powf(k) / k
    }

    fn rate(&self, psi: f64) -> f64 {
        self.c * (self.mass - self.phi_of_psi(psi))
    }

    /// Leading small-time behaviour `((1±m) C μ̄ t)^{1/(1±m)}` from `Φ(0) = 0`.
    pub fn small_time_asymptote(&self, t: f64) -> f64 {
        let k = self.power();
        (k * self.c * self.mass * t).powf(1.0 / k)
    }
}

/// Sampled barrier `Φ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Mesh grading: steps are at most this fraction of the current time.
const GRADING: f64 = 0.004;

/// Integrates the barrier on a geometrically graded RK4 mesh and returns
/// `Φ` at every requested time (which must be sorted and nonnegative).
pub fn barrier_at(bp: &BarrierParams, times: &[f64]) -> Vec<f64> {
    barrier_at_refined(bp, times, 1)
}

fn barrier_at_refined(bp: &BarrierParams, times: &[f64], refine: u32) -> Vec<f64> {
    debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    let scale = bp.time_scale();
    let refine = f64::from(refine);
    let h_max = scale / 400.0 / refine;
    let grading = GRADING / refine;
    let h_start = scale * 1e-14;
    let mut t = 0.0;
    let mut psi = bp.psi_of_phi(bp.phi0);
    let mut out = Vec::with_capacity(times.len());
    let mut settled = bp.phi0 >= bp.mass;
    for &target in times {
        while !settled && t < target {
            let h = (grading * t).max(h_start).min(h_max).min(target - t);
            let next = rk4(bp, psi, h);
            if next == psi && h == h_max {
                // Numerically at the fixed point; later steps cannot move it.
                settled = true;
            }
            psi = next;
            t += h;
        }
        out.push(bp.phi_of_psi(psi).max(bp.phi0));
    }
    out
}

fn rk4(bp: &BarrierParams, psi: f64, h: f64) -> f64 {
    let k1 = bp.rate(psi);
    let k2 = bp.rate(psi + 0.5 * h * k1);
    let k3 = bp.rate(psi + 0.5 * h * k2);
    let k4 = bp.rate(psi + h * k3);
    psi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// `Φ` on `n_points` equispaced times in `[0, t_end]`.
pub fn solve_barrier(bp: &BarrierParams, t_end: f64, n_points: usize) -> Result<BarrierCurve> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::validation("t_end", format!("need t_end > 0, got {t_end}")));
    }
    if n_points < 2 {
        return Err(Error::validation("n_points", format!("need at least 2, got {n_points}")));
    }
    let times: Vec<f64> = (0..n_points).map(|i| t_end * i as f64 / (n_points - 1) as f64).collect();
    let values = barrier_at(bp, &times);
    Ok(BarrierCurve { times, values })
}

/// Largest relative change of the barrier at `times` when every internal
/// step is halved.
pub fn step_halving_change(bp: &BarrierParams, times: &[f64]) -> f64 {
    let coarse = barrier_at_refined(bp, times, 1);
    let fine = barrier_at_refined(bp, times, 2);
    coarse.iter().zip(&fine).filter(|(_, f)| **f > 0.0).map(|(c, f)| ((c - f) / f).abs()).fold(0.0, f64::max)
}

/// Explicit lower envelope `K · min((μ̄t)^{1/(1±m)}, μ̄(1 - e^{-Ct}))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierEnvelope {
    pub params: BarrierParams,
    /// The prefactor `K`, the largest value keeping the envelope below the barrier
    /// on the sampling grid it was derived on.
    pub prefactor: f64,
}

impl BarrierEnvelope {
    /// Derives `K` as the minimum of `Φ(t) / shape(t)` over 400 log-spaced
    /// times spanning `[10^{-6}, 10^{3}]` barrier time scales plus the
    /// crossover time, refined by golden-section search around the smallest
    /// sample, less a relative `1e-9` for the quadrature of `Φ`.
    pub fn derive(bp: &BarrierParams) -> Self {
        let scale = bp.time_scale();
        let mut times: Vec<f64> = (0..400).map(|i| scale * 10f64.powf(-6.0 + 9.0 * i as f64 / 399.0)).collect();
        if let Some(tc) = crossover_time(bp) {
            times.push(tc);
            times.sort_by(f64::total_cmp);
        }
        let ratio_at = |ts: &[f64]| -> Vec<f64> {
            let phi = barrier_at(bp, ts);
            ts.iter().zip(&phi).map(|(&t, &p)| p / envelope_shape(bp, t)).collect()
        };
        let ratios = ratio_at(&times);
        let (i, mut best) =
            ratios.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty sample");
        // Golden-section search in log t on the bracket around the sample.
        let (mut lo, mut hi) = (times[i.saturating_sub(1)].ln(), times[(i + 1).min(times.len() - 1)].ln());
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let eval = |x: f64| ratio_at(&[x.exp()])[0];
        for _ in 0..60 {
            let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
            let (fa, fb) = (eval(a), eval(b));
            best = best.min(fa).min(fb);
            if fa < fb {
                hi = b;
            } else {
                lo = a;
            }
        }
        BarrierEnvelope { params: *bp, prefactor: best * (1.0 - 1e-9) }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.prefactor * envelope_shape(&self.params, t)
    }

    /// Time at which the two branches of the minimum are equal, if they cross.
    pub fn crossover_time(&self) -> Option<f64> {
        crossover_time(&self.params)
    }
}

/// `min((μ̄t)^{1/(1±m)}, μ̄(1 - e^{-Ct}))`.
pub fn envelope_shape(bp: &BarrierParams, t: f64) -> f64 {
    let (power, saturating) = branches(bp, t);
    power.min(saturating)
}

fn branches(bp: &BarrierParams, t: f64) -> (f64, f64) {
    let power = (bp.mass * t).powf(1.0 / bp.power());
    let saturating = bp.mass * -(-bp.c * t).exp_m1();
    (power, saturating)
}

/// Envelope with the derived prefactor, evaluated at `t`.
pub fn barrier_envelope(bp: &BarrierParams, t: f64) -> f64 {
    BarrierEnvelope::derive(bp).value(t)
}

/// First time where the power branch overtakes the saturating branch, or
/// the reverse; `None` when one branch is below the other throughout.
pub fn crossover_time(bp: &BarrierParams) -> Option<f64> {
    let scale = bp.time_scale();
    let sign = |t: f64| {
        let (a, b) = branches(bp, t);
        a < b
    };
    let grid: Vec<f64> = (0..=600).map(|i| scale * 10f64.powf(-8.0 + 12.0 * i as f64 / 600.0)).collect();
    let first = sign(grid[0]);
    let idx = grid.iter().position(|&t| sign(t) != first)?;
    let (mut lo, mut hi) = (grid[idx - 1], grid[idx]);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if sign(mid) == first {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo * hi).sqrt())
}

/// Which sign of `md` enters the fast-diffusion smoothing exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaVariant {
    /// `δ = d / (s - d + 2 + md)`, the default.
    #[default]
    PlusMd,
    /// `δ = d / (s - d + 2 - md)`, kept for comparison runs.
    MinusMd,
}

impl std::str::FromStr for FormulaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus-md" => Ok(FormulaVariant::PlusMd),
            "minus-md" => Ok(FormulaVariant::MinusMd),
            other => Err(Error::validation("formula variant", format!("expected plus-md or minus-md, got {other}"))),
        }
    }
}

/// Exponents of the smoothing estimates for one `(d, s, m, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    pub p: f64,
    /// `γ = md / (s - d + 2)`.
    pub gamma: f64,
    /// `δ_p = d / (p(s - d + 2) - md)`.
    pub delta_p: f64,
    /// `ζ_p = (|p-m|+m)(s-d+2) / ((|p-m|+m)(s-d+2) - md)`.
    pub zeta_p: f64,
    /// Fast-diffusion smoothing exponent, sign per [`FormulaVariant`].
    pub delta_fd: f64,
}

impl ExponentSet {
    /// Evaluates the formulas without checking the model's parameter ranges,
    /// so formal values such as `m = 1` can be inspected.
    pub fn formal(d: usize, s: f64, m: f64, p: f64, variant: FormulaVariant) -> Self {
        let df = d as f64;
        let alpha = s - df + 2.0;
        let md = m * df;
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
        let a = ((p - m).abs() + m) * alpha;
        let fd_den = match variant {
            FormulaVariant::PlusMd => alpha + md,
            FormulaVariant::MinusMd => alpha - md,
        };
        ExponentSet {
            p,
            gamma: md / alpha,
            delta_p: ratio(df, p * alpha - md),
            zeta_p: ratio(a, a - md),
            delta_fd: ratio(df, fd_den),
        }
    }
}

/// Exponents for `params` at `p ≥ 1` with the default `+md` variant.
pub fn compute_exponents(params: &ModelParams, p: f64) -> Result<ExponentSet> {
    compute_exponents_with(params, p, FormulaVariant::PlusMd)
}

/// Exponents for `params` at `p ≥ 1`. In the clogged regime with `γ ≥ 1`
/// the smoothing estimate needs `p > γ`.
pub fn compute_exponents_with(params: &ModelParams, p: f64, variant: FormulaVariant) -> Result<ExponentSet> {
    if !(p >= 1.0) {
        return Err(Error::validation("p", format!("need p >= 1, got {p}")));
    }
    let set = ExponentSet::formal(params.d, params.s, params.m, p, variant);
    if params.regime == Regime::Clogged && set.gamma >= 1.0 && p <= set.gamma {
        return Err(Error::validation(
            "p",
            format!(
                "clogged smoothing with gamma = {:.4} >= 1 needs initial data in L^p for some p > gamma, got p = {p}",
                set.gamma
            ),
        ));
    }
    Ok(set)
}

/// Rate constant of the barrier: `c_{d,s} · c_{d,α}`.
pub fn barrier_constant(params: &ModelParams) -> f64 {
    params.cds * params.cdalpha
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(regime: Regime, phi0: f64) -> BarrierParams {
        BarrierParams::new(0.5, 1.0, 0.75, phi0, regime).unwrap()
    }

    #[test]
    fn equilibrium_start_is_constant() {
        let curve = solve_barrier(&bp(Regime::Clogged, 1.0), 10.0, 11).unwrap();
        assert!(curve.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn curves_increase_to_the_mass() {
        for regime in [Regime::Clogged, Regime::FastDiffusion] {
            let curve = solve_barrier(&bp(regime, 0.0), 60.0, 200).unwrap();
            assert_eq!(curve.values[0], 0.0);
            for w in curve.values.windows(2) {
                assert!(w[1] > w[0] || w[1] > 1.0 - 1e-12);
            }
            assert!((curve.values.last().unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exponent_examples() {
        let params = ModelParams::new(1, 0.5, 0.5, Regime::Clogged, 1e-3).unwrap();
        let e = compute_exponents(&params, 1.0).unwrap();
        assert!((e.gamma - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.delta_p - 1.0).abs() < 1e-15);
        assert!((e.zeta_p - 1.5).abs() < 1e-15);
        let formal = ExponentSet::formal(2, 1.0, 1.0, 1.0, FormulaVariant::PlusMd);
        assert!((formal.delta_fd - 2.0 / 3.0).abs() < 1e-15);
        let limit = ExponentSet::formal(2, 1.0, 1e-12, 1.0, FormulaVariant::PlusMd);
        assert!((limit.delta_fd - 2.0).abs() < 1e-10);
    }

    #[test]
    fn clogged_hypothesis_enforced() {
        // d = 1, s = 1/2, m = 2: γ = 4/3.
        let params = ModelParams::new(1, 0.5, 2.0, Regime::Clogged, 1e-3).unwrap();
        let err = compute_exponents(&params, 1.0).unwrap_err();
        assert!(err.to_string().contains("p > gamma"));
        assert!(compute_exponents(&params, 1.5).is_ok());
    }
}
