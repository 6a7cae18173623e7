//! Verification harness: pointwise and integral inequalities for the
//! fractional Laplacian on single fields, randomized suites over them, and
//! end-to-end checks of the solution properties along a simulated run.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barriers::{self, BarrierParams, FormulaVariant};
use crate::diagnostics::{fit_powerlaw, DiagnosticsRecord, PowerLawFit};
use crate::dynamics::RunResult;
use crate::error::{Error, Result};
use crate::operators::{LatticeOperator, ModelParams, Regime, DEFAULT_IMAGE_RADIUS};
use crate::special::unit_sphere_measure;
use crate::torus::{make_grid, Field, SpectralWorkspace, TorusGrid};

/// Convex test function `h(u) = u^q` with `q ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexProbe {
    pub exponent: f64,
}

impl ConvexProbe {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent >= 1.0) {
            return Err(Error::validation("probe exponent", format!("need q >= 1, got {exponent}")));
        }
        Ok(ConvexProbe { exponent })
    }

    pub fn eval(&self, u: f64) -> f64 {
        u.max(0.0).powf(self.exponent)
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
    /// Not evaluated because the run cannot be trusted for it, for example
    /// because it is under-resolved.
    Skipped,
    /// The run has no regime in which the item says anything, for example no
    /// decay window for a smooth initial datum.
    NotApplicable,
}

/// Result of one check, with the quantities it compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub name: String,
    pub status: Status,
    pub passed: bool,
    /// Signed, normalized distance to the boundary of the inequality
    /// (slack included); nonnegative exactly when the check passes.
    #[serde(with = "extended_float")]
    pub margin: f64,
    #[serde(with = "extended_float::map")]
    pub details: BTreeMap<String, f64>,
    pub note: String,
}

/// JSON has no NaN or infinities; they are written as `null`, `"inf"` and
/// `"-inf"`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
        Null(()),
    }

    fn to_repr(v: f64) -> Repr {
        match v {
            f64::INFINITY => Repr::Text("inf".into()),
            f64::NEG_INFINITY => Repr::Text("-inf".into()),
            v if v.is_nan() => Repr::Null(()),
            v => Repr::Number(v),
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Number(v) => Ok(v),
            Repr::Null(()) => Ok(f64::NAN),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("expected a number, inf or -inf, got {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod map {
        use std::collections::BTreeMap;

        use serde::{Deserialize, Deserializer, Serializer};

        use super::{from_repr, to_repr, Repr};

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            s.collect_map(m.iter().map(|(k, v)| (k, to_repr(*v))))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, Repr>::deserialize(d)?.into_iter().map(|(k, r)| Ok((k, from_repr(r)?))).collect()
        }
    }
}

impl CheckVerdict {
    fn from_margin(name: impl Into<String>, margin: f64, details: BTreeMap<String, f64>) -> Self {
        let passed = margin >= 0.0;
        CheckVerdict {
            name: name.into(),
            status: if passed { Status::Passed } else { Status::Failed },
            passed,
            margin,
            details,
            note: String::new(),
        }
    }

    fn skipped(name: impl Into<String>, note: impl Into<String>) -> Self {
        CheckVerdict {
            name: name.into(),
            status: Status::Skipped,
            passed: false,
            margin: f64::NAN,
            details: BTreeMap::new(),
            note: note.into(),
        }
    }

    fn not_applicable(name: impl Into<String>, note: impl Into<String>) -> Self {
        CheckVerdict { status: Status::NotApplicable, ..Self::skipped(name, note) }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    /// Failed or skipped; these make a report unsuccessful.
    pub fn is_failure(&self) -> bool {
        matches!(self.status, Status::Failed | Status::Skipped)
    }
}

/// `(rhs - lhs + tol) / (|lhs| + |rhs| + tol)` for `lhs ≤ rhs`.
fn normalized_margin(lhs: f64, rhs: f64, tol: f64) -> f64 {
    let den = lhs.abs() + rhs.abs() + tol;
    if den == 0.0 {
        return 0.0;
    }
    (rhs - lhs + tol) / den
}

fn details<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Relative size of rounding in a lattice-sum evaluation, per unit of
/// `(πN)^α ‖f‖_∞`.
const LATTICE_ROUNDING: f64 = 1e-13;

fn lattice_rounding(grid: TorusGrid, alpha: f64, sup: f64) -> f64 {
    let k_max = std::f64::consts::PI * grid.points_per_axis() as f64;
    LATTICE_ROUNDING * k_max.powf(alpha) * sup
}

/// Minimum principle: at a minimum point `x̄`,
/// `(-Δ)^{α/2} μ(x̄) ≤ c_{d,α} (μ(x̄) - μ̄)`, evaluated with the lattice-sum
/// operator at the grid argmin.
pub fn check_min_principle(f: &Field, params: &ModelParams) -> Result<CheckVerdict> {
    let grid = f.grid();
    let op = LatticeOperator::new(grid, params.alpha, DEFAULT_IMAGE_RADIUS)?;
    let (idx, min) = f.min();
    let lhs = op.apply_at(f, idx);
    let rhs = params.cdalpha * (min - f.mean());
    let tol = lattice_rounding(grid, params.alpha, f.sup_norm());
    let margin = normalized_margin(lhs, rhs, tol);
    Ok(CheckVerdict::from_margin(
        "min-principle",
        margin,
        details([("lhs", lhs), ("rhs", rhs), ("tolerance", tol), ("argmin", idx as f64)]),
    ))
}

/// Constants `(C, C')` of the maximum principle for convex functions of the
/// density, from the optimal choice of excision radius.
pub fn cv_constants(d: usize, alpha: f64, cdalpha: f64) -> (f64, f64) {
    let df = d as f64;
    let sphere = unit_sphere_measure(d);
    let c_prime = cdalpha * sphere / alpha;
    let c = c_prime * (df + alpha - 1.0) / (df + alpha) * ((df + alpha) * cdalpha / c_prime).powf(-alpha / df);
    let c_alt = (df + alpha) * alpha / (sphere * (df.sqrt() / 2.0).powi(d as i32));
    (c, c_alt)
}

/// Maximum principle for `h(μ)`: at a maximum point `x̄`, either
/// `(-Δ)^{α/2} h(μ)(x̄) ≥ C h(μ(x̄)) ‖μ‖_∞^{α/d} ‖μ‖_1^{-α/d}` or
/// `‖μ‖_∞ ≤ C' ‖μ‖_1`.
pub fn check_cv_max_principle(f: &Field, params: &ModelParams, probe: ConvexProbe) -> Result<CheckVerdict> {
    let grid = f.grid();
    if f.min().1 < 0.0 {
        return Err(Error::validation("field", "the maximum principle needs a nonnegative field"));
    }
    let op = LatticeOperator::new(grid, params.alpha, DEFAULT_IMAGE_RADIUS)?;
    let (idx, sup) = f.max();
    let l1 = f.mean();
    let h = f.map(|u| probe.eval(u));
    let lhs = op.apply_at(&h, idx);
    let (c, c_alt) = cv_constants(grid.dimension(), params.alpha, params.cdalpha);
    let ratio = sup / l1;
    let bound = c * probe.eval(sup) * ratio.powf(params.alpha / grid.dimension() as f64);
    let tol = lattice_rounding(grid, params.alpha, h.sup_norm());
    // First branch lhs ≥ bound, second branch sup ≤ C' l1.
    let first = normalized_margin(bound, lhs, tol);
    let second = normalized_margin(sup, c_alt * l1, 1e-14 * sup);
    let margin = first.max(second);
    Ok(CheckVerdict::from_margin(
        "cv-max-principle",
        margin,
        details([
            ("lhs", lhs),
            ("bound", bound),
            ("sup_over_l1", ratio),
            ("c", c),
            ("c_prime", c_alt),
            ("first_branch_margin", first),
            ("second_branch_margin", second),
            ("probe_exponent", probe.exponent),
            ("alpha", params.alpha),
            ("dimension", grid.dimension() as f64),
        ]),
    ))
}

/// Relative tolerance of the spectral quadratures in the Stroock–Varopoulos check.
const SV_TOLERANCE: f64 = 1e-10;

/// Stroock–Varopoulos: `(1/(p-1)) ∫ μ^{p-1} (-Δ)^{γ/2} μ ≥ (2/p²) ∫ |(-Δ)^{γ/4} μ^{p/2}|²`,
/// with `log μ` in place of `μ^{p-1}/(p-1)` at `p = 1`. Both sides use the
/// spectral operator on the grid samples.
pub fn check_stroock_varopoulos(f: &Field, p: f64, order: f64) -> Result<CheckVerdict> {
    if !(order > 0.0 && order < 2.0) {
        return Err(Error::validation("order", format!("need 0 < order < 2, got {order}")));
    }
    if !p.is_finite() || p == 0.0 {
        return Err(Error::validation("p", format!("need a finite nonzero p, got {p}")));
    }
    let (idx, min) = f.min();
    if !(min > 0.0) {
        return Err(Error::validation("field", format!("needs strictly positive samples, sample {idx} is {min:.3e}")));
    }
    let grid = f.grid();
    let n = grid.total_points();
    let freq = grid.frequency_magnitudes();
    let mut ws = SpectralWorkspace::new(grid);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];

    ws.forward_into(f.values(), &mut coeffs);
    for (c, w) in coeffs.iter_mut().zip(&freq) {
        *c *= if *w == 0.0 { 0.0 } else { w.powf(order) };
    }
    let mut frac = vec![0.0; n];
    ws.inverse_into(&mut coeffs, &mut frac);
    let weight = |u: f64| if p == 1.0 { u.ln() } else { u.powf(p - 1.0) / (p - 1.0) };
    let lhs = f.values().iter().zip(&frac).map(|(&u, l)| weight(u) * l).sum::<f64>() / n as f64;

    let powered: Vec<f64> = f.values().iter().map(|u| u.powf(0.5 * p)).collect();
    ws.forward_into(&powered, &mut coeffs);
    let seminorm: f64 =
        coeffs.iter().zip(&freq).filter(|(_, w)| **w > 0.0).map(|(c, w)| w.powf(order) * c.norm_sqr()).sum();
    let rhs = 2.0 / (p * p) * seminorm;
    let tol = SV_TOLERANCE * (lhs.abs() + rhs.abs()) + 1e-300;
    let margin = normalized_margin(rhs, lhs, tol);
    Ok(CheckVerdict::from_margin(
        "stroock-varopoulos",
        margin,
        details([("lhs", lhs), ("rhs", rhs), ("p", p), ("order", order)]),
    ))
}

/// Aggregate of a randomized suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub cases: usize,
    pub passed: usize,
    #[serde(with = "extended_float")]
    pub worst_margin: f64,
    /// Every verdict that did not pass.
    pub failures: Vec<CheckVerdict>,
}

impl SuiteReport {
    fn collect(suite: &str, seed: u64, verdicts: Vec<CheckVerdict>) -> Self {
        let worst_margin = verdicts.iter().map(|v| v.margin).fold(f64::INFINITY, f64::min);
        let passed = verdicts.iter().filter(|v| v.passed).count();
        SuiteReport {
            suite: suite.to_string(),
            seed,
            cases: verdicts.len(),
            passed,
            worst_margin,
            failures: verdicts.into_iter().filter(|v| !v.passed).collect(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.cases
    }
}

/// The randomized lemma suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    MinPrinciple,
    CvMaxPrinciple,
    StroockVaropoulos,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::MinPrinciple, Suite::CvMaxPrinciple, Suite::StroockVaropoulos];

    pub fn name(self) -> &'static str {
        match self {
            Suite::MinPrinciple => "min-principle",
            Suite::CvMaxPrinciple => "cv-max-principle",
            Suite::StroockVaropoulos => "stroock-varopoulos",
        }
    }

    /// Default number of cases (fields) per suite.
    pub fn default_cases(self) -> usize {
        match self {
            Suite::MinPrinciple => 200,
            Suite::CvMaxPrinciple => 200,
            Suite::StroockVaropoulos => 500,
        }
    }

    pub fn run(self, seed: u64, cases: usize) -> Result<SuiteReport> {
        match self {
            Suite::MinPrinciple => min_principle_suite(seed, cases),
            Suite::CvMaxPrinciple => cv_max_principle_suite(seed, cases),
            Suite::StroockVaropoulos => stroock_varopoulos_suite(seed, cases),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            Error::validation(
                "suite",
                format!("unknown suite {s:?}; expected min-principle, cv-max-principle or stroock-varopoulos"),
            )
        })
    }
}

/// Independent generator for case `index` of a suite seeded by `seed`.
fn case_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Random trigonometric polynomial with modes `|k|_∞ ≤ max_mode`, shifted
/// and scaled to lie in `[floor, floor + 1]` up to its mean.
pub fn random_band_limited_field(grid: TorusGrid, max_mode: i64, floor: f64, rng: &mut impl Rng) -> Field {
    let d = grid.dimension();
    let range = -max_mode..=max_mode;
    let mut modes = Vec::new();
    for k0 in range.clone() {
        let k1_range = if d == 1 { 0..=0 } else { range.clone() };
        for k1 in k1_range {
            if (k0, k1) > (0, 0) {
                let decay = 1.0 / (1.0 + (k0 * k0 + k1 * k1) as f64);
                let amp = decay * rng.random_range(-1.0..1.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                modes.push(([k0 as f64, k1 as f64], amp, phase));
            }
        }
    }
    let raw = Field::from_fn(grid, |x| {
        modes.iter().map(|(k, a, ph)| a * (std::f64::consts::TAU * (k[0] * x[0] + k[1] * x[1]) + ph).cos()).sum()
    });
    let (lo, hi) = (raw.min().1, raw.max().1);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    raw.map(|v| floor + (v - lo) / span)
}

/// Nonnegative peaked field: a periodic Gaussian of standard deviation
/// `width` with unit mass over a background `background`.
pub fn peaked_field(grid: TorusGrid, center: [f64; 2], width: f64, background: f64) -> Field {
    let d = grid.dimension();
    let wrap = |v: f64| v - v.round();
    let norm = (std::f64::consts::TAU * width * width).powf(-0.5 * d as f64);
    let bump = Field::from_fn(grid, |x| {
        let mut r2 = wrap(x[0] - center[0]).powi(2);
        if d == 2 {
            r2 += wrap(x[1] - center[1]).powi(2);
        }
        norm * (-0.5 * r2 / (width * width)).exp()
    });
    let mean = bump.mean();
    bump.map(|v| v / mean + background)
}

fn random_params(rng: &mut impl Rng, d: usize) -> Result<ModelParams> {
    // s ranges over the admissible interval ((d-2)_+, d) minus a margin,
    // so α = s - d + 2 stays in [1.05, 1.9] for d = 1 and [0.2, 1.9] for d = 2.
    let (lo, hi) = if d == 1 { (0.05, 0.9) } else { (0.2, 1.9) };
    let s = rng.random_range(lo..hi);
    let regime = if rng.random_bool(0.5) { Regime::Clogged } else { Regime::FastDiffusion };
    ModelParams::new(d, s, 0.5, regime, 1e-3)
}

fn suite_grid(d: usize) -> TorusGrid {
    make_grid(d, if d == 1 { 128 } else { 32 }).expect("fixed suite grids are valid")
}

/// Minimum principle on `cases` random positive band-limited fields, half
/// of them in each dimension.
pub fn min_principle_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let verdicts = (0..cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, i);
            let d = 1 + i % 2;
            let grid = suite_grid(d);
            let params = random_params(&mut rng, d)?;
            let floor = rng.random_range(0.0..2.0);
            let f = random_band_limited_field(grid, if d == 1 { 16 } else { 4 }, floor, &mut rng);
            check_min_principle(&f, &params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::collect(Suite::MinPrinciple.name(), seed, verdicts))
}

/// Maximum principle on `cases` fields × probes `q ∈ {1, 2, 3}`. Half of the
/// fields are peaked so that the first branch is exercised.
pub fn cv_max_principle_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let verdicts = (0..cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, i);
            let d = 1 + i % 2;
            let grid = suite_grid(d);
            let params = random_params(&mut rng, d)?;
            let f = if (i / 2) % 2 == 0 {
                let floor = rng.random_range(0.0..1.0);
                random_band_limited_field(grid, if d == 1 { 16 } else { 4 }, floor, &mut rng)
            } else {
                let h = grid.spacing();
                let width = rng.random_range(3.0 * h..0.15);
                let center = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
                let background = rng.random_range(0.0..0.2);
                peaked_field(grid, center, width, background)
            };
            [1.0, 2.0, 3.0]
                .into_iter()
                .map(|q| check_cv_max_principle(&f, &params, ConvexProbe { exponent: q }))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::collect(Suite::CvMaxPrinciple.name(), seed, verdicts.into_iter().flatten().collect()))
}

/// Stroock–Varopoulos on `cases` random positive fields; each case draws
/// `p ∈ {0.5, 1, 1.5, 3}` and `order ∈ {0.5, 1, 1.5}` in rotation.
pub fn stroock_varopoulos_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    const PS: [f64; 4] = [0.5, 1.0, 1.5, 3.0];
    const ORDERS: [f64; 3] = [0.5, 1.0, 1.5];
    let verdicts = (0..cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, i);
            let d = 1 + i % 2;
            let grid = suite_grid(d);
            let floor = rng.random_range(0.02..2.0);
            let f = random_band_limited_field(grid, if d == 1 { 16 } else { 4 }, floor, &mut rng);
            check_stroock_varopoulos(&f, PS[i % 4], ORDERS[(i / 4) % 3])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::collect(Suite::StroockVaropoulos.name(), seed, verdicts))
}

/// Tolerances of the run-level checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremTolerances {
    /// Relative drift allowed in the `L¹` norm and the mass.
    pub l1_relative: f64,
    pub mass_relative: f64,
    /// Absolute slack on min/max monotonicity, plus `10 ε_mach ‖μ‖_∞`.
    pub extrema_absolute: f64,
    /// Energy may rise by at most this fraction of its initial value (plus `1e-12`).
    pub energy_relative: f64,
    /// Slack below the barrier.
    pub barrier_absolute: f64,
    /// Relative tolerance on fitted exponents.
    pub exponent_relative: f64,
    /// Spectral-tail fraction of `‖μ‖_∞` below which extrema are trusted.
    pub resolution_gate: f64,
    /// Sign of `md` in the fast-diffusion smoothing exponent.
    pub formula_variant: FormulaVariant,
}

impl Default for TheoremTolerances {
    fn default() -> Self {
        TheoremTolerances {
            l1_relative: 1e-10,
            mass_relative: 1e-11,
            extrema_absolute: 1e-8,
            energy_relative: 1e-6,
            barrier_absolute: 1e-8,
            exponent_relative: 0.15,
            resolution_gate: crate::diagnostics::RESOLUTION_GATE,
            formula_variant: FormulaVariant::PlusMd,
        }
    }
}

/// Samples per fitting window after log-spaced resampling.
const FIT_SAMPLES: usize = 40;

/// Records nearest to `FIT_SAMPLES` log-spaced times in `[lo, hi]`, so that
/// the fit weighs each decade equally however the steps were spaced.
fn log_resample<'a>(records: &'a [DiagnosticsRecord], lo: f64, hi: f64) -> Vec<&'a DiagnosticsRecord> {
    let inside: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.time >= lo && r.time <= hi).collect();
    if inside.len() <= FIT_SAMPLES || !(lo > 0.0 && hi > lo) {
        return inside;
    }
    let mut out: Vec<&DiagnosticsRecord> = Vec::with_capacity(FIT_SAMPLES);
    let mut j = 0;
    for i in 0..FIT_SAMPLES {
        let target = lo * (hi / lo).powf(i as f64 / (FIT_SAMPLES - 1) as f64);
        while j + 1 < inside.len() && inside[j + 1].time <= target {
            j += 1;
        }
        let pick = if j + 1 < inside.len() && (inside[j + 1].time / target).ln() < (target / inside[j].time).ln() {
            inside[j + 1]
        } else {
            inside[j]
        };
        if out.last().map(|r| r.time) != Some(pick.time) {
            out.push(pick);
        }
    }
    out
}

/// Fit of `values` against time over `[lo, hi]` after log resampling; the
/// window is widened by a hair so that its end points count as inside.
fn windowed_fit(
    records: &[DiagnosticsRecord],
    (lo, hi): (f64, f64),
    value: impl Fn(&DiagnosticsRecord) -> f64,
) -> Result<PowerLawFit> {
    let picked = log_resample(records, lo, hi);
    let times: Vec<f64> = picked.iter().map(|r| r.time).collect();
    let values: Vec<f64> = picked.iter().map(|r| value(r)).collect();
    fit_powerlaw(&times, &values, (lo * (1.0 - 1e-12), hi * (1.0 + 1e-12)))
}

/// Fitting windows used by the scaling checks of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindows {
    /// `5 × dt` of the first accepted step.
    pub start: f64,
    /// Crossing time of the envelope branches, if they cross.
    pub crossover: Option<f64>,
    /// `1%` of the barrier time scale.
    pub asymptotic_end: f64,
    /// Small-time window for the growth of the minimum.
    pub early: (f64, f64),
    /// Window between the end of the initial layer (`‖μ‖_∞ ≤ ‖μ_0‖_∞/4`)
    /// and the approach to equilibrium (`‖μ‖_∞ ≥ 3μ̄`), if nonempty.
    pub decay: Option<(f64, f64)>,
}

impl FitWindows {
    pub fn for_run(run: &RunResult, bp: &BarrierParams) -> Option<Self> {
        let start = 5.0 * run.initial_dt()?;
        let crossover = barriers::crossover_time(bp);
        let asymptotic_end = 0.01 * bp.time_scale();
        let early_end = crossover.map_or(asymptotic_end, |t| t.min(asymptotic_end));
        let max0 = run.records[0].max_value;
        let mean = run.mean_density();
        let first_after =
            |pred: &dyn Fn(&DiagnosticsRecord) -> bool| run.records.iter().find(|r| pred(r)).map(|r| r.time);
        let lo = first_after(&|r| r.max_value <= 0.25 * max0);
        let hi = first_after(&|r| r.max_value < 3.0 * mean);
        let decay = match (lo, hi) {
            (Some(a), Some(b)) if b > a.max(start) => Some((a.max(start), b)),
            _ => None,
        };
        Some(FitWindows { start, crossover, asymptotic_end, early: (start, early_end), decay })
    }
}

/// Checks every solution property along `run`. Items that rely on grid
/// extrema are skipped when any record they use fails the resolution gate.
pub fn check_theorem_items(run: &RunResult, params: &ModelParams) -> Vec<CheckVerdict> {
    check_theorem_items_with(run, params, &TheoremTolerances::default())
}

pub fn check_theorem_items_with(run: &RunResult, params: &ModelParams, tol: &TheoremTolerances) -> Vec<CheckVerdict> {
    let recs = &run.records;
    let resolved = |r: &DiagnosticsRecord| r.spectral_tail < tol.resolution_gate * r.linf();
    let all_resolved = recs.iter().all(resolved);
    let mut out = Vec::new();

    // (i) L¹ nonincreasing.
    let l1: Vec<f64> = recs.iter().map(|r| r.lp(1.0).unwrap_or(r.mass.abs())).collect();
    let worst = l1.windows(2).map(|w| (w[1] - w[0]) / l1[0]).fold(f64::NEG_INFINITY, f64::max);
    out.push(CheckVerdict::from_margin(
        "i-l1-nonincreasing",
        monotone_margin(worst, tol.l1_relative),
        details([("largest_relative_increase", worst)]),
    ));

    // (ii) Mass conservation.
    let m0 = recs[0].mass;
    let drift = recs.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(0.0, f64::max);
    out.push(CheckVerdict::from_margin(
        "ii-mass-conservation",
        (tol.mass_relative - drift) / tol.mass_relative,
        details([("relative_drift", drift)]),
    ));

    // (iii) Weak maximum principle.
    if all_resolved {
        let eps_mach = 10.0 * f64::EPSILON;
        let mut worst: f64 = f64::INFINITY;
        let (mut min_drop, mut max_rise) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in recs.windows(2) {
            let slack = tol.extrema_absolute + eps_mach * w[0].linf().max(w[1].linf());
            let drop = w[0].min_value - w[1].min_value;
            let rise = w[1].max_value - w[0].max_value;
            min_drop = min_drop.max(drop);
            max_rise = max_rise.max(rise);
            worst = worst.min((slack - drop) / slack).min((slack - rise) / slack);
        }
        if recs.len() < 2 {
            worst = 1.0;
        }
        out.push(CheckVerdict::from_margin(
            "iii-weak-maximum-principle",
            worst,
            details([("largest_min_decrease", min_drop), ("largest_max_increase", max_rise)]),
        ));
    } else {
        out.push(unresolved("iii-weak-maximum-principle", recs, tol));
    }

    // (iv) Combined L^p inequality for p = 2, 3.
    let e = params.mobility_exponent();
    for p in [2.0, 3.0] {
        out.push(combined_lp_check(recs, params, p, e));
    }

    // (v) Energy.
    let e0 = recs[0].energy;
    let slack = tol.energy_relative * e0.abs() + 1e-12;
    let rise = recs.windows(2).map(|w| w[1].energy - w[0].energy).fold(f64::NEG_INFINITY, f64::max);
    let with_dissipation =
        recs.iter().map(|r| r.energy + r.ledger.energy - e0 - r.ledger.energy_slack).fold(f64::NEG_INFINITY, f64::max);
    out.push(CheckVerdict::from_margin(
        "v-energy-nonincreasing",
        if recs.len() < 2 { 1.0 } else { (slack - rise) / slack },
        details([("largest_increase", rise), ("slack", slack), ("energy_plus_dissipation_excess", with_dissipation)]),
    ));

    // (vi) Lower barrier and the growth law of the minimum.
    let mean = run.mean_density();
    let c = barriers::barrier_constant(params);
    let bp = BarrierParams::new(params.m, mean, c, params.epsilon.min(mean), params.regime);
    let bp = match bp {
        Ok(bp) => bp,
        Err(err) => {
            out.push(CheckVerdict::skipped("vi-lower-barrier", err.to_string()));
            return out;
        }
    };
    if all_resolved {
        out.push(barrier_check(recs, &bp, tol));
    } else {
        out.push(unresolved("vi-lower-barrier", recs, tol));
    }
    let windows = FitWindows::for_run(run, &bp);
    out.push(min_growth_check(recs, params, &bp, windows, tol, resolved));

    // (vii) Instantaneous regularization.
    out.extend(regularization_checks(recs, params, windows, tol, resolved));
    out
}

fn monotone_margin(worst_increase: f64, slack: f64) -> f64 {
    if worst_increase == f64::NEG_INFINITY {
        return 1.0;
    }
    (slack - worst_increase) / slack
}

fn unresolved(name: &str, recs: &[DiagnosticsRecord], tol: &TheoremTolerances) -> CheckVerdict {
    let worst = recs.iter().map(|r| r.spectral_tail / r.linf()).fold(0.0, f64::max);
    let mut v = CheckVerdict::skipped(
        name,
        format!("under-resolved: spectral tail reaches {worst:.2e} of the maximum (gate {:.0e})", tol.resolution_gate),
    );
    v.details.insert("worst_relative_tail".into(), worst);
    v
}

fn combined_lp_check(recs: &[DiagnosticsRecord], params: &ModelParams, p: f64, e: f64) -> CheckVerdict {
    let name = format!("iv-combined-lp-p{p}");
    let prefactor = p * (p - 1.0) / (p + e).powi(2) * params.cds;
    let mut rows = Vec::with_capacity(recs.len());
    for r in recs {
        let (Some(norm), Some(acc)) = (r.lp(p), r.ledger.per_p.iter().find(|t| t.p == p)) else {
            return CheckVerdict::skipped(name, format!("p = {p} was not recorded"));
        };
        rows.push((norm.powf(p), prefactor * acc.sv, prefactor * acc.sv_slack));
    }
    let mut worst = f64::INFINITY;
    let mut worst_excess = f64::NEG_INFINITY;
    for w in rows.windows(2) {
        let (a, b) = (w[0], w[1]);
        let excess = (b.0 + b.1) - (a.0 + a.1);
        let slack = (b.2 - a.2) + 1e-13 * a.0;
        worst_excess = worst_excess.max(excess - slack);
        worst = worst.min(normalized_margin(excess, slack, 0.0).min(1.0));
    }
    if rows.len() < 2 {
        worst = 1.0;
    }
    let last = rows.last().copied().unwrap_or((0.0, 0.0, 0.0));
    CheckVerdict::from_margin(
        name,
        worst,
        details([
            ("p", p),
            ("largest_excess_over_slack", worst_excess),
            ("final_norm_power", last.0),
            ("final_dissipation", last.1),
            ("final_quadrature_slack", last.2),
        ]),
    )
}

fn barrier_check(recs: &[DiagnosticsRecord], bp: &BarrierParams, tol: &TheoremTolerances) -> CheckVerdict {
    let times: Vec<f64> = recs.iter().map(|r| r.time).collect();
    let phi = barriers::barrier_at(bp, &times);
    let worst = recs.iter().zip(&phi).map(|(r, f)| r.min_value - f).fold(f64::INFINITY, f64::min);
    let margin = (worst + tol.barrier_absolute) / (worst.abs() + tol.barrier_absolute);
    let envelope = barriers::BarrierEnvelope::derive(bp);
    let envelope_gap = recs.iter().map(|r| r.min_value - envelope.value(r.time)).fold(f64::INFINITY, f64::min);
    let largest_c = largest_admissible_constant(recs, bp, tol);
    CheckVerdict::from_margin(
        "vi-lower-barrier",
        margin,
        details([
            ("smallest_gap", worst),
            ("barrier_constant", bp.c),
            ("phi0", bp.phi0),
            ("mean_density", bp.mass),
            ("envelope_prefactor", envelope.prefactor),
            ("smallest_envelope_gap", envelope_gap),
            ("largest_passing_constant", largest_c),
        ]),
    )
}

/// Largest `C` (up to `2^20` times the nominal one) for which the barrier
/// still lies below the recorded minima.
fn largest_admissible_constant(recs: &[DiagnosticsRecord], bp: &BarrierParams, tol: &TheoremTolerances) -> f64 {
    let times: Vec<f64> = recs.iter().map(|r| r.time).collect();
    let holds = |c: f64| {
        let trial = BarrierParams { c, ..*bp };
        barriers::barrier_at(&trial, &times).iter().zip(recs).all(|(f, r)| r.min_value >= f - tol.barrier_absolute)
    };
    if !holds(bp.c) {
        return f64::NAN;
    }
    let (mut lo, mut hi) = (bp.c, bp.c);
    while holds(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > bp.c * 1048576.0 {
            return f64::INFINITY;
        }
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn min_growth_check(
    recs: &[DiagnosticsRecord],
    params: &ModelParams,
    bp: &BarrierParams,
    windows: Option<FitWindows>,
    tol: &TheoremTolerances,
    resolved: impl Fn(&DiagnosticsRecord) -> bool,
) -> CheckVerdict {
    let name = "vi-min-growth-exponent";
    let Some(w) = windows else {
        return CheckVerdict::not_applicable(name, "the run has no accepted steps");
    };
    let k = 1.0 - params.mobility_exponent();
    let target = 1.0 / k;
    let min0 = recs[0].min_value;
    // Growth above the initial minimum in the barrier's own variable.
    let lifted = |r: &DiagnosticsRecord| (r.min_value.powf(k) - min0.powf(k)).max(0.0).powf(1.0 / k);
    // min0 enters the transform, so the initial record is gated too.
    if recs.iter().take_while(|r| r.time <= w.early.1).any(|r| !resolved(r)) {
        return unresolved(name, recs, tol);
    }
    let in_window: Vec<&DiagnosticsRecord> =
        recs.iter().filter(|r| r.time >= w.early.0 && r.time <= w.early.1).collect();
    if in_window.is_empty() {
        return CheckVerdict::skipped(name, "no records in the early window");
    }
    if in_window.iter().all(|r| lifted(r) == 0.0) {
        return CheckVerdict::not_applicable(name, "the minimum does not grow in the early window");
    }
    match windowed_fit(recs, w.early, lifted) {
        Ok(fit) => exponent_verdict(name, fit, target, w.early, tol)
            .with_note(format!("fit of (min^{k} - min0^{k})^(1/{k}) over t in [{:.3e}, {:.3e}]", w.early.0, w.early.1)),
        Err(err) => CheckVerdict::skipped(name, err.to_string()),
    }
    .with_barrier_scale(bp)
}

trait WithBarrier {
    fn with_barrier_scale(self, bp: &BarrierParams) -> Self;
}

impl WithBarrier for CheckVerdict {
    fn with_barrier_scale(mut self, bp: &BarrierParams) -> Self {
        self.details.insert("barrier_time_scale".into(), bp.time_scale());
        self
    }
}

fn exponent_verdict(
    name: &str,
    fit: PowerLawFit,
    target: f64,
    window: (f64, f64),
    tol: &TheoremTolerances,
) -> CheckVerdict {
    let relative = ((fit.exponent - target) / target).abs();
    CheckVerdict::from_margin(
        name,
        (tol.exponent_relative - relative) / tol.exponent_relative,
        details([
            ("fitted_exponent", fit.exponent),
            ("target_exponent", target),
            ("relative_error", relative),
            ("r_squared", fit.r_squared),
            ("samples", fit.samples as f64),
            ("window_start", window.0),
            ("window_end", window.1),
        ]),
    )
}

fn regularization_checks(
    recs: &[DiagnosticsRecord],
    params: &ModelParams,
    windows: Option<FitWindows>,
    tol: &TheoremTolerances,
    resolved: impl Fn(&DiagnosticsRecord) -> bool,
) -> Vec<CheckVerdict> {
    let slope_name = "vii-regularization-slope";
    let bound_name = "vii-regularization-bound";
    let exponent_name = "vii-decay-exponent";
    let Some(w) = windows else {
        return [slope_name, bound_name, exponent_name]
            .map(|n| CheckVerdict::not_applicable(n, "the run has no accepted steps"))
            .to_vec();
    };
    // δ and ζ of the bound ‖μ(t)‖_∞ ≤ A t^{-δ} ‖μ_0‖_1^ζ + B.
    let (delta, zeta) = match params.regime {
        Regime::Clogged => match barriers::compute_exponents(params, 1.0) {
            Ok(set) => (set.delta_p, set.zeta_p),
            Err(err) => {
                return [slope_name, bound_name, exponent_name]
                    .map(|n| CheckVerdict::not_applicable(n, err.to_string()))
                    .to_vec()
            }
        },
        Regime::FastDiffusion => {
            let set = barriers::ExponentSet::formal(params.d, params.s, params.m, 1.0, tol.formula_variant);
            (set.delta_fd, 1.0)
        }
    };
    let window = w.decay.unwrap_or(w.early);
    let window_recs: Vec<&DiagnosticsRecord> =
        recs.iter().filter(|r| r.time >= window.0 && r.time <= window.1).collect();
    if window_recs.iter().any(|r| !resolved(r)) {
        return [slope_name, bound_name, exponent_name].map(|n| unresolved(n, recs, tol)).to_vec();
    }
    let fit = match windowed_fit(recs, window, |r| r.max_value) {
        Ok(fit) => fit,
        Err(err) => {
            return [slope_name, bound_name, exponent_name].map(|n| CheckVerdict::skipped(n, err.to_string())).to_vec()
        }
    };
    let mut out = Vec::new();
    let floor = -delta * (1.0 + tol.exponent_relative);
    out.push(
        CheckVerdict::from_margin(
            slope_name,
            (fit.exponent - floor) / (delta * tol.exponent_relative),
            details([
                ("fitted_slope", fit.exponent),
                ("delta", delta),
                ("window_start", window.0),
                ("window_end", window.1),
            ]),
        )
        .with_note("the decay of the maximum is no faster than t^(-delta) allows"),
    );

    // A ≥ 0 and B ≥ 0 by least squares under the constraint that the bound
    // dominates the fitting window; the check is that it still dominates
    // every record in [5 dt_0, min(1, t_end)].
    let mass = recs[0].mass;
    let basis = |t: f64| t.powf(-delta) * mass.powf(zeta);
    let t_hi = recs.last().map_or(1.0, |r| r.time.min(1.0));
    let checked: Vec<&DiagnosticsRecord> = recs.iter().filter(|r| r.time >= w.start && r.time <= t_hi).collect();
    if checked.iter().any(|r| !resolved(r)) {
        out.push(unresolved(bound_name, recs, tol));
    } else {
        let pts: Vec<(f64, f64)> =
            log_resample(recs, window.0, window.1).iter().map(|r| (basis(r.time), r.max_value)).collect();
        let (a, b) = dominating_line_fit(&pts);
        let worst = checked
            .iter()
            .map(|r| {
                let bound = a * basis(r.time) + b;
                (bound * (1.0 + tol.exponent_relative) - r.max_value) / r.max_value
            })
            .fold(f64::INFINITY, f64::min);
        out.push(CheckVerdict::from_margin(
            bound_name,
            if checked.is_empty() { 1.0 } else { worst },
            details([
                ("a", a),
                ("b", b),
                ("delta", delta),
                ("zeta", zeta),
                ("slack", tol.exponent_relative),
                ("checked_until", t_hi),
            ]),
        ));
    }

    let decay_window = match w.decay {
        Some(dw) => dw,
        None => {
            let mut v = CheckVerdict::not_applicable(
                exponent_name,
                "no decay window: the maximum never falls below a quarter of its initial value while above 3 times the mean",
            );
            v.details.insert("steepest_local_slope".into(), steepest_local_slope(recs, w.start));
            v.details.insert("target_exponent".into(), -delta);
            out.push(v);
            return out;
        }
    };
    match windowed_fit(recs, decay_window, |r| r.max_value) {
        Ok(fit) => out.push(exponent_verdict(exponent_name, fit, -delta, decay_window, tol)),
        Err(err) => out.push(CheckVerdict::skipped(exponent_name, err.to_string())),
    }
    out
}

/// Steepest log-log slope of the maximum between neighbouring records that
/// are at least a factor 1.5 apart in time, after `start`.
fn steepest_local_slope(recs: &[DiagnosticsRecord], start: f64) -> f64 {
    let mut steepest = f64::INFINITY;
    let mut prev: Option<&DiagnosticsRecord> = None;
    for r in recs.iter().filter(|r| r.time >= start) {
        match prev {
            Some(p) if r.time >= 1.5 * p.time => {
                steepest = steepest.min((r.max_value / p.max_value).ln() / (r.time / p.time).ln());
                prev = Some(r);
            }
            None => prev = Some(r),
            _ => {}
        }
    }
    steepest
}

/// Least squares `y ≈ a x + b` with `a, b ≥ 0` and `a x_i + b ≥ y_i` for
/// every point. The problem is a convex quadratic program in the plane, so
/// the optimum is the unconstrained minimizer, a minimizer along one active
/// constraint line, or a vertex; each feasible candidate is scored.
fn dominating_line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    if pts.is_empty() {
        return (0.0, 0.0);
    }
    let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let feasible =
        |a: f64, b: f64| a >= 0.0 && b >= 0.0 && pts.iter().all(|&(x, y)| a * x + b >= y - 1e-12 * scale.max(a * x));
    let sse = |a: f64, b: f64| pts.iter().map(|&(x, y)| (a * x + b - y).powi(2)).sum::<f64>();
    // Constraint lines in the (a, b) plane as u a + v b = w.
    let mut lines: Vec<(f64, f64, f64)> = pts.iter().map(|&(x, y)| (x, 1.0, y)).collect();
    lines.push((1.0, 0.0, 0.0));
    lines.push((0.0, 1.0, 0.0));

    let mut candidates = Vec::new();
    let (a0, b0) = unconstrained_line_fit(pts);
    candidates.push((a0, b0));
    for &(u, v, w) in &lines {
        // Parametrize the line as (a, b) = p0 + τ dir and minimize the SSE in τ.
        let (p0, dir) = if v != 0.0 { ((0.0, w / v), (1.0, -u / v)) } else { ((w / u, 0.0), (0.0, 1.0)) };
        let (mut num, mut den) = (0.0, 0.0);
        for &(x, y) in pts {
            let slope = dir.0 * x + dir.1;
            num += slope * (y - p0.0 * x - p0.1);
            den += slope * slope;
        }
        let tau = if den > 0.0 { num / den } else { 0.0 };
        candidates.push((p0.0 + tau * dir.0, p0.1 + tau * dir.1));
    }
    for (i, &(u1, v1, w1)) in lines.iter().enumerate() {
        for &(u2, v2, w2) in &lines[i + 1..] {
            let det = u1 * v2 - u2 * v1;
            if det.abs() > 1e-300 {
                candidates.push(((w1 * v2 - w2 * v1) / det, (u1 * w2 - u2 * w1) / det));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|&(a, b)| a.is_finite() && b.is_finite() && feasible(a, b))
        .min_by(|x, y| sse(x.0, x.1).total_cmp(&sse(y.0, y.1)))
        // Always feasible: a = 0 with b = max y.
        .unwrap_or((0.0, pts.iter().map(|p| p.1).fold(0.0, f64::max)))
}

fn unconstrained_line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let a = sxy / sxx;
    (a, my - a * mx)
}
