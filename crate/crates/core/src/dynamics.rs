//! The viscous approximation `∂_t μ = div(μ^{∓m} ∇g∗μ) + εΔμ`: initial data,
//! mobility, right-hand side, and adaptive time stepping.
//!
//! Transport is advanced with a four-stage Runge–Kutta method in the
//! integrating-factor (Lawson) form, so `εΔ` is integrated exactly. Products
//! are formed in physical space and the flux is dealiased by the 2/3 rule
//! before the spectral divergence.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord, DissipationLedger, DissipationRates};
use crate::error::{Error, Result};
use crate::operators::{ModelParams, Multipliers, Regime};
use crate::torus::{Field, SpectralWorkspace, TorusGrid};

/// Shape of the initial density before the `ε` floor is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialKind {
    /// The constant `value`; its value must equal the target mass.
    Constant { value: f64 },
    /// `target_mass · (1 + amplitude · cos(2πk·x))`, needs `|amplitude| ≤ 1`.
    CosineBump { amplitude: f64, wavevector: [i64; 2] },
    /// `target_mass` times the periodic heat kernel at time `spectral_width²`
    /// (Fourier multiplier `e^{-w²|2πk|²}`) centred at `center`.
    ApproxDirac { center: [f64; 2], spectral_width: f64 },
    /// Grid samples in row-major order; their mean must equal the target mass.
    Custom { samples: Vec<f64> },
}

/// Initial data: a shape and the mass it carries before the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSpec {
    pub kind: InitialKind,
    pub target_mass: f64,
}

/// Samples above `-NEGATIVE_ROUNDOFF · max|f|` are treated as rounding and
/// clamped to zero; anything lower is rejected.
const NEGATIVE_ROUNDOFF: f64 = 1e-12;

/// Builds `μ_{0,ε} = shape + ε`, whose mean is `target_mass + ε`.
pub fn prepare_initial_data(spec: &InitialDataSpec, params: &ModelParams, grid: TorusGrid) -> Result<Field> {
    if grid.dimension() != params.d {
        return Err(Error::validation(
            "grid",
            format!("grid dimension {} does not match d = {}", grid.dimension(), params.d),
        ));
    }
    let mass = spec.target_mass;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::validation("target_mass", format!("need target_mass > 0, got {mass}")));
    }
    let d = grid.dimension();
    let raw = match &spec.kind {
        InitialKind::Constant { value } => {
            check_mass_matches(*value, mass)?;
            Field::constant(grid, *value)
        }
        InitialKind::CosineBump { amplitude, wavevector } => {
            if !(amplitude.is_finite() && amplitude.abs() <= 1.0) {
                return Err(Error::validation(
                    "amplitude",
                    format!("need |amplitude| <= 1 for nonnegative data, got {amplitude}"),
                ));
            }
            if d == 1 && wavevector[1] != 0 {
                return Err(Error::validation("wavevector", "second component must be 0 when d = 1"));
            }
            let k = [wavevector[0] as f64, wavevector[1] as f64];
            Field::from_fn(grid, |x| {
                let phase = 2.0 * std::f64::consts::PI * (k[0] * x[0] + k[1] * x[1]);
                mass * (1.0 + amplitude * phase.cos())
            })
        }
        InitialKind::ApproxDirac { center, spectral_width } => {
            let w = *spectral_width;
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::validation("spectral_width", format!("need width > 0, got {w}")));
            }
            heat_kernel(grid, *center, w, mass)
        }
        InitialKind::Custom { samples } => {
            if samples.len() != grid.total_points() {
                return Err(Error::validation(
                    "samples",
                    format!("expected {} samples, got {}", grid.total_points(), samples.len()),
                ));
            }
            let f = Field::new(grid, samples.clone())?;
            check_mass_matches(f.mean(), mass)?;
            f
        }
    };
    let scale = raw.sup_norm();
    let (index, lowest) = raw.min();
    if lowest < -NEGATIVE_ROUNDOFF * scale {
        return Err(Error::validation("initial data", format!("sample {index} is negative ({lowest:.3e})")));
    }
    Ok(raw.map(|v| v.max(0.0) + params.epsilon))
}

fn check_mass_matches(mean: f64, mass: f64) -> Result<()> {
    if (mean - mass).abs() > 1e-9 * mass {
        return Err(Error::validation("target_mass", format!("data has mean {mean} but target_mass is {mass}")));
    }
    Ok(())
}

/// Image sum `(4πw²)^{-d/2} Σ_j exp(-|x - c - j|²/(4w²))`, rescaled so the
/// grid mean is exactly `mass`.
fn heat_kernel(grid: TorusGrid, center: [f64; 2], w: f64, mass: f64) -> Field {
    let d = grid.dimension();
    let reach = (12.0 * w).ceil() as i64 + 1;
    let images: Vec<i64> = (-reach..=reach).collect();
    let wrap = |v: f64| v - v.round();
    let gauss = |r: f64| (-r * r / (4.0 * w * w)).exp();
    let raw = Field::from_fn(grid, |x| {
        let r0 = wrap(x[0] - center[0]);
        let s0: f64 = images.iter().map(|&j| gauss(r0 - j as f64)).sum();
        if d == 1 {
            return s0;
        }
        let r1 = wrap(x[1] - center[1]);
        let s1: f64 = images.iter().map(|&j| gauss(r1 - j as f64)).sum();
        s0 * s1
    });
    let mean = raw.mean();
    raw.map(|v| v * mass / mean)
}

/// `max(f, ε/2)^{-m}` (clogged) or `max(f, 0)^m` (fast diffusion).
pub fn mobility(f: &Field, params: &ModelParams) -> Result<Field> {
    let mut out = f.values().to_vec();
    mobility_into(f.values(), params, &mut out)?;
    Ok(Field::from_vec_unchecked(f.grid(), out))
}

/// Fills `out` with the mobility and returns how many samples sat below
/// the clogged guard `ε/2`.
fn mobility_into(values: &[f64], params: &ModelParams, out: &mut [f64]) -> Result<usize> {
    let m = params.m;
    match params.regime {
        Regime::Clogged => {
            let floor = 0.5 * params.epsilon;
            let error_floor = 0.25 * params.epsilon;
            let mut activations = 0;
            for (i, (o, &v)) in out.iter_mut().zip(values).enumerate() {
                if !(v >= error_floor) {
                    return Err(Error::DegenerateMobility { index: i, value: v, guard: error_floor });
                }
                if v < floor {
                    activations += 1;
                }
                *o = v.max(floor).powf(-m);
            }
            Ok(activations)
        }
        Regime::FastDiffusion => {
            for (o, &v) in out.iter_mut().zip(values) {
                *o = v.max(0.0).powf(m);
            }
            Ok(0)
        }
    }
}

/// `div(mobility · ∇g∗f) + εΔf`.
pub fn rhs(f: &Field, params: &ModelParams) -> Result<Field> {
    let grid = f.grid();
    let mut stepper = Stepper::new(*params, grid);
    let n = grid.total_points();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    stepper.ws.forward_into(f.values(), &mut coeffs);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    stepper.transport(&coeffs, &mut out)?;
    for ((o, c), l) in out.iter_mut().zip(&coeffs).zip(&stepper.mult.laplacian) {
        *o -= params.epsilon * l * c;
    }
    let mut values = vec![0.0; n];
    stepper.ws.inverse_into(&mut out, &mut values);
    Ok(Field::from_vec_unchecked(grid, values))
}

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    /// Fraction of the stability estimate used as the step.
    pub cfl_safety: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Clogged runs reject steps whose minimum drops below this fraction of ε.
    pub positivity_floor_fraction: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { cfl_safety: 0.9, dt_min: 1e-12, dt_max: 1e-2, positivity_floor_fraction: 0.5 }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::validation("cfl_safety", format!("need 0 < cfl_safety <= 1, got {}", self.cfl_safety)));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max && self.dt_max.is_finite()) {
            return Err(Error::validation(
                "dt_min/dt_max",
                format!("need 0 < dt_min < dt_max, got {} and {}", self.dt_min, self.dt_max),
            ));
        }
        let f = self.positivity_floor_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::validation("positivity_floor_fraction", format!("need a value in (0, 1), got {f}")));
        }
        Ok(())
    }

    /// Smallest value an accepted state may take.
    pub fn positivity_guard(&self, params: &ModelParams) -> f64 {
        match params.regime {
            Regime::Clogged => self.positivity_floor_fraction * params.epsilon,
            Regime::FastDiffusion => -1e-12,
        }
    }
}

/// A point on a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunState {
    pub time: f64,
    pub field: Field,
    pub step_count: u64,
    /// Length of the step that produced this state (zero initially).
    pub dt_current: f64,
}

impl RunState {
    pub fn initial(field: Field) -> Self {
        RunState { time: 0.0, field, step_count: 0, dt_current: 0.0 }
    }
}

/// Result of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: RunState,
    /// Attempts rejected before acceptance.
    pub rejections: u32,
    /// Mobility samples clamped by the clogged guard during the accepted step.
    pub guard_activations: usize,
}

/// Reusable buffers and multipliers for stepping one model on one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    grid: TorusGrid,
    mult: Multipliers,
    ws: SpectralWorkspace,
    phys: Vec<f64>,
    mob: Vec<f64>,
    vel: Vec<f64>,
    buf: Vec<Complex64>,
    stages: [Vec<Complex64>; 5],
    activations: usize,
}

/// Largest symbols of the transport term at one state.
#[derive(Debug, Clone, Copy)]
struct Speeds {
    max_mobility: f64,
    max_advection: f64,
}

impl Stepper {
    pub fn new(params: ModelParams, grid: TorusGrid) -> Self {
        assert_eq!(grid.dimension(), params.d, "grid dimension does not match the model");
        let n = grid.total_points();
        let zeros = || vec![Complex64::new(0.0, 0.0); n];
        Stepper {
            params,
            grid,
            mult: Multipliers::new(grid, &params),
            ws: SpectralWorkspace::new(grid),
            phys: vec![0.0; n],
            mob: vec![0.0; n],
            vel: vec![0.0; n],
            buf: zeros(),
            stages: [zeros(), zeros(), zeros(), zeros(), zeros()],
            activations: 0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Normalized Fourier coefficients of `f`.
    pub fn spectrum(&mut self, f: &Field) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.total_points()];
        self.ws.forward_into(f.values(), &mut out);
        out
    }

    /// Spectral transport term `div(mob(u) ∇g∗u)` of the state with
    /// coefficients `input`, written to `out`.
    fn transport(&mut self, input: &[Complex64], out: &mut [Complex64]) -> Result<Speeds> {
        self.buf.copy_from_slice(input);
        self.ws.inverse_into(&mut self.buf, &mut self.phys);
        self.activations += mobility_into(&self.phys, &self.params, &mut self.mob)?;
        let e = self.params.mobility_exponent();
        let floor = match self.params.regime {
            Regime::Clogged => 0.5 * self.params.epsilon,
            Regime::FastDiffusion => 0.0,
        };
        let mut advection = vec![0.0; self.phys.len()];
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for axis in 0..self.grid.dimension() {
            for ((b, c), v) in self.buf.iter_mut().zip(input).zip(&self.mult.velocity[axis]) {
                *b = Complex64::new(0.0, *v) * c;
            }
            self.ws.inverse_into(&mut self.buf, &mut self.vel);
            for (a, v) in advection.iter_mut().zip(&self.vel) {
                *a += v * v;
            }
            for (v, m) in self.vel.iter_mut().zip(&self.mob) {
                *v *= m;
            }
            self.ws.forward_into(&self.vel, &mut self.buf);
            for (((o, b), k), keep) in
                out.iter_mut().zip(&self.buf).zip(&self.mult.derivative[axis]).zip(&self.mult.dealias)
            {
                *o += Complex64::new(0.0, k * keep) * b;
            }
        }
        let max_mobility = self.mob.iter().fold(0.0, |a: f64, &b| a.max(b));
        let max_advection = self
            .phys
            .iter()
            .zip(&advection)
            .map(|(&u, v2)| {
                let u = u.max(floor).max(f64::MIN_POSITIVE);
                e.abs() * u.powf(e - 1.0) * v2.sqrt()
            })
            .fold(0.0, f64::max);
        Ok(Speeds { max_mobility, max_advection })
    }

    /// Stable step estimate `cfl / (λ_transport + λ_viscous + λ_advection)`.
    fn stable_dt(&self, speeds: Speeds, cfl: f64) -> f64 {
        let p = &self.params;
        let k_max = std::f64::consts::PI * self.grid.points_per_axis() as f64;
        let transport = p.cds * speeds.max_mobility * k_max.powf(p.alpha);
        let viscous = p.epsilon * k_max * k_max;
        let advection = speeds.max_advection * k_max * (self.grid.dimension() as f64).sqrt();
        cfl / (transport + viscous + advection)
    }

    /// Advances `state` by one accepted step no longer than `dt_limit`.
    pub fn step(&mut self, state: &RunState, ctrl: &StepControl, dt_limit: f64) -> Result<StepOutcome> {
        let coeffs = self.spectrum(&state.field);
        let mut k1 = std::mem::take(&mut self.stages[0]);
        self.activations = 0;
        let first = self.transport(&coeffs, &mut k1);
        let speeds = match first {
            Ok(s) => s,
            Err(err) => {
                self.stages[0] = k1;
                return Err(Error::StepFailure {
                    time: state.time,
                    dt: 0.0,
                    reason: format!("initial state is inadmissible: {err}"),
                });
            }
        };
        let start_activations = self.activations;
        let mut dt = self.stable_dt(speeds, ctrl.cfl_safety).min(ctrl.dt_max).min(dt_limit);
        let guard = ctrl.positivity_guard(&self.params);
        let mut rejections = 0;
        let result = loop {
            self.activations = start_activations;
            let reason = match self.lawson_rk4(&coeffs, &k1, dt) {
                Ok(values) => {
                    let (index, lowest) = min_with_index(&values);
                    if lowest >= guard && values.iter().all(|v| v.is_finite()) {
                        let field = Field::from_vec_unchecked(self.grid, values);
                        break Ok(StepOutcome {
                            state: RunState {
                                time: state.time + dt,
                                field,
                                step_count: state.step_count + 1,
                                dt_current: dt,
                            },
                            rejections,
                            guard_activations: self.activations,
                        });
                    }
                    format!("minimum {lowest:.6e} at index {index} is below the positivity guard {guard:.3e}")
                }
                Err(err) => err.to_string(),
            };
            rejections += 1;
            dt *= 0.5;
            if dt < ctrl.dt_min {
                break Err(Error::StepFailure { time: state.time, dt, reason });
            }
        };
        self.stages[0] = k1;
        result
    }

    fn lawson_rk4(&mut self, u: &[Complex64], k1: &[Complex64], dt: f64) -> Result<Vec<f64>> {
        let eps = self.params.epsilon;
        let n = u.len();
        let half: Vec<f64> = self.mult.laplacian.iter().map(|l| (-0.5 * eps * l * dt).exp()).collect();
        let full: Vec<f64> = half.iter().map(|h| h * h).collect();
        let [_, k2, k3, k4, arg] = &mut self.stages;
        let (mut k2, mut k3, mut k4, mut arg) =
            (std::mem::take(k2), std::mem::take(k3), std::mem::take(k4), std::mem::take(arg));
        let result = (|| {
            for i in 0..n {
                arg[i] = half[i] * (u[i] + 0.5 * dt * k1[i]);
            }
            self.transport(&arg, &mut k2)?;
            for i in 0..n {
                arg[i] = half[i] * u[i] + 0.5 * dt * k2[i];
            }
            self.transport(&arg, &mut k3)?;
            for i in 0..n {
                arg[i] = full[i] * u[i] + dt * half[i] * k3[i];
            }
            self.transport(&arg, &mut k4)?;
            for i in 0..n {
                arg[i] = full[i] * u[i] + dt / 6.0 * (full[i] * k1[i] + 2.0 * half[i] * (k2[i] + k3[i]) + k4[i]);
            }
            let mut values = vec![0.0; n];
            self.ws.inverse_into(&mut arg, &mut values);
            Ok(values)
        })();
        self.stages[1] = k2;
        self.stages[2] = k3;
        self.stages[3] = k4;
        self.stages[4] = arg;
        result
    }
}

fn min_with_index(values: &[f64]) -> (usize, f64) {
    values.iter().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
}

/// One accepted step with the stable step size.
pub fn step(state: &RunState, params: &ModelParams, ctrl: &StepControl) -> Result<RunState> {
    ctrl.validate()?;
    let mut stepper = Stepper::new(*params, state.field.grid());
    Ok(stepper.step(state, ctrl, f64::INFINITY)?.state)
}

/// A stored copy of the density at a requested time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub field: Field,
}

/// Trajectory of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub params: ModelParams,
    /// Functionals at the initial time and after every accepted step.
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: RunState,
    pub rejected_steps: u64,
    /// Mobility samples clamped by the clogged guard over all accepted steps.
    pub guard_activations: u64,
}

impl RunResult {
    /// Mean density `μ̄_ε` of the run (initial data including the floor).
    pub fn mean_density(&self) -> f64 {
        self.records[0].mass
    }

    /// Length of the first accepted step, if any.
    pub fn initial_dt(&self) -> Option<f64> {
        self.records.get(1).map(|r| r.dt)
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }
}

/// A failed run together with everything computed before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveFailure {
    pub error: Error,
    pub partial: Box<RunResult>,
}

impl std::fmt::Display for EvolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} accepted steps, t = {:.6e})",
            self.error, self.partial.final_state.step_count, self.partial.final_state.time
        )
    }
}

impl std::error::Error for EvolveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Which functionals a run records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Exponents of the recorded `L^p` norms.
    pub p_list: Vec<f64>,
    /// Exponents tracked by the dissipation ledger.
    pub ledger_p_list: Vec<f64>,
}

impl RunOptions {
    /// Norms at `1, 2, 3, 1 ∓ m, ∞`; ledger at `2, 3, 1 ∓ m`.
    pub fn for_params(params: &ModelParams) -> Self {
        let mut p_list = diagnostics::default_p_list(params);
        p_list.insert(2, 3.0);
        let log_p = 1.0 - params.mobility_exponent();
        RunOptions { p_list: dedup(p_list), ledger_p_list: dedup(vec![2.0, 3.0, log_p]) }
    }
}

fn dedup(list: Vec<f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(list.len());
    for p in list {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Runs from `initial` to `t_end` with default recording options.
pub fn evolve(
    initial: Field,
    params: &ModelParams,
    ctrl: &StepControl,
    t_end: f64,
    snapshot_times: &[f64],
) -> std::result::Result<RunResult, EvolveFailure> {
    evolve_with(initial, params, ctrl, t_end, snapshot_times, &RunOptions::for_params(params))
}

/// Runs from `initial` to `t_end`, recording after every accepted step and
/// landing exactly on each snapshot time.
pub fn evolve_with(
    initial: Field,
    params: &ModelParams,
    ctrl: &StepControl,
    t_end: f64,
    snapshot_times: &[f64],
    options: &RunOptions,
) -> std::result::Result<RunResult, EvolveFailure> {
    let grid = initial.grid();
    let mut stepper = Stepper::new(*params, grid);
    let mut ledger = DissipationLedger::new(&options.ledger_p_list);
    let coeffs = stepper.spectrum(&initial);
    let mut first = diagnostics::record_with_spectrum(&initial, &coeffs, &stepper.mult, 0.0, &options.p_list);
    first.ledger = ledger.totals();
    let mut result = RunResult {
        params: *params,
        records: vec![first],
        snapshots: Vec::new(),
        final_state: RunState::initial(initial),
        rejected_steps: 0,
        guard_activations: 0,
    };
    let fail = |error: Error, result: RunResult| EvolveFailure { error, partial: Box::new(result) };

    let validation = ctrl.validate().and_then(|_| {
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::validation("t_end", format!("need t_end >= 0, got {t_end}")));
        }
        if snapshot_times.windows(2).any(|w| w[0] > w[1]) || snapshot_times.iter().any(|&t| !(t >= 0.0 && t <= t_end)) {
            return Err(Error::validation("snapshot_times", "must be sorted and lie in [0, t_end]"));
        }
        if grid.dimension() != params.d {
            return Err(Error::validation("grid", "grid dimension does not match the model"));
        }
        Ok(())
    });
    if let Err(error) = validation {
        return Err(fail(error, result));
    }

    let mut pending = snapshot_times.iter().copied().peekable();
    while let Some(&t) = pending.peek() {
        if t > 0.0 {
            break;
        }
        result.snapshots.push(Snapshot { time: 0.0, field: result.final_state.field.clone() });
        pending.next();
    }

    let mut left: DissipationRates = ledger.rates(&result.final_state.field, params);
    while result.final_state.time < t_end {
        let now = result.final_state.time;
        let target = pending.peek().copied().unwrap_or(t_end).min(t_end);
        let outcome = match stepper.step(&result.final_state, ctrl, target - now) {
            Ok(o) => o,
            Err(error) => return Err(fail(error, result)),
        };
        let mut state = outcome.state;
        // Land exactly on the target when the step was clipped to it.
        if state.dt_current == target - now {
            state.time = target;
        }
        result.rejected_steps += u64::from(outcome.rejections);
        result.guard_activations += outcome.guard_activations as u64;

        let right = ledger.rates(&state.field, params);
        ledger.advance(&left, &right, state.dt_current);
        left = right;

        let coeffs = stepper.spectrum(&state.field);
        let mut rec =
            diagnostics::record_with_spectrum(&state.field, &coeffs, &stepper.mult, state.time, &options.p_list);
        rec.dt = state.dt_current;
        rec.ledger = ledger.totals();
        result.records.push(rec);

        while let Some(&t) = pending.peek() {
            if t > state.time {
                break;
            }
            result.snapshots.push(Snapshot { time: state.time, field: state.field.clone() });
            pending.next();
        }
        result.final_state = state;
    }
    Ok(result)
}
