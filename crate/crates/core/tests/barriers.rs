use nlpm::barriers::{
    barrier_at, barrier_constant, crossover_time, solve_barrier, step_halving_change, BarrierEnvelope, BarrierParams,
};
use nlpm::diagnostics::fit_powerlaw;
use nlpm::operators::{compute_cdalpha, compute_cds, ModelParams, Regime};
use proptest::prelude::*;

fn standard(regime: Regime, phi0: f64) -> BarrierParams {
    let p = ModelParams::new(1, 0.5, 0.5, regime, 1e-3).unwrap();
    BarrierParams::new(0.5, 1.0, barrier_constant(&p), phi0, regime).unwrap()
}

fn log_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[test]
fn barrier_constant_is_the_product_of_the_kernel_constants() {
    let p = ModelParams::new(1, 0.5, 0.5, Regime::Clogged, 1e-3).unwrap();
    let expected = compute_cds(1, 0.5).unwrap() * compute_cdalpha(1, 1.5).unwrap();
    assert!((barrier_constant(&p) - expected).abs() < 1e-12 * expected);
    let doubled = ModelParams { cdalpha: 2.0 * p.cdalpha, ..p };
    assert!((barrier_constant(&doubled) - 2.0 * expected).abs() < 1e-12 * expected);
}

#[test]
fn step_halving_changes_little() {
    for regime in [Regime::Clogged, Regime::FastDiffusion] {
        for phi0 in [0.0, 1e-3] {
            let bp = standard(regime, phi0);
            let times = log_times(1e-8, 50.0 / bp.c, 200);
            let change = step_halving_change(&bp, &times);
            assert!(change <= 1e-8, "{regime:?} phi0={phi0}: {change:.2e}");
        }
    }
}

#[test]
fn small_time_asymptotics() {
    for regime in [Regime::Clogged, Regime::FastDiffusion] {
        let bp = standard(regime, 0.0);
        let t_hi = 1e-3 * bp.time_scale();
        let times = log_times(1e-9 * bp.time_scale(), t_hi, 60);
        let phi = barrier_at(&bp, &times);
        for (t, v) in times.iter().zip(&phi) {
            let a = bp.small_time_asymptote(*t);
            assert!((v / a - 1.0).abs() < 1e-2, "{regime:?} t={t:.2e}: {v} vs {a}");
        }
        let expected = if regime == Regime::Clogged { 1.0 / 1.5 } else { 2.0 };
        let fit = fit_powerlaw(&times, &phi, (times[0], t_hi)).unwrap();
        assert!((fit.exponent / expected - 1.0).abs() < 1e-2, "{regime:?}: {}", fit.exponent);
    }
}

#[test]
fn relaxes_to_the_mean() {
    for regime in [Regime::Clogged, Regime::FastDiffusion] {
        let bp = standard(regime, 0.0);
        let t = 50.0 / bp.c;
        let curve = solve_barrier(&bp, t, 2).unwrap();
        assert!((curve.values[1] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn envelope_stays_below_the_barrier() {
    for regime in [Regime::Clogged, Regime::FastDiffusion] {
        let bp = standard(regime, 0.0);
        let env = BarrierEnvelope::derive(&bp);
        assert_eq!(env.value(0.0), 0.0);
        assert!((env.value(1e9) - env.prefactor * bp.mass).abs() < 1e-12);
        // Off the derivation grid as well.
        let times = log_times(1e-7 * bp.time_scale(), 1e2 * bp.time_scale(), 997);
        let phi = barrier_at(&bp, &times);
        for (t, v) in times.iter().zip(&phi) {
            assert!(env.value(*t) <= v * (1.0 + 1e-9), "{regime:?} t={t:.3e}");
        }
    }
    assert!(crossover_time(&standard(Regime::Clogged, 0.0)).is_none());
    assert!(crossover_time(&standard(Regime::FastDiffusion, 0.0)).is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curves_are_monotone_and_bounded(
        m in 0.05f64..0.95,
        mass in 0.1f64..5.0,
        c in 0.1f64..5.0,
        frac in 0.0f64..1.0,
        clogged in any::<bool>(),
    ) {
        let regime = if clogged { Regime::Clogged } else { Regime::FastDiffusion };
        let bp = BarrierParams::new(m, mass, c, frac * mass, regime).unwrap();
        let curve = solve_barrier(&bp, 20.0 * bp.time_scale(), 300).unwrap();
        for w in curve.values.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!(curve.values.iter().all(|v| *v >= bp.phi0 && *v <= mass));
    }
}
