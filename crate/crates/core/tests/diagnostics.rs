use std::f64::consts::TAU;

use nlpm::diagnostics::{fit_powerlaw, gagliardo_seminorm, lp_norm, record, DissipationLedger};
use nlpm::dynamics::{evolve_with, prepare_initial_data, InitialDataSpec, InitialKind, RunOptions, StepControl};
use nlpm::operators::{ModelParams, Regime};
use nlpm::theorems::random_band_limited_field;
use nlpm::torus::{make_grid, Field};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noisy_square_root_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t: Vec<f64> = (0..200).map(|i| 1e-3 * 1e3f64.powf(i as f64 / 199.0)).collect();
    let v: Vec<f64> = t.iter().map(|x| 3.0 * x.sqrt() * (1.0 + 0.01 * rng.random_range(-1.0..1.0))).collect();
    let fit = fit_powerlaw(&t, &v, (1e-3, 1.0)).unwrap();
    assert!((fit.exponent - 0.5).abs() < 0.02);
    assert!((fit.prefactor / 3.0 - 1.0).abs() < 0.05);
}

#[test]
fn dissipation_ledger_integrates_rates() {
    // The ledger rates of a steady state vanish; on a decaying cosine the
    // drop of ∫μ² is the interaction dissipation plus the viscous one.
    let g = make_grid(1, 64).unwrap();
    let p = ModelParams::new(1, 0.5, 0.5, Regime::FastDiffusion, 1e-3).unwrap();
    let mut ledger = DissipationLedger::new(&[2.0]);
    let rates = ledger.rates(&Field::constant(g, 1.0), &p);
    assert!(rates.dp[0].abs() < 1e-14 && rates.energy.abs() < 1e-14);

    let spec =
        InitialDataSpec { kind: InitialKind::CosineBump { amplitude: 0.3, wavevector: [1, 0] }, target_mass: 1.0 };
    let f = prepare_initial_data(&spec, &p, g).unwrap();
    let opts = RunOptions { p_list: vec![2.0], ledger_p_list: vec![2.0] };
    let run = evolve_with(f, &p, &StepControl::default(), 0.05, &[], &opts).unwrap();
    let (first, last) = (&run.records[0], run.records.last().unwrap());
    let drop = first.lp(2.0).unwrap().powi(2) - last.lp(2.0).unwrap().powi(2);
    let acc = &last.ledger.per_p[0];
    let a = 0.3 * 1.0;
    let viscous = 2.0 * p.epsilon * TAU * TAU * a * a / 2.0 * 0.05;
    assert!(acc.dp > 0.0 && acc.dp_slack < 2e-2 * acc.dp, "{acc:?} {drop}");
    assert!(drop >= acc.dp - acc.dp_slack, "{} vs {}", drop, acc.dp);
    assert!(drop <= acc.dp + acc.dp_slack + viscous, "{} vs {}", drop, acc.dp);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_norms_increase_with_p(seed in any::<u64>(), floor in 0.0f64..1.0) {
        let g = make_grid(1, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_band_limited_field(g, 8, floor, &mut rng);
        let ps = [1.0, 1.5, 2.0, 3.0, 7.0, f64::INFINITY];
        let norms: Vec<f64> = ps.iter().map(|p| lp_norm(&f, *p)).collect();
        for w in norms.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
        prop_assert!((norms[0] - f.mean()).abs() < 1e-12);
        prop_assert!((norms[5] - f.max().1).abs() < 1e-15);
    }

    #[test]
    fn records_are_consistent(seed in any::<u64>(), floor in 0.0f64..1.0) {
        let g = make_grid(2, 16).unwrap();
        let p = ModelParams::new(2, 1.0, 0.5, Regime::Clogged, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_band_limited_field(g, 3, floor, &mut rng);
        let r = record(&f, &p, 0.5, &[1.0, 2.0, f64::INFINITY]);
        prop_assert!(r.min_value <= r.mass && r.mass <= r.max_value);
        prop_assert_eq!(r.linf(), r.max_value);
        prop_assert!(r.energy >= 0.0);
        prop_assert!(r.spectral_tail.abs() < 1e-12 * r.linf());
        prop_assert_eq!(f.values()[r.argmin], r.min_value);
        prop_assert_eq!(f.values()[r.argmax], r.max_value);
    }

    #[test]
    fn seminorm_is_homogeneous(seed in any::<u64>(), order in 0.05f64..0.95, scale in 0.1f64..10.0) {
        let g = make_grid(1, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_band_limited_field(g, 6, 0.0, &mut rng);
        let a = gagliardo_seminorm(&f, order).unwrap();
        let b = gagliardo_seminorm(&f.map(|v| scale * v + 4.0), order).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((b - scale * a).abs() < 1e-10 * (1.0 + b));
    }
}

#[test]
fn single_mode_seminorm() {
    let g = make_grid(1, 32).unwrap();
    let f = Field::from_fn(g, |x| (TAU * x[0]).cos());
    for order in [0.25, 0.5, 0.75] {
        let expected = (TAU.powf(2.0 * order) / 2.0).sqrt();
        assert!((gagliardo_seminorm(&f, order).unwrap() - expected).abs() < 1e-12);
    }
}
