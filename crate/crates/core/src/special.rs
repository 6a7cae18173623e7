//! Real special functions used by the operator constants and the lattice
//! quadrature corrections.

use std::f64::consts::PI;

pub use statrs::function::gamma::gamma;

/// Sum of the alternating series `Σ_k (-1)^k a(k)` by the
/// Cohen–Rodriguez Villegas–Zagier acceleration. Exact to round-off for
/// completely monotone `a`, which covers every series used here.
fn alternating_sum(a: impl Fn(f64) -> f64) -> f64 {
    const TERMS: i32 = 48;
    let n = f64::from(TERMS);
    let mut d = (3.0 + 8f64.sqrt()).powi(TERMS);
    d = 0.5 * (d + 1.0 / d);
    let mut b = -1.0;
    let mut c = -d;
    let mut sum = 0.0;
    for k in 0..TERMS {
        let kf = f64::from(k);
        c = b - c;
        sum += c * a(kf);
        b *= (kf + n) * (kf - n) / ((kf + 0.5) * (kf + 1.0));
    }
    sum / d
}

/// Riemann zeta function on the real line, `s != 1`.
pub fn zeta(s: f64) -> f64 {
    assert!(s != 1.0, "zeta has a pole at s = 1");
    if s < 0.0 {
        // Functional equation; 1 - s > 1 keeps the eta series well inside
        // its region of fast convergence.
        let reflected = zeta(1.0 - s);
        return 2f64.powf(s) * PI.powf(s - 1.0) * (0.5 * PI * s).sin() * gamma(1.0 - s) * reflected;
    }
    let eta = alternating_sum(|k| (k + 1.0).powf(-s));
    eta / (1.0 - 2f64.powf(1.0 - s))
}

/// Dirichlet beta function `Σ_k (-1)^k (2k+1)^{-s}` for `s > 0`.
pub fn dirichlet_beta(s: f64) -> f64 {
    alternating_sum(|k| (2.0 * k + 1.0).powf(-s))
}

/// Surface measure of the unit sphere in `R^d`.
pub fn unit_sphere_measure(d: usize) -> f64 {
    let half = 0.5 * d as f64;
    2.0 * PI.powf(half) / gamma(half)
}
