//! Gamma-function helpers and Kummer's confluent hypergeometric function.

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Kummer's `M(a, b, z)` for real arguments with `b > 0`.
///
/// Uses the power series for positive `z`, Kummer's transformation for
/// negative `z`, and the large-argument expansion when `z < -650`.
pub fn hyp1f1(a: f64, b: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    if z < -650.0 {
        return hyp1f1_neg_asymptotic(a, b, -z);
    }
    if z < 0.0 {
        return z.exp() * series(b - a, b, -z);
    }
    series(a, b, z)
}

fn series(a: f64, b: f64, z: f64) -> f64 {
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    for k in 0..20_000 {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * z / (kf + 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `M(a, b, -x)` for large positive `x`; the exponentially small branch is dropped.
fn hyp1f1_neg_asymptotic(a: f64, b: f64, x: f64) -> f64 {
    let lead = (ln_gamma(b) - ln_gamma(b - a)).exp() * x.powf(-a);
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..200 {
        let kf = k as f64;
        let next = term * (a + kf) * (a - b + 1.0 + kf) / ((kf + 1.0) * x);
        if next.abs() >= prev.abs() || next.abs() < 1e-17 * sum.abs() {
            break;
        }
        prev = term;
        term = next;
        sum += term;
    }
    lead * sum
}
