//! Self-check suites: every closed form against its brute-force reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffusion::DiffusionCoefficient;
use crate::envelope::{fixed_point_oracle, newton_step_bound, Envelope};
use crate::error::{Error, Result};
use crate::kernels::CorrelationKernel;
use crate::sim::{cell_covariance, NoisePlan};
use crate::stats::{geomspace, log_log_slope};

pub const SUITES: [&str; 4] = ["envelope", "gmm", "kernels", "noise"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(suite: &'static str, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check { suite, name: name.into(), passed, detail: detail.into() }
}

/// Runs one suite by name; `all` runs every suite.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>> {
    match name {
        "envelope" => Ok(envelope_suite()),
        "gmm" => Ok(gmm_suite(seed)),
        "kernels" => Ok(kernel_suite()),
        "noise" => Ok(noise_suite(seed)),
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
        other => Err(Error::Config(format!("unknown suite `{other}` ({}, all)", SUITES.join(", ")))),
    }
}

/// The families with a closed-form `F^-1`.
pub fn closed_inverse_families() -> Vec<DiffusionCoefficient> {
    let mut out = Vec::new();
    for alpha in [0.0, 0.25, 0.5, 0.75] {
        for r in [0.0, 1.0, 2.0] {
            out.push(DiffusionCoefficient::ratio_power(alpha, r).expect("valid ratio-power"));
        }
    }
    out.push(DiffusionCoefficient::log_perturbed(1.0, 1.0).expect("valid log family"));
    out.push(DiffusionCoefficient::iterated_log(1.0, 2.0).expect("valid iterated log"));
    out
}

/// Largest relative gap between closed-form and bisection `F^-1` over `ys`;
/// `Err` when only one of them exists somewhere.
pub fn inverse_gap(c: &DiffusionCoefficient, ys: &[f64]) -> std::result::Result<f64, String> {
    let env = Envelope::new(c);
    let mut worst: f64 = 0.0;
    for &y in ys {
        match (env.f_inverse(y), env.f_inverse_numeric(y)) {
            (Ok(a), Ok(b)) => worst = worst.max((a - b).abs() / a.abs().max(1.0)),
            (Err(_), Err(_)) => {}
            (a, b) => return Err(format!("at y = {y}: closed {a:?}, bisection {b:?}")),
        }
    }
    Ok(worst)
}

fn envelope_suite() -> Vec<Check> {
    let ys = geomspace(1e-3, 1e3, 1000);
    let mut out = Vec::new();
    for c in closed_inverse_families() {
        let name = format!("closed F^-1 = bisection, {:?}", c.family());
        out.push(match inverse_gap(&c, &ys) {
            Ok(g) => check("envelope", name, g <= 1e-8, format!("max rel gap {g:.2e}")),
            Err(e) => check("envelope", name, false, e),
        });
    }
    for c in closed_inverse_families() {
        let env = Envelope::new(&c);
        let mut bad = None;
        for y in geomspace(1e-6, 1e6, 200) {
            let Ok(inv) = env.f_inverse(y) else { continue };
            if !(env.f_eval(inv).unwrap_or(f64::NAN) >= y * (1.0 - 1e-9)) {
                bad = Some(format!("F(F^-1({y})) < {y}"));
                break;
            }
        }
        for x in geomspace(env.floor().max(1e-6), 1e8, 200) {
            let Ok(fx) = env.f_eval(x) else { continue };
            if fx.is_finite() && !(env.f_inverse(fx).map_or(true, |v| v <= x * (1.0 + 1e-9))) {
                bad = Some(format!("F^-1(F({x})) > {x}"));
                break;
            }
        }
        out.push(check(
            "envelope",
            format!("Galois inequalities, {:?}", c.family()),
            bad.is_none(),
            bad.unwrap_or_else(|| "ok".into()),
        ));
    }
    out
}

fn random_family(rng: &mut ChaCha8Rng) -> DiffusionCoefficient {
    loop {
        let c = match rng.random_range(0..4) {
            0 => DiffusionCoefficient::ratio_power(rng.random_range(0.0..0.95), rng.random_range(0.0..3.0)),
            1 => DiffusionCoefficient::log_perturbed(rng.random_range(0.0..0.9), rng.random_range(-1.0..2.0)),
            2 => DiffusionCoefficient::iterated_log(rng.random_range(0.5..2.0), rng.random_range(1.5..3.0)),
            _ => DiffusionCoefficient::constant(rng.random_range(0.1..3.0)),
        };
        if let Ok(c) = c {
            return c;
        }
    }
}

/// `10^4` random instances of `x <= k rho_2(x) + b`: the largest solution never
/// exceeds `2 F^-1(k) + 2b`.
pub fn gmm_random_instances(seed: u64, count: usize) -> (usize, usize, Option<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut checked, mut violations, mut first) = (0, 0, None);
    for _ in 0..count {
        let c = random_family(&mut rng);
        let k = 10f64.powf(rng.random_range(-3.0..1.0));
        let b = rng.random_range(0.0..100.0);
        let env = Envelope::new(&c);
        let (Ok(oracle), Ok(bound)) = (fixed_point_oracle(|x| c.rho2(x), k, b), env.solve_concave_inequality(k, b))
        else {
            continue;
        };
        checked += 1;
        if oracle > bound * (1.0 + 1e-9) {
            violations += 1;
            first.get_or_insert_with(|| format!("{:?}, k = {k}, b = {b}: {oracle} > {bound}", c.family()));
        }
    }
    (checked, violations, first)
}

fn gmm_suite(seed: u64) -> Vec<Check> {
    let (checked, violations, first) = gmm_random_instances(seed, 10_000);
    let mut out = vec![check(
        "gmm",
        "fixed point <= 2 F^-1(k) + 2b on 10^4 random instances",
        violations == 0 && checked > 9_000,
        match first {
            Some(f) => format!("{violations} violations of {checked}; first: {f}"),
            None => format!("{checked} instances, 0 violations"),
        },
    )];
    let x = fixed_point_oracle(|x| 0.4 * x.sqrt(), 1.0, 0.125);
    out.push(match x {
        Ok(x) => check("gmm", "x = 0.4 sqrt(x) + 1/8 has largest root 0.367481", (x - 0.367481).abs() < 1e-5, format!("{x:.7}")),
        Err(e) => check("gmm", "x = 0.4 sqrt(x) + 1/8 has largest root 0.367481", false, e.to_string()),
    });
    let n = newton_step_bound(0.4, 0.125, 0.5);
    out.push(match n {
        Ok(v) => check("gmm", "Newton step bound 0.41", v == 0.41 || (v - 0.41).abs() < 1e-15, format!("{v}")),
        Err(e) => check("gmm", "Newton step bound 0.41", false, e.to_string()),
    });
    out
}

fn slope_check(name: String, got: Result<f64>, want: f64, tol: f64) -> Check {
    match got {
        Ok(g) => check("kernels", name, (g - want).abs() <= tol, format!("{g:.4} vs {want:.4}")),
        Err(e) => check("kernels", name, false, e.to_string()),
    }
}

fn slope_of<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64) -> Result<f64> {
    let ts = geomspace(lo, hi, 16);
    let hs = ts.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    log_log_slope(&ts, &hs)
}

fn kernel_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let closed = [
        CorrelationKernel::white(),
        CorrelationKernel::constant(1).expect("constant"),
        CorrelationKernel::riesz(0.5, 1).expect("riesz"),
        CorrelationKernel::riesz(1.5, 3).expect("riesz"),
        CorrelationKernel::ornstein_uhlenbeck(2.0, 1).expect("ou"),
        CorrelationKernel::ornstein_uhlenbeck(2.0, 2).expect("ou"),
        CorrelationKernel::ornstein_uhlenbeck(2.0, 3).expect("ou"),
    ];
    for k in &closed {
        let mut worst: f64 = 0.0;
        let mut err = None;
        for t in geomspace(1e-3, 1e2, 50) {
            match (k.h_heat(t), k.h_heat_quadrature(t)) {
                (Ok(a), Ok(b)) => worst = worst.max((a - b).abs() / a),
                (a, b) => {
                    err = Some(format!("t = {t}: {a:?} / {b:?}"));
                    break;
                }
            }
        }
        let name = format!("h closed form = quadrature, {:?}", k.variant());
        out.push(match err {
            Some(e) => check("kernels", name, false, e),
            None => check("kernels", name, worst <= 1e-6, format!("max rel gap {worst:.2e}")),
        });
    }
    for alpha in [0.3, 0.5, 0.9] {
        let k = CorrelationKernel::riesz(alpha, 1).expect("riesz");
        out.push(slope_check(format!("heat Riesz alpha = {alpha} exponent"), slope_of(|t| k.h_heat_quadrature(t), 1e3, 1e6), 1.0 - alpha / 2.0, 0.05));
        out.push(slope_check(format!("wave Riesz alpha = {alpha} exponent"), slope_of(|t| k.h_wave_quadrature(t), 1e3, 1e6), 3.0 - alpha, 0.05));
    }
    for (nu, d) in [(0.3, 1), (0.5, 1), (0.5, 2), (1.0, 3)] {
        let k = CorrelationKernel::bessel_spectral(nu, d).expect("bessel");
        let want = 1.0 - f64::min(nu, d as f64) / 2.0;
        out.push(slope_check(format!("heat Bessel-spectral nu = {nu}, d = {d} exponent"), slope_of(|t| k.h_heat_quadrature(t), 1e3, 1e6), want, 0.05));
    }
    let w = CorrelationKernel::white();
    out.push(slope_check("wave white exponent".into(), slope_of(|t| w.h_wave_quadrature(t), 1e3, 1e6), 2.0, 0.05));
    let c = CorrelationKernel::constant(1).expect("constant");
    out.push(slope_check("wave constant exponent".into(), slope_of(|t| c.h_wave_quadrature(t), 1e3, 1e6), 3.0, 0.05));
    out
}

/// Empirical `Cov(W_0, W_lag)` over `draws` slices with its standard error.
pub fn sampled_covariance(plan: &NoisePlan, lag: usize, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = plan.sampler();
    let mut buf = vec![0.0; plan.n()];
    let prods: Vec<f64> = (0..draws)
        .map(|_| {
            s.fill(&mut rng, &mut buf);
            buf[0] * buf[lag]
        })
        .collect();
    let m = prods.iter().sum::<f64>() / draws as f64;
    let v = prods.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    (m, (v / draws as f64).sqrt())
}

fn noise_suite(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let (dx, dt) = (0.05, 1e-3);
    match NoisePlan::new(&CorrelationKernel::white(), dx, dt, 16) {
        Ok(plan) => {
            let (m, se) = sampled_covariance(&plan, 0, 100_000, seed);
            out.push(check("noise", "white cell variance dt/dx", (m - dt / dx).abs() <= 3.0 * se, format!("{m:.5} vs {:.5} (se {se:.1e})", dt / dx)));
        }
        Err(e) => out.push(check("noise", "white cell variance dt/dx", false, e.to_string())),
    }
    let (dx, dt, n) = (0.1, 0.01, 256);
    let kern = CorrelationKernel::riesz(0.5, 1).expect("riesz");
    match NoisePlan::new(&kern, dx, dt, n) {
        Ok(plan) => {
            for lag in [0usize, 1, 4, 16] {
                let want = dt * cell_covariance(&kern, lag, dx).unwrap_or(f64::NAN);
                let (m, se) = sampled_covariance(&plan, lag, 40_000, seed.wrapping_add(lag as u64 + 1));
                out.push(check("noise", format!("Riesz alpha = 0.5 lag-{lag} covariance"), (m - want).abs() <= 3.0 * se, format!("{m:.5} vs {want:.5} (se {se:.1e})")));
            }
        }
        Err(e) => out.push(check("noise", "Riesz alpha = 0.5 sampling", false, e.to_string())),
    }
    match NoisePlan::new(&CorrelationKernel::constant(1).expect("constant"), 0.1, 0.01, 32) {
        Ok(plan) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = vec![0.0; 32];
            plan.sampler().fill(&mut rng, &mut w);
            out.push(check("noise", "constant field is rank one", w.iter().all(|v| (v - w[0]).abs() <= 1e-15), format!("{:.4}", w[0])));
        }
        Err(e) => out.push(check("noise", "constant field is rank one", false, e.to_string())),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        for s in ["envelope", "gmm", "noise"] {
            for c in run_suite(s, 1).unwrap() {
                assert!(c.passed, "{}: {} ({})", c.suite, c.name, c.detail);
            }
        }
        assert!(run_suite("nope", 1).is_err());
    }
}
