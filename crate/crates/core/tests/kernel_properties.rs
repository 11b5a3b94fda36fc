use proptest::prelude::*;
use spde_bounds::kernels::{heat_factorization_check, CorrelationKernel};
use spde_bounds::stats::{geomspace, log_log_slope};

fn heat_slope(k: &CorrelationKernel, lo: f64, hi: f64) -> f64 {
    let ts = geomspace(lo, hi, 16);
    let hs: Vec<f64> = ts.iter().map(|&t| k.h_heat_quadrature(t).unwrap()).collect();
    log_log_slope(&ts, &hs).unwrap()
}

fn wave_slope(k: &CorrelationKernel, lo: f64, hi: f64) -> f64 {
    let ts = geomspace(lo, hi, 16);
    let hs: Vec<f64> = ts.iter().map(|&t| k.h_wave_quadrature(t).unwrap()).collect();
    log_log_slope(&ts, &hs).unwrap()
}

#[test]
fn quadrature_matches_closed_forms_on_fifty_points() {
    let kernels = [
        CorrelationKernel::white(),
        CorrelationKernel::constant(1).unwrap(),
        CorrelationKernel::riesz(0.5, 1).unwrap(),
        CorrelationKernel::riesz(1.5, 2).unwrap(),
        CorrelationKernel::ornstein_uhlenbeck(2.0, 1).unwrap(),
        CorrelationKernel::ornstein_uhlenbeck(2.0, 2).unwrap(),
        CorrelationKernel::ornstein_uhlenbeck(2.0, 3).unwrap(),
    ];
    for k in kernels {
        for t in geomspace(1e-3, 1e2, 50) {
            let a = k.h_heat(t).unwrap();
            let b = k.h_heat_quadrature(t).unwrap();
            assert!((a - b).abs() <= 1e-6 * a, "{k:?} t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn large_time_heat_exponents() {
    for alpha in [0.3, 0.5, 0.9] {
        let k = CorrelationKernel::riesz(alpha, 1).unwrap();
        assert!((heat_slope(&k, 1e3, 1e6) - (1.0 - alpha / 2.0)).abs() < 0.02);
    }
    // the correction to k(s) is O(s^{-d/2}); these pairs keep it well below the leading term
    for (nu, d) in [(0.3, 1), (0.5, 1), (0.5, 2), (1.0, 3)] {
        let k = CorrelationKernel::bessel_spectral(nu, d).unwrap();
        let want = 1.0 - f64::min(nu, d as f64) / 2.0;
        let got = heat_slope(&k, 1e3, 1e6);
        assert!((got - want).abs() < 0.05, "nu={nu} d={d}: {got} vs {want}");
    }
    let b = CorrelationKernel::bessel_potential(1.0, 1).unwrap();
    assert!((heat_slope(&b, 1e3, 1e6) - 0.5).abs() < 0.05);
    let ou = CorrelationKernel::ornstein_uhlenbeck(1.0, 1).unwrap();
    assert!((heat_slope(&ou, 1e3, 1e6) - 0.5).abs() < 0.05);
}

#[test]
fn large_time_wave_exponents() {
    for alpha in [0.2, 0.5, 0.8] {
        let k = CorrelationKernel::riesz(alpha, 1).unwrap();
        assert!((wave_slope(&k, 1e3, 1e6) - (3.0 - alpha)).abs() < 0.02);
    }
    assert!((wave_slope(&CorrelationKernel::white(), 1e3, 1e6) - 2.0).abs() < 0.05);
    assert!((wave_slope(&CorrelationKernel::constant(1).unwrap(), 1e3, 1e6) - 3.0).abs() < 0.05);
    for nu in [1.5, 3.0] {
        let k = CorrelationKernel::bessel_spectral(nu, 1).unwrap();
        assert!((wave_slope(&k, 1e3, 1e6) - 2.0).abs() < 0.05, "nu={nu}");
    }
    let k = CorrelationKernel::bessel_spectral(0.5, 1).unwrap();
    assert!((wave_slope(&k, 1e3, 1e6) - 2.5).abs() < 0.05);
    let b = CorrelationKernel::bessel_potential(2.0, 1).unwrap();
    assert!((wave_slope(&b, 1e3, 1e6) - 2.0).abs() < 0.05);
}

#[test]
fn small_time_slope_is_one_for_bounded_correlations() {
    let kernels = [
        CorrelationKernel::ornstein_uhlenbeck(1.0, 1).unwrap(),
        CorrelationKernel::ornstein_uhlenbeck(2.0, 3).unwrap(),
        CorrelationKernel::bessel_spectral(0.5, 1).unwrap(),
        CorrelationKernel::bessel_spectral(3.0, 2).unwrap(),
        // f(0) is finite only when nu > d
        CorrelationKernel::bessel_potential(3.0, 1).unwrap(),
        CorrelationKernel::bessel_potential(4.0, 2).unwrap(),
    ];
    for k in kernels {
        let s = heat_slope(&k, 1e-6, 1e-4);
        assert!((s - 1.0).abs() < 0.02, "{k:?}: {s}");
        if k.dim() == 1 {
            let s = wave_slope(&k, 1e-4, 1e-2);
            assert!((s - 3.0).abs() < 0.02, "{k:?}: wave {s}");
        }
    }
}

#[test]
fn small_time_limit_of_h_over_t_is_f_at_zero() {
    // h(t)/t -> f(0) as t -> 0
    let k = CorrelationKernel::bessel_spectral(1.0, 1).unwrap();
    let t = 1e-6;
    assert!((k.h_heat(t).unwrap() / t - 1.0).abs() < 1e-5);
    // f = pi e^{-|x|} here, so the correction is O(sqrt(t))
    let b = CorrelationKernel::bessel_potential(2.0, 1).unwrap();
    let t = 1e-8;
    assert!((b.h_heat(t).unwrap() / t / std::f64::consts::PI - 1.0).abs() < 1e-3);
}

fn any_kernel() -> impl Strategy<Value = CorrelationKernel> {
    prop_oneof![
        Just(CorrelationKernel::white()),
        (1usize..4).prop_map(|d| CorrelationKernel::constant(d).unwrap()),
        (0.05f64..0.95, 1usize..4).prop_map(|(a, d)| CorrelationKernel::riesz(a, d).unwrap()),
        (0.2f64..2.0, 1usize..4).prop_map(|(a, d)| CorrelationKernel::ornstein_uhlenbeck(a, d).unwrap()),
        (0.2f64..4.0, 1usize..4).prop_map(|(n, d)| CorrelationKernel::bessel_spectral(n, d).unwrap()),
        (0.2f64..4.0).prop_map(|n| CorrelationKernel::bessel_potential(n, 1).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn h_is_nondecreasing_and_vanishes_at_zero(k in any_kernel(), t in 1e-3f64..1e3, r in 1.0f64..3.0) {
        prop_assert_eq!(k.h_heat(0.0).unwrap(), 0.0);
        let a = k.h_heat(t).unwrap();
        let b = k.h_heat(t * r).unwrap();
        prop_assert!(a > 0.0 && b >= a * (1.0 - 1e-12));
        if k.dim() == 1 {
            let a = k.h_wave(t).unwrap();
            let b = k.h_wave(t * r).unwrap();
            prop_assert!(a > 0.0 && b >= a * (1.0 - 1e-12));
        }
    }

    #[test]
    fn k_is_nonincreasing(k in any_kernel(), t in 1e-3f64..1e3, r in 1.0f64..3.0) {
        let a = k.k_eval(t).unwrap();
        let b = k.k_eval(t * r).unwrap();
        prop_assert!(a > 0.0 && b <= a * (1.0 + 1e-10));
    }

    #[test]
    fn heat_kernel_factorizes(t in 0.01f64..10.0, frac in 0.01f64..0.99, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let s = frac * t;
        let res = heat_factorization_check(t, s, a, b).unwrap();
        let scale = spde_bounds::kernels::heat_kernel(t - s, a) * spde_bounds::kernels::heat_kernel(s, b);
        prop_assert!(res <= 1e-12 * scale.max(1e-300) + 1e-300);
    }
}
