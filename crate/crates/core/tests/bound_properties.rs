use proptest::prelude::*;
use spde_bounds::bounds::{
    j1, moment_bound_heat, scenario_preset, tail_bound, BoundConstants, Equation, InitialCondition,
    PresetOverrides, Regime, PRESET_NAMES,
};
use spde_bounds::diffusion::DiffusionCoefficient;
use spde_bounds::kernels::CorrelationKernel;
use spde_bounds::stats::geomspace;

fn families() -> Vec<DiffusionCoefficient> {
    vec![
        DiffusionCoefficient::ratio_power(0.5, 0.0).unwrap(),
        DiffusionCoefficient::ratio_power(0.25, 2.0).unwrap(),
        DiffusionCoefficient::log_perturbed(0.5, 1.0).unwrap(),
        DiffusionCoefficient::log_perturbed(0.0, -0.5).unwrap(),
        DiffusionCoefficient::log_perturbed(1.0, 1.0).unwrap(),
        DiffusionCoefficient::iterated_log(1.0, 2.0).unwrap(),
        DiffusionCoefficient::constant(1.0).unwrap(),
    ]
}

#[test]
fn preset_exponents_match_predictions() {
    for name in PRESET_NAMES {
        let s = scenario_preset(name, &PresetOverrides::default()).unwrap();
        let c = s.exponent_check(&BoundConstants::default()).unwrap();
        assert!(c.passed, "{name}: fitted {} vs predicted {}", c.fitted, c.predicted);
    }
}

#[test]
fn preset_exponents_follow_parameter_overrides() {
    for (alpha, beta) in [(0.25, 0.3), (0.75, 0.8)] {
        let ov = PresetOverrides { alpha: Some(alpha), beta: Some(beta), ..Default::default() };
        let s = scenario_preset("alpha-riesz-d1", &ov).unwrap();
        let c = s.exponent_check(&BoundConstants::default()).unwrap();
        let want = (1.0 - beta / 2.0) / (1.0 - alpha);
        assert!((c.fitted - want).abs() < 0.05, "{} vs {want}", c.fitted);
    }
    let ov = PresetOverrides { b: Some(1.2), ..Default::default() };
    let c = scenario_preset("frac-alpha", &ov).unwrap().exponent_check(&BoundConstants::default()).unwrap();
    assert!((c.fitted - 2.0 * (1.5 * 1.2 - 1.0)).abs() < 0.05);
}

#[test]
fn heat_total_is_monotone_in_p_and_t() {
    let consts = BoundConstants::default();
    let init = InitialCondition::constant(1.0).unwrap();
    let kern = CorrelationKernel::white();
    let ps = geomspace(2.0, 200.0, 20);
    let ts = geomspace(0.01, 1e4, 20);
    for coeff in families() {
        let grid: Vec<Vec<f64>> = ps
            .iter()
            .map(|&p| {
                ts.iter()
                    .map(|&t| moment_bound_heat(&coeff, &kern, &init, t, 0.0, p, Regime::Auto, &consts).unwrap().total)
                    .collect()
            })
            .collect();
        for i in 0..ps.len() {
            for j in 0..ts.len() {
                if i + 1 < ps.len() {
                    assert!(grid[i + 1][j] >= grid[i][j] * (1.0 - 1e-12), "{:?} p", coeff.family());
                }
                if j + 1 < ts.len() {
                    assert!(grid[i][j + 1] >= grid[i][j] * (1.0 - 1e-12), "{:?} t", coeff.family());
                }
            }
        }
    }
}

#[test]
fn power_law_j1_exponent_in_one_dimension() {
    // J1 <= c2 t^{1 - ell - beta/2}; in d = 1 the engine's bound has exactly this exponent
    let (ell, beta) = (0.5, 0.5);
    let init = InitialCondition::power_law(ell).unwrap();
    let kern = CorrelationKernel::riesz(beta, 1).unwrap();
    let scaled: Vec<f64> = geomspace(1e-3, 1e3, 7)
        .into_iter()
        .map(|t| j1(&init, &kern, t, 0.0).unwrap() * t.powf(-(1.0 - ell - beta / 2.0)))
        .collect();
    for v in &scaled {
        assert!((v / scaled[0] - 1.0).abs() < 1e-10);
    }
}

// Ranges keep F^-1 representable: for alpha = 1 it grows like exp(y^(1/2beta)).
fn any_family() -> impl Strategy<Value = DiffusionCoefficient> {
    prop_oneof![
        (0.0f64..0.95, 0.0f64..3.0).prop_map(|(a, r)| DiffusionCoefficient::ratio_power(a, r).unwrap()),
        (0.05f64..0.95, -1.0f64..1.0).prop_map(|(a, b)| DiffusionCoefficient::log_perturbed(a, b).unwrap()),
        (1.0f64..2.0).prop_map(|b| DiffusionCoefficient::log_perturbed(1.0, b).unwrap()),
        (1.0f64..2.0, 1.5f64..3.0).prop_filter_map("threshold scan", |(b, k)| DiffusionCoefficient::iterated_log(b, k).ok()),
    ]
}

fn any_kernel() -> impl Strategy<Value = CorrelationKernel> {
    prop_oneof![
        Just(CorrelationKernel::white()),
        (0.1f64..0.9).prop_map(|a| CorrelationKernel::riesz(a, 1).unwrap()),
        (0.5f64..2.0).prop_map(|a| CorrelationKernel::ornstein_uhlenbeck(a, 1).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn total_reproduces_its_terms(
        coeff in any_family(),
        kern in any_kernel(),
        t in 1.0f64..100.0,
        x in -3.0f64..3.0,
        p in 2.0f64..50.0,
        which in 0usize..4,
    ) {
        let regime = [Regime::Auto, Regime::General, Regime::Asymptotic, Regime::BoundedInitial][which];
        let init = InitialCondition::constant(1.5).unwrap();
        let r = moment_bound_heat(&coeff, &kern, &init, t, x, p, regime, &BoundConstants::default()).unwrap();
        prop_assert_eq!(r.total, r.term_j0sq + r.term_j1_over_h + r.term_km + r.term_finv);
        prop_assert!(r.term_j0sq >= 0.0 && r.term_j1_over_h >= 0.0 && r.term_km >= 0.0 && r.term_finv >= 0.0);
    }

    #[test]
    fn concave_bound_never_exceeds_general(
        alpha in 0.0f64..0.95,
        r in 0.0f64..3.0,
        t in 0.1f64..100.0,
        p in 2.0f64..50.0,
    ) {
        let coeff = DiffusionCoefficient::ratio_power(alpha, r).unwrap();
        let kern = CorrelationKernel::white();
        let init = InitialCondition::dirac(1.0).unwrap();
        let c = BoundConstants::default();
        let conc = moment_bound_heat(&coeff, &kern, &init, t, 0.5, p, Regime::Concave, &c).unwrap();
        let gen = moment_bound_heat(&coeff, &kern, &init, t, 0.5, p, Regime::General, &c).unwrap();
        prop_assert!(conc.total <= gen.total);
    }

    #[test]
    fn tail_bound_is_a_nonincreasing_probability(
        coeff in any_family(),
        kern in any_kernel(),
        t in 1.0f64..100.0,
        z in 0.01f64..1e4,
        ratio in 1.0f64..10.0,
        c_star in 0.2f64..5.0,
    ) {
        let consts = BoundConstants { c_star, ..Default::default() };
        let a = tail_bound(&coeff, &kern, t, z, &Equation::Heat, &consts).unwrap();
        let b = tail_bound(&coeff, &kern, t, z * ratio, &Equation::Heat, &consts).unwrap();
        prop_assert!(a.probability <= 1.0 && a.probability >= 0.0);
        prop_assert!(b.probability <= a.probability * (1.0 + 1e-12));
        prop_assert_eq!(a.l_t, b.l_t);
    }

    #[test]
    fn exponential_initial_data_obeys_its_bound(
        ell in -2.0f64..2.0,
        t in 0.01f64..20.0,
        x in 0.0f64..5.0,
    ) {
        let mu = InitialCondition::exponential(ell).unwrap();
        let j0 = mu.j0(t, x, 1).unwrap();
        prop_assert!(j0 > 0.0);
        prop_assert!(j0 <= 2.0 * (ell * ell * t + ell * x).exp().max(1.0));
    }
}
