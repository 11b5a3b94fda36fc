//! The application catalog: fully wired bound pipelines with the growth shape
//! each application predicts.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    moment_bound_fractional, moment_bound_heat, moment_bound_wave, BoundConstants, BoundReport, Equation,
    FractionalParams, InitialCondition, Regime, WaveInit,
};
use crate::diffusion::DiffusionCoefficient;
use crate::error::{Error, Result};
use crate::kernels::CorrelationKernel;
use crate::stats::{geomspace, linear_fit};

pub const PRESET_NAMES: [&str; 12] = [
    "alpha-white",
    "alpha-riesz-d1",
    "alpha-riesz-dn",
    "alpha-powerlaw-init",
    "alpha-exp-init",
    "log-case-i",
    "log-case-ii",
    "log-case-iii",
    "vsv",
    "bounded-rho",
    "frac-alpha",
    "wave-alpha",
];

/// Axes of the exponent regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// `log total` against `log t`.
    LogVsLogT,
    /// `log log total` against `log t`.
    LogLogVsLogT,
    /// `log total` against `t`.
    LogVsT,
}

impl Scale {
    fn abscissa(&self, t: f64) -> f64 {
        match self {
            Scale::LogVsT => t,
            _ => t.ln(),
        }
    }

    fn ordinate(&self, total: f64) -> f64 {
        match self {
            Scale::LogLogVsLogT => total.ln().ln(),
            _ => total.ln(),
        }
    }
}

/// Optional parameter overrides; `beta` is the preset's own beta (noise
/// exponent for the Riesz presets, log power for the log and vsv presets).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetOverrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub b: Option<f64>,
    pub ell: Option<f64>,
    pub p: Option<f64>,
}

// The log and iterated-log envelopes sit on their floor 2M^2 until C_* p h(t) is
// large; these orders put the whole regression window past it.
const LARGE_P_LOG: f64 = 100.0;
const LARGE_P_VSV: f64 = 1e4;

type ShapeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub coeff: DiffusionCoefficient,
    pub kernel: CorrelationKernel,
    pub init: InitialCondition,
    pub wave_init: Option<WaveInit>,
    pub equation: Equation,
    pub regime: Regime,
    pub p: f64,
    pub x: f64,
    pub scale: Scale,
    pub t_range: (f64, f64),
    /// Human-readable predicted shape.
    pub predicted: String,
    /// The predicted shape at `(p, t)`, already mapped through `scale`.
    shape: ShapeFn,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("coeff", &self.coeff)
            .field("kernel", &self.kernel)
            .field("init", &self.init)
            .field("equation", &self.equation)
            .field("regime", &self.regime)
            .field("p", &self.p)
            .field("predicted", &self.predicted)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentCheck {
    pub fitted: f64,
    pub predicted: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Scenario {
    pub fn evaluate(&self, t: f64, p: f64, consts: &BoundConstants) -> Result<BoundReport> {
        match &self.equation {
            Equation::Heat => {
                moment_bound_heat(&self.coeff, &self.kernel, &self.init, t, self.x, p, self.regime, consts)
            }
            Equation::Wave => {
                let wi = self.wave_init.as_ref().ok_or_else(|| Error::Config("wave preset without data".into()))?;
                moment_bound_wave(&self.coeff, &self.kernel, wi, t, self.x, p, self.regime, consts)
            }
            Equation::Fractional(fp) => {
                moment_bound_fractional(&self.coeff, fp, &self.init, t, self.x, p, self.regime, consts)
            }
        }
    }

    /// The predicted shape at `(p, t)`, mapped through [`Scale`].
    pub fn predicted_value(&self, p: f64, t: f64) -> f64 {
        (self.shape)(p, t)
    }

    /// Grid of times used by [`exponent_check`](Self::exponent_check).
    pub fn regression_times(&self) -> Vec<f64> {
        let (a, b) = self.t_range;
        match self.scale {
            Scale::LogVsT => (0..25).map(|i| a + (b - a) * i as f64 / 24.0).collect(),
            _ => geomspace(a, b, 25),
        }
    }

    /// Regression slopes of the engine's total and of the predicted shape over `t_range`.
    pub fn exponent_check(&self, consts: &BoundConstants) -> Result<ExponentCheck> {
        let ts = self.regression_times();
        let xs: Vec<f64> = ts.iter().map(|&t| self.scale.abscissa(t)).collect();
        let mut engine = Vec::with_capacity(ts.len());
        for &t in &ts {
            engine.push(self.scale.ordinate(self.evaluate(t, self.p, consts)?.total));
        }
        let shape: Vec<f64> = ts.iter().map(|&t| self.predicted_value(self.p, t)).collect();
        let fitted = linear_fit(&xs, &engine)?.slope;
        let predicted = linear_fit(&xs, &shape)?.slope;
        let tolerance = 0.05;
        Ok(ExponentCheck { fitted, predicted, tolerance, passed: (fitted - predicted).abs() <= tolerance })
    }
}

/// `log(e^a + e^b + ...)` without overflow.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn shape<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> ShapeFn {
    Arc::new(f)
}

pub fn scenario_preset(name: &str, ov: &PresetOverrides) -> Result<Scenario> {
    let p = ov.p.unwrap_or(2.0);
    if !(p >= 2.0) {
        return Err(Error::Config(format!("preset moment order must be >= 2, got {p}")));
    }
    let flat = InitialCondition::constant(1.0)?;
    let alpha = ov.alpha.unwrap_or(0.5);
    let q = 1.0 / (1.0 - alpha);
    let base = |name: &'static str, coeff, kernel, init, regime, predicted: String, shape_fn| Scenario {
        name,
        coeff,
        kernel,
        init,
        wave_init: None,
        equation: Equation::Heat,
        regime,
        p,
        x: 0.0,
        scale: Scale::LogVsLogT,
        t_range: (1e2, 1e6),
        predicted,
        shape: shape_fn,
    };
    let s = match name {
        "alpha-white" => base(
            "alpha-white",
            DiffusionCoefficient::ratio_power(alpha, 0.0)?,
            CorrelationKernel::white(),
            flat,
            Regime::BoundedInitial,
            format!("(p sqrt(t))^{q}"),
            shape(move |p, t| q * (p * t.sqrt()).ln()),
        ),
        "alpha-riesz-d1" | "alpha-riesz-dn" => {
            let d1 = name == "alpha-riesz-d1";
            let beta = ov.beta.unwrap_or(if d1 { 0.5 } else { 1.0 });
            let d = if d1 { 1 } else { 2 };
            let e = 1.0 - beta / 2.0;
            base(
                if d1 { "alpha-riesz-d1" } else { "alpha-riesz-dn" },
                DiffusionCoefficient::ratio_power(alpha, 0.0)?,
                CorrelationKernel::riesz(beta, d)?,
                flat,
                if d1 { Regime::BoundedInitial } else { Regime::Auto },
                format!("(p t^{e})^{q}"),
                shape(move |p, t| q * (p * t.powf(e)).ln()),
            )
        }
        "alpha-powerlaw-init" => {
            let beta = ov.beta.unwrap_or(0.5);
            let ell = ov.ell.unwrap_or(0.5);
            let e = 1.0 - beta / 2.0;
            base(
                "alpha-powerlaw-init",
                DiffusionCoefficient::ratio_power(alpha, 0.0)?,
                CorrelationKernel::riesz(beta, 1)?,
                InitialCondition::power_law(ell)?,
                Regime::Auto,
                format!("t^-{ell} + (p t^{e})^{q} + p t^{e}"),
                shape(move |p, t| {
                    let y = (p * t.powf(e)).ln();
                    log_sum_exp(&[-ell * t.ln(), q * y, y])
                }),
            )
        }
        "alpha-exp-init" => {
            let beta = ov.beta.unwrap_or(0.5);
            let ell = ov.ell.unwrap_or(0.5);
            let e = 1.0 - beta / 2.0;
            let mut s = base(
                "alpha-exp-init",
                DiffusionCoefficient::ratio_power(alpha, 0.0)?,
                CorrelationKernel::riesz(beta, 1)?,
                InitialCondition::exponential(ell)?,
                Regime::Auto,
                format!("exp({} t) + (p t^{e})^{q} + p t^{e}", ell * ell),
                shape(move |p, t| {
                    let y = (p * t.powf(e)).ln();
                    log_sum_exp(&[ell * ell * t, q * y, y])
                }),
            );
            s.scale = Scale::LogVsT;
            s.t_range = (1e2, 1e3);
            s
        }
        "log-case-i" | "log-case-ii" => {
            let case_i = name == "log-case-i";
            let alpha = ov.alpha.unwrap_or(if case_i { 0.5 } else { 0.0 });
            let beta = ov.beta.unwrap_or(if case_i { 1.0 } else { -0.5 });
            let q = 1.0 / (1.0 - alpha);
            let mut s = base(
                if case_i { "log-case-i" } else { "log-case-ii" },
                DiffusionCoefficient::log_perturbed(alpha, beta)?,
                CorrelationKernel::white(),
                flat,
                Regime::BoundedInitial,
                format!("(p sqrt(t))^{q} log(p sqrt(t))^{}", -2.0 * beta * q),
                shape(move |p, t| {
                    let y = (p * t.sqrt()).ln();
                    q * y - 2.0 * beta * q * y.ln()
                }),
            );
            s.p = ov.p.unwrap_or(LARGE_P_LOG);
            s
        }
        "log-case-iii" => {
            let beta = ov.beta.unwrap_or(1.0);
            // the exponent of t cannot exceed that of the parabolic Anderson model
            let beta_star = beta.max(0.25);
            let e = 1.0 / (4.0 * beta_star);
            let mut s = base(
                "log-case-iii",
                DiffusionCoefficient::log_perturbed(1.0, beta)?,
                CorrelationKernel::white(),
                flat,
                Regime::BoundedInitial,
                format!("exp((p^2 t)^{e})"),
                shape(move |p, t| e * (p * p * t).ln()),
            );
            s.scale = Scale::LogLogVsLogT;
            s
        }
        "vsv" => {
            let beta = ov.beta.unwrap_or(1.0);
            let kappa = ov.kappa.unwrap_or(2.0);
            let mut s = base(
                "vsv",
                DiffusionCoefficient::iterated_log(beta, kappa)?,
                CorrelationKernel::white(),
                flat,
                Regime::BoundedInitial,
                format!("exp(exp([log(p sqrt(t)) / {}]^{}))", 2.0 * beta, 1.0 / kappa),
                shape(move |p, t| ((p * t.sqrt()).ln() / (2.0 * beta)).powf(1.0 / kappa)),
            );
            s.scale = Scale::LogLogVsLogT;
            s.p = ov.p.unwrap_or(LARGE_P_VSV);
            s
        }
        "bounded-rho" => base(
            "bounded-rho",
            DiffusionCoefficient::ratio_power(0.0, 1.0)?,
            CorrelationKernel::white(),
            flat,
            Regime::BoundedRho,
            "2 + 8 p h(t)".into(),
            shape(|p, t| (2.0 + 8.0 * p * (t / PI).sqrt()).ln()),
        ),
        "frac-alpha" => {
            let b = ov.b.unwrap_or(1.0);
            let fp = FractionalParams::new(2.0, b, 0.0, 1)?;
            let e = 1.5 * b - 1.0;
            let mut s = base(
                "frac-alpha",
                DiffusionCoefficient::ratio_power(alpha, 0.0)?,
                CorrelationKernel::white(),
                flat,
                Regime::BoundedInitial,
                format!("(p t^{e})^{q}"),
                shape(move |p, t| q * (p * t.powf(e)).ln()),
            );
            s.equation = Equation::Fractional(fp);
            s
        }
        "wave-alpha" => {
            let mut s = base(
                "wave-alpha",
                DiffusionCoefficient::ratio_power(alpha, 0.0)?,
                CorrelationKernel::white(),
                flat,
                Regime::BoundedInitial,
                format!("(p t^2)^{q}"),
                shape(move |p, t| q * (p * t * t).ln()),
            );
            s.equation = Equation::Wave;
            s.wave_init = Some(WaveInit::flat(1.0)?);
            s
        }
        other => {
            return Err(Error::Config(format!("unknown preset `{other}`; known: {}", PRESET_NAMES.join(", "))))
        }
    };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_builds() {
        for name in PRESET_NAMES {
            let s = scenario_preset(name, &PresetOverrides::default()).unwrap();
            assert_eq!(s.name, name);
            s.evaluate(10.0, 2.0, &BoundConstants::default()).unwrap();
        }
        assert!(matches!(scenario_preset("nope", &PresetOverrides::default()), Err(Error::Config(_))));
    }

    #[test]
    fn bounded_rho_preset() {
        let s = scenario_preset("bounded-rho", &PresetOverrides::default()).unwrap();
        let r = s.evaluate(PI, 2.0, &BoundConstants::default()).unwrap();
        assert!((r.total - 18.0).abs() < 1e-12);
    }

    #[test]
    fn frac_alpha_sigma() {
        let ov = PresetOverrides { b: Some(1.0), ..Default::default() };
        let s = scenario_preset("frac-alpha", &ov).unwrap();
        let r = s.evaluate(5.0, 2.0, &BoundConstants::default()).unwrap();
        assert_eq!(r.sigma, Some(0.5));
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, 0.0, 0.0]) - 3f64.ln()).abs() < 1e-15);
    }
}
