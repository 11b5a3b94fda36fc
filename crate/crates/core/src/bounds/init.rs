//! Initial data and the heat-smoothed quantities `J0`, `J+`.
//!
//! Every built-in density is radial about the origin, so `J0(t, x)` only depends
//! on `|x|`; the evaluators take that distance. Custom densities live in d = 1
//! and take the signed point.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quad::{integrate_pieces, Tolerance};
use crate::special::{gamma, hyp1f1, ln_gamma};

const TOL: Tolerance = Tolerance { rel: 1e-10, abs: 0.0, max_intervals: 4000 };

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomDensity {
    eval: DensityFn,
    label: String,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity").field("label", &self.label).finish()
    }
}

#[derive(Debug, Clone)]
pub enum InitialCondition {
    Constant { c: f64 },
    Dirac { mass: f64 },
    /// `|y|^{-ell}`
    PowerLaw { ell: f64 },
    /// `exp(ell |y|)`
    Exponential { ell: f64 },
    Custom(CustomDensity),
}

impl InitialCondition {
    pub fn constant(c: f64) -> Result<Self> {
        finite("c", c)?;
        Ok(InitialCondition::Constant { c })
    }

    /// Point mass at the origin.
    pub fn dirac(mass: f64) -> Result<Self> {
        finite("mass", mass)?;
        Ok(InitialCondition::Dirac { mass })
    }

    pub fn power_law(ell: f64) -> Result<Self> {
        if !(ell > 0.0 && ell < 2.0) {
            return Err(Error::hypothesis("H:rough", format!("power-law exponent must lie in (0, 2), got {ell}")));
        }
        Ok(InitialCondition::PowerLaw { ell })
    }

    pub fn exponential(ell: f64) -> Result<Self> {
        finite("ell", ell)?;
        Ok(InitialCondition::Exponential { ell })
    }

    /// A density on R (d = 1 only).
    pub fn custom<F>(density: F, label: impl Into<String>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        InitialCondition::Custom(CustomDensity { eval: Arc::new(density), label: label.into() })
    }

    /// `|mu|`.
    pub fn abs(&self) -> Self {
        match self {
            InitialCondition::Constant { c } => InitialCondition::Constant { c: c.abs() },
            InitialCondition::Dirac { mass } => InitialCondition::Dirac { mass: mass.abs() },
            InitialCondition::Custom(cd) => {
                let inner = cd.eval.clone();
                InitialCondition::Custom(CustomDensity {
                    eval: Arc::new(move |y| inner(y).abs()),
                    label: format!("|{}|", cd.label),
                })
            }
            other => other.clone(),
        }
    }

    /// Whether `mu` is a bounded function.
    pub fn is_bounded(&self) -> bool {
        match self {
            InitialCondition::Constant { .. } => true,
            InitialCondition::Exponential { ell } => *ell <= 0.0,
            _ => false,
        }
    }

    /// Rejects combinations that break the rough-data hypothesis in dimension `d`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            InitialCondition::Dirac { .. } if d >= 2 => Err(Error::hypothesis(
                "H:rough(ii)",
                format!("the Dirac initial condition is excluded in d = {d} >= 2"),
            )),
            InitialCondition::PowerLaw { ell } if *ell >= d as f64 => Err(Error::hypothesis(
                "H:rough(i)",
                format!("|y|^-{ell} is not locally integrable in d = {d}"),
            )),
            InitialCondition::Custom(_) if d != 1 => {
                Err(Error::Unsupported("custom initial densities are only supported in d = 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// `J0(t, x) = int mu(dy) p_t(x - y)`.
    pub fn j0(&self, t: f64, x: f64, d: usize) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("J0 needs t > 0, got {t}")));
        }
        self.check_dim(d)?;
        let df = d as f64;
        let v = match self {
            InitialCondition::Constant { c } => *c,
            InitialCondition::Dirac { mass } => {
                mass * (-x * x / (2.0 * t) - df / 2.0 * (2.0 * PI * t).ln()).exp()
            }
            InitialCondition::PowerLaw { ell } => {
                let lead = (-ell / 2.0 * (2.0 * t).ln() + ln_gamma((df - ell) / 2.0) - ln_gamma(df / 2.0)).exp();
                lead * hyp1f1(ell / 2.0, df / 2.0, -x * x / (2.0 * t))
            }
            InitialCondition::Exponential { ell } => exponential_j0(*ell, t, x.abs(), d)?,
            InitialCondition::Custom(cd) => {
                let s = t.sqrt();
                let f = &cd.eval;
                let mut pts = vec![f64::NEG_INFINITY, -8.0, -2.0, 0.0, 2.0, 8.0, f64::INFINITY];
                pts.push(-x / s);
                integrate_pieces(|z| std_normal_pdf(z) * f(x + s * z), &pts, TOL)
                    .map_err(|e| Error::Evaluation(format!("J0 of {}: {e}", cd.label)))?
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("J0({t}, {x}) is not finite for {self:?}")))
        }
    }

    /// `J+(t, x)`, the heat smoothing of `|mu|`.
    pub fn j_plus(&self, t: f64, x: f64, d: usize) -> Result<f64> {
        self.abs().j0(t, x, d)
    }

    /// Pointwise value of a density on R.
    pub fn density(&self, y: f64) -> Result<f64> {
        match self {
            InitialCondition::Constant { c } => Ok(*c),
            InitialCondition::PowerLaw { ell } => Ok(y.abs().powf(-ell)),
            InitialCondition::Exponential { ell } => Ok((ell * y.abs()).exp()),
            InitialCondition::Custom(cd) => Ok((cd.eval)(y)),
            InitialCondition::Dirac { .. } => {
                Err(Error::Unsupported("the Dirac mass has no pointwise density".into()))
            }
        }
    }

    /// `mu([lo, hi])` on R.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
        }
        match self {
            InitialCondition::Constant { c } => Ok(c * (hi - lo)),
            InitialCondition::Dirac { mass } => Ok(if lo <= 0.0 && 0.0 <= hi { *mass } else { 0.0 }),
            InitialCondition::PowerLaw { ell } => {
                if *ell >= 1.0 {
                    return Err(Error::hypothesis(
                        "H:rough(i)",
                        format!("|y|^-{ell} is not locally integrable on R"),
                    ));
                }
                let anti = |y: f64| y.signum() * y.abs().powf(1.0 - ell) / (1.0 - ell);
                Ok(anti(hi) - anti(lo))
            }
            InitialCondition::Exponential { ell } => {
                if *ell == 0.0 {
                    return Ok(hi - lo);
                }
                let anti = |y: f64| y.signum() * (ell * y.abs()).exp_m1() / ell;
                Ok(anti(hi) - anti(lo))
            }
            InitialCondition::Custom(cd) => {
                let f = &cd.eval;
                let mut pts = vec![lo, hi];
                if lo < 0.0 && 0.0 < hi {
                    pts.push(0.0);
                }
                integrate_pieces(|y| f(y), &pts, TOL)
                    .map_err(|e| Error::Evaluation(format!("mass of {}: {e}", cd.label)))
            }
        }
    }

    /// `int_lo^hi mu(y)^2 dy`.
    pub fn square_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        match self {
            InitialCondition::Constant { c } => Ok(c * c * (hi - lo)),
            InitialCondition::PowerLaw { ell } => {
                if 2.0 * ell >= 1.0 {
                    return Err(Error::hypothesis(
                        "mu0 in L2_loc",
                        format!("|y|^-{ell} is not locally square integrable"),
                    ));
                }
                InitialCondition::PowerLaw { ell: 2.0 * ell }.interval_mass(lo, hi)
            }
            InitialCondition::Exponential { ell } => {
                InitialCondition::Exponential { ell: 2.0 * ell }.interval_mass(lo, hi)
            }
            InitialCondition::Custom(cd) => {
                let inner = cd.eval.clone();
                InitialCondition::custom(move |y| inner(y).powi(2), cd.label.clone()).interval_mass(lo, hi)
            }
            InitialCondition::Dirac { .. } => Err(Error::hypothesis(
                "mu0 in L2_loc",
                "the Dirac mass is not a locally square-integrable function",
            )),
        }
    }

    pub fn spec(&self) -> Option<InitSpec> {
        let (kind, c, mass, ell) = match self {
            InitialCondition::Constant { c } => ("constant", Some(*c), None, None),
            InitialCondition::Dirac { mass } => ("dirac", None, Some(*mass), None),
            InitialCondition::PowerLaw { ell } => ("power-law", None, None, Some(*ell)),
            InitialCondition::Exponential { ell } => ("exponential", None, None, Some(*ell)),
            InitialCondition::Custom(_) => return None,
        };
        Some(InitSpec { kind: kind.into(), c, mass, ell })
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `Phi(z)`.
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Density of the chi distribution with `k` degrees of freedom.
pub(crate) fn chi_pdf(k: usize, r: f64) -> f64 {
    chi_log_pdf(k, r).exp()
}

fn chi_log_pdf(k: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let kf = k as f64;
    (kf - 1.0) * r.ln() - 0.5 * r * r - (kf / 2.0 - 1.0) * 2f64.ln() - ln_gamma(kf / 2.0)
}

/// Breakpoints for an integral against a chi density whose integrand may peak near `shift`.
pub(crate) fn chi_points(shift: f64) -> Vec<f64> {
    let mut pts = vec![0.0, 1.0, 2.0, 4.0, 8.0, f64::INFINITY];
    if shift > 0.0 {
        pts.extend([shift - 4.0, shift, shift + 4.0, shift + 10.0].iter().filter(|p| **p > 0.0));
    }
    pts
}

/// `E exp(ell |x e_1 + sqrt(t) Z|)` for a standard normal `Z` in R^d.
fn exponential_j0(ell: f64, t: f64, x: f64, d: usize) -> Result<f64> {
    let s = t.sqrt();
    if d == 1 {
        let plus = (ell * x + 0.5 * ell * ell * t + normal_cdf(x / s + ell * s).ln()).exp();
        let minus = (-ell * x + 0.5 * ell * ell * t + normal_cdf(-x / s + ell * s).ln()).exp();
        return Ok(plus + minus);
    }
    let shift = (ell * s).max(0.0);
    if x == 0.0 {
        return integrate_pieces(|r| (chi_log_pdf(d, r) + ell * s * r).exp(), &chi_points(shift), TOL);
    }
    let inner = |z1: f64| -> f64 {
        let a = x + s * z1;
        let g = |r: f64| (chi_log_pdf(d - 1, r) + ell * (a * a + t * r * r).sqrt()).exp();
        integrate_pieces(g, &chi_points(shift), TOL).unwrap_or(f64::NAN)
    };
    let mut pts = vec![f64::NEG_INFINITY, -8.0, 0.0, 8.0, f64::INFINITY];
    pts.extend([shift, -x / s]);
    let v = integrate_pieces(|z1| if z1.abs() > 40.0 { 0.0 } else { std_normal_pdf(z1) * inner(z1) }, &pts, TOL)?;
    if v.is_nan() {
        Err(Error::Quadrature("inner radial integral failed".into()))
    } else {
        Ok(v)
    }
}

/// `E |Z|^{-ell}`-type constant: `J0(t, 0) = power_law_constant * t^{-ell/2}`.
pub fn power_law_constant(ell: f64, d: usize) -> f64 {
    let df = d as f64;
    2f64.powf(-ell / 2.0) * gamma((df - ell) / 2.0) / gamma(df / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
}

impl InitSpec {
    pub fn build(&self) -> Result<InitialCondition> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("initial condition `{}` needs `{name}`", self.kind)))
        };
        match self.kind.as_str() {
            "constant" => InitialCondition::constant(need(self.c, "c")?),
            "dirac" => InitialCondition::dirac(need(self.mass, "mass")?),
            "power-law" => InitialCondition::power_law(need(self.ell, "ell")?),
            "exponential" => InitialCondition::exponential(need(self.ell, "ell")?),
            other => Err(Error::Config(format!(
                "unknown initial condition `{other}` (constant, dirac, power-law, exponential)"
            ))),
        }
    }
}
