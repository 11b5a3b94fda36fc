//! Spatial correlation kernels and the noise functionals h(t), k(t).
//!
//! Heat kernel convention: `p_t(x) = (2 pi t)^{-d/2} exp(-|x|^2 / (2t))`, so
//! `k(s) = E f(sqrt(s) Z)` with `Z` standard normal in R^d and
//! `h(t) = (1/2) int_0^{2t} k(s) ds`.
//!
//! The wave functionals use `G(t, x) = 1/2 * 1_{[-t, t]}(x)` in d = 1:
//! `h_wave(t) = (1/2) int_0^{2t} f(z) (t - z/2)^2 dz` and
//! `k_wave(t) = int G(t, z) f(z) dz`.
//!
//! The Bessel potential is `f(x) = int e^{-i x.xi} (1 + |xi|^2)^{-nu/2} d xi`;
//! it is handled through its spectral density only.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_pieces, Tolerance};
use crate::special::{gamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelVariant {
    /// `f = delta_0`.
    White,
    /// `f = 1`: noise constant in space.
    Constant,
    /// `f(x) = |x|^{-alpha}`.
    Riesz { alpha: f64 },
    /// `f(x) = exp(-|x|^alpha)`, `alpha in (0, 2]`.
    OrnsteinUhlenbeck { alpha: f64 },
    /// Spectral density `(1 + |xi|^2)^{-nu/2}`.
    BesselPotential { nu: f64 },
    /// `f(x) = (1 + |x|^2)^{-nu/2}`.
    BesselSpectral { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationKernel {
    variant: KernelVariant,
    d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DalangReport {
    pub ok: bool,
    /// Supremum of the admissible eta in the improved condition, when positive.
    pub improved_eta: Option<f64>,
}

const TOL: Tolerance = Tolerance { rel: 1e-11, abs: 0.0, max_intervals: 4000 };

impl CorrelationKernel {
    pub fn new(variant: KernelVariant, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match variant {
            KernelVariant::White | KernelVariant::Constant => {}
            KernelVariant::Riesz { alpha } => positive("alpha", alpha)?,
            KernelVariant::OrnsteinUhlenbeck { alpha } => {
                positive("alpha", alpha)?;
                if alpha > 2.0 {
                    return Err(Error::hypothesis(
                        "H:corre",
                        format!("exp(-|x|^{alpha}) is not nonnegative-definite for alpha > 2"),
                    ));
                }
            }
            KernelVariant::BesselPotential { nu } | KernelVariant::BesselSpectral { nu } => {
                positive("nu", nu)?
            }
        }
        Ok(CorrelationKernel { variant, d })
    }

    pub fn white() -> Self {
        CorrelationKernel { variant: KernelVariant::White, d: 1 }
    }

    pub fn constant(d: usize) -> Result<Self> {
        Self::new(KernelVariant::Constant, d)
    }

    pub fn riesz(alpha: f64, d: usize) -> Result<Self> {
        Self::new(KernelVariant::Riesz { alpha }, d)
    }

    pub fn ornstein_uhlenbeck(alpha: f64, d: usize) -> Result<Self> {
        Self::new(KernelVariant::OrnsteinUhlenbeck { alpha }, d)
    }

    pub fn bessel_potential(nu: f64, d: usize) -> Result<Self> {
        Self::new(KernelVariant::BesselPotential { nu }, d)
    }

    pub fn bessel_spectral(nu: f64, d: usize) -> Result<Self> {
        Self::new(KernelVariant::BesselSpectral { nu }, d)
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn df(&self) -> f64 {
        self.d as f64
    }

    pub fn dalang_check(&self) -> DalangReport {
        let d = self.df();
        let (ok, eta) = match self.variant {
            KernelVariant::White => (self.d == 1, 0.5),
            KernelVariant::Constant => (true, 1.0),
            KernelVariant::Riesz { alpha } => (alpha < d.min(2.0), 1.0 - alpha / 2.0),
            KernelVariant::OrnsteinUhlenbeck { .. } | KernelVariant::BesselSpectral { .. } => {
                (true, 1.0)
            }
            KernelVariant::BesselPotential { nu } => (nu > d - 2.0, (0.5 * (nu + 2.0 - d)).min(1.0)),
        };
        DalangReport { ok, improved_eta: (ok && eta > 0.0).then_some(eta) }
    }

    fn require_dalang(&self) -> Result<()> {
        if self.dalang_check().ok {
            Ok(())
        } else {
            Err(Error::hypothesis(
                "H:corre",
                format!("Dalang's condition fails for {:?} in d = {}", self.variant, self.d),
            ))
        }
    }

    fn require_wave_dim(&self) -> Result<()> {
        if self.d != 1 {
            return Err(Error::Unsupported(format!(
                "the wave equation is only supported in d = 1, got d = {}",
                self.d
            )));
        }
        self.require_dalang()
    }

    /// Whether the kernel is a pointwise function (as opposed to a measure or
    /// a spectrally defined potential).
    pub fn is_pointwise(&self) -> bool {
        matches!(
            self.variant,
            KernelVariant::Constant
                | KernelVariant::Riesz { .. }
                | KernelVariant::OrnsteinUhlenbeck { .. }
                | KernelVariant::BesselSpectral { .. }
        )
    }

    /// Kernels the one-dimensional simulator can sample.
    pub fn is_samplable(&self) -> bool {
        self.d == 1 && self.dalang_check().ok && !matches!(self.variant, KernelVariant::BesselPotential { .. })
    }

    /// Evaluates `f` at distance `r = |x|`.
    pub fn f_eval(&self, r: f64) -> Result<f64> {
        let r = r.abs();
        match self.variant {
            KernelVariant::White => Err(Error::Unsupported("white noise has no pointwise correlation".into())),
            KernelVariant::Constant => Ok(1.0),
            KernelVariant::Riesz { alpha } => Ok(r.powf(-alpha)),
            KernelVariant::OrnsteinUhlenbeck { alpha } => Ok((-r.powf(alpha)).exp()),
            KernelVariant::BesselSpectral { nu } => Ok((1.0 + r * r).powf(-nu / 2.0)),
            KernelVariant::BesselPotential { nu } => self.bessel_potential_value(nu, r),
        }
    }

    fn bessel_potential_value(&self, nu: f64, r: f64) -> Result<f64> {
        let d = self.df();
        if r == 0.0 {
            if nu <= d {
                return Ok(f64::INFINITY);
            }
            let w = sphere_area(self.d);
            return integrate(|p: f64| w * p.powf(d - 1.0) * (1.0 + p * p).powf(-nu / 2.0), 0.0, f64::INFINITY, TOL);
        }
        if self.d != 1 {
            return Err(Error::Unsupported("Bessel potential values away from 0 need d = 1".into()));
        }
        // 2 int_0^inf cos(r xi) (1 + xi^2)^{-nu/2} d xi, split at the zeros of cos
        let mut pts: Vec<f64> = (0..=400).map(|j| (j as f64 + 0.5) * PI / r).collect();
        pts.insert(0, 0.0);
        let head = integrate_pieces(|x: f64| 2.0 * (r * x).cos() * (1.0 + x * x).powf(-nu / 2.0), &pts, TOL)?;
        let last = *pts.last().expect("non-empty");
        // alternating tail: average of two consecutive partial sums
        let next = integrate(
            |x: f64| 2.0 * (r * x).cos() * (1.0 + x * x).powf(-nu / 2.0),
            last,
            last + PI / r,
            TOL,
        )?;
        Ok(head + 0.5 * next)
    }

    /// `h(t)` for the heat equation, closed form when available.
    pub fn h_heat(&self, t: f64) -> Result<f64> {
        self.require_dalang()?;
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let d = self.df();
        match self.variant {
            KernelVariant::White => Ok((t / PI).sqrt()),
            KernelVariant::Constant => Ok(t),
            KernelVariant::Riesz { alpha } => Ok(riesz_heat_constant(alpha, d) * t.powf(1.0 - alpha / 2.0)),
            KernelVariant::OrnsteinUhlenbeck { alpha } if alpha == 2.0 => Ok(ou_gauss_h(d, t)),
            _ => self.h_heat_quadrature(t),
        }
    }

    /// `h(t)` for the heat equation by quadrature, bypassing closed forms.
    pub fn h_heat_quadrature(&self, t: f64) -> Result<f64> {
        self.require_dalang()?;
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let d = self.df();
        match self.variant {
            KernelVariant::White => integrate(|s: f64| 0.5 / (2.0 * PI * s).sqrt(), 0.0, 2.0 * t, TOL),
            KernelVariant::Constant => integrate(|_| 0.5, 0.0, 2.0 * t, TOL),
            KernelVariant::Riesz { alpha } => {
                // inner time integral in closed form, radial expectation numerically
                let a = (2.0 * t).powf(1.0 - alpha / 2.0) / (1.0 - alpha / 2.0);
                Ok(0.5 * a * chi_expectation(self.d, t, |r| r.powf(-alpha))?)
            }
            KernelVariant::OrnsteinUhlenbeck { alpha } => {
                let q = 2.0 / alpha;
                let g = gamma(q);
                let scale = (2.0 * t).powf(alpha / 2.0);
                Ok(0.5
                    * chi_expectation(self.d, t, |r| {
                        let x = scale * r.powf(alpha);
                        q * g * statrs::function::gamma::gamma_lr(q, x) / (r * r)
                    })?)
            }
            KernelVariant::BesselSpectral { nu } => {
                let q = 1.0 - nu / 2.0;
                Ok(0.5
                    * chi_expectation(self.d, t, |r| {
                        let x = 2.0 * t * r * r;
                        let v = if q.abs() < 1e-12 { x.ln_1p() } else { (q * x.ln_1p()).exp_m1() / q };
                        v / (r * r)
                    })?)
            }
            KernelVariant::BesselPotential { nu } => {
                let w = sphere_area(self.d);
                let pts = radial_points(t);
                integrate_pieces(
                    |p: f64| w * p.powf(d - 3.0) * (-(-t * p * p).exp_m1()) * (1.0 + p * p).powf(-nu / 2.0),
                    &pts,
                    TOL,
                )
            }
        }
    }

    /// `k(t) = int p_t(z) f(z) dz = h'(t/2)`.
    pub fn k_eval(&self, t: f64) -> Result<f64> {
        self.require_dalang()?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("k(t) needs t > 0, got {t}")));
        }
        let d = self.df();
        match self.variant {
            KernelVariant::White => Ok(1.0 / (2.0 * PI * t).sqrt()),
            KernelVariant::Constant => Ok(1.0),
            KernelVariant::Riesz { alpha } => Ok(riesz_moment(alpha, d) * t.powf(-alpha / 2.0)),
            KernelVariant::OrnsteinUhlenbeck { alpha } if alpha == 2.0 => Ok((1.0 + 2.0 * t).powf(-d / 2.0)),
            KernelVariant::OrnsteinUhlenbeck { alpha } => {
                let st = t.sqrt();
                chi_expectation(self.d, t / 2.0, |r| (-(st * r).powf(alpha)).exp())
            }
            KernelVariant::BesselSpectral { nu } => {
                chi_expectation(self.d, t / 2.0, |r| (1.0 + t * r * r).powf(-nu / 2.0))
            }
            KernelVariant::BesselPotential { nu } => {
                let w = sphere_area(self.d);
                let pts = radial_points(t / 2.0);
                integrate_pieces(
                    |p: f64| w * p.powf(d - 1.0) * (1.0 + p * p).powf(-nu / 2.0) * (-0.5 * t * p * p).exp(),
                    &pts,
                    TOL,
                )
            }
        }
    }

    /// `h(t)` for the one-dimensional wave equation.
    pub fn h_wave(&self, t: f64) -> Result<f64> {
        self.require_wave_dim()?;
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        match self.variant {
            KernelVariant::White => Ok(t * t / 4.0),
            KernelVariant::Constant => Ok(t.powi(3) / 3.0),
            KernelVariant::Riesz { alpha } => Ok(riesz_wave_constant(alpha) * t.powf(3.0 - alpha)),
            _ => self.h_wave_quadrature(t),
        }
    }

    /// `h_wave(t)` by quadrature: real-space form for pointwise kernels,
    /// Fourier form otherwise.
    pub fn h_wave_quadrature(&self, t: f64) -> Result<f64> {
        self.require_wave_dim()?;
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        match self.variant {
            KernelVariant::White => wave_fourier(t, |_| 1.0 / (2.0 * PI)),
            KernelVariant::BesselPotential { nu } => wave_fourier(t, move |x: f64| (1.0 + x * x).powf(-nu / 2.0)),
            _ => {
                let f = |z: f64| self.f_eval(z).unwrap_or(f64::NAN);
                let mut pts = vec![0.0, 2.0 * t];
                pts.extend(crate::stats::geomspace(1e-6, 2.0 * t, 24).into_iter().filter(|&z| z < 2.0 * t));
                integrate_pieces(|z: f64| 0.5 * f(z) * (t - 0.5 * z).powi(2), &pts, TOL)
            }
        }
    }

    /// `k_wave(t) = int G(t, z) f(z) dz`.
    pub fn k_wave(&self, t: f64) -> Result<f64> {
        self.require_wave_dim()?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("k(t) needs t > 0, got {t}")));
        }
        match self.variant {
            KernelVariant::White => Ok(0.5),
            KernelVariant::Constant => Ok(t),
            KernelVariant::Riesz { alpha } => Ok(t.powf(1.0 - alpha) / (1.0 - alpha)),
            KernelVariant::BesselPotential { nu } => {
                // 2 int_0^inf g(xi) sin(t xi) / xi d xi
                let g = move |x: f64| (1.0 + x * x).powf(-nu / 2.0);
                let mut pts: Vec<f64> = (0..=400).map(|j| j as f64 * PI / t).collect();
                let last = *pts.last().expect("non-empty");
                pts.push(last + PI / t);
                let integrand = |x: f64| 2.0 * g(x) * sinc(t * x) * t;
                let head = integrate_pieces(integrand, &pts[..pts.len() - 1], TOL)?;
                let next = integrate(integrand, last, last + PI / t, TOL)?;
                Ok(head + 0.5 * next)
            }
            _ => {
                let f = |z: f64| self.f_eval(z).unwrap_or(f64::NAN);
                let mut pts = vec![0.0, t];
                pts.extend(crate::stats::geomspace(1e-6, t, 16).into_iter().filter(|&z| z < t));
                integrate_pieces(f, &pts, TOL)
            }
        }
    }

    pub fn spec(&self) -> KernelSpec {
        let (variant, alpha, nu) = match self.variant {
            KernelVariant::White => ("white", None, None),
            KernelVariant::Constant => ("constant", None, None),
            KernelVariant::Riesz { alpha } => ("riesz", Some(alpha), None),
            KernelVariant::OrnsteinUhlenbeck { alpha } => ("ou", Some(alpha), None),
            KernelVariant::BesselPotential { nu } => ("bessel-potential", None, Some(nu)),
            KernelVariant::BesselSpectral { nu } => ("bessel-spectral", None, Some(nu)),
        };
        KernelSpec { variant: variant.into(), alpha, nu, d: self.d }
    }
}

/// Residual of `p_{t-s}(a) p_s(b) = p_{s(t-s)/t}(b - s(a+b)/t) p_t(a+b)` in d = 1.
pub fn heat_factorization_check(t: f64, s: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0 < s && s < t) {
        return Err(Error::Domain(format!("need 0 < s < t, got s = {s}, t = {t}")));
    }
    let lhs = heat_kernel(t - s, a) * heat_kernel(s, b);
    let rhs = heat_kernel(s * (t - s) / t, b - s / t * (a + b)) * heat_kernel(t, a + b);
    Ok((lhs - rhs).abs())
}

/// One-dimensional heat kernel `p_t(x)`.
pub fn heat_kernel(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")))
    }
}

/// `E |Z|^{-alpha}` for a standard normal `Z` in R^d.
fn riesz_moment(alpha: f64, d: f64) -> f64 {
    2f64.powf(-alpha / 2.0) * (ln_gamma((d - alpha) / 2.0) - ln_gamma(d / 2.0)).exp()
}

/// Constant in `h(t) = C t^{1 - alpha/2}` for the Riesz kernel.
pub fn riesz_heat_constant(alpha: f64, d: f64) -> f64 {
    2f64.powf(1.0 - alpha) * (ln_gamma((d - alpha) / 2.0) - ln_gamma(d / 2.0)).exp() / (2.0 - alpha)
}

/// Constant in `h_wave(t) = C t^{3 - alpha}` for the Riesz kernel.
pub fn riesz_wave_constant(alpha: f64) -> f64 {
    2f64.powf(1.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha) * (3.0 - alpha))
}

/// `h(t)` for `f(x) = exp(-|x|^2)`, where `k(s) = (1 + 2s)^{-d/2}`.
fn ou_gauss_h(d: f64, t: f64) -> f64 {
    let x = 4.0 * t;
    if d == 1.0 {
        0.5 * x / ((1.0 + x).sqrt() + 1.0)
    } else if d == 2.0 {
        0.25 * x.ln_1p()
    } else {
        -((1.0 - d / 2.0) * x.ln_1p()).exp_m1() / (2.0 * (d - 2.0))
    }
}

fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `1 - sin(u)/u`, accurate for small `u`.
fn one_minus_sinc(u: f64) -> f64 {
    if u.abs() < 0.1 {
        let u2 = u * u;
        u2 / 6.0 * (1.0 - u2 / 20.0 * (1.0 - u2 / 42.0 * (1.0 - u2 / 72.0)))
    } else {
        1.0 - u.sin() / u
    }
}

/// Breakpoints for radial integrals whose integrand changes regime near `1/sqrt(2t)`.
fn radial_points(t: f64) -> Vec<f64> {
    let s0 = 1.0 / (2.0 * t).sqrt();
    let mut pts = vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, f64::INFINITY];
    pts.extend([1e-3, 1e-2, 1e-1, 1.0, 10.0].iter().map(|c| c * s0));
    pts
}

/// `E g(R)` for `R ~ chi_d`.
fn chi_expectation<G: Fn(f64) -> f64>(d: usize, t: f64, g: G) -> Result<f64> {
    let df = d as f64;
    let log_norm = (df / 2.0 - 1.0) * 2f64.ln() + ln_gamma(df / 2.0);
    let pts: Vec<f64> = radial_points(t).into_iter().filter(|p| *p <= 16.0 || p.is_infinite()).collect();
    integrate_pieces(
        |r: f64| {
            let w = ((df - 1.0) * r.ln() - 0.5 * r * r - log_norm).exp();
            if w == 0.0 {
                0.0
            } else {
                w * g(r)
            }
        },
        &pts,
        TOL,
    )
}

/// Fourier form `h_wave(t) = 2 int_0^inf g(xi) (t/2)(1 - sinc(2 t xi)) / xi^2 d xi`
/// for spectral density `g` (so that `f = int e^{-ix xi} g(xi) d xi`).
fn wave_fourier<G: Fn(f64) -> f64>(t: f64, g: G) -> Result<f64> {
    let integrand = |x: f64| t * g(x) * one_minus_sinc(2.0 * t * x) / (x * x);
    let mut pts = vec![0.0, f64::INFINITY];
    pts.extend(crate::stats::geomspace(1e-3 / t, 1e4 / t, 36));
    pts.extend([1.0, 10.0, 100.0]);
    integrate_pieces(integrand, &pts, Tolerance { rel: 1e-10, abs: 0.0, max_intervals: 8000 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default = "one")]
    pub d: usize,
}

fn one() -> usize {
    1
}

impl KernelSpec {
    pub fn build(&self) -> Result<CorrelationKernel> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("kernel '{}' needs '{name}'", self.variant)))
        };
        let variant = match self.variant.as_str() {
            "white" => KernelVariant::White,
            "constant" => KernelVariant::Constant,
            "riesz" => KernelVariant::Riesz { alpha: need(self.alpha, "alpha")? },
            "ou" | "ornstein-uhlenbeck" => KernelVariant::OrnsteinUhlenbeck { alpha: need(self.alpha, "alpha")? },
            "bessel-potential" => KernelVariant::BesselPotential { nu: need(self.nu, "nu")? },
            "bessel-spectral" => KernelVariant::BesselSpectral { nu: need(self.nu, "nu")? },
            other => return Err(Error::Config(format!("unknown kernel variant '{other}'"))),
        };
        CorrelationKernel::new(variant, self.d)
    }
}
