//! Moment, tail and spatial-asymptote upper bounds for the heat, wave and
//! time-fractional equations, itemized by contribution.
//!
//! Existential constants (`C`, `C_*`, `K_1`, `K_2`, `K`, `C_0`) are inputs with
//! default 1; only shapes and exponents are meaningful.

mod init;
mod presets;

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionCoefficient;
use crate::envelope::Envelope;
use crate::error::{Error, Result};
use crate::kernels::CorrelationKernel;
use crate::quad::{integrate_pieces, Tolerance};
use crate::stats::{geomspace, golden_max};

pub use init::{power_law_constant, CustomDensity, InitSpec, InitialCondition};
pub use presets::{scenario_preset, ExponentCheck, PresetOverrides, Scale, Scenario, PRESET_NAMES};

use init::{chi_pdf, chi_points};

/// Largest moment order searched by [`legendre_tail`].
pub const P_MAX: f64 = 1e6;

const INNER_TOL: Tolerance = Tolerance { rel: 1e-9, abs: 0.0, max_intervals: 2000 };
const OUTER_TOL: Tolerance = Tolerance { rel: 1e-7, abs: 0.0, max_intervals: 2000 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConstants {
    /// `C` in the asymptotic regime and the spatial asymptote.
    pub c: f64,
    /// `C_*` in the bounded-initial regime and the tail bound.
    pub c_star: f64,
    pub k1: f64,
    pub k2: f64,
    /// `K` of the fractional bound.
    pub k: f64,
    /// `C_0` in `l(t) = C_0 t^{-sigma}`.
    pub c0: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants { c: 1.0, c_star: 1.0, k1: 1.0, k2: 1.0, k: 1.0, c0: 1.0 }
    }
}

impl BoundConstants {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c", self.c),
            ("c_star", self.c_star),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k", self.k),
            ("c0", self.c0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("bound constant {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Bounded `rho` first, then concave when `M0 = 0`, else general.
    Auto,
    General,
    Concave,
    Asymptotic,
    BoundedInitial,
    /// `2 J0^2 + 8 p sup|rho|^2 h(t)` for bounded `rho` (heat only).
    BoundedRho,
}

impl Regime {
    pub fn tag(&self) -> &'static str {
        match self {
            Regime::Auto => "auto",
            Regime::General => "general",
            Regime::Concave => "concave",
            Regime::Asymptotic => "asymptotic",
            Regime::BoundedInitial => "bounded-initial",
            Regime::BoundedRho => "bounded-rho",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => Regime::Auto,
            "general" => Regime::General,
            "concave" => Regime::Concave,
            "asymptotic" => Regime::Asymptotic,
            "bounded-initial" => Regime::BoundedInitial,
            "bounded-rho" => Regime::BoundedRho,
            other => return Err(Error::Config(format!("unknown regime `{other}`"))),
        })
    }
}

/// Parameters of `d_t^b u + nu/2 (-Delta)^{a/2} u = I_t^gamma [rho(u) W']`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionalParams {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub d: usize,
}

fn one() -> usize {
    1
}

impl FractionalParams {
    pub fn new(a: f64, b: f64, gamma: f64, d: usize) -> Result<Self> {
        let fp = FractionalParams { a, b, gamma, d };
        fp.validate()?;
        Ok(fp)
    }

    pub fn validate(&self) -> Result<()> {
        let FractionalParams { a, b, gamma, d } = *self;
        let df = d as f64;
        if !(a > 0.0 && a <= 2.0) || !(b > 0.0 && b < 2.0) || !(gamma >= 0.0) || d == 0 {
            return Err(Error::Domain(format!(
                "need a in (0, 2], b in (0, 2), gamma >= 0, d >= 1; got a = {a}, b = {b}, gamma = {gamma}, d = {d}"
            )));
        }
        if !(b + gamma > 0.5 * (1.0 + df * b / a)) {
            return Err(Error::hypothesis(
                "H:subsg(i)",
                format!("b + gamma > (1 + d b / a)/2 fails: {} <= {}", b + gamma, 0.5 * (1.0 + df * b / a)),
            ));
        }
        if !(2.0 * a > df) {
            return Err(Error::hypothesis("H:subsg(i)", format!("2a > d fails: 2a = {}, d = {d}", 2.0 * a)));
        }
        if !(gamma == 0.0 || (d == 1 && a > 1.0)) {
            return Err(Error::hypothesis(
                "H:subsg(ii)",
                format!("need gamma = 0 or a > d = 1; got gamma = {gamma}, a = {a}, d = {d}"),
            ));
        }
        let sigma = self.sigma();
        if !(sigma < 1.0) {
            return Err(Error::hypothesis("sigma < 1", format!("sigma = {sigma}")));
        }
        Ok(())
    }

    /// `sigma = 2(1 - b - gamma) + b d / a`.
    pub fn sigma(&self) -> f64 {
        2.0 * (1.0 - self.b - self.gamma) + self.b * self.d as f64 / self.a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    Heat,
    Wave,
    Fractional(FractionalParams),
}

impl Equation {
    pub fn tag(&self) -> &'static str {
        match self {
            Equation::Heat => "heat",
            Equation::Wave => "wave",
            Equation::Fractional(_) => "fractional",
        }
    }

    /// The variance clock: `h(t)`, `h_wave(t)` or `t^{1 - sigma}`.
    pub fn clock(&self, kern: &CorrelationKernel, t: f64) -> Result<f64> {
        match self {
            Equation::Heat => {
                check_dalang(kern)?;
                kern.h_heat(t)
            }
            Equation::Wave => {
                check_dalang(kern)?;
                kern.h_wave(t)
            }
            Equation::Fractional(fp) => {
                fp.validate()?;
                Ok(t.powf(1.0 - fp.sigma()))
            }
        }
    }
}

/// Itemized moment bound for `||u(t, x)||_p^2`.
///
/// `total` is `term_J0sq + term_J1_over_h + term_KM + term_Finv`, summed in
/// that order; every term already carries its prefactor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub t: f64,
    pub x: f64,
    pub p: f64,
    #[serde(rename = "term_J0sq")]
    pub term_j0sq: f64,
    #[serde(rename = "term_J1_over_h")]
    pub term_j1_over_h: f64,
    #[serde(rename = "term_KM")]
    pub term_km: f64,
    #[serde(rename = "term_Finv")]
    pub term_finv: f64,
    pub total: f64,
    pub regime: Regime,
    /// The clock the bound runs on (`h(t)` or `t^{1 - sigma}`).
    pub clock: f64,
    pub sigma: Option<f64>,
}

impl BoundReport {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        t: f64,
        x: f64,
        p: f64,
        terms: [f64; 4],
        regime: Regime,
        clock: f64,
        sigma: Option<f64>,
    ) -> Result<Self> {
        for v in terms {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Divergence(format!("bound term {v} is not a finite nonnegative number")));
            }
        }
        let [term_j0sq, term_j1_over_h, term_km, term_finv] = terms;
        let total = term_j0sq + term_j1_over_h + term_km + term_finv;
        if !total.is_finite() {
            return Err(Error::Divergence(format!("bound total overflows at t = {t}, p = {p}")));
        }
        Ok(BoundReport { t, x, p, term_j0sq, term_j1_over_h, term_km, term_finv, total, regime, clock, sigma })
    }
}

fn check_dalang(kern: &CorrelationKernel) -> Result<()> {
    if kern.dalang_check().ok {
        Ok(())
    } else {
        Err(Error::hypothesis("H:corre", format!("Dalang's condition fails for {kern:?}")))
    }
}

fn check_tp(t: f64, p: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("need t > 0, got {t}")));
    }
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::Domain(format!("need p >= 2, got {p}")));
    }
    Ok(())
}

fn check_late(t: f64, regime: Regime) -> Result<()> {
    if t >= 1.0 {
        Ok(())
    } else {
        Err(Error::hypothesis("t >= 1", format!("the {regime} regime needs t >= 1, got {t}")))
    }
}

fn check_not_vanishing(coeff: &DiffusionCoefficient) -> Result<()> {
    if coeff.vanishes_beyond_m0() {
        Err(Error::hypothesis("rho not identically 0 beyond M0", format!("{:?}", coeff.family())))
    } else {
        Ok(())
    }
}

/// Picks the concrete regime and rejects requests whose hypotheses fail.
fn resolve_regime(coeff: &DiffusionCoefficient, regime: Regime, bounded_rho: bool) -> Result<Regime> {
    let m0 = coeff.thresholds().m0;
    Ok(match regime {
        Regime::Auto if bounded_rho && coeff.sup_abs().is_some() => Regime::BoundedRho,
        Regime::Auto | Regime::General if m0 == 0.0 => Regime::Concave,
        Regime::Auto => Regime::General,
        Regime::Concave if m0 > 0.0 => {
            return Err(Error::hypothesis(
                "|rho| concave on each half-line",
                format!("M0 = {m0} > 0 for {:?}", coeff.family()),
            ))
        }
        r => r,
    })
}

/// `J1(t, x)` for the heat equation: the closed bound `2^{3/2} pi h(t) J+(t/2, x)^2`
/// in d = 1, nested quadrature of `int_0^t k(t-s) E J0^2(s, x + sqrt(t-s) Z) ds` otherwise.
pub fn j1(init: &InitialCondition, kern: &CorrelationKernel, t: f64, x: f64) -> Result<f64> {
    let d = kern.dim();
    init.check_dim(d)?;
    if d == 1 {
        let jp = init.j_plus(t / 2.0, x, 1)?;
        return Ok(2f64.powf(1.5) * PI * kern.h_heat(t)? * jp * jp);
    }
    if let InitialCondition::Constant { c } = init {
        return Ok(c * c * 2.0 * kern.h_heat(t / 2.0)?);
    }
    j1_quadrature(init, kern, t, x)
}

fn j1_quadrature(init: &InitialCondition, kern: &CorrelationKernel, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("J1 needs t > 0, got {t}")));
    }
    let d = kern.dim();
    let x = x.abs();
    let j0sq = |s: f64, r: f64| init.j0(s, r, d).map(|v| v * v).unwrap_or(f64::NAN);
    let weighted = |w: f64, v: f64| if w == 0.0 { 0.0 } else { w * v };
    // E J0^2(t - u, |x e_1 + sqrt(u) Z|)
    let smoothed = |u: f64| -> f64 {
        let s = t - u;
        let sd = u.sqrt();
        if x == 0.0 {
            return integrate_pieces(|r| weighted(chi_pdf(d, r), j0sq(s, sd * r)), &chi_points(0.0), INNER_TOL)
                .unwrap_or(f64::NAN);
        }
        let along = |z1: f64| {
            let a = x + sd * z1;
            integrate_pieces(
                |r| weighted(chi_pdf(d - 1, r), j0sq(s, (a * a + u * r * r).sqrt())),
                &chi_points(0.0),
                INNER_TOL,
            )
            .unwrap_or(f64::NAN)
        };
        let pts = [f64::NEG_INFINITY, -8.0, -x / sd, 0.0, 8.0, f64::INFINITY];
        integrate_pieces(
            |z1| if z1.abs() > 40.0 { 0.0 } else { (-0.5 * z1 * z1).exp() / (2.0 * PI).sqrt() * along(z1) },
            &pts,
            INNER_TOL,
        )
        .unwrap_or(f64::NAN)
    };
    // u = t - s keeps both singular ends (u -> 0 for k, u -> t for J0) exact
    let mut pts: Vec<f64> = geomspace(t * 1e-6, t, 8);
    pts.extend(geomspace(t * 1e-6, t, 8).into_iter().map(|v| t - v));
    pts.push(0.0);
    let v = integrate_pieces(
        |u| {
            let k = kern.k_eval(u).unwrap_or(f64::NAN);
            k * smoothed(u)
        },
        &pts,
        OUTER_TOL,
    )
    .map_err(|e| Error::hypothesis("H:rough(ii)", format!("J1({t}, {x}) quadrature did not converge: {e}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::hypothesis("H:rough(ii)", format!("J1({t}, {x}) is not finite")))
    }
}

/// Moment bound for the stochastic heat equation.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_heat(
    coeff: &DiffusionCoefficient,
    kern: &CorrelationKernel,
    init: &InitialCondition,
    t: f64,
    x: f64,
    p: f64,
    regime: Regime,
    consts: &BoundConstants,
) -> Result<BoundReport> {
    check_tp(t, p)?;
    consts.validate()?;
    check_dalang(kern)?;
    let d = kern.dim();
    init.check_dim(d)?;
    let regime = resolve_regime(coeff, regime, true)?;
    let h = kern.h_heat(t)?;
    let pref = 2.0 * (2.0 * PI).powi(d as i32);
    let j0 = || init.j0(t, x, d);
    let j1_over_h = || -> Result<f64> {
        if d == 1 {
            let jp = init.j_plus(t / 2.0, x, 1)?;
            Ok(2f64.powf(1.5) * PI * jp * jp)
        } else {
            Ok(j1(init, kern, t, x)? / h)
        }
    };
    let terms = match regime {
        Regime::General => {
            let th = coeff.thresholds();
            let env = Envelope::new(coeff);
            let j0 = j0()?;
            [
                2.0 * j0 * j0,
                pref * j1_over_h()?,
                pref * (4.0 * th.k_m * th.k_m * p * h),
                pref * env.f_inverse(2.0 * p * h)?,
            ]
        }
        Regime::Concave => {
            let env = Envelope::concave(coeff);
            let j0 = j0()?;
            [2.0 * j0 * j0, pref * j1_over_h()?, 0.0, pref * env.f_inverse(2.0 * p * h)?]
        }
        Regime::Asymptotic => {
            check_late(t, regime)?;
            check_not_vanishing(coeff)?;
            let env = Envelope::new(coeff);
            let j0 = j0()?;
            [2.0 * j0 * j0, consts.c * j1_over_h()?, 0.0, consts.c * env.f_inverse(consts.c * p * h)?]
        }
        Regime::BoundedInitial => {
            check_late(t, regime)?;
            check_not_vanishing(coeff)?;
            bounded_initial(init)?;
            let env = Envelope::new(coeff);
            [0.0, 0.0, 0.0, consts.c_star * env.f_inverse(consts.c_star * p * h)?]
        }
        Regime::BoundedRho => {
            let k = coeff
                .sup_abs()
                .ok_or_else(|| Error::hypothesis("bounded rho", format!("{:?} is unbounded", coeff.family())))?;
            let j0 = j0()?;
            [2.0 * j0 * j0, 0.0, 8.0 * p * k * k * h, 0.0]
        }
        Regime::Auto => unreachable!("resolved above"),
    };
    BoundReport::assemble(t, x, p, terms, regime, h, None)
}

fn bounded_initial(init: &InitialCondition) -> Result<()> {
    if init.is_bounded() {
        Ok(())
    } else {
        Err(Error::hypothesis("bounded initial data", format!("{init:?} is not a bounded function")))
    }
}

/// Initial position `mu0` (a locally square-integrable function) and velocity
/// `mu1` (a locally finite measure) of the wave equation on R.
#[derive(Debug, Clone)]
pub struct WaveInit {
    pub position: InitialCondition,
    pub velocity: InitialCondition,
}

impl WaveInit {
    pub fn new(position: InitialCondition, velocity: InitialCondition) -> Self {
        WaveInit { position, velocity }
    }

    /// `mu0 = c`, `mu1 = 0`.
    pub fn flat(c: f64) -> Result<Self> {
        Ok(WaveInit::new(InitialCondition::constant(c)?, InitialCondition::constant(0.0)?))
    }

    fn velocity_is_finite(&self) -> bool {
        match self.velocity {
            InitialCondition::Constant { c } => c == 0.0,
            InitialCondition::Dirac { .. } => true,
            InitialCondition::Exponential { ell } => ell < 0.0,
            _ => false,
        }
    }
}

/// `J0(t, x) = (mu0(x+t) + mu0(x-t))/2 + int G(t, x-y) mu1(dy)` with `G = 1_{[-t,t]}/2`.
pub fn wave_j0(init: &WaveInit, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("J0 needs t > 0, got {t}")));
    }
    let pos = 0.5 * (init.position.density(x + t)? + init.position.density(x - t)?);
    let vel = 0.5 * init.velocity.interval_mass(x - t, x + t)?;
    Ok(pos + vel)
}

/// `4 t k(2t) (t int G mu0^2 + 2 (t int G |mu1|)^2)` with the wave `k`.
pub fn wave_j1_bound(init: &WaveInit, kern: &CorrelationKernel, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("J1 needs t > 0, got {t}")));
    }
    let g_mu0_sq = 0.5 * init.position.square_mass(x - t, x + t)?;
    let g_mu1 = 0.5 * init.velocity.abs().interval_mass(x - t, x + t)?;
    Ok(4.0 * t * kern.k_wave(2.0 * t)? * (t * g_mu0_sq + 2.0 * (t * g_mu1).powi(2)))
}

/// Moment bound for the stochastic wave equation on R.
///
/// The `K_2 p h(t)` term is carried as `K_2 4 K_M^2 p h(t)`, which vanishes
/// exactly when `|rho|` is concave, as the bound allows.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_wave(
    coeff: &DiffusionCoefficient,
    kern: &CorrelationKernel,
    init: &WaveInit,
    t: f64,
    x: f64,
    p: f64,
    regime: Regime,
    consts: &BoundConstants,
) -> Result<BoundReport> {
    check_tp(t, p)?;
    consts.validate()?;
    if kern.dim() != 1 {
        return Err(Error::Unsupported(format!("the wave bound is for d = 1, got d = {}", kern.dim())));
    }
    check_dalang(kern)?;
    let regime = resolve_regime(coeff, regime, false)?;
    let h = kern.h_wave(t)?;
    let terms = match regime {
        Regime::General | Regime::Concave => {
            let j0 = wave_j0(init, t, x)?;
            let j1h = wave_j1_bound(init, kern, t, x)? / h;
            let (env, km) = if regime == Regime::General {
                let th = coeff.thresholds();
                (Envelope::new(coeff), consts.k2 * 4.0 * th.k_m * th.k_m * p * h)
            } else {
                (Envelope::concave(coeff), 0.0)
            };
            let k1 = consts.k1;
            [2.0 * j0 * j0, k1 * j1h, k1 * km, k1 * env.f_inverse(2.0 * p * h)?]
        }
        Regime::Asymptotic => {
            check_late(t, regime)?;
            check_not_vanishing(coeff)?;
            let j0 = wave_j0(init, t, x)?;
            let j1h = wave_j1_bound(init, kern, t, x)? / h;
            let env = Envelope::new(coeff);
            [2.0 * j0 * j0, consts.c * j1h, 0.0, consts.c * env.f_inverse(consts.c * p * h)?]
        }
        Regime::BoundedInitial => {
            check_late(t, regime)?;
            check_not_vanishing(coeff)?;
            bounded_initial(&init.position)?;
            if !init.velocity_is_finite() {
                return Err(Error::hypothesis(
                    "bounded initial data",
                    format!("|mu1|(R) must be finite, got {:?}", init.velocity),
                ));
            }
            let env = Envelope::new(coeff);
            [0.0, 0.0, 0.0, consts.c_star * env.f_inverse(consts.c_star * p * h)?]
        }
        Regime::BoundedRho => {
            return Err(Error::Unsupported("the bounded-rho regime is stated for the heat equation only".into()))
        }
        Regime::Auto => unreachable!("resolved above"),
    };
    BoundReport::assemble(t, x, p, terms, regime, h, None)
}

/// `J1(t, x) = int_0^t C_0 (t-s)^{-sigma} int G(t-s, x-y) J0^2(s, y) dy ds` for flat
/// initial data, where the reference kernel `G` is normalized to unit mass.
pub fn fractional_j1(params: &FractionalParams, init: &InitialCondition, t: f64, c0: f64) -> Result<f64> {
    params.validate()?;
    let c = fractional_j0(init)?;
    if c == 0.0 {
        return Ok(0.0);
    }
    let sigma = params.sigma();
    let mut pts = vec![0.0];
    pts.extend(geomspace(t * 1e-8, t, 9));
    // u = t - s
    let v = integrate_pieces(|u| c0 * u.powf(-sigma), &pts, OUTER_TOL)?;
    Ok(c * c * v)
}

fn fractional_j0(init: &InitialCondition) -> Result<f64> {
    match init {
        InitialCondition::Constant { c } => Ok(*c),
        other => Err(Error::Unsupported(format!(
            "the fractional bound takes flat initial data only, got {other:?}"
        ))),
    }
}

/// Moment bound for the time-fractional equation driven by space-time white noise.
///
/// Initial data is `mu0 = c` (and `mu1 = 0` when `b > 1`), so `J0 = c`.
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_fractional(
    coeff: &DiffusionCoefficient,
    params: &FractionalParams,
    init: &InitialCondition,
    t: f64,
    x: f64,
    p: f64,
    regime: Regime,
    consts: &BoundConstants,
) -> Result<BoundReport> {
    check_tp(t, p)?;
    consts.validate()?;
    params.validate()?;
    let sigma = params.sigma();
    let clock = t.powf(1.0 - sigma);
    let regime = resolve_regime(coeff, regime, false)?;
    let k = consts.k;
    let terms = match regime {
        Regime::General | Regime::Concave => {
            let j0 = fractional_j0(init)?;
            let j1 = fractional_j1(params, init, t, consts.c0)?;
            let (env, km) = if regime == Regime::General {
                let th = coeff.thresholds();
                (Envelope::new(coeff), k * 4.0 * th.k_m * th.k_m * p * clock)
            } else {
                (Envelope::concave(coeff), 0.0)
            };
            [2.0 * j0 * j0, k * j1 / clock, k * km, k * env.f_inverse(k * p * clock)?]
        }
        Regime::BoundedInitial => {
            check_late(t, regime)?;
            check_not_vanishing(coeff)?;
            fractional_j0(init)?;
            let env = Envelope::new(coeff);
            [0.0, 0.0, 0.0, consts.c_star * env.f_inverse(consts.c_star * p * clock)?]
        }
        other => {
            return Err(Error::Unsupported(format!("the {other} regime is not available for the fractional equation")))
        }
    };
    BoundReport::assemble(t, x, p, terms, regime, clock, Some(sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub t: f64,
    pub z: f64,
    /// Upper bound on `P(|u(t, x)| >= z)`; 1 below `l_t`.
    pub probability: f64,
    /// The validity threshold `L_t`.
    pub l_t: f64,
    pub clock: f64,
}

/// `L_t = e sqrt(2 C_* M^2 + C_* F^-1(2 C_* h(t)))`.
pub fn tail_threshold(coeff: &DiffusionCoefficient, clock: f64, c_star: f64) -> Result<f64> {
    let env = Envelope::new(coeff);
    let m = coeff.thresholds().m;
    Ok(E * (2.0 * c_star * m * m + c_star * env.f_inverse(2.0 * c_star * clock)?).sqrt())
}

/// `P(|u(t,x)| >= z) <= exp(-F(z^2 / (C_* e^2)) / (C_* h(t)))` for `z >= L_t`, flat initial data.
pub fn tail_bound(
    coeff: &DiffusionCoefficient,
    kern: &CorrelationKernel,
    t: f64,
    z: f64,
    equation: &Equation,
    consts: &BoundConstants,
) -> Result<TailBound> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("tail bound needs z > 0, got {z}")));
    }
    if !(t >= 1.0 && t.is_finite()) {
        return Err(Error::hypothesis("t >= 1", format!("the tail bound needs t >= 1, got {t}")));
    }
    consts.validate()?;
    let clock = equation.clock(kern, t)?;
    let cs = consts.c_star;
    let l_t = tail_threshold(coeff, clock, cs)?;
    let probability = if z < l_t {
        1.0
    } else {
        let env = Envelope::new(coeff);
        let f = env.f_eval(z * z / (cs * E * E))?;
        (-f / (cs * clock)).exp().min(1.0)
    };
    Ok(TailBound { t, z, probability, l_t, clock })
}

/// `H(p) = (p/2) log(C_* F^-1(C_* p h))`, the log-moment fed to [`legendre_tail`].
pub fn log_moment_h(coeff: &DiffusionCoefficient, clock: f64, c_star: f64) -> impl Fn(f64) -> Result<f64> {
    let env = Envelope::new(coeff);
    move |p: f64| Ok(0.5 * p * (c_star * env.f_inverse(c_star * p * clock)?).ln())
}

/// `exp(-sup_{p in [2, P_MAX]} (p log z - alpha(p)))`, capped at 1, where `alpha(p)`
/// bounds `log E|u|^p`.
///
/// A log-spaced scan over `p` locates the best bracket, which golden-section
/// search then refines; the endpoints are always candidates.
pub fn legendre_tail<A: Fn(f64) -> Result<f64>>(alpha: A, z: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("legendre tail needs z > 0, got {z}")));
    }
    let lz = z.ln();
    let objective = |lp: f64| -> Result<f64> {
        let p = lp.exp();
        let a = alpha(p)?;
        if !a.is_finite() {
            return Err(Error::Evaluation(format!("alpha({p}) = {a}")));
        }
        Ok(p * lz - a)
    };
    let (lo, hi) = (2f64.ln(), P_MAX.ln());
    const SCAN: usize = 97;
    let grid: Vec<f64> = (0..SCAN).map(|i| lo + (hi - lo) * i as f64 / (SCAN - 1) as f64).collect();
    let mut vals = Vec::with_capacity(SCAN);
    for &lp in &grid {
        vals.push(objective(lp)?);
    }
    let (imax, mut best) = vals
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let a = grid[imax.saturating_sub(1)];
    let b = grid[(imax + 1).min(SCAN - 1)];
    if b > a {
        let failed = std::cell::Cell::new(None);
        let (_, v) = golden_max(
            |lp| match objective(lp) {
                Ok(v) => v,
                Err(e) => {
                    failed.set(Some(e));
                    f64::NEG_INFINITY
                }
            },
            a,
            b,
            80,
        );
        if let Some(e) = failed.into_inner() {
            return Err(e);
        }
        best = best.max(v);
    }
    Ok((-best).exp().min(1.0))
}

/// `sqrt(F^-1(C h(t) log R))`, the almost-sure growth scale of `sup_{|x| <= R} u(t, x)`.
pub fn spatial_asymptote(
    coeff: &DiffusionCoefficient,
    kern: &CorrelationKernel,
    t: f64,
    r: f64,
    equation: &Equation,
    c: f64,
) -> Result<f64> {
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::Domain(format!("spatial asymptote needs t > 1, got {t}")));
    }
    if !(r > 1.0) {
        return Err(Error::Domain(format!("spatial asymptote needs R > 1, got {r}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("constant C must be positive, got {c}")));
    }
    if !matches!(equation, Equation::Fractional(_)) && kern.dalang_check().improved_eta.is_none() {
        return Err(Error::hypothesis("H:efcdalang", format!("the improved Dalang condition fails for {kern:?}")));
    }
    let clock = equation.clock(kern, t)?;
    Ok(Envelope::new(coeff).f_inverse(c * clock * r.ln())?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DiffusionCoefficient as Dc;
    use crate::kernels::CorrelationKernel as Ck;

    fn white() -> Ck {
        Ck::white()
    }

    fn flat() -> InitialCondition {
        InitialCondition::constant(1.0).unwrap()
    }

    fn consts() -> BoundConstants {
        BoundConstants::default()
    }

    #[test]
    fn bounded_rho_example() {
        let rho = Dc::ratio_power(0.0, 1.0).unwrap();
        let r = moment_bound_heat(&rho, &white(), &flat(), PI, 0.0, 2.0, Regime::Auto, &consts()).unwrap();
        assert_eq!(r.regime, Regime::BoundedRho);
        assert!((r.total - 18.0).abs() < 1e-12);
        assert!((r.clock - 1.0).abs() < 1e-15);
    }

    #[test]
    fn total_is_the_sum_of_terms() {
        let rho = Dc::log_perturbed(0.5, 1.0).unwrap();
        for regime in [Regime::General, Regime::Asymptotic, Regime::BoundedInitial] {
            let r = moment_bound_heat(&rho, &Ck::riesz(0.5, 1).unwrap(), &flat(), 4.0, 0.3, 3.0, regime, &consts())
                .unwrap();
            assert_eq!(r.total, r.term_j0sq + r.term_j1_over_h + r.term_km + r.term_finv);
        }
    }

    #[test]
    fn general_heat_terms_in_closed_form() {
        // RatioPower r = 0: M0 = 0 so the concave bound applies; F^-1(y) = (8y)^{1/(1-alpha)}
        let alpha = 0.5;
        let rho = Dc::ratio_power(alpha, 0.0).unwrap();
        let (t, p) = (2.0, 3.0);
        let r = moment_bound_heat(&rho, &white(), &flat(), t, 0.0, p, Regime::General, &consts()).unwrap();
        assert_eq!(r.regime, Regime::Concave);
        let h = (t / PI).sqrt();
        let pref = 4.0 * PI;
        assert!((r.term_j0sq - 2.0).abs() < 1e-15);
        assert!((r.term_j1_over_h / (pref * 2f64.powf(1.5) * PI) - 1.0).abs() < 1e-14);
        assert_eq!(r.term_km, 0.0);
        assert!((r.term_finv / (pref * (16.0 * p * h).powf(2.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_initial_alpha_scaling() {
        let alpha = 0.25;
        let rho = Dc::ratio_power(alpha, 0.0).unwrap();
        let total = |t: f64, p: f64| {
            moment_bound_heat(&rho, &white(), &flat(), t, 0.0, p, Regime::BoundedInitial, &consts()).unwrap().total
        };
        let q = 1.0 / (1.0 - alpha);
        let base = total(1.0, 2.0) / (2.0f64).powf(q);
        for (t, p) in [(10.0f64, 2.0f64), (100.0, 5.0), (1e4, 20.0)] {
            let want = base * (p * t.sqrt()).powf(q);
            assert!((total(t, p) / want - 1.0).abs() < 1e-12);
        }
        let e = moment_bound_heat(&rho, &white(), &flat(), 0.5, 0.0, 2.0, Regime::BoundedInitial, &consts());
        assert!(matches!(e, Err(Error::Hypothesis { .. })));
        let dirac = InitialCondition::dirac(1.0).unwrap();
        let e = moment_bound_heat(&rho, &white(), &dirac, 2.0, 0.0, 2.0, Regime::BoundedInitial, &consts());
        assert!(matches!(e, Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn vanishing_tail_gives_constant_finv_term() {
        let rho = Dc::custom(|u: f64| if u.abs() < 2.0 { u.abs().sqrt() } else { 0.0 }, 2.0, "cut").unwrap();
        let th = rho.thresholds();
        let floor = 2.0 * th.m * th.m;
        let pref = 4.0 * PI;
        for t in [1.0, 10.0, 1e3] {
            let r = moment_bound_heat(&rho, &white(), &flat(), t, 0.0, 2.0, Regime::General, &consts()).unwrap();
            assert!((r.term_finv - pref * floor).abs() <= 1e-12 * pref * floor.max(1.0), "{} vs {}", r.term_finv, floor);
        }
        let e = moment_bound_heat(&rho, &white(), &flat(), 2.0, 0.0, 2.0, Regime::Asymptotic, &consts());
        assert!(matches!(e, Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn concave_request_needs_concavity() {
        let rho = Dc::iterated_log(1.0, 2.0).unwrap();
        assert!(rho.thresholds().m0 > 0.0);
        let e = moment_bound_heat(&rho, &white(), &flat(), 2.0, 0.0, 2.0, Regime::Concave, &consts());
        assert!(matches!(e, Err(Error::Hypothesis { .. })));
        let r = moment_bound_heat(&rho, &white(), &flat(), 2.0, 0.0, 2.0, Regime::Auto, &consts()).unwrap();
        assert_eq!(r.regime, Regime::General);
        assert!(r.term_km > 0.0);
    }

    #[test]
    fn j1_examples() {
        let one = flat();
        for t in [0.1, 1.0, 7.0] {
            let v = j1(&one, &white(), t, 0.4).unwrap();
            assert!((v / (2f64.powf(1.5) * PI * (t / PI).sqrt()) - 1.0).abs() < 1e-14);
        }
        let zero = InitialCondition::constant(0.0).unwrap();
        assert_eq!(j1(&zero, &white(), 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(j1(&zero, &Ck::riesz(1.0, 2).unwrap(), 1.0, 0.0).unwrap(), 0.0);
        let dirac = InitialCondition::dirac(1.0).unwrap();
        assert!(matches!(j1(&dirac, &Ck::riesz(1.0, 2).unwrap(), 1.0, 0.0), Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn nested_j1_reduces_for_flat_data() {
        // with J0 = c the nested quadrature collapses to c^2 int_0^t k = 2 c^2 h(t/2)
        let c = 1.5;
        let init = InitialCondition::constant(c).unwrap();
        for kern in [Ck::riesz(1.0, 2).unwrap(), Ck::ornstein_uhlenbeck(2.0, 3).unwrap()] {
            for (t, x) in [(1.0, 0.0), (3.0, 0.7)] {
                let q = j1_quadrature(&init, &kern, t, x).unwrap();
                let want = c * c * 2.0 * kern.h_heat(t / 2.0).unwrap();
                assert!((q / want - 1.0).abs() < 1e-6, "{kern:?} t={t} x={x}: {q} vs {want}");
            }
        }
    }

    #[test]
    fn nested_j1_power_law_exponent() {
        // J1(t, 0) is homogeneous of degree 1 - ell - beta/2 in t for mu = |y|^-ell, f = |x|^-beta
        let (ell, beta) = (0.5, 1.0);
        let init = InitialCondition::power_law(ell).unwrap();
        let kern = Ck::riesz(beta, 2).unwrap();
        let a = j1(&init, &kern, 1.0, 0.0).unwrap();
        let b = j1(&init, &kern, 4.0, 0.0).unwrap();
        let slope = (b / a).ln() / 4f64.ln();
        assert!((slope - (1.0 - ell - beta / 2.0)).abs() < 1e-5, "{slope}");
    }

    #[test]
    fn wave_examples() {
        let rho = Dc::ratio_power(0.5, 0.0).unwrap();
        let init = WaveInit::flat(1.0).unwrap();
        let (t, p) = (3.0, 2.0);
        let r = moment_bound_wave(&rho, &white(), &init, t, 0.0, p, Regime::Auto, &consts()).unwrap();
        assert_eq!(r.regime, Regime::Concave);
        assert!((r.clock - t * t / 4.0).abs() < 1e-12);
        let env = Envelope::new(&rho);
        assert!((r.term_finv - env.f_inverse(p * t * t / 2.0).unwrap()).abs() < 1e-9 * r.term_finv);
        // mu0 = 1, white noise: J1 bound = 4t * (1/2) * (t * t) = 2 t^3
        assert!((r.term_j1_over_h - 2.0 * t.powi(3) / (t * t / 4.0)).abs() < 1e-12);
        let zero = WaveInit::flat(0.0).unwrap();
        let r = moment_bound_wave(&rho, &white(), &zero, t, 0.0, p, Regime::Auto, &consts()).unwrap();
        assert_eq!((r.term_j0sq, r.term_j1_over_h), (0.0, 0.0));
        let e = moment_bound_wave(&rho, &Ck::riesz(0.5, 2).unwrap(), &init, t, 0.0, p, Regime::Auto, &consts());
        assert!(matches!(e, Err(Error::Unsupported(_))));
    }

    #[test]
    fn wave_j0_for_rough_velocity() {
        let init = WaveInit::new(InitialCondition::constant(0.0).unwrap(), InitialCondition::dirac(2.0).unwrap());
        assert_eq!(wave_j0(&init, 1.0, 0.5).unwrap(), 1.0);
        assert_eq!(wave_j0(&init, 1.0, 1.5).unwrap(), 0.0);
        let init = WaveInit::new(InitialCondition::constant(2.0).unwrap(), InitialCondition::constant(3.0).unwrap());
        assert_eq!(wave_j0(&init, 1.5, 0.0).unwrap(), 2.0 + 4.5);
    }

    #[test]
    fn fractional_examples() {
        let fp = FractionalParams::new(2.0, 1.0, 0.0, 1).unwrap();
        assert_eq!(fp.sigma(), 0.5);
        let e = FractionalParams::new(2.0, 0.5, 0.0, 1);
        assert!(matches!(e, Err(Error::Hypothesis { hypothesis: "H:subsg(i)", .. })));
        let e = FractionalParams::new(1.0, 1.0, 0.5, 1);
        assert!(matches!(e, Err(Error::Hypothesis { hypothesis: "H:subsg(ii)", .. })));
        let e = FractionalParams::new(0.4, 1.0, 0.0, 1);
        assert!(matches!(e, Err(Error::Hypothesis { .. })));
        // J1 = c^2 C0 t^{1-sigma}/(1-sigma)
        let init = InitialCondition::constant(2.0).unwrap();
        for b in [0.8, 1.0, 1.4] {
            let fp = FractionalParams::new(2.0, b, 0.0, 1).unwrap();
            let s = fp.sigma();
            for t in [0.5, 3.0] {
                let got = fractional_j1(&fp, &init, t, 1.5).unwrap();
                let want = 4.0 * 1.5 * t.powf(1.0 - s) / (1.0 - s);
                assert!((got / want - 1.0).abs() < 1e-8, "b={b} t={t}");
            }
        }
        // frac-alpha: bounded-initial total scales as (p t^{3b/2-1})^{1/(1-alpha)}
        let rho = Dc::ratio_power(0.5, 0.0).unwrap();
        let b = 1.2;
        let fp = FractionalParams::new(2.0, b, 0.0, 1).unwrap();
        let tot = |t: f64| {
            moment_bound_fractional(&rho, &fp, &flat(), t, 0.0, 2.0, Regime::BoundedInitial, &consts()).unwrap().total
        };
        let slope = (tot(1e4) / tot(10.0)).ln() / 1e3f64.ln();
        assert!((slope - 2.0 * (1.5 * b - 1.0)).abs() < 1e-10);
        let r = moment_bound_fractional(&rho, &fp, &flat(), 2.0, 0.0, 2.0, Regime::Auto, &consts()).unwrap();
        assert_eq!(r.sigma, Some(fp.sigma()));
        assert_eq!(r.total, r.term_j0sq + r.term_j1_over_h + r.term_km + r.term_finv);
    }

    #[test]
    fn tail_examples() {
        let alpha = 0.5;
        let rho = Dc::ratio_power(alpha, 0.0).unwrap();
        let t = 4.0;
        let tb = |z: f64| tail_bound(&rho, &white(), t, z, &Equation::Heat, &consts()).unwrap();
        let l_t = tb(1.0).l_t;
        assert_eq!(tb(0.5 * l_t).probability, 1.0);
        // log bound = -(z^2/e^2)^{1-alpha} / (8 h)
        let h = (t / PI).sqrt();
        for z in [2.0 * l_t, 10.0 * l_t] {
            let want = -(z * z / (E * E)).powf(1.0 - alpha) / (8.0 * h);
            assert!((tb(z).probability.ln() / want - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            tail_bound(&rho, &white(), t, 0.0, &Equation::Heat, &consts()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn legendre_linear_moment() {
        let lin = |p: f64| Ok(p);
        let z = (1.0 + 1e-5f64).exp();
        let got = legendre_tail(lin, z).unwrap();
        assert!((got.ln() + P_MAX * 1e-5).abs() < 1e-6);
        // below e the objective decreases, so p = 2 wins and the bound caps at 1
        assert_eq!(legendre_tail(lin, 2.0).unwrap(), 1.0);
        assert_eq!(legendre_tail(lin, 1.0).unwrap(), 1.0);
        let bad = |p: f64| if p > 10.0 { Ok(f64::INFINITY) } else { Ok(p) };
        assert!(matches!(legendre_tail(bad, 3.0), Err(Error::Evaluation(_))));
    }

    #[test]
    fn legendre_recovers_the_tail_bound_for_alpha_half() {
        // with alpha = 1/2 the Legendre transform of H equals F(z^2/(C_* e^2))/(C_* h)
        let rho = Dc::ratio_power(0.5, 0.0).unwrap();
        let h = 2.0;
        let hp = log_moment_h(&rho, h, 1.0);
        for z in [200.0, 1e3, 1e4] {
            let leg = legendre_tail(&hp, z).unwrap().ln();
            let direct = -(z * z / (E * E)).sqrt() / (8.0 * h);
            assert!((leg / direct - 1.0).abs() < 1e-6, "z={z}: {leg} vs {direct}");
        }
    }

    #[test]
    fn spatial_asymptote_examples() {
        let alpha = 0.5;
        let rho = Dc::ratio_power(alpha, 0.0).unwrap();
        let s = |t: f64, r: f64| spatial_asymptote(&rho, &white(), t, r, &Equation::Heat, 1.0).unwrap();
        // (sqrt(t) log R)^{1/(2(1-alpha))}
        let ratio = s(100.0, 1e6) / s(4.0, 1e3);
        let want = ((10.0 * 1e6f64.ln()) / (2.0 * 1e3f64.ln())).powf(1.0 / (2.0 * (1.0 - alpha)));
        assert!((ratio / want - 1.0).abs() < 1e-12);
        let il = Dc::iterated_log(1.0, 2.0).unwrap();
        let m = il.thresholds().m;
        let near = spatial_asymptote(&il, &white(), 2.0, 1.0 + 1e-12, &Equation::Heat, 1.0).unwrap();
        assert!((near - 2f64.sqrt() * m).abs() <= 1e-9 * m.max(1.0));
        let e = spatial_asymptote(&rho, &Ck::riesz(1.0, 1).unwrap(), 2.0, 10.0, &Equation::Heat, 1.0);
        assert!(e.is_err());
    }

    #[test]
    fn regime_names_round_trip() {
        for r in [
            Regime::Auto,
            Regime::General,
            Regime::Concave,
            Regime::Asymptotic,
            Regime::BoundedInitial,
            Regime::BoundedRho,
        ] {
            assert_eq!(r.tag().parse::<Regime>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.tag()));
        }
    }
}
