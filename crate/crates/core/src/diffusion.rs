//! Sublinear diffusion coefficients `rho`, their symmetrised powers `rho_p`,
//! and the concavity thresholds `M0`, `M`, `K_M` that the bounds depend on.
//!
//! Closed families are evaluated at `|u|`. A coefficient is validated once at
//! construction; thresholds are cached and the value is immutable afterwards.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::geomspace;

/// Pointwise evaluator for user-supplied coefficients.
pub type RhoFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Family {
    /// `|u| / (r + |u|)^(1 - alpha)`; with `r = 0` this is `|u|^alpha`.
    RatioPower { alpha: f64, r: f64 },
    /// `|u|^alpha * ln(e + u^2)^(-beta)`.
    LogPerturbed { alpha: f64, beta: f64 },
    /// `|u| * exp(-beta * (ln ln(e + u^2))^kappa)`.
    IteratedLog { beta: f64, kappa: f64 },
    /// `rho = c`: additive noise, or no noise at all when `c = 0`.
    Constant { c: f64 },
    /// User-supplied evaluator with a declared concavity onset `m0`.
    Custom { eval: RhoFn, m0: f64, label: String },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::RatioPower { alpha, r } => write!(f, "RatioPower {{ alpha: {alpha}, r: {r} }}"),
            Family::LogPerturbed { alpha, beta } => {
                write!(f, "LogPerturbed {{ alpha: {alpha}, beta: {beta} }}")
            }
            Family::IteratedLog { beta, kappa } => {
                write!(f, "IteratedLog {{ beta: {beta}, kappa: {kappa} }}")
            }
            Family::Constant { c } => write!(f, "Constant {{ c: {c} }}"),
            Family::Custom { m0, label, .. } => write!(f, "Custom {{ label: {label:?}, m0: {m0} }}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Onset of concavity of `|rho|` on each half-line.
    pub m0: f64,
    /// Onset of concavity of `rho_p` (in the `x^(1/p)` scale), uniform in `p`.
    pub m: f64,
    /// `sup_{|x| < M} |rho(x)|`.
    pub k_m: f64,
}

#[derive(Debug, Clone)]
pub struct DiffusionCoefficient {
    family: Family,
    thresholds: Thresholds,
}

const SCAN_POINTS: usize = 10_000;
const SCAN_LO: f64 = 1e-6;
const SCAN_HI: f64 = 1e12;
const SCAN_POWERS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 8.0];
const CONVEX_SLACK: f64 = 1e-9;

impl DiffusionCoefficient {
    pub fn new(family: Family) -> Result<Self> {
        check_parameters(&family)?;
        let mut coeff = DiffusionCoefficient {
            family,
            thresholds: Thresholds { m0: 0.0, m: 0.0, k_m: 0.0 },
        };
        coeff.check_hypothesis()?;
        coeff.thresholds = coeff.locate_thresholds()?;
        Ok(coeff)
    }

    pub fn ratio_power(alpha: f64, r: f64) -> Result<Self> {
        Self::new(Family::RatioPower { alpha, r })
    }

    pub fn log_perturbed(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Family::LogPerturbed { alpha, beta })
    }

    pub fn iterated_log(beta: f64, kappa: f64) -> Result<Self> {
        Self::new(Family::IteratedLog { beta, kappa })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(Family::Constant { c })
    }

    pub fn custom<F>(eval: F, m0: f64, label: impl Into<String>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(Family::Custom { eval: Arc::new(eval), m0, label: label.into() })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    /// `rho(u)`. Custom evaluators may return non-finite values; see
    /// [`try_eval_rho`](Self::try_eval_rho).
    #[inline]
    pub fn eval_rho(&self, u: f64) -> f64 {
        match &self.family {
            Family::RatioPower { alpha, r } => {
                let a = u.abs();
                if a == 0.0 {
                    0.0
                } else if *r == 0.0 {
                    if *alpha == 0.5 {
                        a.sqrt()
                    } else {
                        a.powf(*alpha)
                    }
                } else if *alpha == 0.0 {
                    a / (r + a)
                } else {
                    a / (r + a).powf(1.0 - alpha)
                }
            }
            Family::LogPerturbed { alpha, beta } => {
                let a = u.abs();
                let base = if *alpha == 0.0 { 1.0 } else { a.powf(*alpha) };
                base * (std::f64::consts::E + a * a).ln().powf(-beta)
            }
            Family::IteratedLog { beta, kappa } => {
                let a = u.abs();
                if a == 0.0 {
                    return 0.0;
                }
                let ll = (std::f64::consts::E + a * a).ln().ln();
                a * (-beta * ll.powf(*kappa)).exp()
            }
            Family::Constant { c } => *c,
            Family::Custom { eval, .. } => eval(u),
        }
    }

    /// `w_j *= rho(u_j)`, bit-identical to [`eval_rho`](Self::eval_rho) but with the
    /// family dispatch hoisted out of the loop.
    pub fn scale_by_rho(&self, u: &[f64], w: &mut [f64]) {
        match &self.family {
            Family::RatioPower { alpha, r } if *r == 0.0 && *alpha == 0.5 => {
                for (wj, &uj) in w.iter_mut().zip(u) {
                    *wj *= uj.abs().sqrt();
                }
            }
            Family::RatioPower { alpha, r } if *r != 0.0 && *alpha == 0.0 => {
                for (wj, &uj) in w.iter_mut().zip(u) {
                    let a = uj.abs();
                    *wj *= if a == 0.0 { 0.0 } else { a / (r + a) };
                }
            }
            Family::Constant { c } => {
                for wj in w.iter_mut() {
                    *wj *= c;
                }
            }
            _ => {
                for (wj, &uj) in w.iter_mut().zip(u) {
                    *wj *= self.eval_rho(uj);
                }
            }
        }
    }

    pub fn try_eval_rho(&self, u: f64) -> Result<f64> {
        let v = self.eval_rho(u);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("rho({u}) = {v}")))
        }
    }

    /// `rho_p(x) = |rho(x^(1/p))|^p + |rho(-x^(1/p))|^p`.
    pub fn rho_p(&self, p: f64, x: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("rho_p needs p > 0, got {p}")));
        }
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("rho_p needs x >= 0, got {x}")));
        }
        let v = self.rho_p_unchecked(p, x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("rho_{p}({x}) = {v}")))
        }
    }

    #[inline]
    pub(crate) fn rho_p_unchecked(&self, p: f64, x: f64) -> f64 {
        let u = if p == 1.0 { x } else { x.powf(1.0 / p) };
        if p == 2.0 {
            let (a, b) = (self.eval_rho(u), self.eval_rho(-u));
            a * a + b * b
        } else {
            self.eval_rho(u).abs().powf(p) + self.eval_rho(-u).abs().powf(p)
        }
    }

    /// `rho_2(x)` for `x >= 0`.
    #[inline]
    pub fn rho2(&self, x: f64) -> f64 {
        self.rho_p_unchecked(2.0, x)
    }

    /// `g_p^+(x) + g_p^-(x)`, the derivative of `rho_p`, by centred differences.
    pub fn subgradient_gp(&self, p: f64, x: f64) -> Result<f64> {
        let floor = self.thresholds.m0.powf(p);
        if !(x > floor) {
            return Err(Error::Domain(format!("subgradient needs x > M0^p = {floor}, got {x}")));
        }
        let h = (1e-6 * x).max(1e-9).min(x);
        let up = self.rho_p(p, x + h)?;
        let down = self.rho_p(p, x - h)?;
        Ok((up - down) / (2.0 * h))
    }

    /// `sup |rho|` when `rho` is bounded.
    pub fn sup_abs(&self) -> Option<f64> {
        match &self.family {
            Family::RatioPower { alpha, .. } if *alpha == 0.0 => Some(1.0),
            Family::Constant { c } => Some(c.abs()),
            _ => None,
        }
    }

    /// True when `rho` vanishes on `|x| >= M0`, in which case `F` is infinite there.
    pub fn vanishes_beyond_m0(&self) -> bool {
        let m0 = self.thresholds.m0;
        let probes = geomspace(m0.max(1e-6) * 1.0001 + 1e-9, SCAN_HI, 200);
        probes.iter().all(|&u| self.eval_rho(u) == 0.0 && self.eval_rho(-u) == 0.0)
    }

    pub fn spec(&self) -> Option<CoefficientSpec> {
        let s = match &self.family {
            Family::RatioPower { alpha, r } => CoefficientSpec {
                family: "ratio-power".into(),
                alpha: Some(*alpha),
                r: Some(*r),
                ..Default::default()
            },
            Family::LogPerturbed { alpha, beta } => CoefficientSpec {
                family: "log-perturbed".into(),
                alpha: Some(*alpha),
                beta: Some(*beta),
                ..Default::default()
            },
            Family::IteratedLog { beta, kappa } => CoefficientSpec {
                family: "iterated-log".into(),
                beta: Some(*beta),
                kappa: Some(*kappa),
                ..Default::default()
            },
            Family::Constant { c } => {
                CoefficientSpec { family: "constant".into(), c: Some(*c), ..Default::default() }
            }
            Family::Custom { .. } => return None,
        };
        Some(s)
    }

    fn check_hypothesis(&self) -> Result<()> {
        for &u in &[0.0, 1e-6, 1e-3, 0.5, 1.0, 2.0, 10.0, 1e3, 1e6, 1e9, 1e12] {
            for v in [self.eval_rho(u), self.eval_rho(-u)] {
                if !v.is_finite() {
                    return Err(Error::hypothesis("rho(i)", format!("rho is not finite at ±{u}")));
                }
            }
        }
        for sign in [1.0, -1.0] {
            let ratios: Vec<f64> =
                [1e6, 1e9, 1e12].iter().map(|&x| (self.eval_rho(sign * x) / x).abs()).collect();
            let all_zero = ratios.iter().all(|&r| r == 0.0);
            let decreasing = ratios[0] >= ratios[1] && ratios[1] >= ratios[2] && ratios[2] < ratios[0];
            if !(all_zero || decreasing) {
                return Err(Error::hypothesis(
                    "rho(ii)",
                    format!("|rho(x)/x| is not decreasing at x = ±1e6, 1e9, 1e12: {ratios:?}"),
                ));
            }
        }
        if let Family::Custom { m0, .. } = &self.family {
            for sign in [1.0, -1.0] {
                let start = (m0 * 1.001).max(SCAN_LO) + 1e-9;
                let grid = geomspace(start, SCAN_HI, 400);
                let vals: Vec<f64> = grid.iter().map(|&u| self.eval_rho(sign * u).abs()).collect();
                if let Some(i) = last_convex_index(&grid, &vals) {
                    return Err(Error::hypothesis(
                        "rho(iii)",
                        format!("|rho| is not concave beyond the declared M0 = {m0}: convex near {}", grid[i]),
                    ));
                }
            }
        }
        Ok(())
    }

    fn locate_thresholds(&self) -> Result<Thresholds> {
        match &self.family {
            Family::RatioPower { .. } | Family::Constant { .. } => {
                return Ok(Thresholds { m0: 0.0, m: 0.0, k_m: 0.0 });
            }
            _ => {}
        }
        let grid = geomspace(SCAN_LO, SCAN_HI, SCAN_POINTS);
        if !matches!(self.family, Family::Custom { .. }) {
            // closed families are even: one |rho| scan serves every rho_p(u^p) = 2|rho(u)|^p
            let abs: Vec<f64> = grid.iter().map(|&u| self.eval_rho(u).abs()).collect();
            let m0 = threshold_from_scan(&grid, &abs, "|rho|")?;
            let mut m = m0;
            for &p in &SCAN_POWERS {
                let xs: Vec<f64> = grid.iter().map(|&u| if p == 1.0 { u } else { u.powf(p) }).collect();
                let vals: Vec<f64> = abs.iter().map(|&a| 2.0 * if p == 2.0 { a * a } else { a.powf(p) }).collect();
                m = m.max(threshold_from_scan(&xs, &vals, "rho_p")?.powf(1.0 / p));
            }
            let k_m = self.sup_below(m);
            return Ok(Thresholds { m0, m, k_m });
        }
        let m0 = match &self.family {
            Family::Custom { m0, .. } => *m0,
            _ => unreachable!("closed families handled above"),
        };
        let mut m = m0;
        for &p in &SCAN_POWERS {
            let xs: Vec<f64> = grid.iter().map(|&u| u.powf(p)).collect();
            let vals: Vec<f64> = xs.iter().map(|&x| self.rho_p_unchecked(p, x)).collect();
            let onset = threshold_from_scan(&xs, &vals, "rho_p")?;
            m = m.max(onset.powf(1.0 / p));
        }
        let k_m = self.sup_below(m);
        Ok(Thresholds { m0, m, k_m })
    }

    fn sup_below(&self, m: f64) -> f64 {
        if m == 0.0 {
            return 0.0;
        }
        let mut best: f64 = 0.0;
        let n = 4000;
        for i in 0..n {
            let u = m * i as f64 / n as f64;
            best = best.max(self.eval_rho(u).abs()).max(self.eval_rho(-u).abs());
        }
        for u in geomspace(SCAN_LO.min(m / 2.0), m, 400) {
            if u < m {
                best = best.max(self.eval_rho(u).abs()).max(self.eval_rho(-u).abs());
            }
        }
        best
    }
}

fn check_parameters(family: &Family) -> Result<()> {
    let bad = |msg: String| Err(Error::hypothesis("rho", msg));
    match family {
        Family::RatioPower { alpha, r } => {
            if !(0.0..1.0).contains(alpha) {
                return bad(format!("RatioPower needs alpha in [0, 1), got {alpha}"));
            }
            if !(*r >= 0.0 && r.is_finite()) {
                return bad(format!("RatioPower needs r >= 0, got {r}"));
            }
        }
        Family::LogPerturbed { alpha, beta } => {
            let ok = (*alpha == 0.0 && *beta < 0.0)
                || (*alpha > 0.0 && *alpha < 1.0 && beta.is_finite())
                || (*alpha == 1.0 && *beta > 0.0);
            if !ok {
                return bad(format!(
                    "LogPerturbed needs alpha = 0, beta < 0; or alpha in (0, 1); or alpha = 1, beta > 0; got alpha = {alpha}, beta = {beta}"
                ));
            }
        }
        Family::IteratedLog { beta, kappa } => {
            if !(*beta > 0.0 && *kappa > 0.0 && beta.is_finite() && kappa.is_finite()) {
                return bad(format!("IteratedLog needs beta > 0 and kappa > 0, got {beta}, {kappa}"));
            }
        }
        Family::Constant { c } => {
            if !c.is_finite() {
                return bad(format!("Constant needs a finite c, got {c}"));
            }
        }
        Family::Custom { m0, .. } => {
            if !(*m0 >= 0.0 && m0.is_finite()) {
                return bad(format!("Custom needs a finite declared M0 >= 0, got {m0}"));
            }
        }
    }
    Ok(())
}

/// Index of the middle point of the last strictly convex triple, if any.
fn last_convex_index(xs: &[f64], vals: &[f64]) -> Option<usize> {
    let mut last = None;
    for i in 1..xs.len() - 1 {
        let s1 = (vals[i] - vals[i - 1]) / (xs[i] - xs[i - 1]);
        let s2 = (vals[i + 1] - vals[i]) / (xs[i + 1] - xs[i]);
        if s2 - s1 > CONVEX_SLACK * (s1.abs() + s2.abs()) {
            last = Some(i);
        }
    }
    last
}

fn threshold_from_scan(xs: &[f64], vals: &[f64], what: &str) -> Result<f64> {
    match last_convex_index(xs, vals) {
        None => Ok(0.0),
        Some(i) if i + 12 >= xs.len() => Err(Error::Threshold(format!(
            "{what} is still convex near the end of the scan (x = {:e}); concavity onset not found below {SCAN_HI:e}",
            xs[i]
        ))),
        Some(i) => Ok(xs[i + 2]),
    }
}

/// Serializable coefficient block `{family, alpha, beta, kappa, r, c}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl CoefficientSpec {
    pub fn build(&self) -> Result<DiffusionCoefficient> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("coefficient family {} needs `{name}`", self.family)))
        };
        let family = match self.family.as_str() {
            "ratio-power" => Family::RatioPower { alpha: need(self.alpha, "alpha")?, r: self.r.unwrap_or(0.0) },
            "log-perturbed" => Family::LogPerturbed {
                alpha: need(self.alpha, "alpha")?,
                beta: need(self.beta, "beta")?,
            },
            "iterated-log" => Family::IteratedLog {
                beta: need(self.beta, "beta")?,
                kappa: need(self.kappa, "kappa")?,
            },
            "constant" => Family::Constant { c: need(self.c, "c")? },
            other => return Err(Error::Config(format!("unknown coefficient family `{other}`"))),
        };
        DiffusionCoefficient::new(family)
    }
}
