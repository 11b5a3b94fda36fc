//! The envelope `F(x) = x / (4 rho_2(x))`, its right inverse, and the solver
//! for the concave integral inequality `x <= k rho_2(x) + b`.

use std::f64::consts::E;

use crate::diffusion::{DiffusionCoefficient, Family};
use crate::error::{Error, Result};
use crate::stats::geomspace;

const REL_TOL: f64 = 1e-12;
const PRESCAN: usize = 64;

#[derive(Debug, Clone)]
pub struct Envelope {
    coeff: DiffusionCoefficient,
    m: f64,
}

impl Envelope {
    pub fn new(coeff: &DiffusionCoefficient) -> Self {
        Envelope { coeff: coeff.clone(), m: coeff.thresholds().m }
    }

    /// Envelope with `M = 0`, legitimate when `|rho|` is concave on each half-line.
    pub fn concave(coeff: &DiffusionCoefficient) -> Self {
        Envelope { coeff: coeff.clone(), m: 0.0 }
    }

    pub fn coefficient(&self) -> &DiffusionCoefficient {
        &self.coeff
    }

    /// `2 M^2`, the floor of `F^-1`.
    pub fn floor(&self) -> f64 {
        2.0 * self.m * self.m
    }

    /// Whether `F^-1` has an exact closed form for this coefficient.
    pub fn has_closed_inverse(&self) -> bool {
        matches!(
            self.coeff.family(),
            Family::RatioPower { .. } | Family::IteratedLog { .. } | Family::Constant { .. }
        ) || matches!(self.coeff.family(), Family::LogPerturbed { alpha, .. } if *alpha == 1.0)
    }

    /// `F(x)` for `x >= M^2`; `+inf` where `rho_2` vanishes.
    pub fn f_eval(&self, x: f64) -> Result<f64> {
        let m2 = self.m * self.m;
        if !(x >= m2 * (1.0 - 1e-12)) {
            return Err(Error::Domain(format!("F is defined on [M^2, inf) = [{m2}, inf), got {x}")));
        }
        Ok(self.f_unchecked(x))
    }

    fn f_unchecked(&self, x: f64) -> f64 {
        match self.coeff.family() {
            Family::RatioPower { alpha, r } => (r + x.sqrt()).powf(2.0 * (1.0 - alpha)) / 8.0,
            Family::LogPerturbed { alpha, beta } => {
                let base = if *alpha == 1.0 { 1.0 } else { x.powf(1.0 - alpha) };
                base * (E + x).ln().powf(2.0 * beta) / 8.0
            }
            Family::IteratedLog { beta, kappa } => {
                (2.0 * beta * (E + x).ln().ln().powf(*kappa)).exp() / 8.0
            }
            Family::Constant { c } => {
                if *c == 0.0 {
                    f64::INFINITY
                } else {
                    x / (8.0 * c * c)
                }
            }
            Family::Custom { .. } => {
                let r2 = self.coeff.rho2(x);
                if r2 == 0.0 {
                    f64::INFINITY
                } else {
                    x / (4.0 * r2)
                }
            }
        }
    }

    /// `F^-1(y) = inf { x >= 2M^2 : F(x) >= y }`, closed form when available.
    pub fn f_inverse(&self, y: f64) -> Result<f64> {
        check_level(y)?;
        let floor = self.floor();
        let v = match self.coeff.family() {
            Family::RatioPower { alpha, r } => {
                if 8.0 * y >= r.powf(2.0 * (1.0 - alpha)) {
                    ((8.0 * y).powf(1.0 / (2.0 * (1.0 - alpha))) - r).powi(2)
                } else {
                    0.0
                }
            }
            Family::LogPerturbed { alpha, beta } if *alpha == 1.0 => {
                floor.max((8.0 * y).powf(1.0 / (2.0 * beta)).exp() - E)
            }
            Family::IteratedLog { beta, kappa } => {
                if 8.0 * y <= 1.0 {
                    floor
                } else {
                    let inner = ((8.0 * y).ln() / (2.0 * beta)).powf(1.0 / kappa);
                    floor.max(inner.exp().exp() - E)
                }
            }
            Family::Constant { c } => 8.0 * c * c * y,
            _ => return self.f_inverse_numeric(y),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Divergence(format!("F^-1({y}) overflows")))
        }
    }

    /// `F^-1` by bracketing and bisection on `F`, ignoring closed forms.
    pub fn f_inverse_numeric(&self, y: f64) -> Result<f64> {
        check_level(y)?;
        let lo = self.floor();
        if self.f_unchecked(lo) >= y {
            return Ok(lo);
        }
        let mut hi = (2.0 * lo).max(1.0);
        while self.f_unchecked(hi) < y {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Divergence(format!(
                    "F stays below {y} on all representable x; F^-1 does not exist"
                )));
            }
        }
        // leftmost crossing: scan before bisecting in case F is not monotone
        let start = if lo > 0.0 { lo } else { hi * 1e-30 };
        let mut left = lo;
        let mut right = hi;
        for x in geomspace(start, hi, PRESCAN) {
            if x <= lo {
                continue;
            }
            if self.f_unchecked(x) >= y {
                right = x;
                break;
            }
            left = x;
        }
        for _ in 0..400 {
            if right - left <= REL_TOL * right {
                break;
            }
            let mid = if left > 0.0 && right / left > 2.0 {
                left.sqrt() * right.sqrt()
            } else {
                0.5 * (left + right)
            };
            if self.f_unchecked(mid) >= y {
                right = mid;
            } else {
                left = mid;
            }
        }
        Ok(right)
    }

    /// Certified bound `2 F^-1(k) + 2b` for any `x >= 0` with `x <= k rho_2(x) + b`.
    pub fn solve_concave_inequality(&self, k: f64, b: f64) -> Result<f64> {
        if !(k > 0.0) || !(b >= 0.0) || !k.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("need k > 0 and b >= 0, got k = {k}, b = {b}")));
        }
        Ok(2.0 * self.f_inverse(k)? + 2.0 * b)
    }
}

fn check_level(y: f64) -> Result<()> {
    if y >= 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("F^-1 needs a finite y >= 0, got {y}")))
    }
}

/// Largest solution of `x = k rho2(x) + b`, by bracketing and bisection.
///
/// Brute-force reference for [`Envelope::solve_concave_inequality`].
pub fn fixed_point_oracle<R: Fn(f64) -> f64>(rho2: R, k: f64, b: f64) -> Result<f64> {
    if !(k > 0.0) || !(b >= 0.0) {
        return Err(Error::Domain(format!("need k > 0 and b >= 0, got k = {k}, b = {b}")));
    }
    let g = |x: f64| x - k * rho2(x) - b;
    let mut hi = (2.0 * b).max(1.0);
    let mut extra = 0;
    while extra < 60 {
        let v = g(hi);
        if v.is_nan() {
            return Err(Error::Evaluation(format!("rho2 is not finite at {hi}")));
        }
        if v > 0.0 {
            extra += 1;
        } else {
            extra = 0;
        }
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Divergence("x = k rho2(x) + b has no bracket below f64::MAX".into()));
        }
    }
    // after the probes, hi sits well past the last sign change seen
    let lo = if b > 0.0 { b } else { hi * 1e-200 };
    let grid = geomspace(lo, hi, 2000);
    let last_nonpos = grid.iter().rposition(|&x| g(x) <= 0.0);
    let (mut left, mut right) = match last_nonpos {
        Some(i) if i + 1 < grid.len() => (grid[i], grid[i + 1]),
        Some(_) => return Err(Error::Divergence("no sign change at the top of the bracket".into())),
        None => return Ok(lo),
    };
    for _ in 0..400 {
        if right - left <= REL_TOL * right {
            break;
        }
        let mid = 0.5 * (left + right);
        if g(mid) <= 0.0 {
            left = mid;
        } else {
            right = mid;
        }
    }
    Ok(right)
}

/// One Newton step from the linearisation: `k^(1/(1-a)) + b/(1-a)` bounds the
/// fixed point of `x = k x^a + b`.
pub fn newton_step_bound(k: f64, b: f64, a: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::Domain(format!("newton step bound needs a in [0, 1), got {a}")));
    }
    if !(k > 0.0) || !(b >= 0.0) {
        return Err(Error::Domain(format!("need k > 0 and b >= 0, got k = {k}, b = {b}")));
    }
    Ok(k.powf(1.0 / (1.0 - a)) + b / (1.0 - a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(c: DiffusionCoefficient) -> Envelope {
        Envelope::new(&c)
    }

    #[test]
    fn f_examples() {
        let e = env(DiffusionCoefficient::ratio_power(0.5, 0.0).unwrap());
        assert!((e.f_eval(4.0).unwrap() - 0.25).abs() < 1e-15);
        let zero = env(DiffusionCoefficient::constant(0.0).unwrap());
        assert_eq!(zero.f_eval(3.0).unwrap(), f64::INFINITY);
        assert_eq!(zero.f_inverse(10.0).unwrap(), 0.0);
    }

    #[test]
    fn closed_f_matches_definition() {
        for c in [
            DiffusionCoefficient::ratio_power(0.25, 2.0).unwrap(),
            DiffusionCoefficient::log_perturbed(0.5, -0.3).unwrap(),
            DiffusionCoefficient::log_perturbed(1.0, 0.7).unwrap(),
            DiffusionCoefficient::iterated_log(1.0, 2.0).unwrap(),
        ] {
            let e = env(c.clone());
            let m2 = c.thresholds().m.powi(2);
            for x in geomspace(m2.max(1e-3), 1e9, 40) {
                let direct = x / (4.0 * c.rho2(x));
                let closed = e.f_eval(x).unwrap();
                assert!((direct - closed).abs() <= 1e-12 * closed, "{c:?} at {x}");
            }
        }
    }

    #[test]
    fn f_inverse_examples() {
        let e = env(DiffusionCoefficient::ratio_power(0.5, 0.0).unwrap());
        assert!((e.f_inverse(1.0).unwrap() - 64.0).abs() < 1e-12);
        let b = env(DiffusionCoefficient::ratio_power(0.0, 1.0).unwrap());
        assert_eq!(b.f_inverse(0.125).unwrap(), 0.0);
        let l = env(DiffusionCoefficient::log_perturbed(1.0, 1.0).unwrap());
        let y: f64 = 2.0;
        let want = (2f64.powf(1.5) * y.powf(0.5)).exp() - E;
        assert!((l.f_inverse(y).unwrap() - want).abs() < 1e-12 * want);
        let v = env(DiffusionCoefficient::iterated_log(1.0, 2.0).unwrap());
        let y: f64 = 1e6;
        let want = ((((8.0 * y).ln() / 2.0_f64).sqrt()).exp()).exp() - E;
        assert!(want > v.floor());
        assert!((v.f_inverse(y).unwrap() - want).abs() < 1e-12 * want);
        assert_eq!(v.f_inverse(40.0).unwrap(), v.floor());
        assert!(e.f_inverse(-1.0).is_err());
    }

    #[test]
    fn floor_applies_to_small_levels() {
        let l = env(DiffusionCoefficient::log_perturbed(1.0, 0.5).unwrap());
        assert_eq!(l.f_inverse(0.01).unwrap(), l.floor());
        assert_eq!(l.f_inverse_numeric(0.0).unwrap(), l.floor());
    }

    #[test]
    fn concave_inequality_example() {
        let e = env(DiffusionCoefficient::ratio_power(0.5, 0.0).unwrap());
        assert!((e.solve_concave_inequality(1.0, 1.0).unwrap() - 130.0).abs() < 1e-10);
        assert!((e.solve_concave_inequality(1.0, 0.0).unwrap() - 128.0).abs() < 1e-10);
        let l = env(DiffusionCoefficient::log_perturbed(1.0, 0.5).unwrap());
        let m2 = l.coefficient().thresholds().m.powi(2);
        let got = l.solve_concave_inequality(1e-4, 0.3).unwrap();
        assert!((got - (4.0 * m2 + 0.6)).abs() < 1e-12 * got);
    }

    #[test]
    fn oracle_examples() {
        let x = fixed_point_oracle(|x| 0.4 * x.sqrt(), 1.0, 0.125).unwrap();
        assert!((x - 0.367481).abs() < 1e-5, "{x}");
        let x = fixed_point_oracle(|_| 0.0, 2.0, 0.7).unwrap();
        assert!((x - 0.7).abs() < 1e-11);
        let x = fixed_point_oracle(|x| x.sqrt(), 1.0, 0.0).unwrap();
        assert!((x - 1.0).abs() < 1e-11);
    }

    #[test]
    fn newton_examples() {
        assert!((newton_step_bound(0.4, 0.125, 0.5).unwrap() - 0.41).abs() < 1e-15);
        assert_eq!(newton_step_bound(2.0, 0.0, 0.5).unwrap(), 4.0);
        let golden = ((1.0 + 5f64.sqrt()) / 2.0).powi(2);
        let x = fixed_point_oracle(|x| x.sqrt(), 1.0, 1.0).unwrap();
        assert!((x - golden).abs() < 1e-10);
        assert!(newton_step_bound(1.0, 1.0, 0.5).unwrap() == 3.0 && x <= 3.0);
        assert!(newton_step_bound(1.0, 1.0, 1.0).is_err());
    }
}
