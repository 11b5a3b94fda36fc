//! Ensemble estimators: moments, tails, spatial suprema, Hölder regression.

use serde::{Deserialize, Serialize};

use super::{PathEnsemble, Snapshot};
use crate::error::{Error, Result};
use crate::stats::{batch_mean, linear_fit, wilson_interval, Estimate, LinearFit};

/// Which samples of `u(t, .)` feed a moment estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Site {
    /// `u(t, 0)` of every path.
    Center,
    /// The per-path spatial average of `|u(t, x)|^p`; unbiased for `E|u(t, x)|^p`
    /// when the law of `u(t, x)` does not depend on `x` (flat initial data).
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub p: f64,
    pub value: f64,
    pub se: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub z: f64,
    pub count: u64,
    pub n: u64,
    pub frequency: f64,
    pub lo: f64,
    pub hi: f64,
    /// Fewer than ten exceedances: the frequency is not resolvable.
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupRow {
    pub t: f64,
    pub r: f64,
    pub mean: f64,
    pub se: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub t: f64,
    /// Slope of `log E|u(x + delta) - u(x)|^2` against `log delta`, i.e. `2 eta_2`.
    pub exponent: f64,
    pub eta: f64,
    pub slope_se: f64,
    pub r2: f64,
    pub deltas: Vec<f64>,
    pub increments: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthScale {
    /// `log moment` against `log t`.
    Polynomial,
    /// `log moment` against `t`.
    Exponential,
}

fn batches(ens: &PathEnsemble) -> Result<usize> {
    let n = ens.live_paths();
    let b = ens.config.batches.min(n);
    if b < 2 {
        return Err(Error::Estimator(format!("need at least 2 batches, have {b} from {n} live paths")));
    }
    Ok(b)
}

fn order_index(ens: &PathEnsemble, p: f64) -> Result<usize> {
    ens.config
        .moment_orders
        .iter()
        .position(|&q| q == p)
        .ok_or_else(|| Error::Estimator(format!("order {p} was not recorded; recorded: {:?}", ens.config.moment_orders)))
}

fn samples(ens: &PathEnsemble, s: &Snapshot, p: f64, site: Site) -> Result<Vec<f64>> {
    match site {
        Site::Center => Ok(s.center.iter().map(|u| u.abs().powf(p)).collect()),
        Site::Pooled => Ok(s.power_means[order_index(ens, p)?].clone()),
    }
}

/// Batch-mean estimates of `E|u(t, x)|^p` at every snapshot.
pub fn estimate_moments(ens: &PathEnsemble, ps: &[f64], site: Site) -> Result<Vec<MomentRow>> {
    if ps.is_empty() {
        return Err(Error::Estimator("empty grid: no moment orders".into()));
    }
    let b = batches(ens)?;
    let mut rows = Vec::new();
    for s in &ens.snapshots {
        for &p in ps {
            let Estimate { mean, se } = batch_mean(&samples(ens, s, p, site)?, b)?;
            rows.push(MomentRow { t: s.t, p, value: mean, se, batches: b });
        }
    }
    Ok(rows)
}

pub fn estimate_mean(ens: &PathEnsemble, site: Site) -> Result<Vec<MeanRow>> {
    let b = batches(ens)?;
    ens.snapshots
        .iter()
        .map(|s| {
            let v = match site {
                Site::Center => &s.center,
                Site::Pooled => &s.spatial_mean,
            };
            let Estimate { mean, se } = batch_mean(v, b)?;
            Ok(MeanRow { t: s.t, mean, se })
        })
        .collect()
}

/// `Var u(t, x)`; the standard error is the spread of per-batch variances.
pub fn estimate_variance(ens: &PathEnsemble, site: Site) -> Result<Vec<MeanRow>> {
    let b = batches(ens)?;
    let n = ens.live_paths();
    let var_of = |m1: &[f64], m2: &[f64]| {
        let k = m1.len() as f64;
        let a = m1.iter().sum::<f64>() / k;
        let q = m2.iter().sum::<f64>() / k;
        (q - a * a) * k / (k - 1.0)
    };
    ens.snapshots
        .iter()
        .map(|s| {
            let (m1, m2): (Vec<f64>, Vec<f64>) = match site {
                Site::Center => (s.center.clone(), s.center.iter().map(|u| u * u).collect()),
                Site::Pooled => (s.spatial_mean.clone(), s.power_means[order_index(ens, 2.0)?].clone()),
            };
            let per: Vec<f64> = (0..b)
                .map(|i| {
                    let (lo, hi) = (i * n / b, (i + 1) * n / b);
                    var_of(&m1[lo..hi], &m2[lo..hi])
                })
                .collect();
            let pm = per.iter().sum::<f64>() / b as f64;
            let spread = per.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / (b as f64 - 1.0);
            Ok(MeanRow { t: s.t, mean: var_of(&m1, &m2), se: (spread / b as f64).sqrt() })
        })
        .collect()
}

/// Fits `log value` against `log t` or `t`.
pub fn growth_exponent(times: &[f64], values: &[f64], scale: GrowthScale) -> Result<LinearFit> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Estimator(format!("growth regression needs positive values, got {values:?}")));
    }
    let x: Vec<f64> = match scale {
        GrowthScale::Polynomial => times.iter().map(|t| t.ln()).collect(),
        GrowthScale::Exponential => times.to_vec(),
    };
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    linear_fit(&x, &y)
}

/// Exceedance frequencies `P(u(t, 0) >= z)` with 95% Wilson intervals.
pub fn estimate_tail(ens: &PathEnsemble, t: f64, zs: &[f64]) -> Result<Vec<TailRow>> {
    if zs.is_empty() {
        return Err(Error::Estimator("empty grid: no tail levels".into()));
    }
    let s = ens.snapshot(t)?;
    let n = s.center.len() as u64;
    if n == 0 {
        return Err(Error::Estimator("no live paths".into()));
    }
    Ok(zs
        .iter()
        .map(|&z| {
            let count = s.center.iter().filter(|&&u| u >= z).count() as u64;
            let (lo, hi) = wilson_interval(count, n, 1.959963984540054);
            TailRow { t, z, count, n, frequency: count as f64 / n as f64, lo, hi, censored: count < 10 }
        })
        .collect())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Ensemble mean and quantiles of `sup_{|x| <= R} u(t, x)` for every configured radius.
pub fn estimate_spatial_sup(ens: &PathEnsemble, t: f64) -> Result<Vec<SupRow>> {
    if ens.config.sup_radii.is_empty() {
        return Err(Error::Estimator("empty grid: no sup radii configured".into()));
    }
    let s = ens.snapshot(t)?;
    let b = batches(ens)?;
    ens.config
        .sup_radii
        .iter()
        .zip(&s.sup)
        .map(|(&r, v)| {
            let Estimate { mean, se } = batch_mean(v, b)?;
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            Ok(SupRow {
                t,
                r,
                mean,
                se,
                q05: quantile(&sorted, 0.05),
                q50: quantile(&sorted, 0.5),
                q95: quantile(&sorted, 0.95),
            })
        })
        .collect()
}

/// Increment slopes above this are read as a differentiable field (slope 2) bent by curvature.
const SMOOTH_SLOPE: f64 = 1.75;

/// Regression of the mean squared spatial increment against the lag.
pub fn estimate_holder(ens: &PathEnsemble, t: f64) -> Result<HolderEstimate> {
    let s = ens.snapshot(t)?;
    if ens.lags.len() < 3 {
        return Err(Error::Estimator(format!("need at least 3 lags, have {}", ens.lags.len())));
    }
    let deltas: Vec<f64> = ens.lags.iter().map(|&l| l as f64 * ens.dx).collect();
    let increments: Vec<f64> =
        s.increments.iter().map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64).collect();
    // increments at roundoff level relative to u^2 count as zero
    let scale = s.center.iter().map(|u| u * u).sum::<f64>() / s.center.len().max(1) as f64;
    let floor = 1e-24 * scale.max(f64::MIN_POSITIVE);
    if increments.iter().any(|v| !(*v > floor && v.is_finite())) {
        return Err(Error::Estimator("no power law: spatial increments vanish".into()));
    }
    let fit = growth_exponent(&deltas, &increments, GrowthScale::Polynomial)?;
    if fit.slope > SMOOTH_SLOPE {
        return Err(Error::Estimator(format!(
            "no rough power law: increments scale like a smooth field (slope {:.3})",
            fit.slope
        )));
    }
    Ok(HolderEstimate {
        t,
        exponent: fit.slope,
        eta: fit.slope / 2.0,
        slope_se: fit.slope_se,
        r2: fit.r2,
        deltas,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::InitSpec;
    use crate::diffusion::CoefficientSpec;
    use crate::sim::{simulate, SimConfig};

    fn cfg(c: f64) -> SimConfig {
        let mut c0 = crate::sim::tests::small(CoefficientSpec {
            family: "constant".into(),
            c: Some(c),
            ..Default::default()
        });
        c0.paths = 40;
        c0.moment_orders = vec![1.0, 2.0, 3.0];
        c0
    }

    #[test]
    fn deterministic_field_moments_are_exact() {
        let mut c = cfg(0.0);
        c.init = InitSpec { kind: "constant".into(), c: Some(1.5), mass: None, ell: None };
        let e = simulate(&c).unwrap();
        for site in [Site::Center, Site::Pooled] {
            for row in estimate_moments(&e, &[2.0, 3.0], site).unwrap() {
                assert!((row.value - 1.5f64.powf(row.p)).abs() < 1e-12);
                assert!(row.se < 1e-12);
            }
        }
        assert!(estimate_moments(&e, &[5.0], Site::Pooled).is_err());
        assert!(estimate_moments(&e, &[], Site::Center).is_err());
    }

    #[test]
    fn too_few_paths_for_batches() {
        let mut c = cfg(1.0);
        c.paths = 1;
        let e = simulate(&c).unwrap();
        assert!(estimate_moments(&e, &[2.0], Site::Center).is_err());
    }

    #[test]
    fn tail_below_the_minimum_is_certain() {
        let e = simulate(&cfg(0.3)).unwrap();
        let lowest = e.snapshots[1].field_min.iter().copied().fold(f64::INFINITY, f64::min);
        let rows = estimate_tail(&e, 1.0, &[lowest - 1.0, 1e6]).unwrap();
        assert_eq!(rows[0].frequency, 1.0);
        assert_eq!(rows[1].count, 0);
        assert!(rows[1].censored);
        assert!(estimate_tail(&e, 1.0, &[]).unwrap_err().to_string().contains("empty grid"));
        assert!(estimate_tail(&e, 0.7, &[1.0]).is_err());
    }

    #[test]
    fn sup_grows_with_radius() {
        let e = simulate(&cfg(0.3)).unwrap();
        let rows = estimate_spatial_sup(&e, 1.0).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].mean >= rows[0].mean);
        assert!(rows[0].q05 <= rows[0].q50 && rows[0].q50 <= rows[0].q95);
    }

    #[test]
    fn smooth_fields_have_no_rough_power_law() {
        let e = simulate(&cfg(0.0)).unwrap();
        assert!(estimate_holder(&e, 1.0).is_err());
        let mut c = cfg(0.0);
        c.init = InitSpec { kind: "dirac".into(), c: None, mass: Some(1.0), ell: None };
        let e = simulate(&c).unwrap();
        assert!(estimate_holder(&e, 1.0).is_err());
    }

    #[test]
    fn growth_regressions() {
        let t = [1.0, 2.0, 4.0, 8.0];
        let v: Vec<f64> = t.iter().map(|t: &f64| 3.0 * t.powf(0.75)).collect();
        let f = growth_exponent(&t, &v, GrowthScale::Polynomial).unwrap();
        assert!((f.slope - 0.75).abs() < 1e-12);
        let v: Vec<f64> = t.iter().map(|t: &f64| (0.4 * t).exp()).collect();
        let f = growth_exponent(&t, &v, GrowthScale::Exponential).unwrap();
        assert!((f.slope - 0.4).abs() < 1e-12);
    }

    #[test]
    fn variance_of_a_constant_field_is_zero() {
        let e = simulate(&cfg(0.0)).unwrap();
        for site in [Site::Center, Site::Pooled] {
            for row in estimate_variance(&e, site).unwrap() {
                assert!(row.mean.abs() < 1e-12);
            }
        }
    }
}
