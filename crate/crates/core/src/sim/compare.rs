//! Empirical moments against the bound engine.

use serde::{Deserialize, Serialize};

use super::estimate::{estimate_moments, Site};
use super::PathEnsemble;
use crate::bounds::{BoundConstants, InitialCondition, Scenario};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub t: f64,
    pub p: f64,
    /// Estimate of `E|u(t, 0)|^p`.
    pub empirical: f64,
    pub se: f64,
    /// The engine's bound on `E|u|^p`, i.e. `total^(p/2)`; `None` where its hypotheses fail.
    pub bound: Option<f64>,
    /// `scale * bound`, with `scale` fixed at the first time the bound exists.
    pub fitted: Option<f64>,
    pub scale: f64,
    /// The bound does not change over the sweep (its envelope floor dominates);
    /// no shape can be fitted and the raw bound is used.
    pub saturated: bool,
    /// `empirical <= fitted + 3 se`; rows without a bound pass vacuously.
    pub pass: bool,
}

/// Compares `E|u(t, 0)|^p` with the scenario's bound at every snapshot.
///
/// The bound's unknown constants are absorbed into one multiplicative scale,
/// chosen so that bound and estimate agree at the first snapshot where the bound
/// is defined and then frozen for the rest of the sweep. A bound that is the
/// same at every snapshot carries no shape to fit and is used as is.
pub fn compare_to_bound(
    ens: &PathEnsemble,
    scenario: &Scenario,
    p: f64,
    consts: &BoundConstants,
) -> Result<Vec<CompareRow>> {
    let flat = matches!(scenario.init, InitialCondition::Constant { .. });
    let site = if flat && ens.config.moment_orders.contains(&p) { Site::Pooled } else { Site::Center };
    let moments = estimate_moments(ens, &[p], site)?;
    let mut bounds = Vec::with_capacity(moments.len());
    for m in &moments {
        bounds.push(match scenario.evaluate(m.t, p, consts) {
            Ok(r) => Some(r.total.powf(p / 2.0)),
            Err(Error::Hypothesis { .. }) => None,
            Err(e) => return Err(e),
        });
    }
    let defined: Vec<f64> = bounds.iter().flatten().copied().collect();
    let Some(&first) = defined.first() else {
        return Err(Error::Estimator("the bound is undefined at every snapshot".into()));
    };
    if !(first > 0.0) {
        return Err(Error::Estimator(format!("bound vanishes: {first}")));
    }
    let saturated = defined.len() > 1 && defined.iter().all(|&b| (b - first).abs() <= 1e-12 * first);
    let scale = if saturated {
        1.0
    } else {
        let i = bounds.iter().position(Option::is_some).expect("some bound is defined");
        moments[i].value / first
    };
    Ok(moments
        .iter()
        .zip(bounds)
        .map(|(m, bound)| {
            let fitted = bound.map(|b| b * scale);
            CompareRow {
                t: m.t,
                p,
                empirical: m.value,
                se: m.se,
                bound,
                fitted,
                scale,
                saturated,
                pass: fitted.is_none_or(|f| m.value <= f + 3.0 * m.se),
            }
        })
        .collect())
}
