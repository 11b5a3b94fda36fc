//! Experiment specification: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spde_bounds::bounds::{
    scenario_preset, BoundConstants, InitSpec, InitialCondition, PresetOverrides, Regime, Scenario, WaveInit,
};
use spde_bounds::diffusion::{CoefficientSpec, DiffusionCoefficient};
use spde_bounds::kernels::{CorrelationKernel, KernelSpec};
use spde_bounds::sim::SimConfig;

use crate::CliError;

/// Problem given inline instead of by preset name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub coefficient: CoefficientSpec,
    pub kernel: KernelSpec,
    pub init: InitSpec,
    /// `heat` or `wave`.
    #[serde(default = "heat")]
    pub equation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
}

fn heat() -> String {
    "heat".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub overrides: PresetOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<InlineProblem>,
    #[serde(default)]
    pub constants: BoundConstants,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Full simulation configuration; replaces the preset's desk configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Spec(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))
    }

    pub fn preset_name(&self) -> &str {
        self.preset.as_deref().unwrap_or("alpha-white")
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        if self.problem.is_some() && self.preset.is_some() {
            return Err(CliError::Spec("give either a preset or an inline problem, not both".into()));
        }
        Ok(scenario_preset(self.preset_name(), &self.overrides)?)
    }
}

/// A validated grid: non-empty and strictly increasing.
pub fn grid(name: &str, values: &[f64]) -> Result<Vec<f64>, CliError> {
    if values.is_empty() {
        return Err(CliError::Spec(format!("empty grid: `{name}` has no values")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Spec(format!("grid `{name}` has a non-finite value {v}")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Spec(format!("grid `{name}` must be strictly increasing, got {values:?}")));
    }
    Ok(values.to_vec())
}

/// Parses `"1,2,4"`; an empty string is an empty grid.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

/// What the bound command evaluates: a preset or an inline problem.
pub enum BoundTarget {
    Preset(Box<Scenario>),
    Inline {
        coeff: DiffusionCoefficient,
        kernel: CorrelationKernel,
        init: InitialCondition,
        wave: bool,
        regime: Regime,
    },
}

impl BoundTarget {
    pub fn new(spec: &ExperimentSpec) -> Result<Self, CliError> {
        match &spec.problem {
            Some(p) => {
                if spec.preset.is_some() {
                    return Err(CliError::Spec("give either a preset or an inline problem, not both".into()));
                }
                let wave = match p.equation.as_str() {
                    "heat" => false,
                    "wave" => true,
                    other => {
                        return Err(CliError::Spec(format!(
                            "inline equation must be heat or wave, got `{other}` (fractional problems are presets)"
                        )))
                    }
                };
                Ok(BoundTarget::Inline {
                    coeff: p.coefficient.build()?,
                    kernel: p.kernel.build()?,
                    init: p.init.build()?,
                    wave,
                    regime: p.regime.as_deref().unwrap_or("auto").parse()?,
                })
            }
            None => Ok(BoundTarget::Preset(Box::new(spec.scenario()?))),
        }
    }

    pub fn default_times(&self) -> Vec<f64> {
        match self {
            BoundTarget::Preset(s) => s.regression_times(),
            BoundTarget::Inline { .. } => vec![1.0, 2.0, 4.0, 8.0],
        }
    }

    pub fn default_p(&self) -> f64 {
        match self {
            BoundTarget::Preset(s) => s.p,
            BoundTarget::Inline { .. } => 2.0,
        }
    }

    pub fn default_x(&self) -> f64 {
        match self {
            BoundTarget::Preset(s) => s.x,
            BoundTarget::Inline { .. } => 0.0,
        }
    }

    pub fn evaluate(
        &self,
        t: f64,
        x: f64,
        p: f64,
        consts: &BoundConstants,
    ) -> spde_bounds::Result<spde_bounds::bounds::BoundReport> {
        use spde_bounds::bounds::{moment_bound_heat, moment_bound_wave};
        match self {
            BoundTarget::Preset(s) => {
                if x == s.x {
                    s.evaluate(t, p, consts)
                } else {
                    let mut moved = (**s).clone();
                    moved.x = x;
                    moved.evaluate(t, p, consts)
                }
            }
            BoundTarget::Inline { coeff, kernel, init, wave: false, regime } => {
                moment_bound_heat(coeff, kernel, init, t, x, p, *regime, consts)
            }
            BoundTarget::Inline { coeff, kernel, init, wave: true, regime } => {
                let wi = WaveInit::new(init.clone(), InitialCondition::constant(0.0)?);
                moment_bound_wave(coeff, kernel, &wi, t, x, p, *regime, consts)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_list("1, 2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(parse_list("").unwrap().is_empty());
        assert!(parse_list("1,x").is_err());
        assert!(grid("t", &[]).unwrap_err().to_string().contains("empty grid"));
        assert!(grid("t", &[2.0, 1.0]).is_err());
        assert!(grid("t", &[1.0, 2.0]).is_ok());
    }

    #[test]
    fn spec_from_toml() {
        let s: ExperimentSpec = toml::from_str(
            r#"
            preset = "alpha-white"
            t = [1.0, 2.0]
            seed = 5
            [overrides]
            alpha = 0.25
            "#,
        )
        .unwrap();
        assert_eq!(s.overrides.alpha, Some(0.25));
        assert_eq!(s.t, Some(vec![1.0, 2.0]));
        assert!(toml::from_str::<ExperimentSpec>("bogus = 1").is_err());
        let inline: ExperimentSpec = toml::from_str(
            r#"
            [problem]
            equation = "heat"
            coefficient = { family = "constant", c = 1.0 }
            kernel = { variant = "white" }
            init = { kind = "constant", c = 1.0 }
            "#,
        )
        .unwrap();
        assert!(matches!(BoundTarget::new(&inline).unwrap(), BoundTarget::Inline { .. }));
    }
}
