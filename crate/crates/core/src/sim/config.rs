use serde::{Deserialize, Serialize};

use crate::bounds::{Equation, InitSpec, Scenario};
use crate::diffusion::{CoefficientSpec, DiffusionCoefficient, Family};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimEquation {
    Heat,
    Wave,
}

/// How the heat semigroup is advanced over one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatStepper {
    /// Backward Euler on the three-point Laplacian; unconditionally stable.
    #[default]
    Implicit,
    /// Three-point finite differences; needs `dt <= dx^2 / 2`.
    Explicit,
    /// Exact periodic semigroup `exp(-k^2 dt / 2)` applied by FFT.
    Spectral,
}

fn default_batches() -> usize {
    20
}

fn default_max_lag() -> usize {
    32
}

fn default_orders() -> Vec<f64> {
    vec![2.0, 3.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub equation: SimEquation,
    #[serde(default)]
    pub stepper: HeatStepper,
    /// Half-length `L` of the periodic domain `[-L, L)`.
    pub half_length: f64,
    /// Number of cells; `dx = 2L / n`.
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Snapshot times, strictly increasing multiples of `dt` in `(0, horizon]`.
    pub snapshots: Vec<f64>,
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    pub kernel: KernelSpec,
    pub coefficient: CoefficientSpec,
    pub init: InitSpec,
    /// Initial velocity for the wave equation; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<InitSpec>,
    /// Replace `u` by `max(u, 0)` after every step.
    #[serde(default)]
    pub clip: bool,
    /// Evaluate `rho` at `max(u, 0)` (full truncation): no noise where `u < 0`,
    /// and the scheme stays a martingale.
    #[serde(default)]
    pub truncate: bool,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Radii `R` for `sup_{|x| <= R} u`.
    #[serde(default)]
    pub sup_radii: Vec<f64>,
    /// Largest spatial lag, in cells, for increment statistics.
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// Orders `p` whose spatial averages `mean_x |u(t, x)|^p` are recorded per path.
    #[serde(default = "default_orders")]
    pub moment_orders: Vec<f64>,
    /// Number of leading paths whose snapshot fields go to the raw dump.
    #[serde(default)]
    pub dump_paths: usize,
}

impl SimConfig {
    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    /// Step index of every snapshot.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        self.snapshots.iter().map(|t| (t / self.dt).round() as usize).collect()
    }

    /// Spatial lags (in cells) used for increment statistics: powers of two up to `max_lag`.
    pub fn lags(&self) -> Vec<usize> {
        let cap = self.max_lag.min(self.n / 2);
        std::iter::successors(Some(1usize), |l| Some(l * 2)).take_while(|&l| l <= cap).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.half_length > 0.0 && self.half_length.is_finite()) {
            return bad(format!("half_length must be positive, got {}", self.half_length));
        }
        if self.n < 4 {
            return bad(format!("need at least 4 cells, got {}", self.n));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.paths < 1 {
            return bad("need at least one path".into());
        }
        let dx = self.dx();
        match (self.equation, self.stepper) {
            (SimEquation::Heat, HeatStepper::Explicit) if self.dt > dx * dx / 2.0 * (1.0 + 1e-12) => {
                return bad(format!("explicit heat stepper needs dt <= dx^2/2 = {}, got {}", dx * dx / 2.0, self.dt));
            }
            (SimEquation::Wave, _) if self.dt > dx * (1.0 + 1e-12) => {
                return bad(format!("wave stepper needs dt <= dx = {dx} (CFL), got {}", self.dt));
            }
            _ => {}
        }
        if self.snapshots.is_empty() {
            return bad("empty grid: no snapshot times".into());
        }
        let mut last = 0.0;
        for &t in &self.snapshots {
            if !(t > last) {
                return bad(format!("snapshot times must be positive and strictly increasing, got {:?}", self.snapshots));
            }
            if t > self.horizon * (1.0 + 1e-12) {
                return bad(format!("snapshot {t} lies beyond the horizon {}", self.horizon));
            }
            let k = t / self.dt;
            if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                return bad(format!("snapshot {t} is not a multiple of dt = {}", self.dt));
            }
            last = t;
        }
        let mut last_r = 0.0;
        for &r in &self.sup_radii {
            if !(r > last_r) || r > self.half_length {
                return bad(format!(
                    "sup radii must be positive, strictly increasing and <= L = {}, got {:?}",
                    self.half_length, self.sup_radii
                ));
            }
            last_r = r;
        }
        if let Some(p) = self.moment_orders.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return bad(format!("moment orders must be positive, got {p}"));
        }
        if self.batches < 2 {
            return bad(format!("need at least 2 batches, got {}", self.batches));
        }
        if self.velocity.is_some() && self.equation == SimEquation::Heat {
            return bad("an initial velocity only applies to the wave equation".into());
        }
        let kern = self.kernel.build()?;
        if !kern.is_samplable() {
            return Err(Error::Unsupported(format!(
                "kernel {:?} cannot be sampled on a 1-D grid",
                self.kernel.variant
            )));
        }
        self.coefficient.build()?;
        self.init.build()?;
        if let Some(v) = &self.velocity {
            v.build()?;
        }
        Ok(())
    }

    /// Desk-scale configuration for a heat or wave preset in d = 1.
    pub fn desk(scenario: &Scenario, paths: usize, seed: u64) -> Result<Self> {
        let equation = match scenario.equation {
            Equation::Heat => SimEquation::Heat,
            Equation::Wave => SimEquation::Wave,
            Equation::Fractional(_) => {
                return Err(Error::Unsupported(format!("preset {} is a fractional equation", scenario.name)))
            }
        };
        if !scenario.kernel.is_samplable() {
            return Err(Error::Unsupported(format!("preset {} has no 1-D samplable kernel", scenario.name)));
        }
        let coefficient = scenario
            .coeff
            .spec()
            .ok_or_else(|| Error::Unsupported("custom coefficients have no serializable spec".into()))?;
        let position = match &scenario.wave_init {
            Some(w) => &w.position,
            None => &scenario.init,
        };
        let init = position
            .spec()
            .ok_or_else(|| Error::Unsupported("custom initial data has no serializable spec".into()))?;
        let (n, half_length) = (256, 12.8);
        let dx = 2.0 * half_length / n as f64;
        let dt = match equation {
            SimEquation::Heat => dx * dx,
            SimEquation::Wave => dx / 2.0,
        };
        let velocity = match &scenario.wave_init {
            Some(w) => w.velocity.spec(),
            None => None,
        };
        Ok(SimConfig {
            equation,
            stepper: HeatStepper::Implicit,
            half_length,
            n,
            dt,
            horizon: 4.0,
            snapshots: vec![0.5, 1.0, 2.0, 4.0],
            paths,
            seed,
            kernel: scenario.kernel.spec(),
            coefficient,
            init,
            velocity,
            clip: false,
            truncate: needs_clip(&scenario.coeff),
            batches: default_batches(),
            sup_radii: vec![1.0, 2.0, 4.0, 8.0],
            max_lag: default_max_lag(),
            moment_orders: default_orders(),
            dump_paths: 0,
        })
    }
}

/// Whether `rho` vanishes at 0 with infinite slope, where a positivity fix is needed.
pub fn needs_clip(coeff: &DiffusionCoefficient) -> bool {
    match coeff.family() {
        Family::RatioPower { alpha, r } => *r == 0.0 && *alpha > 0.0 && *alpha < 1.0,
        Family::LogPerturbed { alpha, .. } => *alpha > 0.0 && *alpha < 1.0,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{scenario_preset, PresetOverrides};

    pub(crate) fn base() -> SimConfig {
        SimConfig {
            equation: SimEquation::Heat,
            stepper: HeatStepper::Explicit,
            half_length: 3.2,
            n: 64,
            dt: 0.005,
            horizon: 1.0,
            snapshots: vec![0.5, 1.0],
            paths: 10,
            seed: 1,
            kernel: KernelSpec { variant: "white".into(), alpha: None, nu: None, d: 1 },
            coefficient: CoefficientSpec { family: "constant".into(), c: Some(1.0), ..Default::default() },
            init: InitSpec { kind: "constant".into(), c: Some(1.0), mass: None, ell: None },
            velocity: None,
            clip: false,
            truncate: false,
            batches: 5,
            sup_radii: vec![1.0],
            max_lag: 8,
            moment_orders: vec![2.0],
            dump_paths: 0,
        }
    }

    #[test]
    fn stability_and_grid_checks() {
        base().validate().unwrap();
        let mut c = base();
        c.dt = 0.01;
        assert!(c.validate().is_err());
        c.stepper = HeatStepper::Spectral;
        c.validate().unwrap();
        c.stepper = HeatStepper::Implicit;
        c.validate().unwrap();
        let mut c = base();
        c.snapshots = vec![0.5, 0.5];
        assert!(c.validate().is_err());
        c.snapshots = vec![0.505];
        c.validate().unwrap();
        c.snapshots = vec![0.5012];
        assert!(c.validate().is_err());
        c.snapshots = vec![];
        assert!(c.validate().unwrap_err().to_string().contains("empty grid"));
        let mut w = base();
        w.equation = SimEquation::Wave;
        w.dt = 0.2;
        assert!(w.validate().is_err());
        w.dt = 0.1;
        w.validate().unwrap();
        let mut r = base();
        r.sup_radii = vec![4.0];
        assert!(r.validate().is_err());
    }

    #[test]
    fn unsamplable_kernels_are_rejected() {
        let mut c = base();
        c.kernel = KernelSpec { variant: "riesz".into(), alpha: Some(0.5), nu: None, d: 2 };
        assert!(matches!(c.validate(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn lags_are_powers_of_two() {
        assert_eq!(base().lags(), vec![1, 2, 4, 8]);
    }

    #[test]
    fn desk_configs_for_presets() {
        let s = scenario_preset("alpha-white", &PresetOverrides::default()).unwrap();
        let c = SimConfig::desk(&s, 100, 3).unwrap();
        c.validate().unwrap();
        assert!(c.truncate && !c.clip);
        let w = scenario_preset("wave-alpha", &PresetOverrides::default()).unwrap();
        let c = SimConfig::desk(&w, 100, 3).unwrap();
        assert_eq!(c.equation, SimEquation::Wave);
        c.validate().unwrap();
        let f = scenario_preset("frac-alpha", &PresetOverrides::default()).unwrap();
        assert!(SimConfig::desk(&f, 100, 3).is_err());
        let b = scenario_preset("bounded-rho", &PresetOverrides::default()).unwrap();
        assert!(!SimConfig::desk(&b, 100, 3).unwrap().truncate);
    }

    #[test]
    fn serde_round_trip() {
        let c = base();
        let s = serde_json::to_string(&c).unwrap();
        let back: SimConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
