//! Monte Carlo simulation of the 1-D stochastic heat and wave equations on a
//! periodic grid, reduced on the fly to the per-path statistics the estimators need.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, and
//! paths are collected in index order, so an ensemble depends only on
//! `(config, seed)` and not on the thread count.

mod compare;
mod config;
mod estimate;
mod io;
mod noise;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use compare::{compare_to_bound, CompareRow};
pub use config::{needs_clip, HeatStepper, SimConfig, SimEquation};
pub use estimate::{Site, 
    estimate_holder, estimate_mean, estimate_moments, estimate_spatial_sup, estimate_tail, estimate_variance,
    growth_exponent, GrowthScale, HolderEstimate, MeanRow, MomentRow, SupRow, TailRow,
};
pub use io::{read_sspd, summary_rows, write_csv, write_manifest, write_sspd, Manifest, SspdDump, StatRow};
pub use noise::{cell_covariance, sample_noise_increment, NoisePlan, NoiseSampler};

use crate::bounds::InitialCondition;
use crate::diffusion::DiffusionCoefficient;
use crate::error::{Error, Result};

/// Statistics of every path at one snapshot time, indexed by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// `u(t, 0)`.
    pub center: Vec<f64>,
    /// Spatial average of `u(t, .)`.
    pub spatial_mean: Vec<f64>,
    /// `min_x u(t, x)`.
    pub field_min: Vec<f64>,
    /// `sup_{|x| <= R} u(t, x)`, one vector per radius.
    pub sup: Vec<Vec<f64>>,
    /// Spatial mean of `|u(t, x + l dx) - u(t, x)|^2`, one vector per lag.
    pub increments: Vec<Vec<f64>>,
    /// Spatial mean of `|u(t, x)|^p`, one vector per configured order.
    pub power_means: Vec<Vec<f64>>,
}

/// A path whose field stopped being finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedPath {
    pub path: usize,
    pub step: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub config: SimConfig,
    pub dx: f64,
    pub lags: Vec<usize>,
    pub snapshots: Vec<Snapshot>,
    /// Index of every path that completed, in order; snapshot vectors follow it.
    pub live: Vec<usize>,
    pub aborted: Vec<AbortedPath>,
    /// Minimum of the field over all cells and steps, per live path.
    pub running_min: Vec<f64>,
    /// Snapshot fields of the first `dump_paths` live paths: `[path][snapshot][cell]`.
    #[serde(skip)]
    pub raw: Vec<Vec<Vec<f64>>>,
}

impl PathEnsemble {
    pub fn snapshot(&self, t: f64) -> Result<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.max(1.0))
            .ok_or_else(|| Error::Estimator(format!("no snapshot at t = {t}")))
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn live_paths(&self) -> usize {
        self.live.len()
    }
}

struct PathRecord {
    snaps: Vec<SnapRecord>,
    running_min: f64,
    raw: Vec<Vec<f64>>,
}

struct SnapRecord {
    center: f64,
    mean: f64,
    min: f64,
    sup: Vec<f64>,
    incr: Vec<f64>,
    powers: Vec<f64>,
}

/// Everything a path needs, built once per ensemble.
struct Setup {
    cfg: SimConfig,
    coeff: DiffusionCoefficient,
    noise: NoisePlan,
    u0: Vec<f64>,
    v0: Vec<f64>,
    steps: Vec<usize>,
    lags: Vec<usize>,
    /// Cell index ranges `[lo, hi]` with `|x| <= R`, per radius.
    windows: Vec<(usize, usize)>,
    /// Heat multipliers `exp(-k^2 dt / 2)` for the spectral stepper.
    decay: Vec<f64>,
    implicit: Option<CyclicSolver>,
}

/// Solves `(1 + 2a) x_j - a x_{j-1} - a x_{j+1} = r_j` on the periodic grid:
/// Thomas sweeps on a modified tridiagonal matrix plus a Sherman-Morrison
/// correction for the two corner entries, with every factor precomputed.
struct CyclicSolver {
    a: f64,
    /// Upper multipliers and reciprocal pivots of the modified matrix.
    cp: Vec<f64>,
    inv: Vec<f64>,
    /// Solution of the modified system against the rank-one direction.
    z: Vec<f64>,
    /// `beta / gamma` and `1 + z_0 + (beta / gamma) z_{n-1}`.
    ratio: f64,
    denom: f64,
}

impl CyclicSolver {
    fn new(n: usize, a: f64) -> Self {
        let diag = 1.0 + 2.0 * a;
        let gamma = -diag;
        let corner = -a;
        let mut bb = vec![diag; n];
        bb[0] = diag - gamma;
        bb[n - 1] = diag - corner * corner / gamma;
        let mut cp = vec![0.0; n];
        let mut inv = vec![0.0; n];
        inv[0] = 1.0 / bb[0];
        cp[0] = -a * inv[0];
        for j in 1..n {
            inv[j] = 1.0 / (bb[j] + a * cp[j - 1]);
            cp[j] = -a * inv[j];
        }
        let mut s = CyclicSolver { a, cp, inv, z: vec![0.0; n], ratio: corner / gamma, denom: 1.0 };
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = corner;
        s.thomas(&mut z);
        s.denom = 1.0 + z[0] + s.ratio * z[n - 1];
        s.z = z;
        s
    }

    fn thomas(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv[0];
        for j in 1..n {
            x[j] = (x[j] + self.a * x[j - 1]) * self.inv[j];
        }
        for j in (0..n - 1).rev() {
            x[j] -= self.cp[j] * x[j + 1];
        }
    }

    /// Overwrites the right-hand side with the solution.
    fn solve(&self, x: &mut [f64]) {
        self.thomas(x);
        let n = x.len();
        let f = (x[0] + self.ratio * x[n - 1]) / self.denom;
        for (xj, zj) in x.iter_mut().zip(&self.z) {
            *xj -= f * zj;
        }
    }
}

/// Cell averages `mu([x_j - dx/2, x_j + dx/2]) / dx` on the grid `x_j = -L + j dx`.
fn discretize(init: &InitialCondition, l: f64, n: usize) -> Result<Vec<f64>> {
    if let InitialCondition::Constant { c } = init {
        return Ok(vec![*c; n]);
    }
    let dx = 2.0 * l / n as f64;
    (0..n)
        .map(|j| {
            let x = -l + j as f64 * dx;
            Ok(init.interval_mass(x - dx / 2.0, x + dx / 2.0)? / dx)
        })
        .collect()
}

impl Setup {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let dx = cfg.dx();
        let kern = cfg.kernel.build()?;
        let coeff = cfg.coefficient.build()?;
        let noise = NoisePlan::new(&kern, dx, cfg.dt, n)?;
        let u0 = discretize(&cfg.init.build()?, cfg.half_length, n)?;
        let v0 = match &cfg.velocity {
            Some(v) => discretize(&v.build()?, cfg.half_length, n)?,
            None => vec![0.0; n],
        };
        let centre = n / 2;
        let windows = cfg
            .sup_radii
            .iter()
            .map(|&r| {
                let k = ((r / dx) * (1.0 + 1e-12)).floor() as usize;
                (centre.saturating_sub(k), (centre + k).min(n - 1))
            })
            .collect();
        let decay = match (cfg.equation, cfg.stepper) {
            (SimEquation::Heat, HeatStepper::Spectral) => (0..n)
                .map(|m| {
                    let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                    let k = 2.0 * std::f64::consts::PI * m / (n as f64 * dx);
                    (-0.5 * k * k * cfg.dt).exp()
                })
                .collect(),
            _ => Vec::new(),
        };
        let implicit = match (cfg.equation, cfg.stepper) {
            (SimEquation::Heat, HeatStepper::Implicit) => Some(CyclicSolver::new(n, cfg.dt / (2.0 * dx * dx))),
            _ => None,
        };
        Ok(Setup {
            implicit,
            cfg: cfg.clone(),
            coeff,
            noise,
            u0,
            v0,
            steps: cfg.snapshot_steps(),
            lags: cfg.lags(),
            windows,
            decay,
        })
    }

    fn record(&self, u: &[f64]) -> SnapRecord {
        let n = u.len();
        let sup = self
            .windows
            .iter()
            .map(|&(lo, hi)| u[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let incr = self
            .lags
            .iter()
            .map(|&l| (0..n).map(|j| (u[(j + l) % n] - u[j]).powi(2)).sum::<f64>() / n as f64)
            .collect();
        let powers = self
            .cfg
            .moment_orders
            .iter()
            .map(|&p| u.iter().map(|x| x.abs().powf(p)).sum::<f64>() / n as f64)
            .collect();
        SnapRecord {
            powers,
            center: u[n / 2],
            mean: u.iter().sum::<f64>() / n as f64,
            min: u.iter().copied().fold(f64::INFINITY, f64::min),
            sup,
            incr,
        }
    }

    fn run_path(&self, path: usize) -> std::result::Result<PathRecord, AbortedPath> {
        let cfg = &self.cfg;
        let n = cfg.n;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path as u64);
        let mut sampler = self.noise.sampler();
        let mut u = self.u0.clone();
        let mut next = vec![0.0; n];
        let mut v = self.v0.clone();
        let mut w = vec![0.0; n];
        let mut pos = vec![0.0; if cfg.truncate { n } else { 0 }];
        let mut buf = vec![Complex::new(0.0, 0.0); if self.decay.is_empty() { 0 } else { n }];
        let (fwd, inv) = if self.decay.is_empty() {
            (None, None)
        } else {
            let mut planner = FftPlanner::new();
            (Some(planner.plan_fft_forward(n)), Some(planner.plan_fft_inverse(n)))
        };
        let dx = cfg.dx();
        let dt = cfg.dt;
        let keep_raw = path < cfg.dump_paths;
        let mut snaps = Vec::with_capacity(self.steps.len());
        let mut raw = Vec::new();
        let mut running_min = u.iter().copied().fold(f64::INFINITY, f64::min);
        let last = *self.steps.last().expect("validated snapshots");
        let mut next_snap = 0;
        for step in 1..=last {
            sampler.fill(&mut rng, &mut w);
            if cfg.truncate {
                for (p, &x) in pos.iter_mut().zip(&u) {
                    *p = x.max(0.0);
                }
                self.coeff.scale_by_rho(&pos, &mut w);
            } else {
                self.coeff.scale_by_rho(&u, &mut w);
            }
            match cfg.equation {
                SimEquation::Heat => match cfg.stepper {
                    HeatStepper::Implicit => {
                        // solve for the increment so that flat noiseless data stay exact
                        diffuse(&u, dt / (2.0 * dx * dx), &mut next);
                        for ((d, &uj), wj) in next.iter_mut().zip(&u).zip(&w) {
                            *d = *d - uj + wj;
                        }
                        self.implicit.as_ref().expect("implicit solver").solve(&mut next);
                        for (x, d) in u.iter_mut().zip(&next) {
                            *x += d;
                        }
                    }
                    HeatStepper::Explicit => {
                        diffuse(&u, dt / (2.0 * dx * dx), &mut next);
                        for (x, wj) in next.iter_mut().zip(&w) {
                            *x += wj;
                        }
                        std::mem::swap(&mut u, &mut next);
                    }
                    HeatStepper::Spectral => {
                        for ((b, &uj), wj) in buf.iter_mut().zip(&u).zip(&w) {
                            *b = Complex::new(uj + wj, 0.0);
                        }
                        fwd.as_ref().expect("spectral plan").process(&mut buf);
                        for (b, d) in buf.iter_mut().zip(&self.decay) {
                            *b *= d / n as f64;
                        }
                        inv.as_ref().expect("spectral plan").process(&mut buf);
                        for (x, b) in u.iter_mut().zip(&buf) {
                            *x = b.re;
                        }
                    }
                },
                SimEquation::Wave => {
                    // next holds u + (dt/dx^2)(discrete Laplacian of u); recover the Laplacian term
                    let a = dt / (dx * dx);
                    diffuse(&u, a, &mut next);
                    for (((vj, &nj), &uj), wj) in v.iter_mut().zip(&next).zip(&u).zip(&w) {
                        *vj += (nj - uj) + wj;
                    }
                    for (x, vj) in u.iter_mut().zip(&v) {
                        *x += dt * vj;
                    }
                }
            }
            let mut finite = true;
            let mut lo = running_min;
            for x in u.iter_mut() {
                finite &= x.is_finite();
                if cfg.clip {
                    *x = x.max(0.0);
                }
                lo = lo.min(*x);
            }
            running_min = lo;
            if !finite {
                return Err(AbortedPath { path, step, t: step as f64 * dt });
            }
            if step == self.steps[next_snap] {
                snaps.push(self.record(&u));
                if keep_raw {
                    raw.push(u.clone());
                }
                next_snap += 1;
            }
        }
        Ok(PathRecord { snaps, running_min, raw })
    }
}

/// `out_j = u_j + a (u_{j-1} - 2 u_j + u_{j+1})` on the periodic grid.
fn diffuse(u: &[f64], a: f64, out: &mut [f64]) {
    let n = u.len();
    out[0] = u[0] + a * (u[n - 1] - 2.0 * u[0] + u[1]);
    for (o, s) in out[1..n - 1].iter_mut().zip(u.windows(3)) {
        *o = s[1] + a * (s[0] - 2.0 * s[1] + s[2]);
    }
    out[n - 1] = u[n - 1] + a * (u[n - 2] - 2.0 * u[n - 1] + u[0]);
}

/// Runs the configured equation on the current rayon pool.
pub fn simulate(config: &SimConfig) -> Result<PathEnsemble> {
    let setup = Setup::new(config)?;
    let results: Vec<_> = (0..config.paths).into_par_iter().map(|i| setup.run_path(i)).collect();
    let times = config.snapshots.clone();
    let mut snapshots: Vec<Snapshot> = times
        .iter()
        .map(|&t| Snapshot {
            t,
            center: Vec::new(),
            spatial_mean: Vec::new(),
            field_min: Vec::new(),
            sup: vec![Vec::new(); config.sup_radii.len()],
            increments: vec![Vec::new(); setup.lags.len()],
            power_means: vec![Vec::new(); config.moment_orders.len()],
        })
        .collect();
    let mut live = Vec::new();
    let mut aborted = Vec::new();
    let mut running_min = Vec::new();
    let mut raw = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => {
                for (s, snap) in snapshots.iter_mut().zip(rec.snaps) {
                    s.center.push(snap.center);
                    s.spatial_mean.push(snap.mean);
                    s.field_min.push(snap.min);
                    for (dst, v) in s.sup.iter_mut().zip(snap.sup) {
                        dst.push(v);
                    }
                    for (dst, v) in s.increments.iter_mut().zip(snap.incr) {
                        dst.push(v);
                    }
                    for (dst, v) in s.power_means.iter_mut().zip(snap.powers) {
                        dst.push(v);
                    }
                }
                live.push(i);
                running_min.push(rec.running_min);
                if !rec.raw.is_empty() {
                    raw.push(rec.raw);
                }
            }
            Err(a) => aborted.push(a),
        }
    }
    Ok(PathEnsemble {
        config: config.clone(),
        dx: config.dx(),
        lags: setup.lags.clone(),
        snapshots,
        live,
        aborted,
        running_min,
        raw,
    })
}

/// [`simulate`] on a dedicated pool with `threads` workers.
pub fn simulate_with_threads(config: &SimConfig, threads: usize) -> Result<PathEnsemble> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| simulate(config))
}

pub fn simulate_heat(config: &SimConfig) -> Result<PathEnsemble> {
    if config.equation != SimEquation::Heat {
        return Err(Error::Config("simulate_heat needs equation = heat".into()));
    }
    simulate(config)
}

pub fn simulate_wave(config: &SimConfig) -> Result<PathEnsemble> {
    if config.equation != SimEquation::Wave {
        return Err(Error::Config("simulate_wave needs equation = wave".into()));
    }
    simulate(config)
}
