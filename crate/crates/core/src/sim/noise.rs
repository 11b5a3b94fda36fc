//! One time-slice of spatial noise on a periodic grid of cells.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::kernels::{CorrelationKernel, KernelVariant};
use crate::quad::{integrate_pieces, Tolerance};

#[derive(Clone)]
enum Plan {
    /// Independent `N(0, dt/dx)` per cell.
    White { sd: f64 },
    /// One `N(0, dt)` shared by every cell.
    Constant { sd: f64 },
    /// Circulant embedding: `sqrt(dt * lambda_k / n)` per Fourier mode.
    Circulant { scale: Arc<Vec<f64>>, fft: Arc<dyn Fft<f64>> },
}

/// Precomputed sampling plan, shared across paths.
#[derive(Clone)]
pub struct NoisePlan {
    plan: Plan,
    n: usize,
    /// Cell-averaged covariance `C_f(k dx)` for `k = 0..n`, wrapped periodically.
    covariance: Option<Arc<Vec<f64>>>,
}

/// Per-path sampler; the circulant variant yields two independent slices per FFT.
pub struct NoiseSampler {
    plan: NoisePlan,
    buf: Vec<Complex<f64>>,
    spare: Option<Vec<f64>>,
}

impl NoisePlan {
    pub fn new(kern: &CorrelationKernel, dx: f64, dt: f64, n: usize) -> Result<Self> {
        if !kern.is_samplable() {
            return Err(Error::Unsupported(format!("kernel {:?} cannot be sampled in d = 1", kern.variant())));
        }
        if !(dx > 0.0 && dt > 0.0) || n < 2 {
            return Err(Error::Domain(format!("noise grid needs dx, dt > 0 and n >= 2, got {dx}, {dt}, {n}")));
        }
        match kern.variant() {
            KernelVariant::White => Ok(NoisePlan { plan: Plan::White { sd: (dt / dx).sqrt() }, n, covariance: None }),
            KernelVariant::Constant => Ok(NoisePlan {
                plan: Plan::Constant { sd: dt.sqrt() },
                n,
                covariance: Some(Arc::new(vec![1.0; n])),
            }),
            _ => {
                let half: Vec<f64> = (0..=n / 2).map(|k| cell_covariance(kern, k, dx)).collect::<Result<_>>()?;
                let cov: Vec<f64> = (0..n).map(|j| half[j.min(n - j)]).collect();
                let fft = FftPlanner::new().plan_fft_forward(n);
                let mut spec: Vec<Complex<f64>> = cov.iter().map(|&c| Complex::new(c, 0.0)).collect();
                fft.process(&mut spec);
                let top = spec.iter().map(|z| z.re).fold(0.0, f64::max);
                let low = spec.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
                if low < -1e-10 * top {
                    return Err(Error::Embedding(format!(
                        "smallest circulant eigenvalue {low:e} against largest {top:e}"
                    )));
                }
                let scale = spec.iter().map(|z| (dt * z.re.max(0.0) / n as f64).sqrt()).collect();
                Ok(NoisePlan { plan: Plan::Circulant { scale: Arc::new(scale), fft }, n, covariance: Some(Arc::new(cov)) })
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Periodic cell covariance `Cov(W_0, W_k) / dt`, when the field is not white.
    pub fn cell_covariance(&self) -> Option<&[f64]> {
        self.covariance.as_deref().map(|v| v.as_slice())
    }

    pub fn sampler(&self) -> NoiseSampler {
        let buf = match self.plan {
            Plan::Circulant { .. } => vec![Complex::new(0.0, 0.0); self.n],
            _ => Vec::new(),
        };
        NoiseSampler { plan: self.clone(), buf, spare: None }
    }
}

impl NoiseSampler {
    /// Writes one noise slice into `out`.
    pub fn fill<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.plan.n);
        match &self.plan.plan {
            Plan::White { sd } => {
                for (w, z) in out.iter_mut().zip(rng.sample_iter::<f64, _>(StandardNormal)) {
                    *w = sd * z;
                }
            }
            Plan::Constant { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                out.fill(sd * z);
            }
            Plan::Circulant { scale, fft } => {
                if let Some(s) = self.spare.take() {
                    out.copy_from_slice(&s);
                    return;
                }
                for (b, s) in self.buf.iter_mut().zip(scale.iter()) {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *b = Complex::new(s * re, s * im);
                }
                fft.process(&mut self.buf);
                for (w, b) in out.iter_mut().zip(&self.buf) {
                    *w = b.re;
                }
                self.spare = Some(self.buf.iter().map(|b| b.im).collect());
            }
        }
    }
}

/// `C_f(k dx) = (1/dx^2) int_cell_0 int_cell_k f(x - y) dx dy`: the triangle-weighted
/// average of `f` over `[(k-1) dx, (k+1) dx]`.
pub fn cell_covariance(kern: &CorrelationKernel, k: usize, dx: f64) -> Result<f64> {
    let c = k as f64 * dx;
    match kern.variant() {
        KernelVariant::Constant => Ok(1.0),
        KernelVariant::Riesz { alpha } => {
            // second antiderivative of |x|^-alpha
            let g = |x: f64| x.abs().powf(2.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha));
            Ok((g(c + dx) - 2.0 * g(c) + g(c - dx)) / (dx * dx))
        }
        KernelVariant::White => Err(Error::Unsupported("white noise has no pointwise covariance".into())),
        _ => {
            let f = |z: f64| kern.f_eval(c + z).unwrap_or(f64::NAN) * (dx - z.abs()) / (dx * dx);
            integrate_pieces(f, &[-dx, 0.0, dx], Tolerance::rel(1e-10))
        }
    }
}

/// One slice `W` with `Cov(W_i, W_j) = dt C_f(x_i - x_j)`; builds the plan on every call.
pub fn sample_noise_increment<R: Rng + ?Sized>(
    kern: &CorrelationKernel,
    dx: f64,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    NoisePlan::new(kern, dx, dt, n)?.sampler().fill(rng, &mut out);
    Ok(out)
}
