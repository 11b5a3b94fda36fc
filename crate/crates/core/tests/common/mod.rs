//! Exact discrete oracles for the additive (rho = 1) white-noise schemes.
//!
//! Each scheme is linear and translation invariant, so every Fourier mode of
//! the periodic grid evolves independently; the centre-cell variance is
//! `(dt / dx) / n * sum_k sum_j |g_k^(j)|^2` over the mode's impulse response.

#![allow(dead_code)]

use std::f64::consts::PI;

fn modes(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| (PI * k as f64 / n as f64).sin().powi(2))
}

/// `u <- (I - dt/2 Lap)^-1 (u + dW)`.
pub fn implicit_heat_variance(n: usize, dx: f64, dt: f64, steps: usize) -> f64 {
    let a = dt / (dx * dx);
    let sum: f64 = modes(n)
        .map(|s| {
            let l2 = (1.0 / (1.0 + 2.0 * a * s)).powi(2);
            (1..=steps).map(|j| l2.powi(j as i32)).sum::<f64>()
        })
        .sum();
    dt / dx * sum / n as f64
}

/// `u <- u + dt/2 Lap u + dW`.
pub fn explicit_heat_variance(n: usize, dx: f64, dt: f64, steps: usize) -> f64 {
    let a = dt / (dx * dx);
    let sum: f64 = modes(n)
        .map(|s| {
            let l2 = (1.0 - 2.0 * a * s).powi(2);
            (0..steps).map(|j| l2.powi(j as i32)).sum::<f64>()
        })
        .sum();
    dt / dx * sum / n as f64
}

/// `v <- v + dt Lap u + dW`, then `u <- u + dt v`.
pub fn wave_variance(n: usize, dx: f64, dt: f64, steps: usize) -> f64 {
    let sum: f64 = modes(n)
        .map(|s| {
            let mu = -4.0 * s / (dx * dx);
            // impulse injected into v at some step: state (u, v) = (dt, 1) after it
            let (mut u, mut v) = (dt, 1.0);
            let mut acc = 0.0;
            for _ in 0..steps {
                acc += u * u;
                v += dt * mu * u;
                u += dt * v;
            }
            acc
        })
        .sum();
    dt / dx * sum / n as f64
}

pub fn implicit_or_explicit(implicit: bool, n: usize, dx: f64, dt: f64, steps: usize) -> f64 {
    if implicit {
        implicit_heat_variance(n, dx, dt, steps)
    } else {
        explicit_heat_variance(n, dx, dt, steps)
    }
}
