//! Shared numerical oracles for the integration tests.
//!
//! Everything here is built from its own definitions (dense sampling,
//! trapezoid quadrature, central differences, dense inversion) so it
//! stays independent of the implementation paths it checks.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Fraction of pulse energy defining the nominal duration.
pub const ENERGY_COVERAGE: f64 = 0.9999;

fn energy_density(u: f64) -> f64 {
    let p = u * u - 1.0;
    p * p * (-u * u).exp()
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Scale parameter of the order-2 Gaussian derivative whose centered
/// 99.99%-energy window is `duration` seconds, by bisection on the
/// dimensionless energy fraction.
pub fn oracle_sigma(duration: f64) -> f64 {
    let total = simpson(energy_density, 0.0, 12.0, 1 << 14);
    let target = ENERGY_COVERAGE * total;
    let (mut lo, mut hi) = (0.5f64, 12.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if simpson(energy_density, 0.0, mid, 1 << 14) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (duration / 2.0) / (0.5 * (lo + hi))
}

/// Densely sampled unit-energy order-2 Gaussian derivative, built from its
/// own closed form, for direct numerical convolution.
pub struct OraclePulse {
    pub sigma: f64,
    pub dt: f64,
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl OraclePulse {
    /// `steps_per_sigma` controls the grid; the support spans ±10σ.
    pub fn new(sigma: f64, steps_per_sigma: usize) -> Self {
        let dt = sigma / steps_per_sigma as f64;
        let span = 10.0 * sigma;
        let n = (2.0 * span / dt).round() as usize;
        let t0 = -span;
        let mut samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = t0 + i as f64 * dt;
                let u = t / sigma;
                (u * u - 1.0) * (-0.5 * u * u).exp()
            })
            .collect();
        let energy: f64 = samples.iter().map(|v| v * v).sum::<f64>() * dt;
        for v in &mut samples {
            *v /= energy.sqrt();
        }
        Self {
            sigma,
            dt,
            t0,
            samples,
        }
    }

    fn value_at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x < 0.0 {
            return 0.0;
        }
        let i = x.floor() as usize;
        if i + 1 >= self.samples.len() {
            return 0.0;
        }
        let frac = x - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    /// `R_s(τ)` by direct numerical convolution (trapezoid).
    pub fn autocorrelation(&self, tau: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &s) in self.samples.iter().enumerate() {
            let t = self.t0 + i as f64 * self.dt;
            let w = if i == 0 || i + 1 == self.samples.len() {
                0.5
            } else {
                1.0
            };
            acc += w * s * self.value_at(t - tau);
        }
        acc * self.dt
    }

    /// `(Ṙ_s, −R̈_s)` at `τ` by central differences of the convolution.
    pub fn correlation_derivatives(&self, tau: f64) -> (f64, f64) {
        let h = self.dt;
        let rp = self.autocorrelation(tau + h);
        let rm = self.autocorrelation(tau - h);
        let r0 = self.autocorrelation(tau);
        ((rp - rm) / (2.0 * h), (2.0 * r0 - rp - rm) / (h * h))
    }

    /// Effective bandwidth by trapezoid quadrature of the sampled
    /// spectrum, Richardson-checked across two frequency resolutions.
    /// Returns `(beta, richardson_gap)`.
    pub fn spectral_bandwidth(&self, f_max: f64, panels: usize) -> (f64, f64) {
        let beta_at = |n: usize| -> f64 {
            let df = 2.0 * f_max / n as f64;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..=n {
                let f = -f_max + i as f64 * df;
                // |S(f)|² by direct quadrature of the Fourier integral.
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for (k, &s) in self.samples.iter().enumerate() {
                    let t = self.t0 + k as f64 * self.dt;
                    let phase = -2.0 * std::f64::consts::PI * f * t;
                    re += s * phase.cos();
                    im += s * phase.sin();
                }
                let mag = (re * re + im * im) * self.dt * self.dt;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                num += w * f * f * mag;
                den += w * mag;
            }
            (num / den).sqrt()
        };
        let coarse = beta_at(panels);
        let fine = beta_at(2 * panels);
        (fine, (fine - coarse).abs() / fine)
    }

    /// Effective bandwidth via Parseval: `∫(s')² dt / (4π² ∫ s² dt)`.
    pub fn parseval_bandwidth(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 1..self.samples.len() - 1 {
            let d = (self.samples[i + 1] - self.samples[i - 1]) / (2.0 * self.dt);
            num += d * d;
            den += self.samples[i] * self.samples[i];
        }
        (num / (4.0 * std::f64::consts::PI.powi(2) * den)).sqrt()
    }
}

/// Random symmetric positive-definite matrix with unit-scale conditioning.
pub fn random_spd(dim: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let mut spd = &m * m.transpose();
    for i in 0..dim {
        spd[(i, i)] += dim as f64 * 0.5;
    }
    spd
}

pub fn seeded(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Largest relative elementwise deviation between two matrices.
pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1e-300);
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / scale);
        }
    }
    worst
}
