//! Transmitted pulse models and the spectral/correlation quantities the
//! Fisher information entries are built from.
//!
//! Two pulse families are supported:
//!
//! * **Gaussian derivatives** `s(t) ∝ dⁿ/dtⁿ exp(−t²/2σ²)`, normalized to
//!   unit energy, with closed-form autocorrelation, derivatives, and
//!   effective bandwidth (all via Hermite polynomials). The nominal
//!   duration is the centered window holding 99.99% of the pulse energy;
//!   correlation values beyond that window (below `1e-3 · E_s` for every
//!   supported order) are treated as exactly zero so that path
//!   resolvability is a sharp predicate.
//! * **Sampled pulses** given as a uniform table on `[0, T_s)`. Integrals
//!   use the trapezoid rule at the native rate and correlation derivatives
//!   use central differences of `R_s` with step equal to the sample
//!   interval. A minimum oversampling factor of 16 relative to the
//!   effective bandwidth is enforced at construction.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::scalar::RealScalar;

/// Fraction of pulse energy inside the nominal duration of a Gaussian
/// derivative pulse.
pub const GAUSSIAN_ENERGY_COVERAGE: f64 = 0.9999;

/// Highest supported Gaussian derivative order.
pub const MAX_GAUSSIAN_ORDER: u32 = 12;

/// Minimum sample rate relative to the effective bandwidth.
pub const MIN_OVERSAMPLING: f64 = 16.0;

#[derive(Clone, Debug)]
enum PulseShape<S> {
    GaussianDerivative { order: u32, sigma: S },
    Sampled { dt: S, samples: Vec<S> },
}

/// A transmitted pulse with its duration, energy and effective bandwidth.
///
/// Immutable after construction; all accessors are pure.
#[derive(Clone, Debug)]
pub struct Waveform<S: RealScalar> {
    shape: PulseShape<S>,
    duration: S,
    energy: S,
    beta: S,
}

/// Physicists' Hermite polynomial `H_m(x)` by the three-term recurrence.
fn hermite<S: RealScalar>(m: u32, x: S) -> S {
    let two = S::of(2.0);
    let mut h_prev = S::one();
    if m == 0 {
        return h_prev;
    }
    let mut h = two * x;
    for k in 1..m {
        let next = two * x * h - two * S::from_u32(k).unwrap() * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// `H_{2n}(0) = (−1)ⁿ (2n)!/n!`, the normalization of the autocorrelation.
fn hermite_even_at_zero(n: u32) -> f64 {
    let mut v = 1.0f64;
    for k in (n + 1)..=(2 * n) {
        v *= k as f64;
    }
    if n % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Energy density shape of the order-`n` Gaussian derivative in units of
/// `u = t/σ`: `H_n(u/√2)² exp(−u²)` up to a constant.
fn gaussian_energy_density(order: u32, u: f64) -> f64 {
    let h = hermite::<f64>(order, u / std::f64::consts::SQRT_2);
    h * h * (-u * u).exp()
}

/// Simpson integral of the energy density over `[0, r]`.
fn gaussian_energy_integral(order: u32, r: f64) -> f64 {
    let panels = 4096usize;
    let h = r / panels as f64;
    let mut acc = gaussian_energy_density(order, 0.0) + gaussian_energy_density(order, r);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * gaussian_energy_density(order, i as f64 * h);
    }
    acc * h / 3.0
}

/// Dimensionless half-duration `r* = (T_s/2)/σ` capturing
/// [`GAUSSIAN_ENERGY_COVERAGE`] of the pulse energy.
///
/// Always evaluated in `f64` so the pulse geometry is identical for every
/// scalar instantiation. For the order-2 pulse `r* ≈ 3.5641`.
fn gaussian_support_ratio(order: u32) -> f64 {
    let total = gaussian_energy_integral(order, 12.0);
    let target = GAUSSIAN_ENERGY_COVERAGE * total;
    let (mut lo, mut hi) = (0.25f64, 12.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_energy_integral(order, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl<S: RealScalar> Waveform<S> {
    /// Unit-energy Gaussian derivative pulse of the given order and scale.
    pub fn gaussian_derivative(order: u32, sigma: S) -> Result<Self> {
        if order > MAX_GAUSSIAN_ORDER {
            return Err(Error::InvalidWaveform(format!(
                "gaussian derivative order {order} exceeds the supported maximum {MAX_GAUSSIAN_ORDER}"
            )));
        }
        if !(sigma > S::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidWaveform(
                "gaussian scale sigma must be positive and finite".into(),
            ));
        }
        let ratio = S::of(gaussian_support_ratio(order));
        let duration = S::of(2.0) * ratio * sigma;
        // β² = (2n+1)/(8π²σ²) from the even spectral moments of f^{2n}·Gaussian.
        let two_n_plus_1 = S::from_u32(2 * order + 1).unwrap();
        let beta = (two_n_plus_1 / S::of(8.0)).sqrt() / (S::pi() * sigma);
        Ok(Self {
            shape: PulseShape::GaussianDerivative { order, sigma },
            duration,
            energy: S::one(),
            beta,
        })
    }

    /// Gaussian derivative pulse with a prescribed nominal duration.
    pub fn gaussian_derivative_with_duration(order: u32, duration: S) -> Result<Self> {
        if !(duration > S::zero()) || !duration.is_finite() {
            return Err(Error::InvalidWaveform(
                "pulse duration must be positive and finite".into(),
            ));
        }
        let ratio = S::of(gaussian_support_ratio(order.min(MAX_GAUSSIAN_ORDER)));
        let sigma = duration / (S::of(2.0) * ratio);
        Self::gaussian_derivative(order, sigma)
    }

    /// The experiment pulse: second derivative of a Gaussian whose
    /// 99.99%-energy duration is 4 ns (`σ ≈ 0.561149 ns`,
    /// `β ≈ 448.448 MHz`).
    pub fn canonical_pulse() -> Self {
        Self::gaussian_derivative_with_duration(2, S::of(4.0e-9))
            .expect("canonical pulse parameters are valid")
    }

    /// Pulse from uniform samples starting at `t = 0`; the signal is zero
    /// outside `[0, n·dt)`.
    pub fn from_samples(dt: S, samples: Vec<S>) -> Result<Self> {
        if !(dt > S::zero()) || !dt.is_finite() {
            return Err(Error::InvalidWaveform(
                "sample interval must be positive and finite".into(),
            ));
        }
        if samples.len() < 4 {
            return Err(Error::InvalidWaveform(format!(
                "need at least 4 samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWaveform("non-finite sample value".into()));
        }
        let duration = dt * S::from_usize(samples.len()).unwrap();
        let mut w = Self {
            shape: PulseShape::Sampled { dt, samples },
            duration,
            energy: S::zero(),
            beta: S::zero(),
        };
        let energy = w.raw_autocorrelation(S::zero());
        if !(energy > S::zero()) || !energy.is_finite() {
            return Err(Error::InvalidWaveform(
                "pulse energy must be positive and finite".into(),
            ));
        }
        w.energy = energy;
        // Spectral curvature identity: −R̈_s(0) = 4π²β²·E_s, with the
        // curvature taken by central differences at the native step.
        let r_h = w.raw_autocorrelation(dt);
        let rdd0 = S::of(2.0) * (energy - r_h) / (dt * dt);
        if !(rdd0 > S::zero()) {
            return Err(Error::InvalidWaveform(
                "autocorrelation curvature at zero lag is not positive".into(),
            ));
        }
        let beta = (rdd0 / (S::of(4.0) * S::pi() * S::pi() * energy)).sqrt();
        let rate = S::one() / dt;
        if rate < S::of(MIN_OVERSAMPLING) * beta {
            return Err(Error::InvalidWaveform(format!(
                "sample rate {:.4e} Hz is below {}x the effective bandwidth {:.4e} Hz",
                rate.as_f64(),
                MIN_OVERSAMPLING,
                beta.as_f64()
            )));
        }
        w.beta = beta;
        Ok(w)
    }

    /// Load a two-column CSV table `time_s, amplitude`.
    ///
    /// A non-numeric first line is treated as a header; `#` lines are
    /// comments. Times must be uniformly spaced; the first sample is
    /// shifted to `t = 0`.
    pub fn from_sample_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidWaveform(format!("csv read: {e}")))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (a, b) = (parts.next(), parts.next());
            match (a, b) {
                (Some(a), Some(b)) => match (a.parse::<f64>(), b.parse::<f64>()) {
                    (Ok(t), Ok(v)) => {
                        times.push(t);
                        values.push(v);
                    }
                    _ if times.is_empty() => continue, // header row
                    _ => {
                        return Err(Error::InvalidWaveform(format!(
                            "csv line {}: expected two numeric columns",
                            lineno + 1
                        )))
                    }
                },
                _ => {
                    return Err(Error::InvalidWaveform(format!(
                        "csv line {}: expected `time_s, amplitude`",
                        lineno + 1
                    )))
                }
            }
        }
        if times.len() < 4 {
            return Err(Error::InvalidWaveform(
                "sample table needs at least 4 rows".into(),
            ));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidWaveform("times must be increasing".into()));
        }
        for i in 1..times.len() {
            let step = times[i] - times[i - 1];
            if (step - dt).abs() > 1e-6 * dt {
                return Err(Error::InvalidWaveform(format!(
                    "non-uniform sampling at row {} (step {:.6e}, expected {:.6e})",
                    i + 1,
                    step,
                    dt
                )));
            }
        }
        Self::from_samples(S::of(dt), values.into_iter().map(S::of).collect())
    }

    /// Support length `T_s` in seconds.
    pub fn duration(&self) -> S {
        self.duration
    }

    /// Pulse energy `E_s = ∫ s²(t) dt`.
    pub fn energy(&self) -> S {
        self.energy
    }

    /// Effective bandwidth `β = (∫ f²|S(f)|² df / ∫ |S(f)|² df)^{1/2}`.
    pub fn effective_bandwidth(&self) -> S {
        self.beta
    }

    /// SNR of a path with the given amplitude: `|α|²·E_s / N₀`.
    pub fn path_snr(&self, amplitude: S, n0: S) -> Result<S> {
        if !(n0 > S::zero()) || !n0.is_finite() {
            return Err(Error::InvalidNoise(n0.as_f64()));
        }
        Ok(amplitude * amplitude * self.energy / n0)
    }

    /// Autocorrelation `R_s(τ) = ∫ s(t) s(t−τ) dt`; exactly zero for
    /// `|τ| ≥ T_s`.
    pub fn autocorrelation(&self, lag: S) -> S {
        if lag.abs() >= self.duration {
            return S::zero();
        }
        self.raw_autocorrelation(lag)
    }

    /// Autocorrelation without the compact-support convention.
    ///
    /// For the Gaussian families this is the exact analytic correlation of
    /// the untruncated pulse; the Fisher blocks use it for delay pairs
    /// inside one contiguous cluster so those blocks stay exact Gram
    /// matrices. Sampled pulses are genuinely compactly supported, so
    /// both forms coincide.
    pub fn autocorrelation_unwindowed(&self, lag: S) -> S {
        match &self.shape {
            PulseShape::GaussianDerivative { .. } => self.raw_autocorrelation(lag),
            PulseShape::Sampled { .. } => self.autocorrelation(lag),
        }
    }

    /// `(Ṙ_s(τ), −R̈_s(τ))` at `τ = lag`; both zero for `|τ| ≥ T_s`.
    pub fn autocorrelation_derivatives(&self, lag: S) -> (S, S) {
        if lag.abs() >= self.duration {
            return (S::zero(), S::zero());
        }
        self.derivatives_unwindowed_impl(lag)
    }

    /// Correlation derivatives without the compact-support convention
    /// (see [`Self::autocorrelation_unwindowed`]).
    pub fn autocorrelation_derivatives_unwindowed(&self, lag: S) -> (S, S) {
        match &self.shape {
            PulseShape::GaussianDerivative { .. } => self.derivatives_unwindowed_impl(lag),
            PulseShape::Sampled { .. } => {
                if lag.abs() >= self.duration {
                    (S::zero(), S::zero())
                } else {
                    self.derivatives_unwindowed_impl(lag)
                }
            }
        }
    }

    fn derivatives_unwindowed_impl(&self, lag: S) -> (S, S) {
        match &self.shape {
            PulseShape::GaussianDerivative { order, sigma } => {
                let n = *order;
                let half_inv = S::one() / (S::of(2.0) * *sigma);
                let v = lag * half_inv;
                let env = (-v * v).exp();
                let norm = S::of(hermite_even_at_zero(n));
                // d^j/dτ^j R_s = (−1)^j (2σ)^{−j} H_{2n+j}(v) e^{−v²} / H_{2n}(0)
                let d1 = -half_inv * hermite(2 * n + 1, v) * env / norm;
                let neg_d2 = -(half_inv * half_inv * hermite(2 * n + 2, v) * env / norm);
                (d1, neg_d2)
            }
            PulseShape::Sampled { dt, .. } => {
                let h = *dt;
                let r_p = self.autocorrelation(lag + h);
                let r_m = self.autocorrelation(lag - h);
                let r_0 = self.autocorrelation(lag);
                let d1 = (r_p - r_m) / (S::of(2.0) * h);
                let neg_d2 = (S::of(2.0) * r_0 - r_p - r_m) / (h * h);
                (d1, neg_d2)
            }
        }
    }

    fn raw_autocorrelation(&self, lag: S) -> S {
        match &self.shape {
            PulseShape::GaussianDerivative { order, sigma } => {
                // R_s(τ)/E_s = H_{2n}(τ/2σ) exp(−τ²/4σ²) / H_{2n}(0).
                let v = lag / (S::of(2.0) * *sigma);
                hermite(2 * *order, v) * (-v * v).exp() / S::of(hermite_even_at_zero(*order))
            }
            PulseShape::Sampled { dt, samples } => {
                // Trapezoid at the native rate; the shifted copy is linearly
                // interpolated and pinned to zero outside [0, T_s). Evaluate
                // at |τ| so evenness is exact.
                let tau = lag.abs();
                let dt = *dt;
                let n = samples.len();
                let at = |t: S| -> S {
                    if t < S::zero() {
                        return S::zero();
                    }
                    let idx = (t / dt).floor();
                    let i = idx.to_usize().unwrap_or(usize::MAX);
                    if i >= n {
                        return S::zero();
                    }
                    let frac = t / dt - idx;
                    let a = samples[i];
                    let b = if i + 1 < n { samples[i + 1] } else { S::zero() };
                    a + (b - a) * frac
                };
                let mut acc = S::zero();
                // Virtual zero sample at n·dt closes the final panel.
                for i in 0..=n {
                    let s_i = if i < n { samples[i] } else { S::zero() };
                    let t_i = dt * S::from_usize(i).unwrap();
                    let term = s_i * at(t_i - tau);
                    if i == 0 || i == n {
                        acc += term * S::of(0.5);
                    } else {
                        acc += term;
                    }
                }
                acc * dt
            }
        }
    }

    /// Dense samples of the pulse itself on its support (test and
    /// diagnostic aid; the Gaussian families are evaluated analytically).
    pub fn sample_shape(&self, count: usize) -> Vec<(S, S)> {
        let mut out = Vec::with_capacity(count);
        match &self.shape {
            PulseShape::GaussianDerivative { order, sigma } => {
                // Centered on T_s/2, unit energy overall.
                let center = self.duration * S::of(0.5);
                // Raw energy of dⁿ/dtⁿ exp(−t²/2σ²) is σ√π (2σ)^{-2n} (2n)!/n!.
                let raw_energy = sigma.as_f64()
                    * std::f64::consts::PI.sqrt()
                    * (2.0 * sigma.as_f64()).powi(-2 * *order as i32)
                    * hermite_even_at_zero(*order).abs();
                let scale = S::of(1.0 / raw_energy.sqrt());
                let sqrt2 = S::of(std::f64::consts::SQRT_2);
                for i in 0..count {
                    let t = self.duration * S::from_usize(i).unwrap()
                        / S::from_usize(count.max(2) - 1).unwrap();
                    let u = (t - center) / *sigma;
                    let w = u / sqrt2;
                    let sign = if *order % 2 == 1 { -S::one() } else { S::one() };
                    let amp = sign
                        * hermite(*order, w)
                        * (-u * u * S::of(0.5)).exp()
                        / (sqrt2 * *sigma).powi(*order as i32);
                    out.push((t, amp * scale));
                }
            }
            PulseShape::Sampled { dt, samples } => {
                for (i, &v) in samples.iter().enumerate() {
                    out.push((*dt * S::from_usize(i).unwrap(), v));
                }
            }
        }
        out
    }
}
