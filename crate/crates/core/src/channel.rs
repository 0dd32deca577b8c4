//! Multipath channel realizations: explicit per-anchor path tables and the
//! stochastic generator (Poisson arrivals, log-normal shadowing,
//! exponential power dispersion, Nakagami fading).
//!
//! Biases are carried in meters throughout; delays are derived with the SI
//! speed of light. Random draws are taken in `f64` and converted, so a
//! given seed produces the same channel for every scalar instantiation.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};

use crate::error::{Error, Result};
use crate::geometry::Sight;
use crate::scalar::{light_speed, RealScalar, SPEED_OF_LIGHT};

/// Paths from one anchor: range biases (meters, nondecreasing, first entry
/// zero for LOS) and real amplitudes.
#[derive(Clone, Debug)]
pub struct AnchorPaths<S: RealScalar> {
    biases_m: Vec<S>,
    amplitudes: Vec<S>,
}

impl<S: RealScalar> AnchorPaths<S> {
    pub fn new(biases_m: Vec<S>, amplitudes: Vec<S>) -> Result<Self> {
        if biases_m.is_empty() || biases_m.len() != amplitudes.len() {
            return Err(Error::ModelParameter(format!(
                "need equal, nonzero path counts (got {} biases, {} amplitudes)",
                biases_m.len(),
                amplitudes.len()
            )));
        }
        let mut prev = S::zero();
        for (l, &b) in biases_m.iter().enumerate() {
            if !b.is_finite() || b < S::zero() {
                return Err(Error::ModelParameter(format!(
                    "bias {l} must be finite and nonnegative"
                )));
            }
            if l > 0 && b < prev {
                return Err(Error::ModelParameter(format!(
                    "biases must be nondecreasing (path {l})"
                )));
            }
            prev = b;
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::ModelParameter("non-finite amplitude".into()));
        }
        if amplitudes.iter().all(|a| *a == S::zero()) {
            return Err(Error::ModelParameter(
                "at least one amplitude must be nonzero".into(),
            ));
        }
        Ok(Self {
            biases_m,
            amplitudes,
        })
    }

    /// Single LOS-style path with zero bias.
    pub fn single(amplitude: S) -> Self {
        Self::new(vec![S::zero()], vec![amplitude]).expect("single path is valid")
    }

    /// Two paths separated by `separation_s` seconds with the given
    /// amplitudes (the Fig. 4/5 configuration).
    pub fn two_path(separation_s: S, a1: S, a2: S) -> Result<Self> {
        let sep_m = separation_s * light_speed::<S>();
        Self::new(vec![S::zero(), sep_m], vec![a1, a2])
    }

    pub fn path_count(&self) -> usize {
        self.biases_m.len()
    }

    pub fn biases_m(&self) -> &[S] {
        &self.biases_m
    }

    pub fn amplitudes(&self) -> &[S] {
        &self.amplitudes
    }

    /// Path delays relative to the first path, in seconds.
    pub fn relative_delays(&self) -> Vec<S> {
        let c = light_speed::<S>();
        let b0 = self.biases_m[0];
        self.biases_m.iter().map(|&b| (b - b0) / c).collect()
    }

    /// Does the first-path bias match the sight condition?
    pub fn consistent_with(&self, sight: Sight) -> bool {
        match sight {
            Sight::Los => self.biases_m[0] == S::zero(),
            Sight::Nlos => self.biases_m[0] > S::zero(),
        }
    }
}

/// Per-anchor multipath realization.
#[derive(Clone, Debug)]
pub struct MultipathChannel<S: RealScalar> {
    per_anchor: Vec<AnchorPaths<S>>,
}

impl<S: RealScalar> MultipathChannel<S> {
    pub fn new(per_anchor: Vec<AnchorPaths<S>>) -> Self {
        Self { per_anchor }
    }

    pub fn anchor_count(&self) -> usize {
        self.per_anchor.len()
    }

    pub fn anchor(&self, k: usize) -> &AnchorPaths<S> {
        &self.per_anchor[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnchorPaths<S>> {
        self.per_anchor.iter()
    }

    /// Check sight consistency against a topology's anchor flags.
    pub fn validate_sights(&self, sights: &[Sight]) -> Result<()> {
        if sights.len() != self.per_anchor.len() {
            return Err(Error::InconsistentScenario(format!(
                "channel has {} anchors, topology has {}",
                self.per_anchor.len(),
                sights.len()
            )));
        }
        for (k, (paths, &sight)) in self.per_anchor.iter().zip(sights).enumerate() {
            if !paths.consistent_with(sight) {
                return Err(Error::InconsistentScenario(format!(
                    "anchor {k}: first-path bias {} conflicts with {:?} designation",
                    paths.biases_m[0].as_f64(),
                    sight
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the stochastic channel generator.
#[derive(Clone, Debug)]
pub struct ChannelModelParams {
    /// Path arrival rate ν, 1/second.
    pub arrival_rate: f64,
    /// Path gain exponent ϱ.
    pub path_exponent: f64,
    /// Expected RSS (dB) at the reference distance.
    pub ref_power_db: f64,
    /// Reference distance d₀ in meters.
    pub ref_distance_m: f64,
    /// Shadowing standard deviation (dB).
    pub shadowing_db: f64,
    /// Exponential power-dispersion decay constant, seconds.
    pub decay_const_s: f64,
    /// Nakagami m-factor, constant per scenario.
    pub nakagami_m: f64,
    /// Fixed number of paths per realization.
    pub path_count: usize,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        Self {
            arrival_rate: 1.0 / 2.0e-9,
            path_exponent: 2.0,
            ref_power_db: 0.0,
            ref_distance_m: 1.0,
            shadowing_db: 2.0,
            decay_const_s: 20.0e-9,
            nakagami_m: 3.0,
            path_count: 8,
        }
    }
}

impl ChannelModelParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.arrival_rate > 0.0, "arrival rate must be positive"),
            (self.ref_distance_m > 0.0, "reference distance must be positive"),
            (self.shadowing_db >= 0.0, "shadowing sigma must be nonnegative"),
            (self.decay_const_s > 0.0, "decay constant must be positive"),
            (self.nakagami_m >= 0.5, "Nakagami m must be at least 1/2"),
            (self.path_count >= 1, "path count must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::ModelParameter(msg.into()));
            }
        }
        for (v, name) in [
            (self.arrival_rate, "arrival rate"),
            (self.path_exponent, "path exponent"),
            (self.ref_power_db, "reference power"),
            (self.shadowing_db, "shadowing sigma"),
            (self.decay_const_s, "decay constant"),
            (self.nakagami_m, "Nakagami m"),
        ] {
            if !v.is_finite() {
                return Err(Error::ModelParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Delay of a path: `τ = (d_k + b + B)/c`, with the offset `B` in meters
/// (zero when no clock offset is modeled).
pub fn delay_from_bias<S: RealScalar>(distance_m: S, bias_m: S, offset_m: S) -> S {
    (distance_m + bias_m + offset_m) / light_speed::<S>()
}

/// Range-bias sequence from cumulative exponential inter-arrivals with
/// rate ν/c (meters). LOS keeps the first bias at exactly zero.
pub fn sample_bias_sequence<S: RealScalar, R: Rng + ?Sized>(
    arrival_rate: f64,
    path_count: usize,
    sight: Sight,
    rng: &mut R,
) -> Result<Vec<S>> {
    if arrival_rate <= 0.0 || !arrival_rate.is_finite() {
        return Err(Error::ModelParameter("arrival rate must be positive".into()));
    }
    let exp = Exp::new(arrival_rate / SPEED_OF_LIGHT)
        .map_err(|e| Error::ModelParameter(format!("exponential rate: {e}")))?;
    let mut biases = Vec::with_capacity(path_count);
    let mut cursor = 0.0f64;
    for l in 0..path_count {
        if l == 0 && sight.is_los() {
            biases.push(S::zero());
            continue;
        }
        cursor += exp.sample(rng);
        biases.push(S::of(cursor));
    }
    Ok(biases)
}

/// Draw one anchor's multipath realization.
///
/// Received power follows `P = P₀ − 10ϱ log₁₀(d/d₀) + w`, `w ~ N(0, σ_S²)`;
/// per-path mean powers follow the exponential dispersion profile
/// normalized so they sum to `10^{P/10}`; amplitude magnitudes are
/// Nakagami with those second moments and equiprobable signs.
pub fn sample_channel<S: RealScalar, R: Rng + ?Sized>(
    params: &ChannelModelParams,
    distance_m: f64,
    sight: Sight,
    rng: &mut R,
) -> Result<AnchorPaths<S>> {
    params.validate()?;
    if distance_m <= 0.0 {
        return Err(Error::ModelParameter("distance must be positive".into()));
    }
    let biases = sample_bias_sequence::<f64, _>(params.arrival_rate, params.path_count, sight, rng)?;

    let shadow = if params.shadowing_db > 0.0 {
        Normal::new(0.0, params.shadowing_db)
            .map_err(|e| Error::ModelParameter(format!("shadowing: {e}")))?
            .sample(rng)
    } else {
        0.0
    };
    let rss_db = params.ref_power_db
        - 10.0 * params.path_exponent * (distance_m / params.ref_distance_m).log10()
        + shadow;
    let total_power = 10.0f64.powf(rss_db / 10.0);

    // Exponential PDP normalized over the realized delays; the common
    // distance term cancels in the ratio.
    let weights: Vec<f64> = biases
        .iter()
        .map(|&b| (-(distance_m + b) / (SPEED_OF_LIGHT * params.decay_const_s)).exp())
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut amplitudes = Vec::with_capacity(biases.len());
    for w in weights {
        let mean_sq = total_power * w / weight_sum;
        // Nakagami(m, Ω): |α| = sqrt(Gamma(shape=m, scale=Ω/m)).
        let gamma = Gamma::new(params.nakagami_m, mean_sq / params.nakagami_m)
            .map_err(|e| Error::ModelParameter(format!("nakagami: {e}")))?;
        let mag = gamma.sample(rng).sqrt();
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        amplitudes.push(S::of(sign * mag));
    }
    AnchorPaths::new(biases.into_iter().map(S::of).collect(), amplitudes)
}

/// Length of the first contiguous cluster: the largest `j` such that all
/// consecutive delay gaps among the first `j` paths are below the pulse
/// duration. Delays must be sorted ascending.
pub fn first_contiguous_cluster<S: RealScalar>(delays: &[S], pulse_duration: S) -> usize {
    debug_assert!(delays.windows(2).all(|w| w[0] <= w[1]));
    let mut len = 1usize;
    while len < delays.len() && (delays[len] - delays[len - 1]).abs() < pulse_duration {
        len += 1;
    }
    len.max(1)
}
