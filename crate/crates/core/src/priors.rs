//! A priori knowledge: Fisher-information blocks for channel parameters,
//! position, orientation and clock offset, the prior-aware ranging
//! information intensity, and a Monte Carlo estimator that recovers the
//! channel prior blocks from the generative model's log-density.
//!
//! Infinite information ("known parameter") is handled by eliminating the
//! coordinate from the FIM — the exact limit — never by a large float.
//! All blocks are in distance units: biases in meters, so every entry that
//! pairs with a bias is 1/m².

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{sample_bias_sequence, AnchorPaths, ChannelModelParams, MultipathChannel};
use crate::error::{Error, Result};
use crate::fim::{efim_from_ranging, position_efim_result, psi_block, EfimResult};
use crate::geometry::{NetworkTopology, Sight};
use crate::linalg::{min_symmetric_eigenvalue, sym_solve, SingularPolicy};
use crate::scalar::{light_speed, RealScalar, SPEED_OF_LIGHT};
use crate::waveform::Waveform;

/// A scalar Fisher information value; `Infinite` means the parameter is
/// known exactly and is eliminated from the FIM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fisher<S> {
    Finite(S),
    Infinite,
}

impl<S: RealScalar> Fisher<S> {
    pub fn zero() -> Self {
        Fisher::Finite(S::zero())
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Fisher::Infinite)
    }

    pub fn finite_value(&self) -> Option<S> {
        match self {
            Fisher::Finite(v) => Some(*v),
            Fisher::Infinite => None,
        }
    }

    pub fn validate_nonnegative(&self, what: &str) -> Result<()> {
        if let Fisher::Finite(v) = self {
            if !(*v >= S::zero()) || !v.is_finite() {
                return Err(Error::InconsistentPrior(format!(
                    "{what} must be a nonnegative Fisher information, got {}",
                    v.as_f64()
                )));
            }
        }
        Ok(())
    }
}

/// Prior information about the agent position.
#[derive(Clone, Debug)]
pub enum PositionPrior<S: RealScalar> {
    /// 2×2 Fisher information matrix added to the position block.
    Fim(Matrix2<S>),
    /// Position known exactly: the position coupling is eliminated where
    /// that is meaningful (array/clock reductions).
    Known,
}

impl<S: RealScalar> PositionPrior<S> {
    pub fn none() -> Self {
        PositionPrior::Fim(Matrix2::zeros())
    }

    pub fn isotropic(g: S) -> Self {
        PositionPrior::Fim(Matrix2::identity() * g)
    }

    pub fn validate(&self) -> Result<()> {
        if let PositionPrior::Fim(m) = self {
            let sym = DMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
            if (m[(0, 1)] - m[(1, 0)]).abs() > S::default_epsilon() * S::of(8.0) {
                return Err(Error::InconsistentPrior(
                    "position prior must be symmetric".into(),
                ));
            }
            let min = min_symmetric_eigenvalue(&sym);
            if min < -S::default_epsilon() * S::of(64.0) {
                return Err(Error::InconsistentPrior(
                    "position prior must be positive semidefinite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-anchor prior over `(d_k, κ_k)`: a stacked symmetric PSD matrix with
/// the distance coordinate first, plus the set of κ coordinates with
/// infinite information.
///
/// κ coordinate order matches the parameter vector: LOS
/// `(α⁽¹⁾, b⁽²⁾, α⁽²⁾, …)`, NLOS `(b⁽¹⁾, α⁽¹⁾, b⁽²⁾, …)`.
#[derive(Clone, Debug)]
pub struct AnchorPrior<S: RealScalar> {
    stacked: DMatrix<S>,
    known: BTreeSet<usize>,
}

impl<S: RealScalar> AnchorPrior<S> {
    /// No prior knowledge for a κ vector of the given length.
    pub fn zero(kappa_dim: usize) -> Self {
        Self {
            stacked: DMatrix::zeros(kappa_dim + 1, kappa_dim + 1),
            known: BTreeSet::new(),
        }
    }

    /// Diagonal prior: distance information plus one value per κ entry.
    pub fn diagonal(xi_distance: S, kappa: &[Fisher<S>]) -> Result<Self> {
        if !(xi_distance >= S::zero()) || !xi_distance.is_finite() {
            return Err(Error::InconsistentPrior(
                "distance prior must be nonnegative and finite".into(),
            ));
        }
        let dim = kappa.len() + 1;
        let mut stacked = DMatrix::zeros(dim, dim);
        stacked[(0, 0)] = xi_distance;
        let mut known = BTreeSet::new();
        for (i, f) in kappa.iter().enumerate() {
            f.validate_nonnegative(&format!("kappa prior entry {i}"))?;
            match f {
                Fisher::Finite(v) => stacked[(i + 1, i + 1)] = *v,
                Fisher::Infinite => {
                    known.insert(i);
                }
            }
        }
        Ok(Self { stacked, known })
    }

    /// Full stacked block `[[Ξ̃_pp, Ξ̃_{p,κ}], [Ξ̃_{p,κ}ᵀ, Ξ_κκ]]` with an
    /// explicit known set. The finite part must be symmetric PSD and must
    /// not couple into known coordinates.
    pub fn from_stacked(
        stacked: DMatrix<S>,
        known: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let dim = stacked.nrows();
        if stacked.ncols() != dim || dim < 1 {
            return Err(Error::InconsistentPrior(
                "stacked prior must be square and nonempty".into(),
            ));
        }
        let known: BTreeSet<usize> = known.into_iter().collect();
        if known.iter().any(|&i| i + 1 >= dim) {
            return Err(Error::InconsistentPrior(
                "known index out of range".into(),
            ));
        }
        let scale = stacked.amax().max(S::one());
        for i in 0..dim {
            for j in 0..dim {
                if (stacked[(i, j)] - stacked[(j, i)]).abs()
                    > S::default_epsilon() * S::of(64.0) * scale
                {
                    return Err(Error::InconsistentPrior(
                        "stacked prior must be symmetric".into(),
                    ));
                }
            }
        }
        for &i in &known {
            for j in 0..dim {
                if j != i + 1 && stacked[(i + 1, j)] != S::zero() {
                    return Err(Error::InconsistentPrior(format!(
                        "known coordinate {i} must not carry finite cross terms"
                    )));
                }
            }
        }
        let min = min_symmetric_eigenvalue(&stacked);
        if min < -S::default_epsilon() * S::of(256.0) * scale {
            return Err(Error::InconsistentPrior(format!(
                "stacked prior is not positive semidefinite (min eigenvalue {})",
                min.as_f64()
            )));
        }
        Ok(Self { stacked, known })
    }

    pub fn kappa_dim(&self) -> usize {
        self.stacked.nrows() - 1
    }

    pub fn known(&self) -> &BTreeSet<usize> {
        &self.known
    }

    /// `Ξ̃_pp`, the distance-form position information.
    pub fn xi_distance(&self) -> S {
        self.stacked[(0, 0)]
    }

    /// `Ξ̃_{p,κ}` row for κ index `i`.
    pub fn xi_cross(&self, i: usize) -> S {
        self.stacked[(0, i + 1)]
    }

    /// `Ξ_κκ` entry.
    pub fn xi_kappa(&self, i: usize, j: usize) -> S {
        self.stacked[(i + 1, j + 1)]
    }

    /// Mark one κ coordinate as known (infinite information).
    pub fn with_known(mut self, i: usize) -> Result<Self> {
        if i >= self.kappa_dim() {
            return Err(Error::InconsistentPrior("known index out of range".into()));
        }
        for j in 0..self.stacked.nrows() {
            if j != i + 1 {
                self.stacked[(i + 1, j)] = S::zero();
                self.stacked[(j, i + 1)] = S::zero();
            }
        }
        self.known.insert(i);
        Ok(self)
    }
}

/// All prior knowledge of a scenario.
#[derive(Clone, Debug)]
pub struct PriorSpec<S: RealScalar> {
    /// One block per anchor; empty means no channel priors anywhere.
    pub per_anchor: Vec<AnchorPrior<S>>,
    pub position: PositionPrior<S>,
    pub orientation: Fisher<S>,
    pub offset: Fisher<S>,
}

impl<S: RealScalar> PriorSpec<S> {
    pub fn none() -> Self {
        Self {
            per_anchor: Vec::new(),
            position: PositionPrior::none(),
            orientation: Fisher::zero(),
            offset: Fisher::zero(),
        }
    }

    pub fn with_anchor_priors(per_anchor: Vec<AnchorPrior<S>>) -> Self {
        Self {
            per_anchor,
            ..Self::none()
        }
    }

    /// The prior block for anchor `k`, defaulting to zero information.
    pub fn anchor_prior(&self, k: usize, kappa_dim: usize) -> Result<AnchorPrior<S>> {
        if self.per_anchor.is_empty() {
            return Ok(AnchorPrior::zero(kappa_dim));
        }
        let p = self.per_anchor.get(k).ok_or_else(|| {
            Error::InconsistentPrior(format!(
                "prior list has {} anchors, scenario needs index {k}",
                self.per_anchor.len()
            ))
        })?;
        if p.kappa_dim() != kappa_dim {
            return Err(Error::InconsistentPrior(format!(
                "anchor {k}: prior has {} kappa coordinates, channel needs {}",
                p.kappa_dim(),
                kappa_dim
            )));
        }
        Ok(p.clone())
    }
}

/// Prior-aware ranging information intensity (LOS and NLOS branches).
///
/// Works in distance units: with `Ψ_m = Ψ/c²`,
/// `λ = lᵀΨ_m l + Ξ̃_pp − u M⁻¹ uᵀ` where
/// `M = D Ψ_m Dᵀ + Ξ_κκ` and `u = lᵀΨ_m Dᵀ + Ξ̃_{p,κ}`; for LOS the first
/// delay is not a κ coordinate, for NLOS it is. κ coordinates with
/// infinite prior information are eliminated exactly.
pub fn rii_with_prior<S: RealScalar>(
    sight: Sight,
    paths: &AnchorPaths<S>,
    w: &Waveform<S>,
    n0: S,
    prior: &AnchorPrior<S>,
) -> Result<S> {
    let l_paths = paths.path_count();
    let kappa_dim = 2 * l_paths - usize::from(sight.is_los());
    if prior.kappa_dim() != kappa_dim {
        return Err(Error::InconsistentPrior(format!(
            "prior has {} kappa coordinates, {:?} entry with {} paths needs {}",
            prior.kappa_dim(),
            sight,
            l_paths,
            kappa_dim
        )));
    }
    let c = light_speed::<S>();
    let psi = psi_block(paths, w, n0)?;
    let psi_m = psi.matrix() / (c * c);
    let n_eta = psi_m.nrows();
    let drop = n_eta - kappa_dim; // 1 for LOS, 0 for NLOS

    // lᵀ Ψ_m: sum over delay rows.
    let mut row_sum = DVector::<S>::zeros(n_eta);
    let mut total = S::zero();
    for i in (0..n_eta).step_by(2) {
        for j in 0..n_eta {
            row_sum[j] += psi_m[(i, j)];
        }
    }
    for j in (0..n_eta).step_by(2) {
        total += row_sum[j];
    }

    let retained: Vec<usize> = (0..kappa_dim).filter(|i| !prior.known().contains(i)).collect();
    let base = total + prior.xi_distance();
    if retained.is_empty() {
        return Ok(base);
    }
    let m = retained.len();
    let mut nuis = DMatrix::<S>::zeros(m, m);
    let mut cross = DVector::<S>::zeros(m);
    for (a, &i) in retained.iter().enumerate() {
        cross[a] = row_sum[i + drop] + prior.xi_cross(i);
        for (b, &j) in retained.iter().enumerate() {
            nuis[(a, b)] = psi_m[(i + drop, j + drop)] + prior.xi_kappa(i, j);
        }
    }
    let rhs = DMatrix::from_column_slice(m, 1, cross.as_slice());
    let solved = sym_solve(&nuis, &rhs, SingularPolicy::Reject)?;
    Ok(base - cross.dot(&solved.column(0).into_owned()))
}

fn lambdas_with_prior<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
    priors: &PriorSpec<S>,
) -> Result<(Vec<S>, Vec<S>)> {
    let sights: Vec<Sight> = topology.anchors().iter().map(|a| a.sight).collect();
    channel.validate_sights(&sights)?;
    let mut angles = Vec::with_capacity(topology.anchor_count());
    let mut lambdas = Vec::with_capacity(topology.anchor_count());
    for (k, paths) in channel.iter().enumerate() {
        let sight = topology.sight(k);
        let kappa_dim = 2 * paths.path_count() - usize::from(sight.is_los());
        let prior = priors.anchor_prior(k, kappa_dim)?;
        angles.push(topology.angle_to_agent(k)?);
        lambdas.push(rii_with_prior(sight, paths, w, n0, &prior)?);
    }
    Ok((angles, lambdas))
}

/// Position EFIM with a priori channel knowledge: the RDM-weighted sum
/// over all anchors with prior-aware intensities.
pub fn efim_with_channel_prior<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
    priors: &PriorSpec<S>,
) -> Result<EfimResult<S>> {
    let (angles, lambdas) = lambdas_with_prior(topology, channel, w, n0, priors)?;
    position_efim_result(efim_from_ranging(&angles, &lambdas))
}

/// Position EFIM with channel and position priors, with all geometry
/// evaluated at the supplied expected position (the caller owns the
/// flatness condition).
///
/// An exactly-known position makes the position EFIM itself meaningless,
/// so `PositionPrior::Known` is rejected here; use a large finite value.
pub fn efim_with_position_prior<S: RealScalar>(
    topology_at_mean: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
    priors: &PriorSpec<S>,
) -> Result<EfimResult<S>> {
    let xi_p = match &priors.position {
        PositionPrior::Fim(m) => *m,
        PositionPrior::Known => {
            return Err(Error::InconsistentPrior(
                "position prior ∞ eliminates the parameter of interest; use a large finite value"
                    .into(),
            ))
        }
    };
    priors.position.validate()?;
    let (angles, lambdas) = lambdas_with_prior(topology_at_mean, channel, w, n0, priors)?;
    position_efim_result(efim_from_ranging(&angles, &lambdas) + xi_p)
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation of the channel prior blocks (f64 tooling).
// ---------------------------------------------------------------------------

/// Bias prior model used by the score-based estimator.
#[derive(Clone, Copy, Debug)]
pub enum BiasPriorModel {
    /// Exponential inter-arrival chain with rate ν/c. The density is not
    /// differentiable at its support boundary, so the classical Fisher
    /// information does not exist; `smoothing_m = None` uses the formal
    /// interior score (constant −ν/c), a positive width smooths the
    /// boundary with a logistic ramp.
    ExponentialChain { smoothing_m: Option<f64> },
    /// Independent Gaussian biases with the given standard deviation
    /// (validation model: the information per bias is exactly 1/σ²).
    GaussianIndependent { sigma_m: f64 },
}

/// Options for [`estimate_channel_prior_fim`].
#[derive(Clone, Debug)]
pub struct PriorEstimateOptions {
    /// Monte Carlo sample count (at least 1000).
    pub samples: usize,
    pub bias_prior: BiasPriorModel,
    /// Simpson panels for marginalizing the shadowing variable.
    pub shadowing_panels: usize,
}

impl Default for PriorEstimateOptions {
    fn default() -> Self {
        Self {
            samples: 2000,
            bias_prior: BiasPriorModel::ExponentialChain { smoothing_m: None },
            shadowing_panels: 64,
        }
    }
}

/// Estimator output: the stacked prior block over `(d, κ)` with standard
/// errors, the count of excluded draws, and the magnitude clipped by the
/// PSD projection.
#[derive(Clone, Debug)]
pub struct EstimatedChannelPrior {
    pub prior: AnchorPrior<f64>,
    pub standard_errors: DMatrix<f64>,
    pub excluded: usize,
    pub psd_clip: f64,
}

struct DensityModel<'a> {
    params: &'a ChannelModelParams,
    sight: Sight,
    bias_prior: BiasPriorModel,
    shadowing_panels: usize,
}

impl DensityModel<'_> {
    /// Log-density of `(biases, amplitudes)` given the distance, up to
    /// additive constants that do not depend on `(d, b, α)`.
    fn log_density(&self, d: f64, biases: &[f64], amps: &[f64]) -> f64 {
        let p = self.params;
        let mut lp = 0.0;

        // Bias part.
        match self.bias_prior {
            BiasPriorModel::ExponentialChain { smoothing_m } => {
                let rate = p.arrival_rate / SPEED_OF_LIGHT;
                let mut prev = 0.0;
                for (l, &b) in biases.iter().enumerate() {
                    if l == 0 && self.sight.is_los() {
                        continue;
                    }
                    let gap = b - prev;
                    match smoothing_m {
                        None => {
                            if gap < 0.0 {
                                return f64::NEG_INFINITY;
                            }
                            lp += -rate * gap;
                        }
                        Some(h) => {
                            // logistic ramp: log sigmoid(gap/h) − rate·gap
                            let x = gap / h;
                            let log_sig = if x > 0.0 {
                                -(-x).exp().ln_1p()
                            } else {
                                x - x.exp().ln_1p()
                            };
                            lp += log_sig - rate * gap;
                        }
                    }
                    prev = b;
                }
            }
            BiasPriorModel::GaussianIndependent { sigma_m } => {
                let mean_gap = SPEED_OF_LIGHT / p.arrival_rate;
                for (l, &b) in biases.iter().enumerate() {
                    if l == 0 && self.sight.is_los() {
                        continue;
                    }
                    let mu = mean_gap * (l as f64 + if self.sight.is_los() { 0.0 } else { 1.0 });
                    let z = (b - mu) / sigma_m;
                    lp += -0.5 * z * z;
                }
            }
        }

        // Amplitude part: marginalize the shadowing variable by Simpson.
        let m = p.nakagami_m;
        for &a in amps {
            if a == 0.0 {
                return f64::NEG_INFINITY;
            }
            lp += (2.0 * m - 1.0) * a.abs().ln();
        }
        let mean_db = p.ref_power_db - 10.0 * p.path_exponent * (d / p.ref_distance_m).log10();
        let weights: Vec<f64> = biases
            .iter()
            .map(|&b| (-(d + b) / (SPEED_OF_LIGHT * p.decay_const_s)).exp())
            .collect();
        let wsum: f64 = weights.iter().sum();
        let cond_exponent = |w_db: f64| -> f64 {
            let total = 10.0f64.powf((mean_db + w_db) / 10.0);
            let mut e = 0.0;
            for (l, &a) in amps.iter().enumerate() {
                let q = total * weights[l] / wsum;
                e += -m * q.ln() - m * a * a / q;
            }
            e
        };
        if p.shadowing_db == 0.0 {
            lp += cond_exponent(0.0);
        } else {
            let sigma = p.shadowing_db;
            let span = 8.0 * sigma;
            let n = self.shadowing_panels.max(8) & !1; // even
            let h = 2.0 * span / n as f64;
            let mut max_e = f64::NEG_INFINITY;
            let mut terms = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let w_db = -span + i as f64 * h;
                let simpson: f64 = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let e = cond_exponent(w_db) - 0.5 * (w_db / sigma).powi(2) + simpson.ln();
                terms.push(e);
                if e > max_e {
                    max_e = e;
                }
            }
            if !max_e.is_finite() {
                return f64::NEG_INFINITY;
            }
            let sum: f64 = terms.iter().map(|e| (e - max_e).exp()).sum();
            lp += max_e + sum.ln();
        }
        lp
    }
}

/// Monte Carlo estimate of the stacked channel prior block for one anchor:
/// the average outer product of central-difference scores of the model
/// log-density in `(d, κ)`.
pub fn estimate_channel_prior_fim<R: Rng + ?Sized>(
    params: &ChannelModelParams,
    distance_m: f64,
    sight: Sight,
    opts: &PriorEstimateOptions,
    rng: &mut R,
) -> Result<EstimatedChannelPrior> {
    params.validate()?;
    if opts.samples < 1000 {
        return Err(Error::InconsistentPrior(format!(
            "estimator needs at least 1000 samples, got {}",
            opts.samples
        )));
    }
    if let BiasPriorModel::GaussianIndependent { sigma_m } = opts.bias_prior {
        if sigma_m <= 0.0 {
            return Err(Error::InconsistentPrior(
                "gaussian bias sigma must be positive".into(),
            ));
        }
    }
    let model = DensityModel {
        params,
        sight,
        bias_prior: opts.bias_prior,
        shadowing_panels: opts.shadowing_panels,
    };
    let l = params.path_count;
    let kappa_dim = 2 * l - usize::from(sight.is_los());
    let dim = kappa_dim + 1;
    let mean_gap = SPEED_OF_LIGHT / params.arrival_rate;

    // Finite-difference step per coordinate: cbrt(eps) · scale.
    let fd = f64::EPSILON.cbrt();

    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    let mut acc_sq = DMatrix::<f64>::zeros(dim, dim);
    let mut used = 0usize;
    let mut excluded = 0usize;

    for _ in 0..opts.samples {
        // Draw a realization from the generative model.
        let biases: Vec<f64> = match opts.bias_prior {
            BiasPriorModel::ExponentialChain { .. } => {
                sample_bias_sequence::<f64, _>(params.arrival_rate, l, sight, rng)?
            }
            BiasPriorModel::GaussianIndependent { sigma_m } => {
                let normal = Normal::new(0.0, sigma_m).unwrap();
                let mut b = Vec::with_capacity(l);
                for i in 0..l {
                    if i == 0 && sight.is_los() {
                        b.push(0.0);
                        continue;
                    }
                    let mu =
                        mean_gap * (i as f64 + if sight.is_los() { 0.0 } else { 1.0 });
                    b.push(mu + normal.sample(rng));
                }
                b
            }
        };
        let drawn = draw_amplitudes(params, distance_m, &biases, rng)?;

        // Scores by central differences in (d, b₂.., α..).
        let mut score = DVector::<f64>::zeros(dim);
        let mut ok = true;
        let eval = |d: f64, b: &[f64], a: &[f64]| model.log_density(d, b, a);
        {
            let h = fd * distance_m.abs().max(1.0);
            let up = eval(distance_m + h, &biases, &drawn);
            let dn = eval(distance_m - h, &biases, &drawn);
            score[0] = (up - dn) / (2.0 * h);
            ok &= score[0].is_finite();
        }
        let mut coord = 1usize;
        for i in 0..l {
            if i == 0 && sight.is_los() {
                // bias b⁽¹⁾ ≡ 0 is not a parameter for LOS.
            } else {
                let h = fd * mean_gap.max(biases[i].abs());
                let mut b_up = biases.clone();
                let mut b_dn = biases.clone();
                b_up[i] += h;
                b_dn[i] -= h;
                let up = eval(distance_m, &b_up, &drawn);
                let dn = eval(distance_m, &b_dn, &drawn);
                score[coord] = (up - dn) / (2.0 * h);
                ok &= score[coord].is_finite();
                coord += 1;
            }
            let h = fd * drawn[i].abs().max(1e-6);
            let mut a_up = drawn.clone();
            let mut a_dn = drawn.clone();
            a_up[i] += h;
            a_dn[i] -= h;
            let up = eval(distance_m, &biases, &a_up);
            let dn = eval(distance_m, &biases, &a_dn);
            score[coord] = (up - dn) / (2.0 * h);
            ok &= score[coord].is_finite();
            coord += 1;
        }
        if !ok {
            excluded += 1;
            continue;
        }
        for i in 0..dim {
            for j in 0..dim {
                let v = score[i] * score[j];
                acc[(i, j)] += v;
                acc_sq[(i, j)] += v * v;
            }
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Numerical(
            "all prior-estimator draws produced non-finite densities".into(),
        ));
    }
    let n = used as f64;
    let mean = acc / n;
    let mut se = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let var = (acc_sq[(i, j)] / n - mean[(i, j)] * mean[(i, j)]).max(0.0);
            se[(i, j)] = (var / n).sqrt();
        }
    }

    // PSD projection: clip negative eigenvalues and report the clip size.
    let eig = nalgebra::SymmetricEigen::new(mean.clone());
    let mut clip = 0.0f64;
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            clip = clip.max(-*v);
            *v = 0.0;
        }
    }
    let projected =
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let mut sym = projected;
    crate::linalg::symmetrize(&mut sym);
    let prior = AnchorPrior::from_stacked(sym, std::iter::empty())?;
    Ok(EstimatedChannelPrior {
        prior,
        standard_errors: se,
        excluded,
        psd_clip: clip,
    })
}

fn draw_amplitudes<R: Rng + ?Sized>(
    params: &ChannelModelParams,
    distance_m: f64,
    biases: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    use rand_distr::Gamma;
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
    let total = 10.0f64.powf(rss_db / 10.0);
    let weights: Vec<f64> = biases
        .iter()
        .map(|&b| (-(distance_m + b) / (SPEED_OF_LIGHT * params.decay_const_s)).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    let mut amps = Vec::with_capacity(biases.len());
    for w in weights {
        let q = total * w / wsum;
        let gamma = Gamma::new(params.nakagami_m, q / params.nakagami_m)
            .map_err(|e| Error::ModelParameter(format!("nakagami: {e}")))?;
        let mag = gamma.sample(rng).sqrt();
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        amps.push(sign * mag);
    }
    Ok(amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::rii_no_prior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn pulse() -> Waveform<f64> {
        Waveform::canonical_pulse()
    }

    #[test]
    fn zero_prior_reduces_to_no_prior_branches() {
        let w = pulse();
        let los = AnchorPaths::two_path(1.0e-9, 1.0, 0.7).unwrap();
        let prior = AnchorPrior::zero(3);
        let with = rii_with_prior(Sight::Los, &los, &w, 1.0, &prior).unwrap();
        let without = rii_no_prior(Sight::Los, &los, &w, 1.0).unwrap();
        assert!(
            (with - without).abs() <= 1e-12 * without,
            "{with} vs {without}"
        );

        let nlos = AnchorPaths::new(vec![3.0, 3.0 + 0.3], vec![1.0, 0.7]).unwrap();
        let with = rii_with_prior(Sight::Nlos, &nlos, &w, 1.0, &AnchorPrior::zero(4)).unwrap();
        assert!(with.abs() < 1e-9, "NLOS zero-prior RII should vanish, got {with}");
    }

    #[test]
    fn infinite_first_bias_prior_matches_los_branch() {
        let w = pulse();
        // Same physical paths; treat as NLOS with known b1 vs LOS.
        let nlos = AnchorPaths::new(vec![1.0, 1.0 + 0.3], vec![1.0, 0.7]).unwrap();
        let los_like = AnchorPaths::new(vec![0.0, 0.3], vec![1.0, 0.7]).unwrap();
        let lam_los =
            rii_with_prior(Sight::Los, &los_like, &w, 1.0, &AnchorPrior::zero(3)).unwrap();
        let prior_inf = AnchorPrior::zero(4).with_known(0).unwrap();
        let lam_lim = rii_with_prior(Sight::Nlos, &nlos, &w, 1.0, &prior_inf).unwrap();
        assert!(
            (lam_lim - lam_los).abs() < 1e-10 * lam_los.abs().max(1.0),
            "{lam_lim} vs {lam_los}"
        );
        // Finite but large information converges to the same value.
        let near = AnchorPrior::diagonal(
            0.0,
            &[
                Fisher::Finite(1e12),
                Fisher::zero(),
                Fisher::zero(),
                Fisher::zero(),
            ],
        )
        .unwrap();
        let lam_near = rii_with_prior(Sight::Nlos, &nlos, &w, 1.0, &near).unwrap();
        assert!(
            (lam_near - lam_los).abs() < 1e-6 * lam_los,
            "{lam_near} vs {lam_los}"
        );
    }

    #[test]
    fn corollary3_convergence_is_monotone() {
        let w = pulse();
        let nlos = AnchorPaths::new(vec![0.7, 0.7 + 0.25], vec![1.0, 0.6]).unwrap();
        let lam_los = rii_with_prior(
            Sight::Los,
            &AnchorPaths::new(vec![0.0, 0.25], vec![1.0, 0.6]).unwrap(),
            &w,
            1.0,
            &AnchorPrior::zero(3),
        )
        .unwrap();
        let mut prev_err = f64::INFINITY;
        for exp in [2.0, 4.0, 6.0, 8.0, 10.0, 12.0] {
            let t2 = 10.0f64.powf(exp);
            let prior = AnchorPrior::diagonal(
                0.0,
                &[
                    Fisher::Finite(t2),
                    Fisher::zero(),
                    Fisher::zero(),
                    Fisher::zero(),
                ],
            )
            .unwrap();
            let lam = rii_with_prior(Sight::Nlos, &nlos, &w, 1.0, &prior).unwrap();
            let err = (lam - lam_los).abs();
            assert!(err <= prev_err + 1e-15, "error not nonincreasing at t²=1e{exp}");
            prev_err = err;
        }
    }

    #[test]
    fn amplitude_priors_interpolate_to_partial_model() {
        use crate::fim::rii_partial_model;
        let w = pulse();
        let paths = AnchorPaths::two_path(1.0e-9, 1.0, 10.0f64.powf(-0.15)).unwrap();
        let prior = AnchorPrior::diagonal(
            0.0,
            &[Fisher::Infinite, Fisher::zero(), Fisher::Infinite],
        )
        .unwrap();
        let lam = rii_with_prior(Sight::Los, &paths, &w, 1.0, &prior).unwrap();
        let partial = rii_partial_model(Sight::Los, &paths, &w, 1.0).unwrap();
        assert!((lam - partial).abs() < 1e-9 * partial, "{lam} vs {partial}");
    }

    #[test]
    fn prior_dimension_mismatch_is_rejected() {
        let w = pulse();
        let paths = AnchorPaths::two_path(1.0e-9, 1.0, 0.7).unwrap();
        let err = rii_with_prior(Sight::Los, &paths, &w, 1.0, &AnchorPrior::zero(4));
        assert!(matches!(err, Err(Error::InconsistentPrior(_))));
    }

    #[test]
    fn estimator_recovers_gaussian_bias_information() {
        let params = ChannelModelParams {
            shadowing_db: 2.0,
            decay_const_s: 1.0e6, // PDP flat: amplitudes carry no bias info
            nakagami_m: 2.0,
            path_count: 2,
            ..Default::default()
        };
        let sigma = 0.4;
        let opts = PriorEstimateOptions {
            samples: 3000,
            bias_prior: BiasPriorModel::GaussianIndependent { sigma_m: sigma },
            shadowing_panels: 64,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let est = estimate_channel_prior_fim(&params, 10.0, Sight::Los, &opts, &mut rng).unwrap();
        // LOS with 2 paths: stacked coords (d, α1, b2, α2); b2 at index 2.
        let got = est.prior.xi_kappa(1, 1);
        let want = 1.0 / (sigma * sigma);
        let se = est.standard_errors[(2, 2)];
        assert!(
            (got - want).abs() < 3.0 * se.max(1e-3 * want),
            "Ξ_bb {got} vs {want} (se {se})"
        );
        assert_eq!(est.excluded, 0);
    }

    #[test]
    fn estimator_formal_exponential_score_gives_rate_squared() {
        let params = ChannelModelParams {
            shadowing_db: 1.0,
            decay_const_s: 1.0e6,
            nakagami_m: 2.0,
            path_count: 1,
            arrival_rate: 1.0 / 2.0e-9,
            ..Default::default()
        };
        let opts = PriorEstimateOptions {
            samples: 1500,
            bias_prior: BiasPriorModel::ExponentialChain { smoothing_m: None },
            shadowing_panels: 64,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let est = estimate_channel_prior_fim(&params, 5.0, Sight::Nlos, &opts, &mut rng).unwrap();
        let rate = params.arrival_rate / SPEED_OF_LIGHT;
        // NLOS single path: stacked coords (d, b1, α1); formal score wrt b1
        // is constantly −rate, so the recovered information is rate².
        let got = est.prior.xi_kappa(0, 0);
        let want = rate * rate;
        assert!(
            (got - want).abs() < 1e-4 * want + 3.0 * est.standard_errors[(1, 1)],
            "{got} vs {want}"
        );
    }

    #[test]
    fn estimator_standard_error_shrinks_with_samples() {
        let params = ChannelModelParams {
            shadowing_db: 2.0,
            path_count: 1,
            ..Default::default()
        };
        let run = |n: usize, seed: u64| {
            let opts = PriorEstimateOptions {
                samples: n,
                bias_prior: BiasPriorModel::GaussianIndependent { sigma_m: 0.5 },
                shadowing_panels: 32,
            };
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            estimate_channel_prior_fim(&params, 8.0, Sight::Nlos, &opts, &mut rng)
                .unwrap()
                .standard_errors[(1, 1)]
        };
        let se_n = run(1000, 7);
        let se_4n = run(4000, 7);
        let ratio = se_n / se_4n;
        assert!(
            ratio > 1.5 && ratio < 2.7,
            "expected ~2x shrink, got {ratio}"
        );
    }

    #[test]
    fn stacked_prior_validation() {
        // Indefinite stacked block is rejected.
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(AnchorPrior::<f64>::from_stacked(bad, std::iter::empty()).is_err());
        // Known coordinate with finite cross terms is rejected.
        let coupled = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(AnchorPrior::<f64>::from_stacked(coupled, [0]).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(AnchorPrior::<f64>::from_stacked(ok, std::iter::empty()).is_ok());
    }
}
