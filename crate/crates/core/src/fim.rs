//! Fisher information assembly and equivalent-Fisher-information (EFI)
//! reductions: per-anchor waveform blocks, the full FIM over position and
//! multipath nuisance parameters, the path-overlap coefficient, ranging
//! information intensities, and the position EFIM with its SPEB.
//!
//! Conventions: the per-anchor block `Ψ_k` is kept in the delay/scaled
//! amplitude parameterization `(τ⁽¹⁾, α⁽¹⁾/c, τ⁽²⁾, α⁽²⁾/c, …)`; the full
//! FIM is expressed over `(p, κ_1, …, κ_N)` with biases in meters, so RIIs
//! come out in 1/m² and the SPEB in m².

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::channel::{first_contiguous_cluster, AnchorPaths, MultipathChannel};
use crate::error::{Error, Result};
use crate::geometry::{ranging_direction_matrix, NetworkTopology, Sight};
use crate::linalg::{
    min_symmetric_eigenvalue, schur_complement, singularity_threshold, sym_inverse, sym_solve,
    symmetrize, SingularPolicy,
};
use crate::scalar::{light_speed, RealScalar};
use crate::waveform::Waveform;

/// Tolerance for clamping the path-overlap coefficient into `[0, 1]`.
const POC_CLAMP_TOL: f64 = 1e-6;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Coord {
    Delay(usize),
    Amplitude(usize),
}

fn eta_coord(index: usize) -> Coord {
    if index % 2 == 0 {
        Coord::Delay(index / 2)
    } else {
        Coord::Amplitude(index / 2)
    }
}

/// Contiguous-cluster label per delay: consecutive gaps below the pulse
/// duration share a label. Pairs in different clusters have exactly zero
/// correlation; pairs inside one cluster use the unwindowed correlation so
/// each cluster block is an exact Gram matrix.
fn cluster_labels<S: RealScalar>(delays: &[S], pulse_duration: S) -> Vec<usize> {
    let mut labels = Vec::with_capacity(delays.len());
    let mut current = 0usize;
    for i in 0..delays.len() {
        if i > 0 && (delays[i] - delays[i - 1]).abs() >= pulse_duration {
            current += 1;
        }
        labels.push(current);
    }
    labels
}

/// Per-anchor FIM block over `(τ⁽¹⁾, α̃⁽¹⁾, …, τ⁽L⁾, α̃⁽L⁾)`.
#[derive(Clone, Debug)]
pub struct PsiBlock<S: RealScalar> {
    matrix: DMatrix<S>,
}

impl<S: RealScalar> PsiBlock<S> {
    pub fn matrix(&self) -> &DMatrix<S> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn path_count(&self) -> usize {
        self.matrix.nrows() / 2
    }
}

/// Assemble `Ψ_k` from one anchor's paths.
///
/// Entry kinds: delay/delay `(2 α_i α_j / N₀)·(−R̈_s)`, delay/amplitude
/// `(2 α_i c / N₀)·Ṙ_s`, amplitude/amplitude `(2 c² / N₀)·R_s`, each at
/// the corresponding delay difference.
pub fn psi_block<S: RealScalar>(
    paths: &AnchorPaths<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<PsiBlock<S>> {
    if !(n0 > S::zero()) || !n0.is_finite() {
        return Err(Error::InvalidNoise(n0.as_f64()));
    }
    let delays = paths.relative_delays();
    let amps = paths.amplitudes();
    let labels = cluster_labels(&delays, w.duration());
    let c = light_speed::<S>();
    let two_over_n0 = S::of(2.0) / n0;
    let dim = 2 * delays.len();
    let mut m = DMatrix::<S>::zeros(dim, dim);
    for p in 0..dim {
        for q in p..dim {
            let (pi, qi) = (p / 2, q / 2);
            if labels[pi] != labels[qi] {
                continue;
            }
            let v = match (eta_coord(p), eta_coord(q)) {
                (Coord::Delay(i), Coord::Delay(j)) => {
                    let (_, neg_dd) =
                        w.autocorrelation_derivatives_unwindowed(delays[i] - delays[j]);
                    two_over_n0 * amps[i] * amps[j] * neg_dd
                }
                (Coord::Delay(i), Coord::Amplitude(j)) => {
                    let (d1, _) = w.autocorrelation_derivatives_unwindowed(delays[i] - delays[j]);
                    two_over_n0 * amps[i] * c * d1
                }
                (Coord::Amplitude(i), Coord::Delay(j)) => {
                    let (d1, _) = w.autocorrelation_derivatives_unwindowed(delays[j] - delays[i]);
                    two_over_n0 * amps[j] * c * d1
                }
                (Coord::Amplitude(i), Coord::Amplitude(j)) => {
                    two_over_n0 * c * c * w.autocorrelation_unwindowed(delays[i] - delays[j])
                }
            };
            m[(p, q)] = v;
            m[(q, p)] = v;
        }
    }
    Ok(PsiBlock { matrix: m })
}

/// Delay-only FIM block used by the partial-parameter model (amplitudes
/// treated as known and excluded).
pub fn psi_block_delays_only<S: RealScalar>(
    paths: &AnchorPaths<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<DMatrix<S>> {
    if !(n0 > S::zero()) || !n0.is_finite() {
        return Err(Error::InvalidNoise(n0.as_f64()));
    }
    let delays = paths.relative_delays();
    let amps = paths.amplitudes();
    let labels = cluster_labels(&delays, w.duration());
    let two_over_n0 = S::of(2.0) / n0;
    let l = delays.len();
    let mut m = DMatrix::<S>::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            if labels[i] != labels[j] {
                continue;
            }
            let (_, neg_dd) = w.autocorrelation_derivatives_unwindowed(delays[i] - delays[j]);
            let v = two_over_n0 * amps[i] * amps[j] * neg_dd;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Equivalent Fisher information: Schur complement of the trailing
/// nuisance block, keeping the leading `n` parameters.
pub fn efim_reduce<S: RealScalar>(
    j: &DMatrix<S>,
    n: usize,
    policy: SingularPolicy,
) -> Result<DMatrix<S>> {
    schur_complement(j, n, policy)
}

/// Path-overlap coefficient `χ ∈ [0, 1]` of the first contiguous cluster.
///
/// `χ = t'ᵀ Υ⁻¹ t' / (4π²β² E_s)` with the correlation partition of the
/// first cluster; it vanishes when the first path is resolvable and is
/// independent of path amplitudes.
pub fn path_overlap_coefficient<S: RealScalar>(
    paths: &AnchorPaths<S>,
    w: &Waveform<S>,
) -> Result<S> {
    let delays = paths.relative_delays();
    let cluster = first_contiguous_cluster(&delays, w.duration());
    if cluster == 1 {
        return Ok(S::zero());
    }
    let energy = w.energy();
    let r = |tau: S| w.autocorrelation_unwindowed(tau) / energy;
    let rd = |tau: S| w.autocorrelation_derivatives_unwindowed(tau).0 / energy;
    let rdd = |tau: S| w.autocorrelation_derivatives_unwindowed(tau).1 / energy;

    // Coordinates (α̃₁, τ₂, α̃₂, …, τ_L̃, α̃_L̃); delay coordinates are
    // rescaled by 1/(2πβ) so the system is well conditioned.
    let dim = 2 * cluster - 1;
    let two_pi_beta = S::two_pi() * w.effective_bandwidth();
    let coord = |idx: usize| -> Coord {
        if idx == 0 {
            Coord::Amplitude(0)
        } else if idx % 2 == 1 {
            Coord::Delay((idx + 1) / 2)
        } else {
            Coord::Amplitude(idx / 2)
        }
    };
    let weight = |idx: usize| -> S {
        match coord(idx) {
            Coord::Delay(_) => S::one() / two_pi_beta,
            Coord::Amplitude(_) => S::one(),
        }
    };
    let mut upsilon = DMatrix::<S>::zeros(dim, dim);
    let mut t = DVector::<S>::zeros(dim);
    for p in 0..dim {
        let v = match coord(p) {
            // First column of the cluster partition against τ₁.
            Coord::Amplitude(i) => rd(delays[0] - delays[i]),
            Coord::Delay(i) => rdd(delays[0] - delays[i]),
        };
        t[p] = v * weight(p);
        for q in p..dim {
            let v = match (coord(p), coord(q)) {
                (Coord::Delay(i), Coord::Delay(j)) => rdd(delays[i] - delays[j]),
                (Coord::Delay(i), Coord::Amplitude(j)) => rd(delays[i] - delays[j]),
                (Coord::Amplitude(i), Coord::Delay(j)) => rd(delays[j] - delays[i]),
                (Coord::Amplitude(i), Coord::Amplitude(j)) => r(delays[i] - delays[j]),
            };
            let v = v * weight(p) * weight(q);
            upsilon[(p, q)] = v;
            upsilon[(q, p)] = v;
        }
    }
    let rhs = DMatrix::from_column_slice(dim, 1, t.as_slice());
    let solved = sym_solve(&upsilon, &rhs, SingularPolicy::Reject).map_err(|e| {
        Error::SingularPathOverlap(format!(
            "first-cluster correlation system is singular (coincident delays?): {e}"
        ))
    })?;
    let quad = t.dot(&solved.column(0).into_owned());
    let chi = quad / (S::of(4.0) * S::pi() * S::pi() * w.effective_bandwidth().powi(2));
    let tol = S::of(POC_CLAMP_TOL);
    if chi < -tol || chi > S::one() + tol {
        return Err(Error::Numerical(format!(
            "path-overlap coefficient {} outside [0,1]",
            chi.as_f64()
        )));
    }
    Ok(chi.max(S::zero()).min(S::one()))
}

/// Ranging information intensity without a priori knowledge:
/// `λ = (8π²β²/c²)(1−χ)·SNR⁽¹⁾` for LOS, zero for NLOS.
pub fn rii_no_prior<S: RealScalar>(
    sight: Sight,
    paths: &AnchorPaths<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<S> {
    if !sight.is_los() {
        return Ok(S::zero());
    }
    let chi = path_overlap_coefficient(paths, w)?;
    let snr = w.path_snr(paths.amplitudes()[0], n0)?;
    let c = light_speed::<S>();
    Ok(S::of(8.0) * S::pi() * S::pi() * w.effective_bandwidth().powi(2) / (c * c)
        * (S::one() - chi)
        * snr)
}

/// RII under the partial-parameter model (amplitudes known): the first
/// delay's information after marginalizing the remaining delays only.
pub fn rii_partial_model<S: RealScalar>(
    sight: Sight,
    paths: &AnchorPaths<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<S> {
    if !sight.is_los() {
        return Ok(S::zero());
    }
    let psi = psi_block_delays_only(paths, w, n0)?;
    let l = psi.nrows();
    let c = light_speed::<S>();
    let ones = DVector::<S>::repeat(l, S::one());
    let total = (ones.transpose() * &psi * &ones)[(0, 0)];
    if l == 1 {
        return Ok(total / (c * c));
    }
    let nuis = psi.view((1, 1), (l - 1, l - 1)).into_owned();
    let cross = (psi * &ones).rows(1, l - 1).into_owned();
    let rhs = DMatrix::from_column_slice(l - 1, 1, cross.as_slice());
    let solved = sym_solve(&nuis, &rhs, SingularPolicy::Reject)?;
    Ok((total - cross.dot(&solved.column(0).into_owned())) / (c * c))
}

/// Canonical EFIM form: `Σ_k λ_k R(φ_k)`.
pub fn efim_from_ranging<S: RealScalar>(angles: &[S], lambdas: &[S]) -> Matrix2<S> {
    assert_eq!(angles.len(), lambdas.len());
    let mut m = Matrix2::<S>::zeros();
    for (&phi, &lambda) in angles.iter().zip(lambdas) {
        m += ranging_direction_matrix(phi) * lambda;
    }
    m
}

/// An equivalent FIM over the parameters of interest with the derived
/// bound scalars. `efim` is 2×2 for position-only problems, 3×3 with an
/// orientation or clock offset, 4×4 with both.
#[derive(Clone, Debug)]
pub struct EfimResult<S: RealScalar> {
    pub efim: DMatrix<S>,
    pub speb: S,
    pub soeb: Option<S>,
    pub steb: Option<S>,
}

impl<S: RealScalar> EfimResult<S> {
    /// Build from a joint EFIM whose leading 2×2 block is position;
    /// `orientation_index`/`offset_index` locate the extra coordinates.
    pub fn from_joint(
        efim: DMatrix<S>,
        orientation_index: Option<usize>,
        offset_index: Option<usize>,
    ) -> Result<Self> {
        let inv = sym_inverse(&efim, SingularPolicy::Reject).map_err(|_| {
            Error::UnlocalizableGeometry {
                efim: [
                    [efim[(0, 0)].as_f64(), efim[(0, 1)].as_f64()],
                    [efim[(1, 0)].as_f64(), efim[(1, 1)].as_f64()],
                ],
            }
        })?;
        let speb = inv[(0, 0)] + inv[(1, 1)];
        let soeb = orientation_index.map(|i| inv[(i, i)]);
        let steb = offset_index.map(|i| inv[(i, i)]);
        Ok(Self {
            efim,
            speb,
            soeb,
            steb,
        })
    }

    /// Position-only 2×2 result.
    pub fn position_only(efim: Matrix2<S>) -> Result<Self> {
        let m = DMatrix::from_fn(2, 2, |i, j| efim[(i, j)]);
        Self::from_joint(m, None, None)
    }

    /// The 2×2 position EFIM after reducing away the other coordinates.
    pub fn position_efim(&self) -> Result<Matrix2<S>> {
        let m = schur_complement(&self.efim, 2, SingularPolicy::Reject)?;
        Ok(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
    }

    /// Eigenvalues of the joint EFIM (reported by the CLI).
    pub fn efim_eigenvalues(&self) -> Vec<S> {
        let eig = nalgebra::SymmetricEigen::new(self.efim.clone());
        let mut v: Vec<S> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// Layout of the full FIM over `(p, κ_1, …, κ_N)`.
#[derive(Clone, Debug)]
pub struct FullFim<S: RealScalar> {
    pub matrix: DMatrix<S>,
    /// Starting row/column of each anchor's κ block.
    pub kappa_offsets: Vec<usize>,
    /// Size of each anchor's κ block.
    pub kappa_dims: Vec<usize>,
}

impl<S: RealScalar> FullFim<S> {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Reduce to the 2×2 position EFIM.
    pub fn position_efim(&self) -> Result<Matrix2<S>> {
        let m = schur_complement(&self.matrix, 2, SingularPolicy::Reject)?;
        Ok(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
    }

    /// SPEB via reduction and trace-inverse.
    pub fn speb(&self) -> Result<S> {
        position_efim_result(self.position_efim()?).map(|r| r.speb)
    }
}

fn validate_scene<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
) -> Result<()> {
    let sights: Vec<Sight> = topology.anchors().iter().map(|a| a.sight).collect();
    channel.validate_sights(&sights)
}

/// Number of κ coordinates for an anchor: `2L` for NLOS, `2L − 1` for LOS
/// (the zero first-path bias is not a parameter).
fn kappa_dim(sight: Sight, path_count: usize) -> usize {
    2 * path_count - usize::from(sight.is_los())
}

fn assemble_full_fim<S: RealScalar>(
    topology: &NetworkTopology<S>,
    blocks: Vec<(DMatrix<S>, DVector<S>, S)>, // (κ-marginal block in η units, l'Ψ Mᵀ, l'Ψ l)
) -> Result<FullFim<S>> {
    let c = light_speed::<S>();
    let c2 = c * c;
    let mut kappa_offsets = Vec::with_capacity(blocks.len());
    let mut kappa_dims = Vec::with_capacity(blocks.len());
    let mut dim = 2usize;
    for (kk, _, _) in &blocks {
        kappa_offsets.push(dim);
        kappa_dims.push(kk.nrows());
        dim += kk.nrows();
    }
    let mut m = DMatrix::<S>::zeros(dim, dim);
    for (k, (kk, cross, total)) in blocks.into_iter().enumerate() {
        let phi = topology.angle_to_agent(k)?;
        let q = Vector2::new(phi.cos(), phi.sin());
        // Position block: q (lᵀΨl) qᵀ / c².
        let scale = total / c2;
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] += q[i] * q[j] * scale;
            }
        }
        let off = kappa_offsets[k];
        for (jj, &v) in cross.iter().enumerate() {
            for i in 0..2 {
                m[(i, off + jj)] += q[i] * v / c2;
                m[(off + jj, i)] = m[(i, off + jj)];
            }
        }
        for i in 0..kk.nrows() {
            for j in 0..kk.ncols() {
                m[(off + i, off + j)] = kk[(i, j)] / c2;
            }
        }
    }
    symmetrize(&mut m);
    Ok(FullFim {
        matrix: m,
        kappa_offsets,
        kappa_dims,
    })
}

/// Full FIM over `(p, κ_1, …, κ_N)` for the full-parameter model.
pub fn full_fim<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<FullFim<S>> {
    validate_scene(topology, channel)?;
    let mut blocks = Vec::with_capacity(topology.anchor_count());
    for (k, paths) in channel.iter().enumerate() {
        let sight = topology.sight(k);
        let psi = psi_block(paths, w, n0)?;
        let psi = psi.matrix;
        let n_eta = psi.nrows();
        let m_k = kappa_dim(sight, paths.path_count());
        let drop = n_eta - m_k; // 1 for LOS (τ₁ is not a κ coordinate), 0 for NLOS
        // lᵀΨ: sum of delay rows.
        let mut row_sum = DVector::<S>::zeros(n_eta);
        for i in 0..n_eta {
            if matches!(eta_coord(i), Coord::Delay(_)) {
                for j in 0..n_eta {
                    row_sum[j] += psi[(i, j)];
                }
            }
        }
        let total = (0..n_eta)
            .filter(|&j| matches!(eta_coord(j), Coord::Delay(_)))
            .fold(S::zero(), |acc, j| acc + row_sum[j]);
        let cross = DVector::from_fn(m_k, |j, _| row_sum[j + drop]);
        let kk = psi.view((drop, drop), (m_k, m_k)).into_owned();
        blocks.push((kk, cross, total));
    }
    assemble_full_fim(topology, blocks)
}

/// Full FIM for the partial-parameter model (amplitudes excluded).
pub fn full_fim_partial<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<FullFim<S>> {
    validate_scene(topology, channel)?;
    let mut blocks = Vec::with_capacity(topology.anchor_count());
    for (k, paths) in channel.iter().enumerate() {
        let sight = topology.sight(k);
        let psi = psi_block_delays_only(paths, w, n0)?;
        let l = psi.nrows();
        let drop = usize::from(sight.is_los());
        let m_k = l - drop;
        let ones = DVector::<S>::repeat(l, S::one());
        let row_sum = &psi * &ones;
        let total = ones.dot(&row_sum);
        let cross = DVector::from_fn(m_k, |j, _| row_sum[j + drop]);
        let kk = psi.view((drop, drop), (m_k, m_k)).into_owned();
        blocks.push((kk, cross, total));
    }
    assemble_full_fim(topology, blocks)
}

/// Wrap a 2×2 position EFIM, rejecting singular geometry.
pub fn position_efim_result<S: RealScalar>(efim: Matrix2<S>) -> Result<EfimResult<S>> {
    let m = DMatrix::from_fn(2, 2, |i, j| efim[(i, j)]);
    let thr = singularity_threshold(&m);
    if min_symmetric_eigenvalue(&m) <= thr {
        return Err(Error::UnlocalizableGeometry {
            efim: [
                [efim[(0, 0)].as_f64(), efim[(0, 1)].as_f64()],
                [efim[(1, 0)].as_f64(), efim[(1, 1)].as_f64()],
            ],
        });
    }
    EfimResult::from_joint(m, None, None)
}

/// Position EFIM and SPEB without a priori knowledge: the RDM-weighted sum
/// over LOS anchors (NLOS anchors contribute nothing).
pub fn efim_position_no_prior<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<EfimResult<S>> {
    validate_scene(topology, channel)?;
    let mut angles = Vec::with_capacity(topology.anchor_count());
    let mut lambdas = Vec::with_capacity(topology.anchor_count());
    for (k, paths) in channel.iter().enumerate() {
        angles.push(topology.angle_to_agent(k)?);
        lambdas.push(rii_no_prior(topology.sight(k), paths, w, n0)?);
    }
    position_efim_result(efim_from_ranging(&angles, &lambdas))
}

/// Closed-form SPEB over LOS anchors (no priors): an independent route to
/// the trace-inverse of the canonical EFIM.
pub fn speb_closed_form<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
) -> Result<S> {
    validate_scene(topology, channel)?;
    let mut terms = Vec::new(); // (phi, (1-chi)*snr)
    for (k, paths) in channel.iter().enumerate() {
        if !topology.sight(k).is_los() {
            continue;
        }
        let chi = path_overlap_coefficient(paths, w)?;
        let snr = w.path_snr(paths.amplitudes()[0], n0)?;
        terms.push((topology.angle_to_agent(k)?, (S::one() - chi) * snr));
    }
    let num = terms.iter().fold(S::zero(), |acc, &(_, s)| acc + s) * S::of(2.0);
    let mut den = S::zero();
    for &(phi_k, s_k) in &terms {
        for &(phi_m, s_m) in &terms {
            let sin = (phi_k - phi_m).sin();
            den += s_k * s_m * sin * sin;
        }
    }
    if den <= S::zero() {
        return Err(Error::UnlocalizableGeometry {
            efim: [[num.as_f64(), 0.0], [0.0, 0.0]],
        });
    }
    let c = light_speed::<S>();
    let beta = w.effective_bandwidth();
    Ok(c * c / (S::of(8.0) * S::pi() * S::pi() * beta * beta) * num / den)
}
