//! Antenna-array localization: joint position/orientation EFIM, the
//! orientation center, SOEB, and the SPEB decomposition across reference
//! points.
//!
//! An array is described by local antenna coordinates, a rigid rotation by
//! the orientation angle, and a reference point; the topology's agent
//! position plays the role of the reference point in the global frame.
//! Far-field mode is an explicit flag that forces `φ_nk = φ_k` and
//! `λ_nk = λ_k` rather than a distance heuristic.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::channel::MultipathChannel;
use crate::error::{Error, Result};
use crate::fim::EfimResult;
use crate::geometry::{unit_direction, NetworkTopology, Sight};
use crate::linalg::{sym_solve, SingularPolicy};
use crate::priors::{Fisher, PositionPrior, PriorSpec};
use crate::scalar::RealScalar;
use crate::waveform::Waveform;

/// Reference point selector in the array frame.
#[derive(Clone, Copy, Debug)]
pub enum ReferencePoint<S: RealScalar> {
    /// Centroid of the antenna coordinates.
    ArrayCenter,
    /// Explicit point in the array frame.
    Local(Vector2<S>),
}

/// Rigid antenna array: local coordinates rotated by the orientation.
#[derive(Clone, Debug)]
pub struct ArrayGeometry<S: RealScalar> {
    local: Vec<Vector2<S>>,
    orientation: S,
    reference_local: Vector2<S>,
}

impl<S: RealScalar> ArrayGeometry<S> {
    pub fn new(
        local: Vec<Vector2<S>>,
        orientation: S,
        reference: ReferencePoint<S>,
    ) -> Result<Self> {
        if local.len() < 2 {
            return Err(Error::DegenerateGeometry(
                "an array needs at least two antennas".into(),
            ));
        }
        let first = local[0];
        if local.iter().all(|p| (p - first).norm() == S::zero()) {
            return Err(Error::DegenerateGeometry(
                "array antennas are all coincident".into(),
            ));
        }
        if local
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(Error::DegenerateGeometry(
                "antenna coordinates must be finite".into(),
            ));
        }
        let reference_local = match reference {
            ReferencePoint::ArrayCenter => {
                let mut c = Vector2::zeros();
                for p in &local {
                    c += p;
                }
                c / S::from_usize(local.len()).unwrap()
            }
            ReferencePoint::Local(v) => v,
        };
        Ok(Self {
            local,
            orientation,
            reference_local,
        })
    }

    /// Uniform linear array along the local x-axis, centered on the origin.
    pub fn uniform_linear(count: usize, spacing: S, orientation: S) -> Result<Self> {
        let n = S::from_usize(count).unwrap();
        let local = (0..count)
            .map(|i| {
                let x = spacing * (S::from_usize(i).unwrap() - (n - S::one()) * S::of(0.5));
                Vector2::new(x, S::zero())
            })
            .collect();
        Self::new(local, orientation, ReferencePoint::ArrayCenter)
    }

    pub fn antenna_count(&self) -> usize {
        self.local.len()
    }

    pub fn orientation(&self) -> S {
        self.orientation
    }

    pub fn reference_local(&self) -> Vector2<S> {
        self.reference_local
    }

    fn rotation(&self) -> Matrix2<S> {
        let (s, c) = (self.orientation.sin(), self.orientation.cos());
        Matrix2::new(c, -s, s, c)
    }

    fn rotation_derivative(&self) -> Matrix2<S> {
        let (s, c) = (self.orientation.sin(), self.orientation.cos());
        Matrix2::new(-s, -c, c, -s)
    }

    /// Offset of antenna `n` from the reference point, in the array frame.
    pub fn local_offset(&self, n: usize) -> Vector2<S> {
        self.local[n] - self.reference_local
    }

    /// Global displacement `(Δx_n, Δy_n)` from the reference point.
    pub fn displacement(&self, n: usize) -> Vector2<S> {
        self.rotation() * self.local_offset(n)
    }

    /// Analytic rotation derivative `(dΔx_n/dφ, dΔy_n/dφ)`.
    pub fn displacement_derivative(&self, n: usize) -> Vector2<S> {
        self.rotation_derivative() * self.local_offset(n)
    }

    /// Global position of antenna `n` for a given reference position.
    pub fn antenna_position(&self, reference: Vector2<S>, n: usize) -> Vector2<S> {
        reference + self.displacement(n)
    }

    /// Centroid of the antennas in the array frame.
    pub fn array_center_local(&self) -> Vector2<S> {
        let mut c = Vector2::zeros();
        for p in &self.local {
            c += p;
        }
        c / S::from_usize(self.local.len()).unwrap()
    }

    /// Same physical array with the reference moved by a global
    /// displacement (antenna positions are unchanged when the global
    /// reference moves accordingly).
    pub fn with_reference_shift(&self, global_shift: Vector2<S>) -> Self {
        let local_shift = self.rotation().transpose() * global_shift;
        Self {
            local: self.local.clone(),
            orientation: self.orientation,
            reference_local: self.reference_local + local_shift,
        }
    }
}

/// Orientation sensitivity `h_nk = dΔx_n/dφ · cos φ_nk + dΔy_n/dφ · sin φ_nk`.
pub fn orientation_sensitivity<S: RealScalar>(
    geometry: &ArrayGeometry<S>,
    n: usize,
    phi_nk: S,
) -> S {
    geometry.displacement_derivative(n).dot(&unit_direction(phi_nk))
}

/// Ranging intensities feeding an array EFIM.
#[derive(Clone, Debug)]
pub enum ArrayRanging<S: RealScalar> {
    /// Far-field: every antenna sees the anchor intensities and bearings
    /// of the reference point.
    FarField { lambdas: Vec<S> },
    /// Near-field: one intensity per (antenna, anchor) pair; bearings are
    /// evaluated at each antenna position.
    PerAntenna { lambdas: Vec<Vec<S>> },
}

impl<S: RealScalar> ArrayRanging<S> {
    pub fn far_field(lambdas: Vec<S>) -> Self {
        ArrayRanging::FarField { lambdas }
    }

    /// Prior-aware intensities from per-antenna channel realizations.
    pub fn from_channels(
        topology: &NetworkTopology<S>,
        geometry: &ArrayGeometry<S>,
        channels: &[MultipathChannel<S>],
        w: &Waveform<S>,
        n0: S,
        priors: &PriorSpec<S>,
    ) -> Result<Self> {
        if channels.len() != geometry.antenna_count() {
            return Err(Error::InconsistentScenario(format!(
                "{} per-antenna channels for {} antennas",
                channels.len(),
                geometry.antenna_count()
            )));
        }
        let sights: Vec<Sight> = topology.anchors().iter().map(|a| a.sight).collect();
        let mut lambdas = Vec::with_capacity(channels.len());
        for ch in channels {
            ch.validate_sights(&sights)?;
            let mut row = Vec::with_capacity(topology.anchor_count());
            for (k, paths) in ch.iter().enumerate() {
                let sight = topology.sight(k);
                let kappa_dim = 2 * paths.path_count() - usize::from(sight.is_los());
                let prior = priors.anchor_prior(k, kappa_dim)?;
                row.push(crate::priors::rii_with_prior(sight, paths, w, n0, &prior)?);
            }
            lambdas.push(row);
        }
        Ok(ArrayRanging::PerAntenna { lambdas })
    }

    fn lambda(&self, n: usize, k: usize) -> S {
        match self {
            ArrayRanging::FarField { lambdas } => lambdas[k],
            ArrayRanging::PerAntenna { lambdas } => lambdas[n][k],
        }
    }

    fn anchor_count(&self) -> usize {
        match self {
            ArrayRanging::FarField { lambdas } => lambdas.len(),
            ArrayRanging::PerAntenna { lambdas } => lambdas.first().map_or(0, Vec::len),
        }
    }

    fn is_far_field(&self) -> bool {
        matches!(self, ArrayRanging::FarField { .. })
    }
}

/// Per-scene sums feeding the array EFIMs.
pub(crate) struct ArraySums<S: RealScalar> {
    /// `Σ λ_nk q_nk q_nkᵀ` (= `Σ_n J_e(p_n)`).
    pub(crate) info: Matrix2<S>,
    /// `q = Σ λ_nk h_nk q_nk`.
    pub(crate) coupling: Vector2<S>,
    /// `Σ λ_nk h_nk²`.
    pub(crate) h_info: S,
    /// `Σ λ_nk h_nk` (clock-offset/orientation coupling).
    pub(crate) h_sum: S,
    /// `q_B = Σ λ_nk q_nk`.
    pub(crate) offset_coupling: Vector2<S>,
    /// `Σ λ_nk`.
    pub(crate) lambda_sum: S,
}

pub(crate) fn array_sums<S: RealScalar>(
    topology: &NetworkTopology<S>,
    geometry: &ArrayGeometry<S>,
    ranging: &ArrayRanging<S>,
) -> Result<ArraySums<S>> {
    if ranging.anchor_count() != topology.anchor_count() {
        return Err(Error::InconsistentScenario(format!(
            "ranging has {} anchors, topology has {}",
            ranging.anchor_count(),
            topology.anchor_count()
        )));
    }
    let mut sums = ArraySums {
        info: Matrix2::zeros(),
        coupling: Vector2::zeros(),
        h_info: S::zero(),
        h_sum: S::zero(),
        offset_coupling: Vector2::zeros(),
        lambda_sum: S::zero(),
    };
    let reference = topology.agent_position();
    for n in 0..geometry.antenna_count() {
        for k in 0..topology.anchor_count() {
            let lambda = ranging.lambda(n, k);
            let phi_nk = if ranging.is_far_field() {
                topology.angle_to_agent(k)?
            } else {
                let pos = geometry.antenna_position(reference, n);
                let d = pos - topology.anchors()[k].position;
                if d.norm() == S::zero() {
                    return Err(Error::DegenerateGeometry(format!(
                        "antenna {n} coincident with anchor {k}"
                    )));
                }
                d.y.atan2(d.x)
            };
            let q = unit_direction(phi_nk);
            let h = orientation_sensitivity(geometry, n, phi_nk);
            sums.info += q * q.transpose() * lambda;
            sums.coupling += q * (lambda * h);
            sums.h_info += lambda * h * h;
            sums.h_sum += lambda * h;
            sums.offset_coupling += q * lambda;
            sums.lambda_sum += lambda;
        }
    }
    Ok(sums)
}

fn soeb_only_result<S: RealScalar>(j_phi: S) -> Result<EfimResult<S>> {
    if !(j_phi > S::zero()) {
        return Err(Error::Numerical(
            "orientation information is not positive".into(),
        ));
    }
    Ok(EfimResult {
        efim: DMatrix::from_element(1, 1, j_phi),
        speb: S::zero(),
        soeb: Some(S::one() / j_phi),
        steb: None,
    })
}

/// Joint position/orientation EFIM of an antenna array.
///
/// Orientation knowledge enters as the Fisher information `xi_phi`
/// (`Infinite` = orientation-aware: the coordinate is eliminated and the
/// position EFIM is the plain sum over antennas).
pub fn array_efim<S: RealScalar>(
    topology: &NetworkTopology<S>,
    geometry: &ArrayGeometry<S>,
    ranging: &ArrayRanging<S>,
    xi_phi: Fisher<S>,
    xi_p: &PositionPrior<S>,
) -> Result<EfimResult<S>> {
    xi_phi.validate_nonnegative("orientation prior")?;
    xi_p.validate()?;
    let sums = array_sums(topology, geometry, ranging)?;
    let (known_position, base) = match xi_p {
        PositionPrior::Fim(m) => (false, sums.info + m),
        PositionPrior::Known => (true, sums.info),
    };
    match xi_phi {
        Fisher::Infinite => {
            if known_position {
                return soeb_only_result(sums.h_info);
            }
            let m = DMatrix::from_fn(2, 2, |i, j| base[(i, j)]);
            let mut res = EfimResult::from_joint(m, None, None)?;
            res.soeb = Some(S::zero());
            Ok(res)
        }
        Fisher::Finite(xi) => {
            let j_phi_raw = sums.h_info + xi;
            if known_position {
                return soeb_only_result(j_phi_raw);
            }
            let mut joint = DMatrix::<S>::zeros(3, 3);
            for i in 0..2 {
                for j in 0..2 {
                    joint[(i, j)] = base[(i, j)];
                }
                joint[(i, 2)] = sums.coupling[i];
                joint[(2, i)] = sums.coupling[i];
            }
            joint[(2, 2)] = j_phi_raw;
            EfimResult::from_joint(joint, Some(2), None)
        }
    }
}

/// The unique reference point where position and orientation information
/// decouple: `p* = p + g` with `ġ = (Σ_n J_e,n)⁻¹ q` and `g` the −90°
/// rotation of `ġ` (constant-offset rotation parameterization).
pub fn orientation_center<S: RealScalar>(
    topology: &NetworkTopology<S>,
    geometry: &ArrayGeometry<S>,
    ranging: &ArrayRanging<S>,
) -> Result<Vector2<S>> {
    let sums = array_sums(topology, geometry, ranging)?;
    let info = DMatrix::from_fn(2, 2, |i, j| sums.info[(i, j)]);
    let rhs = DMatrix::from_column_slice(2, 1, &[sums.coupling[0], sums.coupling[1]]);
    let g_dot = sym_solve(&info, &rhs, SingularPolicy::Reject).map_err(|_| {
        Error::UnlocalizableGeometry {
            efim: [
                [sums.info[(0, 0)].as_f64(), sums.info[(0, 1)].as_f64()],
                [sums.info[(1, 0)].as_f64(), sums.info[(1, 1)].as_f64()],
            ],
        }
    })?;
    let g_dot = Vector2::new(g_dot[(0, 0)], g_dot[(1, 0)]);
    // g(φ) = ‖g‖(cos(φ+φ₀), sin(φ+φ₀)) gives ġ = Rot(90°)·g, so g = Rot(−90°)·ġ.
    let g = Vector2::new(g_dot.y, -g_dot.x);
    let p_star = topology.agent_position() + g;

    // The coupling vector must vanish at the returned point.
    let moved_topology = topology.with_agent(p_star)?;
    let moved_geometry = geometry.with_reference_shift(g);
    let check = array_sums(&moved_topology, &moved_geometry, ranging)?;
    let scale = sums.coupling.norm().max(sums.lambda_sum);
    if check.coupling.norm() > S::of(1e-9) * scale {
        return Err(Error::Numerical(format!(
            "orientation-center fixed point did not converge (residual {:.3e})",
            check.coupling.norm().as_f64()
        )));
    }
    Ok(p_star)
}

/// SPEB at the current reference computed directly and through the
/// orientation-center decomposition `P(p) = P(p*) + ‖p − p*‖²·P(φ)`.
#[derive(Clone, Debug)]
pub struct SpebDecomposition<S: RealScalar> {
    pub direct: S,
    pub decomposed: S,
    pub orientation_center: Vector2<S>,
    pub soeb: S,
}

pub fn speb_decomposition<S: RealScalar>(
    topology: &NetworkTopology<S>,
    geometry: &ArrayGeometry<S>,
    ranging: &ArrayRanging<S>,
    xi_phi: Fisher<S>,
) -> Result<SpebDecomposition<S>> {
    let direct = array_efim(topology, geometry, ranging, xi_phi, &PositionPrior::none())?;
    let p_star = orientation_center(topology, geometry, ranging)?;
    let shift = p_star - topology.agent_position();
    let star_topology = topology.with_agent(p_star)?;
    let star_geometry = geometry.with_reference_shift(shift);
    let at_star = array_efim(&star_topology, &star_geometry, ranging, xi_phi, &PositionPrior::none())?;
    let soeb = direct.soeb.unwrap_or_else(S::zero);
    let decomposed = at_star.speb + shift.norm_squared() * soeb;
    Ok(SpebDecomposition {
        direct: direct.speb,
        decomposed,
        orientation_center: p_star,
        soeb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Sight;
    use nalgebra::vector;

    /// Six anchors on a circle, agent at the center, far-field λ = 10, and
    /// a 4-antenna ULA with 0.5 m spacing.
    fn ula_scene(
        reference_offset: f64,
    ) -> (NetworkTopology<f64>, ArrayGeometry<f64>, ArrayRanging<f64>) {
        let topo = NetworkTopology::ring(vector![0.0, 0.0], 100.0, 6, 0.3, Sight::Los).unwrap();
        let geometry = ArrayGeometry::new(
            vec![
                vector![-0.75, 0.0],
                vector![-0.25, 0.0],
                vector![0.25, 0.0],
                vector![0.75, 0.0],
            ],
            0.0,
            ReferencePoint::Local(vector![reference_offset, 0.0]),
        )
        .unwrap();
        let ranging = ArrayRanging::far_field(vec![10.0; 6]);
        (topo, geometry, ranging)
    }

    #[test]
    fn orientation_sensitivity_examples() {
        let geometry = ArrayGeometry::new(
            vec![vector![2.0, 0.0], vector![0.0, 0.0]],
            0.0,
            ReferencePoint::Local(vector![0.0, 0.0]),
        )
        .unwrap();
        // Antenna at local (r, 0), φ = 0: dΔ/dφ = (0, r).
        assert_eq!(orientation_sensitivity(&geometry, 0, 0.0), 0.0);
        let h = orientation_sensitivity(&geometry, 0, std::f64::consts::FRAC_PI_2);
        assert!((h - 2.0).abs() < 1e-15);
    }

    #[test]
    fn reference_shift_changes_h_by_projected_gdot() {
        let geometry = ArrayGeometry::new(
            vec![vector![1.0, 0.5], vector![-0.3, 0.2]],
            0.7,
            ReferencePoint::ArrayCenter,
        )
        .unwrap();
        let g = vector![0.4, -0.9];
        let shifted = geometry.with_reference_shift(g);
        // ġ for the constant local offset: Rot(90°)·g.
        let g_dot = vector![-g.y, g.x];
        for n in 0..2 {
            for phi in [0.0f64, 1.0, -2.1] {
                let h0 = orientation_sensitivity(&geometry, n, phi);
                let h1 = orientation_sensitivity(&shifted, n, phi);
                let expected = h0 - g_dot.dot(&unit_direction(phi));
                assert!((h1 - expected).abs() < 1e-12, "n={n}, phi={phi}");
            }
        }
    }

    #[test]
    fn orientation_aware_far_field_is_na_times_single() {
        let (topo, geometry, ranging) = ula_scene(0.0);
        let res = array_efim(&topo, &geometry, &ranging, Fisher::Infinite, &PositionPrior::none())
            .unwrap();
        // Σ_k λ R(φ_k) over 6 equispaced anchors = 3λI; times N_a = 4.
        for i in 0..2 {
            assert!((res.efim[(i, i)] - 120.0).abs() < 1e-9);
        }
        assert!(res.efim[(0, 1)].abs() < 1e-9);
        assert!((res.speb - 2.0 / 120.0).abs() < 1e-12);
    }

    #[test]
    fn centered_ula_decouples() {
        let (topo, geometry, ranging) = ula_scene(0.0);
        let res = array_efim(
            &topo,
            &geometry,
            &ranging,
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        )
        .unwrap();
        // q = 0 at the array center: position block equals Σ_n J_e,n.
        assert!(res.efim[(0, 2)].abs() < 1e-9);
        assert!(res.efim[(1, 2)].abs() < 1e-9);
        assert!((res.speb - 2.0 / 120.0).abs() < 1e-12);
        // J(φ) = λ Σ_n u_n² Σ_k sin²(φ_k) = 10 · 1.25 · 3.
        assert!((res.efim[(2, 2)] - 37.5).abs() < 1e-9);
        assert!((res.soeb.unwrap() - 1.0 / 37.5).abs() < 1e-12);
    }

    #[test]
    fn soeb_is_reference_independent() {
        let mut values = Vec::new();
        for offset in [0.0, 0.3, 0.7, 1.0, 2.0] {
            let (topo, geometry, ranging) = ula_scene(offset);
            let res = array_efim(
                &topo,
                &geometry,
                &ranging,
                Fisher::Finite(0.0),
                &PositionPrior::none(),
            )
            .unwrap();
            values.push(res.soeb.unwrap());
        }
        for v in &values[1..] {
            assert!((v - values[0]).abs() < 1e-9 * values[0]);
        }
    }

    #[test]
    fn far_field_orientation_center_is_array_center() {
        let (topo, geometry, ranging) = ula_scene(1.0);
        let p_star = orientation_center(&topo, &geometry, &ranging).unwrap();
        // Reference sits 1 m along the array axis; the center is at −1 m.
        assert!((p_star - vector![-1.0, 0.0]).norm() < 1e-9);
    }

    #[test]
    fn decomposition_matches_direct_speb() {
        let (topo, geometry, ranging) = ula_scene(1.0);
        let d = speb_decomposition(&topo, &geometry, &ranging, Fisher::Finite(0.0)).unwrap();
        assert!(
            (d.direct - d.decomposed).abs() < 1e-9 * d.direct,
            "direct {} vs decomposed {}",
            d.direct,
            d.decomposed
        );
        // Closed form for this scene: SPEB = 1/60 + d²/37.5 at 1 m.
        assert!((d.direct - (1.0 / 60.0 + 1.0 / 37.5)).abs() < 1e-12);
    }

    #[test]
    fn orientation_aware_speb_is_reference_independent() {
        let (t0, g0, r0) = ula_scene(0.0);
        let (t1, g1, r1) = ula_scene(1.6);
        let a = array_efim(&t0, &g0, &r0, Fisher::Infinite, &PositionPrior::none()).unwrap();
        let b = array_efim(&t1, &g1, &r1, Fisher::Infinite, &PositionPrior::none()).unwrap();
        assert!((a.speb - b.speb).abs() < 1e-12);
    }

    #[test]
    fn near_field_orientation_center_fixed_point() {
        // Anchors close to the array: bearings differ per antenna.
        let topo = NetworkTopology::new(
            vector![0.0, 0.0],
            vec![
                crate::geometry::Anchor::los(3.0, 1.0),
                crate::geometry::Anchor::los(-2.0, 2.5),
                crate::geometry::Anchor::los(0.5, -3.0),
            ],
        )
        .unwrap();
        let geometry = ArrayGeometry::new(
            vec![vector![-0.5, 0.1], vector![0.4, -0.2], vector![0.1, 0.6]],
            0.4,
            ReferencePoint::Local(vector![0.3, 0.3]),
        )
        .unwrap();
        let lambdas = vec![
            vec![9.0, 11.0, 10.0],
            vec![10.5, 9.5, 8.0],
            vec![12.0, 10.0, 9.0],
        ];
        let ranging = ArrayRanging::PerAntenna { lambdas };
        // The residual check inside orientation_center is the fixed-point
        // verification; reaching Ok proves q(p*) ≈ 0.
        let p_star = orientation_center(&topo, &geometry, &ranging).unwrap();
        assert!(p_star.norm() < 2.0);
        // SPEB at p* is the minimum over reference points.
        let d = speb_decomposition(&topo, &geometry, &ranging, Fisher::Finite(0.0)).unwrap();
        let shift = p_star - topo.agent_position();
        let star_topo = topo.with_agent(p_star).unwrap();
        let star_geom = geometry.with_reference_shift(shift);
        let at_star = array_efim(
            &star_topo,
            &star_geom,
            &ranging,
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        )
        .unwrap();
        assert!(d.direct >= at_star.speb - 1e-12);
    }
}
