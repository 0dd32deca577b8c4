//! Clock-asynchronism analysis: EFIMs and bounds with an unknown time
//! offset shared by all anchors, for single-antenna agents and antenna
//! arrays.
//!
//! The offset is carried in meters end to end; the STEB comes out in m²
//! and is converted to s² (divide by c²) only at the presentation layer.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::array::{array_sums, ArrayGeometry, ArrayRanging};
use crate::channel::MultipathChannel;
use crate::error::{Error, Result};
use crate::fim::{efim_from_ranging, EfimResult};
use crate::geometry::{unit_direction, NetworkTopology, Sight};
use crate::linalg::{sym_solve, SingularPolicy};
use crate::priors::{Fisher, PositionPrior, PriorSpec};
use crate::scalar::RealScalar;
use crate::waveform::Waveform;

/// Joint position/offset EFIM from per-anchor ranging intensities.
///
/// The joint matrix is `[[Σλ_k R(φ_k) + Ξ_p, q_B], [q_Bᵀ, Σλ_k + Ξ_B]]`
/// with `q_B = Σ λ_k q_k`; `Ξ_B = ∞` eliminates the offset, reproducing
/// the offset-free EFIM with a zero STEB.
pub fn efim_with_offset_from_riis<S: RealScalar>(
    angles: &[S],
    lambdas: &[S],
    xi_b: Fisher<S>,
    xi_p: &PositionPrior<S>,
) -> Result<EfimResult<S>> {
    if angles.len() != lambdas.len() {
        return Err(Error::InconsistentScenario(format!(
            "{} angles for {} intensities",
            angles.len(),
            lambdas.len()
        )));
    }
    xi_b.validate_nonnegative("offset prior")?;
    xi_p.validate()?;
    let lambda_sum = lambdas.iter().fold(S::zero(), |acc, &l| acc + l);
    if !(lambda_sum > S::zero()) {
        return Err(Error::DegenerateGeometry(
            "all ranging intensities vanish; nothing to localize with".into(),
        ));
    }
    let xi_p = match xi_p {
        PositionPrior::Fim(m) => *m,
        PositionPrior::Known => {
            return Err(Error::InconsistentPrior(
                "position prior ∞ eliminates the parameter of interest; use a large finite value"
                    .into(),
            ))
        }
    };
    let position = efim_from_ranging(angles, lambdas) + xi_p;
    let mut q_b = Vector2::<S>::zeros();
    for (&phi, &lambda) in angles.iter().zip(lambdas) {
        q_b += unit_direction(phi) * lambda;
    }
    match xi_b {
        Fisher::Infinite => {
            let m = DMatrix::from_fn(2, 2, |i, j| position[(i, j)]);
            let mut res = EfimResult::from_joint(m, None, None)?;
            res.steb = Some(S::zero());
            Ok(res)
        }
        Fisher::Finite(xi) => {
            let mut joint = DMatrix::<S>::zeros(3, 3);
            for i in 0..2 {
                for j in 0..2 {
                    joint[(i, j)] = position[(i, j)];
                }
                joint[(i, 2)] = q_b[i];
                joint[(2, i)] = q_b[i];
            }
            joint[(2, 2)] = lambda_sum + xi;
            EfimResult::from_joint(joint, None, Some(2))
        }
    }
}

/// Position/offset EFIM from channel realizations: intensities are the
/// prior-aware RIIs (LOS anchors are the known-first-bias limit of the
/// NLOS branch).
pub fn efim_with_offset<S: RealScalar>(
    topology: &NetworkTopology<S>,
    channel: &MultipathChannel<S>,
    w: &Waveform<S>,
    n0: S,
    priors: &PriorSpec<S>,
) -> Result<EfimResult<S>> {
    let sights: Vec<Sight> = topology.anchors().iter().map(|a| a.sight).collect();
    channel.validate_sights(&sights)?;
    let mut angles = Vec::with_capacity(topology.anchor_count());
    let mut lambdas = Vec::with_capacity(topology.anchor_count());
    for (k, paths) in channel.iter().enumerate() {
        let sight = topology.sight(k);
        let kappa_dim = 2 * paths.path_count() - usize::from(sight.is_los());
        let prior = priors.anchor_prior(k, kappa_dim)?;
        angles.push(topology.angle_to_agent(k)?);
        lambdas.push(crate::priors::rii_with_prior(sight, paths, w, n0, &prior)?);
    }
    efim_with_offset_from_riis(&angles, &lambdas, priors.offset, &priors.position)
}

/// Joint position/orientation/offset EFIM for an antenna array.
///
/// Assembles the 4×4 matrix over `(p, φ, B)` and eliminates coordinates
/// with infinite prior information; the returned [`EfimResult`] carries
/// the SPEB, SOEB and STEB of whatever remains.
pub fn array_efim_with_offset<S: RealScalar>(
    topology: &NetworkTopology<S>,
    geometry: &ArrayGeometry<S>,
    ranging: &ArrayRanging<S>,
    xi_phi: Fisher<S>,
    xi_b: Fisher<S>,
    xi_p: &PositionPrior<S>,
) -> Result<EfimResult<S>> {
    xi_phi.validate_nonnegative("orientation prior")?;
    xi_b.validate_nonnegative("offset prior")?;
    xi_p.validate()?;
    let sums = array_sums(topology, geometry, ranging)?;
    if !(sums.lambda_sum > S::zero()) {
        return Err(Error::DegenerateGeometry(
            "all ranging intensities vanish; nothing to localize with".into(),
        ));
    }
    let position = match xi_p {
        PositionPrior::Fim(m) => sums.info + m,
        PositionPrior::Known => {
            return Err(Error::InconsistentPrior(
                "position prior ∞ eliminates the parameter of interest; use a large finite value"
                    .into(),
            ))
        }
    };
    let keep_phi = xi_phi.finite_value();
    let keep_b = xi_b.finite_value();
    let dim = 2 + usize::from(keep_phi.is_some()) + usize::from(keep_b.is_some());
    let mut joint = DMatrix::<S>::zeros(dim, dim);
    for i in 0..2 {
        for j in 0..2 {
            joint[(i, j)] = position[(i, j)];
        }
    }
    let mut cursor = 2;
    let mut orientation_index = None;
    let mut offset_index = None;
    if let Some(xi) = keep_phi {
        orientation_index = Some(cursor);
        for i in 0..2 {
            joint[(i, cursor)] = sums.coupling[i];
            joint[(cursor, i)] = sums.coupling[i];
        }
        joint[(cursor, cursor)] = sums.h_info + xi;
        cursor += 1;
    }
    if let Some(xi) = keep_b {
        offset_index = Some(cursor);
        for i in 0..2 {
            joint[(i, cursor)] = sums.offset_coupling[i];
            joint[(cursor, i)] = sums.offset_coupling[i];
        }
        if let Some(phi_idx) = orientation_index {
            joint[(phi_idx, cursor)] = sums.h_sum;
            joint[(cursor, phi_idx)] = sums.h_sum;
        }
        joint[(cursor, cursor)] = sums.lambda_sum + xi;
    }
    let mut res = EfimResult::from_joint(joint, orientation_index, offset_index)?;
    if keep_phi.is_none() {
        res.soeb = Some(S::zero());
    }
    if keep_b.is_none() {
        res.steb = Some(S::zero());
    }
    Ok(res)
}

/// Far-field closed forms for the array-with-offset EFIMs at the array
/// center (cross-check path): position EFIM, orientation EFI, offset EFI.
pub fn array_offset_far_field_forms<S: RealScalar>(
    topology: &NetworkTopology<S>,
    geometry: &ArrayGeometry<S>,
    lambdas: &[S],
    xi_phi: Fisher<S>,
    xi_b: Fisher<S>,
    xi_p: &Matrix2<S>,
) -> Result<(Matrix2<S>, S, S)> {
    if lambdas.len() != topology.anchor_count() {
        return Err(Error::InconsistentScenario(format!(
            "{} intensities for {} anchors",
            lambdas.len(),
            topology.anchor_count()
        )));
    }
    let angles = topology.angles()?;
    let n_a = S::from_usize(geometry.antenna_count()).unwrap();
    let lambda_sum = lambdas.iter().fold(S::zero(), |acc, &l| acc + l);
    let base = efim_from_ranging(&angles, lambdas) * n_a + xi_p;
    let mut q_b = Vector2::<S>::zeros();
    for (&phi, &lambda) in angles.iter().zip(lambdas) {
        q_b += unit_direction(phi) * lambda;
    }
    q_b *= n_a;

    let mut h_info = S::zero();
    for n in 0..geometry.antenna_count() {
        for (k, &lambda) in lambdas.iter().enumerate() {
            let h = crate::array::orientation_sensitivity(geometry, n, angles[k]);
            h_info += lambda * h * h;
        }
    }
    let j_phi = h_info + xi_phi.finite_value().unwrap_or(S::zero());

    let j_pos = match xi_b {
        Fisher::Infinite => base,
        Fisher::Finite(xi) => base - q_b * q_b.transpose() / (n_a * lambda_sum + xi),
    };
    let j_b = match xi_b {
        Fisher::Infinite => S::zero(), // eliminated; STEB is zero
        Fisher::Finite(xi) => {
            let m = DMatrix::from_fn(2, 2, |i, j| base[(i, j)]);
            let rhs = DMatrix::from_column_slice(2, 1, &[q_b[0], q_b[1]]);
            let solved = sym_solve(&m, &rhs, SingularPolicy::Reject)?;
            n_a * lambda_sum + xi - (q_b[0] * solved[(0, 0)] + q_b[1] * solved[(1, 0)])
        }
    };
    Ok((j_pos, j_phi, j_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ReferencePoint;
    use crate::geometry::Anchor;
    use nalgebra::vector;

    fn ring_angles(phi1: f64) -> Vec<f64> {
        vec![
            phi1,
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::PI,
            1.5 * std::f64::consts::PI,
        ]
    }

    #[test]
    fn symmetric_ring_is_offset_independent() {
        let angles = ring_angles(0.0);
        let lambdas = vec![10.0; 4];
        for xi_b in [
            Fisher::Finite(0.0),
            Fisher::Finite(10.0),
            Fisher::Finite(100.0),
            Fisher::Infinite,
        ] {
            let res =
                efim_with_offset_from_riis(&angles, &lambdas, xi_b, &PositionPrior::none())
                    .unwrap();
            assert!(
                (res.speb - 0.1).abs() < 1e-12,
                "SPEB {} for {xi_b:?}",
                res.speb
            );
        }
    }

    #[test]
    fn asymmetric_ring_hand_values() {
        // Anchors at π/2, π, π, 3π/2 with λ = 10 and Ξ_B = 0:
        // EFIM = diag(10, 20), SPEB = 0.15, J_e(B) = 20.
        let angles = ring_angles(std::f64::consts::PI);
        let lambdas = vec![10.0; 4];
        let res = efim_with_offset_from_riis(
            &angles,
            &lambdas,
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        )
        .unwrap();
        let pos = res.position_efim().unwrap();
        assert!((pos[(0, 0)] - 10.0).abs() < 1e-9);
        assert!((pos[(1, 1)] - 20.0).abs() < 1e-9);
        assert!(pos[(0, 1)].abs() < 1e-9);
        assert!((res.speb - 0.15).abs() < 1e-12);
        let steb = res.steb.unwrap();
        assert!((steb - 1.0 / 20.0).abs() < 1e-12, "STEB {steb}");
    }

    #[test]
    fn known_offset_equals_no_offset() {
        let angles: Vec<f64> = vec![0.2, 1.4, 2.9, 4.4];
        let lambdas = vec![3.0, 7.0, 5.0, 2.0];
        let with = efim_with_offset_from_riis(
            &angles,
            &lambdas,
            Fisher::Infinite,
            &PositionPrior::none(),
        )
        .unwrap();
        let baseline = crate::fim::position_efim_result(efim_from_ranging(&angles, &lambdas))
            .unwrap();
        assert!((with.speb - baseline.speb).abs() < 1e-15);
        assert_eq!(with.steb, Some(0.0));
    }

    #[test]
    fn offset_uncertainty_never_helps() {
        let angles: Vec<f64> = vec![0.3, 1.1, 2.0, 3.7, 5.1];
        let lambdas = vec![4.0, 9.0, 2.5, 7.0, 5.5];
        let with = efim_with_offset_from_riis(
            &angles,
            &lambdas,
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        )
        .unwrap();
        let without = efim_from_ranging(&angles, &lambdas);
        let diff = DMatrix::<f64>::from_fn(2, 2, |i, j| {
            without[(i, j)] - with.position_efim().unwrap()[(i, j)]
        });
        assert!(crate::linalg::min_symmetric_eigenvalue(&diff) > -1e-12);
    }

    #[test]
    fn all_zero_intensities_are_degenerate() {
        let err = efim_with_offset_from_riis::<f64>(
            &[0.0, 1.0],
            &[0.0, 0.0],
            Fisher::Finite(1.0),
            &PositionPrior::none(),
        );
        assert!(matches!(err, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn collinear_offset_scene_is_unlocalizable() {
        let err = efim_with_offset_from_riis::<f64>(
            &[0.0, std::f64::consts::PI],
            &[5.0, 5.0],
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        );
        assert!(matches!(err, Err(Error::UnlocalizableGeometry { .. })));
    }

    fn far_field_scene() -> (NetworkTopology<f64>, ArrayGeometry<f64>, Vec<f64>) {
        let topo = NetworkTopology::ring(vector![0.0, 0.0], 100.0, 6, 0.0, crate::geometry::Sight::Los)
            .unwrap();
        let geometry = ArrayGeometry::uniform_linear(4, 0.5, 0.0).unwrap();
        (topo, geometry, vec![10.0; 6])
    }

    #[test]
    fn symmetric_far_field_offset_costs_nothing() {
        let (topo, geometry, lambdas) = far_field_scene();
        let ranging = ArrayRanging::far_field(lambdas.clone());
        let with_offset = array_efim_with_offset(
            &topo,
            &geometry,
            &ranging,
            Fisher::Finite(0.0),
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        )
        .unwrap();
        let without = crate::array::array_efim(
            &topo,
            &geometry,
            &ranging,
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        )
        .unwrap();
        // Six equispaced anchors: q̄_B = 0, so the offset is free.
        assert!((with_offset.speb - without.speb).abs() < 1e-10);
    }

    #[test]
    fn four_by_four_matches_far_field_forms() {
        let (topo, geometry, lambdas) = far_field_scene();
        let ranging = ArrayRanging::far_field(lambdas.clone());
        let xi_phi = Fisher::Finite(7.0);
        let xi_b = Fisher::Finite(3.0);
        let res = array_efim_with_offset(
            &topo,
            &geometry,
            &ranging,
            xi_phi,
            xi_b,
            &PositionPrior::none(),
        )
        .unwrap();
        let (j_pos, j_phi, j_b) = array_offset_far_field_forms(
            &topo,
            &geometry,
            &lambdas,
            xi_phi,
            xi_b,
            &Matrix2::zeros(),
        )
        .unwrap();
        let reduced = res.position_efim().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (reduced[(i, j)] - j_pos[(i, j)]).abs() < 1e-9,
                    "position ({i},{j})"
                );
            }
        }
        assert!((1.0 / res.soeb.unwrap() - j_phi).abs() < 1e-9);
        assert!((1.0 / res.steb.unwrap() - j_b).abs() < 1e-9);
    }

    #[test]
    fn known_offset_reduces_to_array_efim() {
        let topo = NetworkTopology::new(
            vector![0.0, 0.0],
            vec![
                Anchor::los(40.0, 10.0),
                Anchor::los(-25.0, 30.0),
                Anchor::los(5.0, -45.0),
            ],
        )
        .unwrap();
        let geometry = ArrayGeometry::new(
            vec![vector![-0.4, 0.1], vector![0.5, -0.3]],
            0.9,
            ReferencePoint::Local(vector![0.2, 0.0]),
        )
        .unwrap();
        let ranging = ArrayRanging::<f64>::PerAntenna {
            lambdas: vec![vec![8.0, 12.0, 9.0], vec![10.0, 11.0, 7.5]],
        };
        let with = array_efim_with_offset(
            &topo,
            &geometry,
            &ranging,
            Fisher::Finite(2.0),
            Fisher::Infinite,
            &PositionPrior::none(),
        )
        .unwrap();
        let plain = crate::array::array_efim(
            &topo,
            &geometry,
            &ranging,
            Fisher::Finite(2.0),
            &PositionPrior::none(),
        )
        .unwrap();
        assert!((with.speb - plain.speb).abs() < 1e-14);
        assert!((with.soeb.unwrap() - plain.soeb.unwrap()).abs() < 1e-14);
        assert_eq!(with.steb, Some(0.0));
    }
}
