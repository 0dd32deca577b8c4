//! Network topology: agent, anchors, bearings and the ranging direction
//! matrix.
//!
//! Angles follow `atan2` with range `(−π, π]`; anchors keep their input
//! order and may mix LOS and NLOS freely.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::RealScalar;

/// Whether the first arriving path from an anchor is blocked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sight {
    Los,
    Nlos,
}

impl Sight {
    pub fn is_los(self) -> bool {
        matches!(self, Sight::Los)
    }
}

/// A reference node with known position.
#[derive(Clone, Debug)]
pub struct Anchor<S: RealScalar> {
    pub position: Vector2<S>,
    pub sight: Sight,
}

impl<S: RealScalar> Anchor<S> {
    pub fn new(x: S, y: S, sight: Sight) -> Self {
        Self {
            position: Vector2::new(x, y),
            sight,
        }
    }

    pub fn los(x: S, y: S) -> Self {
        Self::new(x, y, Sight::Los)
    }

    pub fn nlos(x: S, y: S) -> Self {
        Self::new(x, y, Sight::Nlos)
    }
}

/// Agent position plus the ordered anchor list.
#[derive(Clone, Debug)]
pub struct NetworkTopology<S: RealScalar> {
    agent: Vector2<S>,
    anchors: Vec<Anchor<S>>,
}

impl<S: RealScalar> NetworkTopology<S> {
    pub fn new(agent: Vector2<S>, anchors: Vec<Anchor<S>>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::DegenerateGeometry("no anchors configured".into()));
        }
        if !agent.x.is_finite() || !agent.y.is_finite() {
            return Err(Error::DegenerateGeometry("agent position not finite".into()));
        }
        for (k, a) in anchors.iter().enumerate() {
            if !a.position.x.is_finite() || !a.position.y.is_finite() {
                return Err(Error::DegenerateGeometry(format!(
                    "anchor {k} position not finite"
                )));
            }
            if (a.position - agent).norm() == S::zero() {
                return Err(Error::DegenerateGeometry(format!(
                    "anchor {k} coincident with the agent"
                )));
            }
        }
        Ok(Self { agent, anchors })
    }

    /// Convenience builder: `n` anchors equally spaced on a circle around
    /// the agent, first at angle `phi0`, all with the given sight.
    pub fn ring(agent: Vector2<S>, radius: S, n: usize, phi0: S, sight: Sight) -> Result<Self> {
        let mut anchors = Vec::with_capacity(n);
        for k in 0..n {
            let phi = phi0 + S::two_pi() * S::from_usize(k).unwrap() / S::from_usize(n).unwrap();
            // Anchor placed so the anchor→agent bearing equals phi.
            let pos = agent - Vector2::new(phi.cos(), phi.sin()) * radius;
            anchors.push(Anchor::new(pos.x, pos.y, sight));
        }
        Self::new(agent, anchors)
    }

    pub fn agent_position(&self) -> Vector2<S> {
        self.agent
    }

    pub fn anchors(&self) -> &[Anchor<S>] {
        &self.anchors
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn sight(&self, k: usize) -> Sight {
        self.anchors[k].sight
    }

    fn checked(&self, k: usize) -> Result<&Anchor<S>> {
        self.anchors.get(k).ok_or_else(|| {
            Error::InconsistentScenario(format!(
                "anchor index {k} out of range ({} anchors)",
                self.anchors.len()
            ))
        })
    }

    /// Angle `φ_k` from anchor `k` to the agent, in `(−π, π]`.
    pub fn angle_to_agent(&self, k: usize) -> Result<S> {
        let a = self.checked(k)?;
        let d = self.agent - a.position;
        if d.norm() == S::zero() {
            return Err(Error::DegenerateGeometry(format!(
                "anchor {k} coincident with the agent"
            )));
        }
        Ok(d.y.atan2(d.x))
    }

    /// Euclidean distance `d_k = ‖p − p_k‖`, strictly positive.
    pub fn distance(&self, k: usize) -> Result<S> {
        let a = self.checked(k)?;
        let d = (self.agent - a.position).norm();
        if d == S::zero() {
            return Err(Error::DegenerateGeometry(format!(
                "anchor {k} coincident with the agent"
            )));
        }
        Ok(d)
    }

    /// All anchor→agent bearings in anchor order.
    pub fn angles(&self) -> Result<Vec<S>> {
        (0..self.anchors.len()).map(|k| self.angle_to_agent(k)).collect()
    }

    /// Same topology evaluated from a different agent position (used for
    /// the expected-position form of the position-prior EFIM).
    pub fn with_agent(&self, agent: Vector2<S>) -> Result<Self> {
        Self::new(agent, self.anchors.clone())
    }
}

/// Unit vector `q(φ) = (cos φ, sin φ)ᵀ`.
pub fn unit_direction<S: RealScalar>(phi: S) -> Vector2<S> {
    Vector2::new(phi.cos(), phi.sin())
}

/// Ranging direction matrix `R(φ) = q(φ) q(φ)ᵀ`: the rank-one projector
/// along the anchor→agent direction.
pub fn ranging_direction_matrix<S: RealScalar>(phi: S) -> Matrix2<S> {
    let q = unit_direction(phi);
    q * q.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::vector;

    fn topo(agent: (f64, f64), anchor: (f64, f64)) -> NetworkTopology<f64> {
        NetworkTopology::new(
            vector![agent.0, agent.1],
            vec![Anchor::los(anchor.0, anchor.1)],
        )
        .unwrap()
    }

    #[test]
    fn angle_examples() {
        assert_eq!(topo((1.0, 0.0), (0.0, 0.0)).angle_to_agent(0).unwrap(), 0.0);
        assert!(
            (topo((0.0, 1.0), (0.0, 0.0)).angle_to_agent(0).unwrap()
                - std::f64::consts::FRAC_PI_2)
                .abs()
                < 1e-15
        );
        assert!(
            (topo((-1.0, -1.0), (0.0, 0.0)).angle_to_agent(0).unwrap()
                + 3.0 * std::f64::consts::FRAC_PI_4)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn distance_examples() {
        assert_eq!(topo((3.0, 4.0), (0.0, 0.0)).distance(0).unwrap(), 5.0);
        let r = 7.3;
        let phi = 1.1f64;
        let t = topo((10.0 + r * phi.cos(), -2.0 + r * phi.sin()), (10.0, -2.0));
        assert!((t.distance(0).unwrap() - r).abs() < 1e-12);
        // translation invariance
        let t2 = topo((13.0 + r * phi.cos(), 1.0 + r * phi.sin()), (13.0, 1.0));
        assert!((t.distance(0).unwrap() - t2.distance(0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn coincident_anchor_is_rejected() {
        let err = NetworkTopology::new(vector![1.0, 2.0], vec![Anchor::los(1.0, 2.0)]);
        match err {
            Err(Error::DegenerateGeometry(msg)) => assert!(msg.contains("anchor 0")),
            other => panic!("expected degenerate geometry, got {other:?}"),
        }
    }

    #[test]
    fn rdm_examples() {
        let r0 = ranging_direction_matrix(0.0f64);
        assert_eq!(r0, Matrix2::new(1.0, 0.0, 0.0, 0.0));
        let rq = ranging_direction_matrix(std::f64::consts::FRAC_PI_4);
        for v in [rq[(0, 0)], rq[(0, 1)], rq[(1, 0)], rq[(1, 1)]] {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let rh = ranging_direction_matrix(std::f64::consts::FRAC_PI_2);
        assert!(rh[(0, 0)].abs() < 1e-30);
        assert!((rh[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn angle_distance_consistency() {
        let t = topo((4.2, -3.3), (-1.0, 2.5));
        let phi = t.angle_to_agent(0).unwrap();
        let d = t.distance(0).unwrap();
        let rebuilt = vector![-1.0, 2.5] + unit_direction(phi) * d;
        assert!((rebuilt - vector![4.2, -3.3]).norm() < 1e-12);
    }

    #[test]
    fn ring_builder_places_bearings() {
        let t = NetworkTopology::<f64>::ring(vector![0.0, 0.0], 10.0, 4, 0.0, Sight::Los).unwrap();
        let angles = t.angles().unwrap();
        assert!((angles[0] - 0.0).abs() < 1e-12);
        assert!((angles[1] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        for k in 0..4 {
            assert!((t.distance(k).unwrap() - 10.0).abs() < 1e-12);
        }
    }
}
