//! Fundamental limits of wideband localization accuracy.
//!
//! This crate computes the squared position error bound (SPEB) and its
//! orientation (SOEB) and clock-offset (STEB) companions from first
//! principles: Fisher information matrices assembled from the transmitted
//! waveform, the network geometry, the multipath channel and any a priori
//! knowledge, reduced with equivalent Fisher information (Schur
//! complements) to the parameters of interest.
//!
//! The numeric core is generic over the scalar type (`f32`/`f64`) via
//! [`RealScalar`]; the `*64` aliases below name the common `f64`
//! instantiation. The [`experiments`] and [`scenario`] layers (Monte
//! Carlo studies, JSON scenarios, CSV output) are `f64`-only.
//!
//! Conventions used throughout:
//!
//! * range biases and the clock offset are carried in meters, angles in
//!   radians, delays in seconds;
//! * ranging information intensities are 1/m², the SPEB is m², the SOEB
//!   rad², the STEB m² (optionally reported as s²);
//! * "infinite Fisher information" (a known parameter) is realized by
//!   eliminating the coordinate, never by a large float.

pub mod array;
pub mod channel;
pub mod clock;
pub mod error;
pub mod experiments;
pub mod fim;
pub mod geometry;
pub mod linalg;
pub mod priors;
pub mod scalar;
pub mod scenario;
pub mod waveform;

pub use error::{Error, Result};
pub use linalg::SingularPolicy;
pub use scalar::{RealScalar, SPEED_OF_LIGHT};

/// `f64` instantiations of the core types.
pub type Waveform64 = waveform::Waveform<f64>;
pub type Topology64 = geometry::NetworkTopology<f64>;
pub type Anchor64 = geometry::Anchor<f64>;
pub type AnchorPaths64 = channel::AnchorPaths<f64>;
pub type Channel64 = channel::MultipathChannel<f64>;
pub type PsiBlock64 = fim::PsiBlock<f64>;
pub type EfimResult64 = fim::EfimResult<f64>;
pub type AnchorPrior64 = priors::AnchorPrior<f64>;
pub type PriorSpec64 = priors::PriorSpec<f64>;
pub type Fisher64 = priors::Fisher<f64>;
pub type ArrayGeometry64 = array::ArrayGeometry<f64>;
