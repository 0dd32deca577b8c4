//! Monte Carlo studies and scenario sweeps with deterministic, seedable
//! replication streams and CSV output.

pub mod rng;
pub mod studies;
pub mod table;

pub use rng::substream;
pub use studies::{
    AveragePocStudy, OffsetAnchorStudy, PathSeparationStudy, RaoStudy, StebUnits,
    TwoPathPriorVariant, UlaReferenceStudy,
};
pub use table::{Cell, ResultTable};
