//! Finite-volume Gibbs specifications for spatial random permutations over a
//! Poisson-disordered lattice, with exact enumeration and a loss-network
//! perfect sampler.

pub mod cyclegas;
pub mod diagnostics;
pub mod environment;
pub mod error;
pub mod exactgibbs;
pub mod fixtures;
pub mod lossnet;
pub mod potential;
pub mod regime;
pub mod verify;

pub use error::{Error, Result};

pub use cyclegas::{Cycle, CycleSpace, GasConfig, OrderedSupport, Permutation};
pub use environment::{Environment, IntBox, PointId, Site};
pub use exactgibbs::{BoundarySpec, SpecTable};
pub use lossnet::{MarkSet, PerfectSampler};
pub use potential::Potential;
pub use regime::{RegimeOptions, RegimeReport};
