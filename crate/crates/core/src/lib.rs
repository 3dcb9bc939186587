//! Simulated annealing with Hit-and-Run and barrier path following over
//! convex bodies given by membership oracles, together with exact
//! low-dimensional oracles for checking both.

pub mod annealing;
pub mod bodies;
pub mod boltzmann;
pub mod equivalence;
pub mod error;
pub mod ipm;
pub mod linalg;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod walker;

pub use annealing::{AnnealReport, SamplerConfig, Schedule, ScheduleKind};
pub use bodies::{BodyKind, BodySpec, Chord, ConvexBody, HPolytopeFile};
pub use boltzmann::{BoltzmannParams, MomentSummary};
pub use error::{Error, Result};
pub use ipm::{Barrier, BarrierEval, NewtonState};
pub use path::{PathPoint, PathSource};
pub use walker::ChainState;

/// Version stamped into the first column of every CSV trace.
pub const TRACE_VERSION: u32 = 1;
