//! Self-organizing maps with lattice and data-driven graph topologies.
//!
//! Training runs in batch mode over in-memory or sharded data, optionally across
//! several worker threads whose per-iteration sums are reduced deterministically.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod parallel;
pub mod partition;
pub mod sampling;
pub mod topology;
pub mod trainer;
pub mod tune;

mod io_util;

pub use crate::dataset::{DataMatrix, DataSource, ShardSet};
pub use crate::error::{Result, SomError};
pub use crate::sampling::{Sampler, SamplingConfig, SamplingMode};
pub use crate::topology::TopologyKind;
pub use crate::trainer::{train, SomConfig, SomModel};

/// Stream ids for the per-purpose generators derived from one run seed.
pub mod rng_streams {
    pub const INIT: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const TUNE: u64 = 3;
}
