//! Iterative problem-driven scenario reduction.
//!
//! Starting from a k-means reduction, each iteration projects every original
//! scenario onto its cost under the incumbent first-stage decision, groups
//! the projected costs into a few weighted atoms, and picks representatives
//! and weights with a MIP so that the reduced objective matches the full one
//! at the incumbent decision. The reduced problem is then re-solved and
//! validated on the full set; the best validated iterate is returned.

mod aggregate;
mod engine;
mod heuristic;
mod partition;

pub use aggregate::{aggregate, tail_count, AggregatedObjectives};
pub use engine::{
    initialize, run, run_from, IpdsrConfig, IpdsrOutcome, IpdsrTimings, Iterate, IterationRecord, IterationTrace,
    STAGNATION_ITERS,
};
pub use heuristic::construct as construct_start;
pub use partition::{accept_point, build_partition_mip, evaluate_choice, solve_partition, PartitionMip, PartitionResult};
