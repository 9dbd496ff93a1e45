//! Ground-truth evaluation: ARI, the benchmark simulator and the replication
//! harness.

pub mod ari;
pub mod experiment;
pub mod simulate;

pub use ari::{adjusted_rand_index, ConfusionTable};
pub use experiment::{
    replicate_experiment, run_replication, summarize, ExperimentReport, ExperimentSummary, ReplicationRecord, Selected,
};
pub use simulate::{simulate, CovarianceKind, GroupSpec, SimSpec};
