//! Seedable mesh-network simulator and scheduling library for DAG
//! applications with multi-dimensional QoS constraints.
//!
//! A random mesh of compute nodes ([`net::NetworkGraph`]) executes
//! applications modelled as DAGs of typed tasks ([`app::AppDag`]). Each task
//! runs in one of three per-node FCFS lanes (CPU / GPU / I/O); data moving
//! between nodes pays multi-hop transmission time and accumulates bit errors.
//! An application's quality of experience is scored by sigmoid degradation
//! costs over its completion time and end-to-end error rate ([`qoe`]), with
//! large additive penalties for crossing hard thresholds.
//!
//! The crate ships five schedulers that turn a batch of applications into a
//! placement sequence evaluated by [`engine::evaluate`]:
//!
//! * [`hmtsa`] — hierarchical multi-queue scheduler with per-round
//!   application quotas and dynamic priority refresh,
//! * [`baselines`] — `cofe` (event-driven), `daas` (static priorities),
//!   `whole` (one node per application) and `ours1` (collapsed hierarchy),
//! * [`oracle`] — exhaustive search over assignments and dispatch orders on
//!   tiny instances, used as ground truth in tests.
//!
//! [`harness`] drives seeded experiment sweeps and writes the six metrics
//! per run to CSV.

pub mod app;
pub mod baselines;
pub mod engine;
pub mod harness;
pub mod hmtsa;
pub mod net;
pub mod oracle;
pub mod qoe;
pub mod seed;

pub use app::{AppConfig, AppDag, AppId, DagEdge, QosProfile, TaskId, TaskKind, TaskSpec};
pub use baselines::SchedulerKind;
pub use engine::{Assignment, MetricsRecord, Placement, ScheduleState, TaskOutcome};
pub use harness::{ExperimentConfig, Instance, ResultRow};
pub use hmtsa::{SchedulerParams, SchedulerRun};
pub use net::{Capacity, ComputeNode, Link, NetworkConfig, NetworkGraph, NodeId, Route};
pub use oracle::{OracleLimits, OracleResult};
pub use qoe::CostParams;
