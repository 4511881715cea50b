//! Exhaustive minimum-QoE search on tiny instances.
//!
//! The objective is NP-hard in general, so the oracle enumerates the full
//! solution space and is only usable at desk scale: every node choice per
//! task (sources stay pinned to their owners) crossed with every
//! precedence-respecting dispatch order. Dispatch order matters because it
//! fixes each lane's FCFS queue, so enumerating assignments alone would not
//! be exact for the engine's semantics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{AppDag, AppId, TaskId, TaskKind};
use crate::engine::{evaluate, Assignment, EvalError, Placement};
use crate::net::{NetworkGraph, NodeId};
use crate::qoe::CostParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_total_tasks: usize,
    pub max_nodes: usize,
    /// Cap on tasks sharing one resource type; bounds the worst-case FCFS
    /// queue behind a single lane.
    pub max_lane_width: usize,
    /// Evaluation budget; enumeration aborts beyond it.
    pub max_evaluations: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_total_tasks: 8, max_nodes: 4, max_lane_width: 5, max_evaluations: 10_000_000 }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance outside oracle limits: {0}")]
    LimitExceeded(String),
    #[error("enumeration exceeded the {budget}-evaluation budget")]
    BudgetExceeded { budget: u64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub assignment: Assignment,
    pub avg_qoe: f64,
    pub evaluations: u64,
}

/// Exact minimum average QoE cost over all assignments and dispatch orders.
/// Returns the first minimizer in enumeration order.
pub fn oracle_optimum(
    apps: &[AppDag],
    network: &NetworkGraph,
    params: &CostParams,
    limits: &OracleLimits,
) -> Result<OracleResult, OracleError> {
    let total: usize = apps.iter().map(|a| a.task_count()).sum();
    if total > limits.max_total_tasks {
        return Err(OracleError::LimitExceeded(format!(
            "{total} tasks exceed max_total_tasks = {}",
            limits.max_total_tasks
        )));
    }
    let n = network.node_count();
    if n > limits.max_nodes {
        return Err(OracleError::LimitExceeded(format!(
            "{n} nodes exceed max_nodes = {}",
            limits.max_nodes
        )));
    }
    for kind in TaskKind::ALL {
        let width = apps
            .iter()
            .flat_map(|a| a.tasks.iter())
            .filter(|t| t.kind == kind)
            .count();
        if width > limits.max_lane_width {
            return Err(OracleError::LimitExceeded(format!(
                "{width} {kind:?} tasks exceed max_lane_width = {}",
                limits.max_lane_width
            )));
        }
    }
    if apps.is_empty() {
        return Err(OracleError::Eval(EvalError::NoApps));
    }

    // Tasks free to move, in (app, task) order; sources are pinned.
    let free: Vec<(AppId, TaskId)> = apps
        .iter()
        .enumerate()
        .flat_map(|(a, dag)| (1..dag.task_count()).map(move |t| (a, t)))
        .collect();

    // All precedence-respecting global dispatch orders (computed once; they
    // do not depend on the node choices).
    let orders = topological_interleavings(apps);

    let mut choice = vec![0usize; free.len()];
    let mut node_of: Vec<Vec<NodeId>> = apps
        .iter()
        .map(|dag| {
            let mut v = vec![0; dag.task_count()];
            v[0] = dag.owner;
            v
        })
        .collect();

    let mut evaluations = 0u64;
    let mut best: Option<(f64, Assignment)> = None;
    loop {
        for (slot, &(a, t)) in free.iter().enumerate() {
            node_of[a][t] = choice[slot];
        }
        for order in &orders {
            if evaluations >= limits.max_evaluations {
                return Err(OracleError::BudgetExceeded { budget: limits.max_evaluations });
            }
            let assignment = Assignment {
                placements: order
                    .iter()
                    .map(|&(a, t)| Placement { app: a, task: t, node: node_of[a][t] })
                    .collect(),
            };
            let (_, metrics) = evaluate(&assignment, network, apps, params)?;
            evaluations += 1;
            let qoe = metrics.avg_qoe_cost;
            if best.as_ref().map_or(true, |(b, _)| qoe < *b) {
                best = Some((qoe, assignment));
            }
        }
        // Odometer step over node choices.
        let mut slot = free.len();
        loop {
            if slot == 0 {
                let (avg_qoe, assignment) = best.expect("at least one evaluation");
                return Ok(OracleResult { assignment, avg_qoe, evaluations });
            }
            slot -= 1;
            choice[slot] += 1;
            if choice[slot] < n {
                break;
            }
            choice[slot] = 0;
        }
    }
}

/// Every interleaving of the applications' tasks that respects each DAG's
/// precedence, in lexicographic (app, task) candidate order.
fn topological_interleavings(apps: &[AppDag]) -> Vec<Vec<(AppId, TaskId)>> {
    let total: usize = apps.iter().map(|a| a.task_count()).sum();
    let preds: Vec<Vec<Vec<(TaskId, f64)>>> = apps.iter().map(|a| a.predecessors()).collect();
    let mut indegree: Vec<Vec<usize>> =
        preds.iter().map(|p| p.iter().map(Vec::len).collect()).collect();
    let mut succs: Vec<Vec<Vec<TaskId>>> = apps
        .iter()
        .map(|a| {
            let mut s = vec![Vec::new(); a.task_count()];
            for e in &a.edges {
                s[e.from].push(e.to);
            }
            s
        })
        .collect();
    for s in succs.iter_mut().flatten() {
        s.sort_unstable();
    }

    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(total);
    fn recurse(
        apps: &[AppDag],
        succs: &[Vec<Vec<TaskId>>],
        indegree: &mut [Vec<usize>],
        prefix: &mut Vec<(AppId, TaskId)>,
        total: usize,
        out: &mut Vec<Vec<(AppId, TaskId)>>,
    ) {
        if prefix.len() == total {
            out.push(prefix.clone());
            return;
        }
        for a in 0..apps.len() {
            for t in 0..apps[a].task_count() {
                if indegree[a][t] != usize::MAX && indegree[a][t] == 0 {
                    indegree[a][t] = usize::MAX; // consumed
                    for &s in &succs[a][t] {
                        indegree[a][s] -= 1;
                    }
                    prefix.push((a, t));
                    recurse(apps, succs, indegree, prefix, total, out);
                    prefix.pop();
                    for &s in &succs[a][t] {
                        indegree[a][s] += 1;
                    }
                    indegree[a][t] = 0;
                }
            }
        }
    }
    recurse(apps, &succs, &mut indegree, &mut prefix, total, &mut out);
    out
}
