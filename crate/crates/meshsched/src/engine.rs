//! Evaluates a placement sequence into start/finish times and error rates
//! under per-node per-type FCFS lanes, and scores the six experiment metrics.
//!
//! Each node runs three independent lanes, one per resource type. Lanes are
//! blocking FCFS in dispatch order: a queued task whose input data is still
//! in flight holds the lane, so the next task in the lane cannot start
//! before it finishes. Error rates propagate multiplicatively from
//! predecessors through the per-route bit error rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{AppDag, AppId, TaskId};
use crate::net::{NetworkGraph, NodeId};
use crate::qoe::{accuracy_cost, latency_cost, qoe_cost, CostParams};

/// One FCFS lane per resource type on every node.
pub const LANES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub app: AppId,
    pub task: TaskId,
    pub node: NodeId,
}

/// Ordered placement sequence; the order is the dispatch order and fixes
/// each lane's FCFS queue.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub placements: Vec<Placement>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskOutcome {
    pub node: NodeId,
    pub start: f64,
    pub finish: f64,
    /// End-to-end data error rate after this task.
    pub error: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlaceError {
    #[error("app {app} task {task}: predecessor {pred} not placed yet")]
    PredecessorUnplaced { app: AppId, task: TaskId, pred: TaskId },
    #[error("app {app}: source task must run on owner node {owner}, got node {node}")]
    OwnerViolation { app: AppId, owner: NodeId, node: NodeId },
    #[error("app {app} task {task} placed twice")]
    DuplicatePlacement { app: AppId, task: TaskId },
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("app {0} does not exist")]
    UnknownApp(AppId),
    #[error("app {app} has no task {task}")]
    UnknownTask { app: AppId, task: TaskId },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid assignment: {0}")]
    Invalid(#[from] PlaceError),
    #[error("app {app} task {task} missing from the assignment")]
    MissingTask { app: AppId, task: TaskId },
    #[error("no applications to evaluate")]
    NoApps,
}

/// Mutable simulation state while a schedule is being built. One evaluation
/// owns its state exclusively; the network and apps stay shared read-only.
#[derive(Debug, Clone)]
pub struct ScheduleState<'a> {
    network: &'a NetworkGraph,
    apps: &'a [AppDag],
    preds: Vec<Vec<Vec<(TaskId, f64)>>>,
    /// `lanes[node][lane]` = time the lane becomes free.
    lanes: Vec<[f64; LANES]>,
    lane_queues: Vec<[Vec<(AppId, TaskId)>; LANES]>,
    outcomes: Vec<Vec<Option<TaskOutcome>>>,
    placed: usize,
}

impl<'a> ScheduleState<'a> {
    pub fn new(network: &'a NetworkGraph, apps: &'a [AppDag]) -> Self {
        Self {
            network,
            apps,
            preds: apps.iter().map(|a| a.predecessors()).collect(),
            lanes: vec![[0.0; LANES]; network.node_count()],
            lane_queues: vec![Default::default(); network.node_count()],
            outcomes: apps.iter().map(|a| vec![None; a.task_count()]).collect(),
            placed: 0,
        }
    }

    pub fn network(&self) -> &NetworkGraph {
        self.network
    }

    pub fn apps(&self) -> &[AppDag] {
        self.apps
    }

    pub fn outcome(&self, app: AppId, task: TaskId) -> Option<&TaskOutcome> {
        self.outcomes.get(app)?.get(task)?.as_ref()
    }

    pub fn is_placed(&self, app: AppId, task: TaskId) -> bool {
        self.outcome(app, task).is_some()
    }

    pub fn all_placed(&self) -> bool {
        self.placed == self.apps.iter().map(|a| a.task_count()).sum::<usize>()
    }

    /// Sum of the node's lane-free times; a coarse load measure.
    pub fn lane_backlog(&self, node: NodeId) -> f64 {
        self.lanes[node].iter().sum()
    }

    pub fn lane_queue(&self, node: NodeId, lane: usize) -> &[(AppId, TaskId)] {
        &self.lane_queues[node][lane]
    }

    /// Hypothetical outcome of placing a task on `node`, without mutating
    /// any state. Identical arithmetic to [`ScheduleState::place`].
    pub fn candidate(&self, app: AppId, task: TaskId, node: NodeId) -> Result<TaskOutcome, PlaceError> {
        let dag = self.apps.get(app).ok_or(PlaceError::UnknownApp(app))?;
        let spec = dag.tasks.get(task).ok_or(PlaceError::UnknownTask { app, task })?;
        if node >= self.network.node_count() {
            return Err(PlaceError::UnknownNode(node));
        }
        if task == 0 && node != dag.owner {
            return Err(PlaceError::OwnerViolation { app, owner: dag.owner, node });
        }
        if self.outcomes[app][task].is_some() {
            return Err(PlaceError::DuplicatePlacement { app, task });
        }

        let mut ready = 0.0f64;
        let mut survival = 1.0f64;
        for &(pred, mb) in &self.preds[app][task] {
            let upstream = self.outcomes[app][pred]
                .as_ref()
                .ok_or(PlaceError::PredecessorUnplaced { app, task, pred })?;
            let route = self.network.route(upstream.node, node);
            ready = ready.max(upstream.finish + self.network.transmission_time(route, mb));
            survival *= (1.0 - upstream.error) * (1.0 - self.network.path_ber(route));
        }
        let exec = spec.exec_time(&self.network.nodes[node].capacity);
        let start = self.lanes[node][spec.kind.lane()].max(ready);
        Ok(TaskOutcome { node, start, finish: start + exec, error: 1.0 - survival })
    }

    /// Place a task: compute its outcome and commit it to the node's lane.
    pub fn place(&mut self, app: AppId, task: TaskId, node: NodeId) -> Result<TaskOutcome, PlaceError> {
        let outcome = self.candidate(app, task, node)?;
        let lane = self.apps[app].tasks[task].kind.lane();
        self.lanes[node][lane] = outcome.finish;
        self.lane_queues[node][lane].push((app, task));
        self.outcomes[app][task] = Some(outcome);
        self.placed += 1;
        Ok(outcome)
    }
}

/// Per-application result at its sink task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppOutcome {
    pub app: AppId,
    pub completion_s: f64,
    pub error: f64,
    pub latency_cost: f64,
    pub accuracy_cost: f64,
    pub qoe_cost: f64,
}

/// The six experiment metrics, averaged over applications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub avg_completion_s: f64,
    /// Fraction of hard-deadline apps finishing on time (1.0 when none).
    pub deadline_ratio: f64,
    /// Fraction of hard-accuracy apps within their error limit (1.0 when none).
    pub accuracy_ratio: f64,
    pub avg_latency_cost: f64,
    pub avg_accuracy_cost: f64,
    pub avg_qoe_cost: f64,
}

/// Apply every placement of `assignment` in sequence order and return the
/// final state. Fails if the assignment violates exactly-once, precedence,
/// or owner pinning.
pub fn replay<'a>(
    assignment: &Assignment,
    network: &'a NetworkGraph,
    apps: &'a [AppDag],
) -> Result<ScheduleState<'a>, EvalError> {
    let mut state = ScheduleState::new(network, apps);
    for p in &assignment.placements {
        state.place(p.app, p.task, p.node)?;
    }
    for (app, dag) in apps.iter().enumerate() {
        for task in 0..dag.task_count() {
            if !state.is_placed(app, task) {
                return Err(EvalError::MissingTask { app, task });
            }
        }
    }
    Ok(state)
}

/// Rewrite a planned assignment into execution order while keeping every
/// task's node binding: repeatedly dispatch the released task that can
/// start earliest (ties resolve by app, then topological position).
///
/// Lanes serve strictly in dispatch order, so a sequence in planning order
/// can hold a lane idle for a task whose inputs are still in flight while
/// ready work queues behind it. Dispatching in earliest-start order yields
/// the schedule the bound nodes would produce when serving tasks as their
/// data arrives, which is how a controller hands a finished plan to the
/// network.
pub fn order_by_execution(
    assignment: &Assignment,
    network: &NetworkGraph,
    apps: &[AppDag],
) -> Result<Assignment, EvalError> {
    let mut binding: Vec<Vec<Option<NodeId>>> =
        apps.iter().map(|a| vec![None; a.task_count()]).collect();
    for p in &assignment.placements {
        if p.app >= apps.len() || p.task >= apps[p.app].task_count() {
            return Err(EvalError::Invalid(PlaceError::UnknownTask { app: p.app, task: p.task }));
        }
        if binding[p.app][p.task].replace(p.node).is_some() {
            return Err(EvalError::Invalid(PlaceError::DuplicatePlacement {
                app: p.app,
                task: p.task,
            }));
        }
    }
    let topo_pos: Vec<Vec<usize>> = apps
        .iter()
        .map(|dag| {
            let order = crate::app::topological_order(dag).expect("valid dag");
            let mut pos = vec![0usize; dag.task_count()];
            for (i, &t) in order.iter().enumerate() {
                pos[t] = i;
            }
            pos
        })
        .collect();

    let total: usize = apps.iter().map(|a| a.task_count()).sum();
    let mut state = ScheduleState::new(network, apps);
    let mut placements = Vec::with_capacity(total);
    while placements.len() < total {
        let mut best: Option<(f64, AppId, TaskId, NodeId)> = None;
        for (a, dag) in apps.iter().enumerate() {
            for t in 0..dag.task_count() {
                if state.is_placed(a, t) {
                    continue;
                }
                if !state.preds[a][t].iter().all(|&(p, _)| state.is_placed(a, p)) {
                    continue;
                }
                let node =
                    binding[a][t].ok_or(EvalError::MissingTask { app: a, task: t })?;
                let start = state.candidate(a, t, node)?.start;
                let better = match best {
                    None => true,
                    Some((s, ba, bt, _)) => {
                        start.total_cmp(&s).then(a.cmp(&ba)).then(topo_pos[a][t].cmp(&topo_pos[ba][bt]))
                            == std::cmp::Ordering::Less
                    }
                };
                if better {
                    best = Some((start, a, t, node));
                }
            }
        }
        let (_, a, t, node) = best.expect("a released task exists while tasks remain");
        state.place(a, t, node)?;
        placements.push(Placement { app: a, task: t, node });
    }
    Ok(Assignment { placements })
}

/// Evaluate a complete assignment: replay it, then score every application
/// at its sink and average the six metrics over applications.
pub fn evaluate(
    assignment: &Assignment,
    network: &NetworkGraph,
    apps: &[AppDag],
    params: &CostParams,
) -> Result<(Vec<AppOutcome>, MetricsRecord), EvalError> {
    if apps.is_empty() {
        return Err(EvalError::NoApps);
    }
    let state = replay(assignment, network, apps)?;
    let outcomes = score(&state, params);
    let metrics = aggregate(&outcomes, apps);
    Ok((outcomes, metrics))
}

/// Score each application's sink outcome with the QoE cost model.
pub fn score(state: &ScheduleState<'_>, params: &CostParams) -> Vec<AppOutcome> {
    state
        .apps()
        .iter()
        .enumerate()
        .map(|(app, dag)| {
            let sink = state.outcome(app, dag.sink()).expect("sink placed");
            let q = &dag.qos;
            let q_d = latency_cost(sink.finish, q.deadline_s, q.hard_d, params);
            let q_e = accuracy_cost(sink.error, q.error_limit, q.hard_e, params);
            AppOutcome {
                app,
                completion_s: sink.finish,
                error: sink.error,
                latency_cost: q_d,
                accuracy_cost: q_e,
                qoe_cost: qoe_cost(q.weight_d, q.weight_e, q_d, q_e),
            }
        })
        .collect()
}

fn aggregate(outcomes: &[AppOutcome], apps: &[AppDag]) -> MetricsRecord {
    let n = outcomes.len() as f64;
    let mean = |f: &dyn Fn(&AppOutcome) -> f64| outcomes.iter().map(|o| f(o)).sum::<f64>() / n;
    let compliance = |hard: &dyn Fn(&AppDag) -> bool, ok: &dyn Fn(&AppOutcome, &AppDag) -> bool| {
        let mut total = 0usize;
        let mut met = 0usize;
        for o in outcomes {
            let dag = &apps[o.app];
            if hard(dag) {
                total += 1;
                if ok(o, dag) {
                    met += 1;
                }
            }
        }
        if total == 0 {
            1.0
        } else {
            met as f64 / total as f64
        }
    };
    MetricsRecord {
        avg_completion_s: mean(&|o| o.completion_s),
        deadline_ratio: compliance(&|d| d.qos.hard_d, &|o, d| o.completion_s <= d.qos.deadline_s),
        accuracy_ratio: compliance(&|d| d.qos.hard_e, &|o, d| o.error <= d.qos.error_limit),
        avg_latency_cost: mean(&|o| o.latency_cost),
        avg_accuracy_cost: mean(&|o| o.accuracy_cost),
        avg_qoe_cost: mean(&|o| o.qoe_cost),
    }
}
