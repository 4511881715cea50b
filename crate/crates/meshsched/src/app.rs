//! DAG applications: typed tasks, data-transfer edges, QoS thresholds and
//! preferences, plus the seeded random generator used by the experiments.
//!
//! Task 0 is always the unique source and must execute on the owner node;
//! the last task is the unique sink. When the random layering produces more
//! than one sink, a zero-workload virtual sink is appended.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Capacity, NodeId};

pub type AppId = usize;
pub type TaskId = usize;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid app config: {0}")]
    InvalidConfig(String),
    #[error("dependency cycle detected")]
    CycleDetected,
    #[error("malformed application: {0}")]
    Malformed(String),
}

/// Resource type a task is intensive in; selects both the requirement
/// component and the node capacity component (the one-hot projection).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Cpu,
    Gpu,
    Io,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Cpu, TaskKind::Gpu, TaskKind::Io];

    /// Lane index on a node; one FCFS lane per resource type.
    pub fn lane(self) -> usize {
        match self {
            TaskKind::Cpu => 0,
            TaskKind::Gpu => 0,
            TaskKind::Io => 0,
        }
    }

    /// Capacity component serving this task type.
    pub fn component(self, cap: &Capacity) -> f64 {
        match self {
            TaskKind::Cpu => cap.cpu,
            TaskKind::Gpu => cap.gpu,
            TaskKind::Io => cap.io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Required work in the task's own resource type: Gcycles for CPU/GPU
    /// tasks, MB for I/O tasks. Zero only for virtual tasks.
    pub work: f64,
}

impl TaskSpec {
    /// Execution time on a node with the given capacity.
    pub fn exec_time(&self, cap: &Capacity) -> f64 {
        self.work / self.kind.component(cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagEdge {
    pub from: TaskId,
    pub to: TaskId,
    /// Data shipped from `from` to `to`, MB.
    pub mb: f64,
}

/// Per-application QoS thresholds and preferences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosProfile {
    /// Deadline, seconds.
    #[serde(rename = "d")]
    pub deadline_s: f64,
    /// Upper limit on the end-to-end data error rate.
    #[serde(rename = "e")]
    pub error_limit: f64,
    #[serde(rename = "wd")]
    pub weight_d: f64,
    #[serde(rename = "we")]
    pub weight_e: f64,
    /// Hard deadline threshold: crossing it adds the latency penalty factor.
    #[serde(rename = "hd")]
    pub hard_d: bool,
    #[serde(rename = "he")]
    pub hard_e: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AppDoc", into = "AppDoc")]
pub struct AppDag {
    pub owner: NodeId,
    pub qos: QosProfile,
    pub tasks: Vec<TaskSpec>,
    pub edges: Vec<DagEdge>,
}

/// Serialized form; tasks carry an explicit index so documents stay readable.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AppDoc {
    owner: NodeId,
    qos: QosProfile,
    tasks: Vec<TaskDoc>,
    edges: Vec<DagEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskDoc {
    j: usize,
    #[serde(rename = "type")]
    kind: TaskKind,
    req: f64,
}

impl From<AppDag> for AppDoc {
    fn from(dag: AppDag) -> Self {
        AppDoc {
            owner: dag.owner,
            qos: dag.qos,
            tasks: dag
                .tasks
                .iter()
                .enumerate()
                .map(|(j, t)| TaskDoc { j, kind: t.kind, req: t.work })
                .collect(),
            edges: dag.edges,
        }
    }
}

impl TryFrom<AppDoc> for AppDag {
    type Error = String;

    fn try_from(doc: AppDoc) -> Result<Self, String> {
        for (pos, t) in doc.tasks.iter().enumerate() {
            if t.j != pos {
                return Err(format!("task at position {pos} carries index {}", t.j));
            }
        }
        Ok(AppDag {
            owner: doc.owner,
            qos: doc.qos,
            tasks: doc.tasks.into_iter().map(|t| TaskSpec { kind: t.kind, work: t.req }).collect(),
            edges: doc.edges,
        })
    }
}

impl AppDag {
    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    /// Index of the sink task.
    pub fn sink(&self) -> TaskId {
        self.tasks.len() - 1
    }

    /// `(predecessor, edge MB)` lists indexed by task.
    pub fn predecessors(&self) -> Vec<Vec<(TaskId, f64)>> {
        let mut preds = vec![Vec::new(); self.tasks.len()];
        for e in &self.edges {
            preds[e.to].push((e.from, e.mb));
        }
        preds
    }

    /// `(successor, edge MB)` lists indexed by task.
    pub fn successors(&self) -> Vec<Vec<(TaskId, f64)>> {
        let mut succs = vec![Vec::new(); self.tasks.len()];
        for e in &self.edges {
            succs[e.from].push((e.to, e.mb));
        }
        succs
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppConfig {
    /// Number of App Nodes the harness samples per run.
    pub count: usize,
    /// Probability that each hardness flag (deadline, accuracy) is hard.
    pub hard_ratio: f64,
    pub task_count_choices: Vec<usize>,
    /// Out-degree bound per task, drawn once per application.
    pub branch_choices: Vec<usize>,
    /// Work per task, Gcycles (CPU/GPU) or MB (I/O).
    pub work_range: (f64, f64),
    pub edge_mb_range: (f64, f64),
    pub deadline_range_s: (f64, f64),
    pub error_limit_choices: Vec<f64>,
    /// Latency preference weight; the accuracy weight is its complement.
    pub weight_d_range: (f64, f64),
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            count: 30,
            hard_ratio: 0.5,
            task_count_choices: vec![16, 17, 18, 19, 20],
            branch_choices: vec![2, 3, 4, 5],
            work_range: (5.0, 10.0),
            edge_mb_range: (0.1, 0.5),
            deadline_range_s: (15.0, 20.0),
            error_limit_choices: vec![1e-2, 1e-3, 1e-4],
            weight_d_range: (0.3, 0.7),
        }
    }
}

impl AppConfig {
    fn validate(&self) -> Result<(), AppError> {
        if self.task_count_choices.is_empty() || self.task_count_choices.contains(&0) {
            return Err(AppError::InvalidConfig("task_count_choices must be nonempty and positive".into()));
        }
        if self.branch_choices.is_empty() || self.branch_choices.contains(&0) {
            return Err(AppError::InvalidConfig("branch_choices must be nonempty and positive".into()));
        }
        if self.error_limit_choices.is_empty()
            || self.error_limit_choices.iter().any(|e| !(0.0 < *e && *e < 1.0))
        {
            return Err(AppError::InvalidConfig("error limits must lie in (0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.hard_ratio) {
            return Err(AppError::InvalidConfig("hard_ratio must lie in [0,1]".into()));
        }
        for (name, (lo, hi)) in [
            ("work_range", self.work_range),
            ("edge_mb_range", self.edge_mb_range),
            ("deadline_range_s", self.deadline_range_s),
            ("weight_d_range", self.weight_d_range),
        ] {
            if !(lo > 0.0) || hi < lo {
                return Err(AppError::InvalidConfig(format!("{name} must be positive and ordered")));
            }
        }
        Ok(())
    }
}

/// Generate a random application owned by `owner`. Layered construction:
/// every task after the source picks 1..=branch predecessors among earlier
/// tasks that still have spare out-degree, so the result is acyclic, has the
/// single source 0, and honors the out-degree bound. Deterministic per seed.
pub fn generate_app(cfg: &AppConfig, seed_value: u64, owner: NodeId) -> Result<AppDag, AppError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    let task_count = *cfg.task_count_choices.choose(&mut rng).expect("nonempty");
    let branch = *cfg.branch_choices.choose(&mut rng).expect("nonempty");

    let mut tasks: Vec<TaskSpec> = (0..task_count)
        .map(|_| TaskSpec {
            kind: *TaskKind::ALL.as_slice().choose(&mut rng).expect("nonempty"),
            work: rng.gen_range(cfg.work_range.0..cfg.work_range.1),
        })
        .collect();

    let mut edges = Vec::new();
    let mut out_degree = vec![0usize; task_count];
    for to in 1..task_count {
        let available: Vec<TaskId> = (0..to).filter(|&p| out_degree[p] < branch).collect();
        debug_assert!(!available.is_empty(), "in-degree <= branch keeps capacity free");
        let in_degree = rng.gen_range(1..=branch.min(available.len()));
        let mut preds: Vec<TaskId> =
            available.choose_multiple(&mut rng, in_degree).copied().collect();
        preds.sort_unstable();
        for from in preds {
            out_degree[from] += 1;
            edges.push(DagEdge { from, to, mb: rng.gen_range(cfg.edge_mb_range.0..cfg.edge_mb_range.1) });
        }
    }

    // Collapse multiple sinks into a zero-workload virtual sink.
    let sinks: Vec<TaskId> = (0..task_count).filter(|&t| out_degree[t] == 0).collect();
    if sinks.len() > 1 {
        let virtual_sink = tasks.len();
        tasks.push(TaskSpec { kind: TaskKind::Cpu, work: 0.0 });
        for from in sinks {
            edges.push(DagEdge { from, to: virtual_sink, mb: 0.0 });
        }
    }

    let qos = QosProfile {
        deadline_s: rng.gen_range(cfg.deadline_range_s.0..cfg.deadline_range_s.1),
        error_limit: *cfg.error_limit_choices.choose(&mut rng).expect("nonempty"),
        hard_d: rng.gen_bool(cfg.hard_ratio),
        hard_e: rng.gen_bool(cfg.hard_ratio),
        weight_d: 0.0,
        weight_e: 0.0,
    };
    let weight_d = rng.gen_range(cfg.weight_d_range.0..cfg.weight_d_range.1);
    let qos = QosProfile { weight_d, weight_e: 1.0 - weight_d, ..qos };

    let dag = AppDag { owner, qos, tasks, edges };
    debug_assert!(validate_dag(&dag).is_empty());
    Ok(dag)
}

/// Kahn's algorithm, smallest task index first, so ties are stable.
pub fn topological_order(dag: &AppDag) -> Result<Vec<TaskId>, AppError> {
    let n = dag.tasks.len();
    let mut in_degree = vec![0usize; n];
    let mut succs = vec![Vec::new(); n];
    for e in &dag.edges {
        if e.from >= n || e.to >= n {
            return Err(AppError::Malformed(format!("edge {}->{} out of range", e.from, e.to)));
        }
        in_degree[e.to] += 1;
        succs[e.from].push(e.to);
    }
    let mut ready: std::collections::BTreeSet<TaskId> =
        (0..n).filter(|&t| in_degree[t] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&t) = ready.iter().next() {
        ready.remove(&t);
        order.push(t);
        for &next in &succs[t] {
            in_degree[next] -= 1;
            if in_degree[next] == 0 {
                ready.insert(next);
            }
        }
    }
    if order.len() != n {
        return Err(AppError::CycleDetected);
    }
    Ok(order)
}

/// Structural violations reported by [`validate_dag`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CycleDetected,
    /// In-degree-zero tasks other than exactly `{0}`.
    SourceViolation(Vec<TaskId>),
    /// Out-degree-zero tasks other than exactly the last task.
    SinkViolation(Vec<TaskId>),
    /// Task not on any source-to-sink path.
    UnreachableTask(TaskId),
    NegativeWork(TaskId),
    MalformedEdge { from: TaskId, to: TaskId },
    NegativeBytes { from: TaskId, to: TaskId },
    Empty,
}

/// Check the structural invariants; an empty report means the DAG is valid.
pub fn validate_dag(dag: &AppDag) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = dag.tasks.len();
    if n == 0 {
        return vec![Violation::Empty];
    }
    for (t, spec) in dag.tasks.iter().enumerate() {
        if spec.work < 0.0 {
            out.push(Violation::NegativeWork(t));
        }
    }
    let mut well_formed = true;
    for e in &dag.edges {
        if e.from >= n || e.to >= n || e.from == e.to {
            out.push(Violation::MalformedEdge { from: e.from, to: e.to });
            well_formed = false;
        } else if e.mb < 0.0 {
            out.push(Violation::NegativeBytes { from: e.from, to: e.to });
        }
    }
    if !well_formed {
        return out;
    }
    if topological_order(dag).is_err() {
        out.push(Violation::CycleDetected);
        return out;
    }
    let preds = dag.predecessors();
    let succs = dag.successors();
    let sources: Vec<TaskId> = (0..n).filter(|&t| preds[t].is_empty()).collect();
    if sources != [0] {
        out.push(Violation::SourceViolation(sources));
    }
    let sinks: Vec<TaskId> = (0..n).filter(|&t| succs[t].is_empty()).collect();
    if sinks != [n - 1] {
        out.push(Violation::SinkViolation(sinks));
    }
    // Reachability from the source and co-reachability from the sink.
    let forward = reach(n, &succs, 0);
    let backward = reach(n, &preds, n - 1);
    for t in 0..n {
        if !(forward[t] && backward[t]) {
            out.push(Violation::UnreachableTask(t));
        }
    }
    out
}

fn reach(n: usize, adj: &[Vec<(TaskId, f64)>], start: TaskId) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(t) = stack.pop() {
        for &(next, _) in &adj[t] {
            if !seen[next] {
                seen[next] = true;
                stack.push(next);
            }
        }
    }
    seen
}
