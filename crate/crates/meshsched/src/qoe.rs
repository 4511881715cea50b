//! QoS degradation costs, task priority estimators, and per-round quotas.
//!
//! Both cost axes share one shape: a sigmoid of the distance to the
//! threshold, scaled by `beta`, plus a large additive penalty when a hard
//! threshold is crossed. A soft (or met) constraint therefore costs in
//! (0, 1); a violated hard constraint costs in (B, B+1).
//!
//! The priority estimators project each task's remaining work onto network
//! averages: bottom-level time is the longest remaining path to the sink
//! (communication at the average rate, execution at the average capacity),
//! downstream error accumulates the average link BER multiplicatively along
//! the remaining path.

use serde::{Deserialize, Serialize};

use crate::app::{topological_order, AppDag, TaskId};
use crate::net::Averages;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Sigmoid scale on the latency axis, seconds.
    pub beta_d_s: f64,
    /// Sigmoid scale on the accuracy axis, relative to each app's error
    /// limit (`beta_e = beta_e_rel * error_limit`).
    pub beta_e_rel: f64,
    /// Penalty added when a hard deadline is missed.
    pub penalty_d: f64,
    /// Penalty added when a hard accuracy limit is exceeded.
    pub penalty_e: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { beta_d_s: 1.0, beta_e_rel: 0.2, penalty_d: 10.0, penalty_e: 10.0 }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Latency degradation cost of finishing at `t` against deadline `d`.
/// Exactly on time (`t == d`) costs 0.5 with no penalty.
pub fn latency_cost(t: f64, d: f64, hard: bool, p: &CostParams) -> f64 {
    let over = t - d;
    let penalty = if hard && over > 0.0 { p.penalty_d } else { 0.0 };
    sigmoid(over / p.beta_d_s) + penalty
}

/// Accuracy degradation cost of an end-to-end error rate `r` against limit `e`.
pub fn accuracy_cost(r: f64, e: f64, hard: bool, p: &CostParams) -> f64 {
    let over = r - e;
    let penalty = if hard && over > 0.0 { p.penalty_e } else { 0.0 };
    sigmoid(over / (p.beta_e_rel * e)) + penalty
}

/// Preference-weighted combination of the two degradation costs.
pub fn qoe_cost(weight_d: f64, weight_e: f64, q_d: f64, q_e: f64) -> f64 {
    weight_d * q_d + weight_e * q_e
}

/// Latency priority of a task whose remaining bottom-level time is
/// `t_prime`, for an application that has already run for `app_elapsed`
/// seconds. The sigmoid compares the remaining need against the remaining
/// budget `d - app_elapsed`.
pub fn latency_priority(
    t_prime: f64,
    app_elapsed: f64,
    d: f64,
    weight_d: f64,
    hard: bool,
    p: &CostParams,
) -> f64 {
    let remaining_budget = d - app_elapsed;
    let over = t_prime - remaining_budget;
    let penalty = if hard && over > 0.0 { weight_d * p.penalty_d } else { 0.0 };
    weight_d * sigmoid(over / p.beta_d_s) + penalty
}

/// Accuracy priority of a task with estimated downstream error `r_prime`,
/// for an application whose assigned tasks have accumulated `app_error`.
pub fn accuracy_priority(
    app_error: f64,
    r_prime: f64,
    e: f64,
    weight_e: f64,
    hard: bool,
    p: &CostParams,
) -> f64 {
    let estimated = 1.0 - (1.0 - app_error) * (1.0 - r_prime);
    let over = estimated - e;
    let penalty = if hard && over > 0.0 { weight_e * p.penalty_e } else { 0.0 };
    weight_e * sigmoid(over / (p.beta_e_rel * e)) + penalty
}

/// Number of tasks an application may enqueue this round: its share of the
/// round's task budget, proportional to its normalized latency priority,
/// clamped to [1, remaining] so every selected application makes progress.
pub fn task_quota(o: f64, remaining: usize, q_d: f64, sum_q_d: f64) -> usize {
    let share = if sum_q_d > 0.0 { q_d / sum_q_d } else { 1.0 };
    let raw = (o * remaining as f64 * share).floor() as usize;
    raw.clamp(1, remaining)
}

/// Bottom-level time per task: estimated remaining communication and
/// execution from the task's completion to the sink, along the longest
/// path, at network-average rate and capacity. Zero at the sink.
pub fn bottom_level_times(dag: &AppDag, order: &[TaskId], avg: &Averages) -> Vec<f64> {
    let succs = dag.successors();
    let mut t_prime = vec![0.0; dag.task_count()];
    for &t in order.iter().rev() {
        let mut best = 0.0f64;
        for &(next, mb) in &succs[t] {
            let via = t_prime[next] + mb / avg.rate_mbps + dag.tasks[next].exec_time(&avg.capacity);
            best = best.max(via);
        }
        t_prime[t] = best;
    }
    t_prime
}

/// Estimated error accumulated from a task to the sink, assuming every
/// remaining transfer sees the average link BER. Zero at the sink.
pub fn downstream_errors(dag: &AppDag, order: &[TaskId], avg_ber: f64) -> Vec<f64> {
    let succs = dag.successors();
    let mut r_prime = vec![0.0; dag.task_count()];
    for &t in order.iter().rev() {
        if succs[t].is_empty() {
            r_prime[t] = 0.0;
            continue;
        }
        let mut survival = 1.0f64;
        for &(next, _) in &succs[t] {
            survival *= (1.0 - r_prime[next]) * (1.0 - avg_ber);
        }
        r_prime[t] = 1.0 - survival;
    }
    r_prime
}

/// Per-application priority state: static bottom-level estimates plus the
/// progress-dependent priorities refreshed between scheduling rounds.
#[derive(Debug, Clone)]
pub struct AppPriorities {
    pub topo: Vec<TaskId>,
    /// Position of each task in `topo`.
    pub topo_pos: Vec<usize>,
    pub t_prime: Vec<f64>,
    pub r_prime: Vec<f64>,
    pub q_d: Vec<f64>,
    pub q_e: Vec<f64>,
    /// Maximum finish time of the application's assigned tasks.
    pub progress_t: f64,
    /// Maximum data error rate of the application's assigned tasks.
    pub progress_r: f64,
}

impl AppPriorities {
    pub fn new(dag: &AppDag, avg: &Averages, params: &CostParams) -> Self {
        let topo = topological_order(dag).expect("valid dag");
        let mut topo_pos = vec![0usize; dag.task_count()];
        for (i, &t) in topo.iter().enumerate() {
            topo_pos[t] = i;
        }
        let t_prime = bottom_level_times(dag, &topo, avg);
        let r_prime = downstream_errors(dag, &topo, avg.ber);
        let mut state = Self {
            topo,
            topo_pos,
            t_prime,
            r_prime,
            q_d: Vec::new(),
            q_e: Vec::new(),
            progress_t: 0.0,
            progress_r: 0.0,
        };
        state.refresh(dag, params);
        state
    }

    /// Recompute both priority vectors from the current progress terms.
    pub fn refresh(&mut self, dag: &AppDag, params: &CostParams) {
        let q = &dag.qos;
        self.q_d = self
            .t_prime
            .iter()
            .map(|&tp| latency_priority(tp, self.progress_t, q.deadline_s, q.weight_d, q.hard_d, params))
            .collect();
        self.q_e = self
            .r_prime
            .iter()
            .map(|&rp| accuracy_priority(self.progress_r, rp, q.error_limit, q.weight_e, q.hard_e, params))
            .collect();
    }

    /// Combined QoE priority of a task.
    pub fn combined(&self, t: TaskId) -> f64 {
        self.q_d[t] + self.q_e[t]
    }
}
