//! Hierarchical multi-queue task scheduling.
//!
//! Scheduling proceeds in rounds. Each round ranks the applications that
//! still have unassigned tasks by latency priority, admits the top `k`
//! fraction into the round, grants each admitted application a task quota
//! proportional to its normalized priority, merges the drained tasks into
//! one queue re-sorted by combined QoE priority, and dispatches every queued
//! task to the node with the lowest estimated application-level QoE cost.
//! After the round the per-application progress terms (latest finish time,
//! worst error so far) are folded back into the priorities of the tasks
//! that remain, so urgent applications pull forward as scheduling advances.

use serde::{Deserialize, Serialize};

use crate::app::{AppDag, AppId, TaskId};
use crate::engine::{Assignment, Placement, ScheduleState};
use crate::net::{NetworkGraph, NodeId};
use crate::qoe::{accuracy_priority, latency_priority, task_quota, AppPriorities, CostParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    /// Fraction of active applications admitted per round, in (0, 1].
    pub k: f64,
    /// Fraction of an application's remaining tasks its quota may reach,
    /// in (0, 1].
    pub o: f64,
    pub cost: CostParams,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self { k: 0.25, o: 1.0, cost: CostParams::default() }
    }
}

/// Which priority ranks applications (and sizes quotas). The hierarchical
/// scheduler ranks by latency priority; the collapsed variant uses the
/// combined QoE priority at both levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RankKey {
    Latency,
    Combined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStats {
    /// Scheduling rounds executed (bounded by the total task count).
    pub rounds: usize,
    /// Node-candidate evaluations performed during node selection.
    pub candidate_evals: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub selected: Vec<AppQuota>,
    pub placements: Vec<Placement>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppQuota {
    pub app: AppId,
    pub priority: f64,
    pub quota: usize,
}

/// A scheduler's output: the placement sequence plus run counters.
#[derive(Debug, Clone)]
pub struct SchedulerRun {
    pub assignment: Assignment,
    pub stats: ScheduleStats,
    pub trace: Option<Vec<RoundTrace>>,
}

/// Schedule every application with the hierarchical two-level ranking.
pub fn schedule(apps: &[AppDag], network: &NetworkGraph, params: &SchedulerParams) -> SchedulerRun {
    run(apps, network, params, RankKey::Latency, false)
}

/// Like [`schedule`], also recording a per-round trace.
pub fn schedule_traced(
    apps: &[AppDag],
    network: &NetworkGraph,
    params: &SchedulerParams,
) -> SchedulerRun {
    run(apps, network, params, RankKey::Latency, true)
}

/// Initial ranking: per-task priorities from the network averages with zero
/// progress, each application's task pool ordered by descending combined
/// priority, and the application queue ordered by the ranking key of the
/// source task.
pub fn initial_ranking(
    apps: &[AppDag],
    network: &NetworkGraph,
    params: &CostParams,
) -> (Vec<AppPriorities>, Vec<Vec<TaskId>>, Vec<AppId>) {
    let avg = network.averages();
    let priorities: Vec<AppPriorities> =
        apps.iter().map(|dag| AppPriorities::new(dag, &avg, params)).collect();
    let pools: Vec<Vec<TaskId>> = apps
        .iter()
        .enumerate()
        .map(|(a, dag)| sorted_pool(&priorities[a], dag.task_count()))
        .collect();
    let mut queue: Vec<AppId> = (0..apps.len()).collect();
    sort_app_queue(&mut queue, &priorities, &pools, RankKey::Latency);
    (priorities, pools, queue)
}

/// All of an app's tasks, descending by combined priority; ties resolve
/// toward predecessors (smaller topological position), which keeps every
/// prefix predecessor-closed.
fn sorted_pool(pri: &AppPriorities, task_count: usize) -> Vec<TaskId> {
    let mut pool: Vec<TaskId> = (0..task_count).collect();
    sort_pool(&mut pool, pri);
    pool
}

fn sort_pool(pool: &mut [TaskId], pri: &AppPriorities) {
    pool.sort_by(|&a, &b| {
        pri.combined(b)
            .total_cmp(&pri.combined(a))
            .then(pri.topo_pos[a].cmp(&pri.topo_pos[b]))
    });
}

/// An application's queue priority: the maximum key over its remaining
/// tasks. Before anything is assigned this equals the source task's value.
fn app_priority(pri: &AppPriorities, pool: &[TaskId], key: RankKey) -> f64 {
    pool.iter()
        .map(|&t| match key {
            RankKey::Latency => pri.q_d[t],
            RankKey::Combined => pri.combined(t),
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn sort_app_queue(queue: &mut [AppId], priorities: &[AppPriorities], pools: &[Vec<TaskId>], key: RankKey) {
    queue.sort_by(|&a, &b| {
        app_priority(&priorities[b], &pools[b], key)
            .total_cmp(&app_priority(&priorities[a], &pools[a], key))
            .then(a.cmp(&b))
    });
}

/// Score a candidate node for one task: the application-level QoE estimate
/// if the task lands there, i.e. the latency priority with the candidate
/// finish time as elapsed progress plus the accuracy priority with the
/// candidate error as accumulated error.
pub(crate) fn select_node(
    state: &ScheduleState<'_>,
    pri: &AppPriorities,
    dag: &AppDag,
    app: AppId,
    task: TaskId,
    params: &CostParams,
    candidate_evals: &mut u64,
) -> NodeId {
    if task == 0 {
        return dag.owner;
    }
    let q = &dag.qos;
    let mut best: Option<(f64, f64, NodeId)> = None;
    for node in 0..state.network().node_count() {
        let cand = state
            .candidate(app, task, node)
            .expect("predecessors placed before node selection");
        *candidate_evals += 1;
        let score = latency_priority(pri.t_prime[task], cand.finish, q.deadline_s, q.weight_d, q.hard_d, params)
            + accuracy_priority(cand.error, pri.r_prime[task], q.error_limit, q.weight_e, q.hard_e, params);
        let better = match &best {
            None => true,
            Some((s, f, n)) => {
                match score.total_cmp(s) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => match cand.finish.total_cmp(f) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Greater => false,
                        std::cmp::Ordering::Equal => node < *n,
                    },
                }
            }
        };
        if better {
            best = Some((score, cand.finish, node));
        }
    }
    best.expect("at least one node").2
}

pub(crate) fn run(
    apps: &[AppDag],
    network: &NetworkGraph,
    params: &SchedulerParams,
    key: RankKey,
    want_trace: bool,
) -> SchedulerRun {
    assert!(params.k > 0.0 && params.k <= 1.0, "k must lie in (0,1]");
    assert!(params.o > 0.0 && params.o <= 1.0, "o must lie in (0,1]");
    let (mut priorities, mut pools, mut queue) = initial_ranking(apps, network, &params.cost);
    if key == RankKey::Combined {
        sort_app_queue(&mut queue, &priorities, &pools, key);
    }
    let preds: Vec<Vec<Vec<(TaskId, f64)>>> = apps.iter().map(|a| a.predecessors()).collect();

    let mut state = ScheduleState::new(network, apps);
    let mut assignment = Assignment::default();
    let mut stats = ScheduleStats::default();
    let mut trace = want_trace.then(Vec::new);

    while !queue.is_empty() {
        stats.rounds += 1;
        let admitted = ((params.k * queue.len() as f64).floor() as usize).clamp(1, queue.len());
        let selected: Vec<AppId> = queue[..admitted].to_vec();
        let sum_priority: f64 = selected
            .iter()
            .map(|&a| app_priority(&priorities[a], &pools[a], key))
            .sum();

        // Drain each admitted app's quota from the head of its pool. The
        // pool is priority-sorted and priorities are topologically
        // consistent, so every drained prefix is predecessor-closed.
        let mut round_queue: Vec<(AppId, TaskId)> = Vec::new();
        let mut quotas = Vec::with_capacity(selected.len());
        for &a in &selected {
            let prio = app_priority(&priorities[a], &pools[a], key);
            let quota = task_quota(params.o, pools[a].len(), prio, sum_priority);
            let batch: Vec<TaskId> = pools[a].drain(..quota).collect();
            for (i, &t) in batch.iter().enumerate() {
                for &(pred, _) in &preds[a][t] {
                    assert!(
                        state.is_placed(a, pred) || batch[..i].contains(&pred),
                        "round batch must be predecessor-closed"
                    );
                }
            }
            quotas.push(AppQuota { app: a, priority: prio, quota });
            round_queue.extend(batch.into_iter().map(|t| (a, t)));
        }

        // Task-level pass: one queue ordered by combined QoE priority.
        round_queue.sort_by(|&(a1, t1), &(a2, t2)| {
            priorities[a2]
                .combined(t2)
                .total_cmp(&priorities[a1].combined(t1))
                .then(a1.cmp(&a2))
                .then(priorities[a1].topo_pos[t1].cmp(&priorities[a2].topo_pos[t2]))
        });

        let mut placements = Vec::with_capacity(round_queue.len());
        for &(a, t) in &round_queue {
            let node = select_node(&state, &priorities[a], &apps[a], a, t, &params.cost, &mut stats.candidate_evals);
            let outcome = state.place(a, t, node).expect("placement follows predecessors");
            placements.push(Placement { app: a, task: t, node });
            let pri = &mut priorities[a];
            let progress = if std::env::var("HMTSA_PROGRESS_EXEC").is_ok() {
                outcome.finish - outcome.start
            } else {
                outcome.finish
            };
            pri.progress_t = pri.progress_t.max(progress);
            pri.progress_r = pri.progress_r.max(outcome.error);
        }
        assignment.placements.extend(placements.iter().copied());

        // Fold the new progress into the remaining tasks of touched apps.
        for &a in &selected {
            priorities[a].refresh(&apps[a], &params.cost);
            let (pri, pool) = (&priorities[a], &mut pools[a]);
            sort_pool(pool, pri);
        }
        queue.retain(|&a| !pools[a].is_empty());
        sort_app_queue(&mut queue, &priorities, &pools, key);

        if let Some(t) = trace.as_mut() {
            t.push(RoundTrace { round: stats.rounds, selected: quotas, placements });
        }
    }
    debug_assert!(state.all_placed());
    // Hand the controller the dispatch sequence in planned execution order;
    // a lane held for a task whose inputs are still in flight would
    // otherwise block every task queued behind it.
    let assignment = crate::engine::order_by_execution(&assignment, network, apps)
        .expect("planned assignment is valid");
    SchedulerRun { assignment, stats, trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::{generate_app, AppConfig, DagEdge, QosProfile, TaskKind, TaskSpec};
    use crate::engine::evaluate;
    use crate::net::{build_random_network, Capacity, ComputeNode, Link, NetworkConfig, NetworkGraph};

    fn uniform_network(n: usize, rate: f64, ber: f64, cap: f64) -> NetworkGraph {
        let nodes = (0..n)
            .map(|id| ComputeNode {
                id,
                x: id as f64,
                y: 0.0,
                capacity: Capacity { cpu: cap, gpu: cap, io: cap },
                is_app_node: id == 0,
            })
            .collect();
        let mut links = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                links.push(Link { a, b, rate_mbps: rate, ber });
            }
        }
        NetworkGraph::from_parts(nodes, links).unwrap()
    }

    fn qos(deadline: f64, wd: f64) -> QosProfile {
        QosProfile {
            deadline_s: deadline,
            error_limit: 1e-2,
            weight_d: wd,
            weight_e: 1.0 - wd,
            hard_d: false,
            hard_e: false,
        }
    }

    fn chain_app(owner: usize, works: &[f64], q: QosProfile) -> AppDag {
        AppDag {
            owner,
            qos: q,
            tasks: works.iter().map(|&w| TaskSpec { kind: TaskKind::Cpu, work: w }).collect(),
            edges: (1..works.len()).map(|t| DagEdge { from: t - 1, to: t, mb: 0.2 }).collect(),
        }
    }

    #[test]
    fn single_app_single_node_places_in_topological_order() {
        let net = uniform_network(2, 10.0, 0.0, 8.0);
        // Force everything onto the owner by making it the only node the
        // scheduler can pick: 2-node net but node 1 is identical, so the
        // order property matters, not the node.
        let apps = vec![chain_app(0, &[8.0, 8.0, 8.0], qos(20.0, 0.5))];
        let run = schedule(&apps, &net, &SchedulerParams::default());
        let tasks: Vec<usize> = run.assignment.placements.iter().map(|p| p.task).collect();
        assert_eq!(tasks, vec![0, 1, 2]);
        assert_eq!(run.assignment.placements[0].node, 0);
    }

    #[test]
    fn assignment_places_every_task_exactly_once() {
        let cfg = AppConfig::default();
        let net = build_random_network(&NetworkConfig::default(), 5).unwrap();
        let apps: Vec<AppDag> =
            (0..6).map(|i| generate_app(&cfg, 100 + i, i as usize).unwrap()).collect();
        let run = schedule(&apps, &net, &SchedulerParams::default());
        let total: usize = apps.iter().map(|a| a.task_count()).sum();
        assert_eq!(run.assignment.placements.len(), total);
        let mut seen = vec![vec![false; 25]; apps.len()];
        for p in &run.assignment.placements {
            assert!(!seen[p.app][p.task]);
            seen[p.app][p.task] = true;
        }
        // The engine accepts it end to end.
        evaluate(&run.assignment, &net, &apps, &SchedulerParams::default().cost).unwrap();
    }

    #[test]
    fn initial_queue_ranks_tighter_deadline_first() {
        let net = uniform_network(3, 10.0, 1e-4, 8.0);
        let apps = vec![
            chain_app(0, &[8.0; 4], qos(20.0, 0.5)),
            chain_app(1, &[8.0; 4], qos(15.0, 0.5)),
        ];
        let (priorities, pools, queue) = initial_ranking(&apps, &net, &CostParams::default());
        assert_eq!(queue[0], 1, "the 15 s deadline app must rank first");
        // App queue priority equals the source task's latency priority.
        for a in 0..2 {
            let max_pool = app_priority(&priorities[a], &pools[a], RankKey::Latency);
            assert_eq!(max_pool, priorities[a].q_d[0]);
        }
    }

    #[test]
    fn per_app_pool_order_is_topological() {
        let cfg = AppConfig::default();
        let net = build_random_network(&NetworkConfig::default(), 2).unwrap();
        for seed in 0..10u64 {
            let apps = vec![generate_app(&cfg, seed, 0).unwrap()];
            let (priorities, pools, _) = initial_ranking(&apps, &net, &CostParams::default());
            let pool = &pools[0];
            let mut pos_of = vec![0usize; pool.len()];
            for (i, &t) in pool.iter().enumerate() {
                pos_of[t] = i;
            }
            for e in &apps[0].edges {
                assert!(pos_of[e.from] < pos_of[e.to], "pool violates edge {e:?}");
            }
            let _ = priorities;
        }
    }

    #[test]
    fn quarter_ratio_admits_two_of_eight_apps() {
        let net = uniform_network(10, 10.0, 1e-4, 8.0);
        let apps: Vec<AppDag> =
            (0..8).map(|i| chain_app(i, &[8.0, 8.0], qos(15.0 + i as f64, 0.5))).collect();
        let run = schedule_traced(&apps, &net, &SchedulerParams::default());
        let trace = run.trace.unwrap();
        assert_eq!(trace[0].selected.len(), 2);
    }

    #[test]
    fn full_quota_drains_a_lone_app_in_one_round() {
        let net = uniform_network(2, 10.0, 0.0, 8.0);
        let apps = vec![chain_app(0, &[8.0; 5], qos(20.0, 0.5))];
        let run = schedule_traced(&apps, &net, &SchedulerParams::default());
        let trace = run.trace.unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].selected[0].quota, 5);
        assert_eq!(run.stats.rounds, 1);
    }

    #[test]
    fn task_level_resort_lets_accuracy_critical_task_jump_ahead() {
        // App 0 wins the app-level latency ranking; app 1's head task has
        // the larger combined priority through its accuracy axis.
        let net = uniform_network(3, 10.0, 1e-4, 8.0);
        let mut a0 = chain_app(0, &[8.0, 8.0], qos(15.0, 0.9));
        a0.qos.error_limit = 0.9; // accuracy axis quiet
        let mut a1 = chain_app(1, &[8.0, 8.0], qos(19.0, 0.1));
        a1.qos.error_limit = 1e-4; // accuracy axis screams
        a1.qos.hard_e = true;
        let apps = vec![a0, a1];
        let (priorities, _, queue) = initial_ranking(&apps, &net, &CostParams::default());
        assert_eq!(queue[0], 0, "app 0 leads on latency priority");
        assert!(
            priorities[1].combined(0) > priorities[0].combined(0),
            "app 1's head task leads on combined priority"
        );
        let run = run(&apps, &net, &SchedulerParams { k: 1.0, o: 1.0, cost: CostParams::default() }, RankKey::Latency, false);
        assert_eq!(run.assignment.placements[0].app, 1);
    }

    #[test]
    fn select_node_prefers_colocated_node_when_idle() {
        let net = uniform_network(3, 10.0, 1e-4, 8.0);
        let apps = vec![chain_app(1, &[8.0, 8.0], qos(20.0, 0.5))];
        let mut state = ScheduleState::new(&net, &apps);
        state.place(0, 0, 1).unwrap();
        let (priorities, _, _) = initial_ranking(&apps, &net, &CostParams::default());
        let mut evals = 0;
        let node = select_node(&state, &priorities[0], &apps[0], 0, 1, &CostParams::default(), &mut evals);
        assert_eq!(node, 1, "co-located node dominates on both axes");
        assert_eq!(evals, 3);
    }

    #[test]
    fn latency_only_app_minimizes_estimated_finish() {
        // With we = 0 the score reduces to a monotone function of the
        // candidate finish time, so the chosen node must minimize it.
        let nodes = vec![
            ComputeNode { id: 0, x: 0.0, y: 0.0, capacity: Capacity { cpu: 5.0, gpu: 5.0, io: 5.0 }, is_app_node: true },
            ComputeNode { id: 1, x: 1.0, y: 0.0, capacity: Capacity { cpu: 9.0, gpu: 9.0, io: 9.0 }, is_app_node: false },
            ComputeNode { id: 2, x: 2.0, y: 0.0, capacity: Capacity { cpu: 7.0, gpu: 7.0, io: 7.0 }, is_app_node: false },
        ];
        let mut links = Vec::new();
        for a in 0..3 {
            for b in (a + 1)..3 {
                links.push(Link { a, b, rate_mbps: 15.0, ber: 1e-6 });
            }
        }
        let net = NetworkGraph::from_parts(nodes, links).unwrap();
        let mut app = chain_app(0, &[8.0, 8.0], qos(10.0, 1.0));
        app.qos.weight_e = 0.0;
        let apps = vec![app];
        let mut state = ScheduleState::new(&net, &apps);
        state.place(0, 0, 0).unwrap();
        let (priorities, _, _) = initial_ranking(&apps, &net, &CostParams::default());
        let mut evals = 0;
        let chosen = select_node(&state, &priorities[0], &apps[0], 0, 1, &CostParams::default(), &mut evals);
        let mut best_finish = f64::INFINITY;
        let mut best_node = usize::MAX;
        for node in 0..3 {
            let f = state.candidate(0, 1, node).unwrap().finish;
            if f < best_finish {
                best_finish = f;
                best_node = node;
            }
        }
        assert_eq!(chosen, best_node);
    }

    #[test]
    fn scheduling_is_deterministic() {
        let cfg = AppConfig::default();
        let net = build_random_network(&NetworkConfig::default(), 9).unwrap();
        let apps: Vec<AppDag> =
            (0..5).map(|i| generate_app(&cfg, 40 + i, i as usize).unwrap()).collect();
        let a = schedule(&apps, &net, &SchedulerParams::default());
        let b = schedule(&apps, &net, &SchedulerParams::default());
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn rounds_never_exceed_total_task_count() {
        let cfg = AppConfig { task_count_choices: vec![3, 4, 5], ..AppConfig::default() };
        let net = build_random_network(
            &NetworkConfig { node_count: 8, ..NetworkConfig::default() },
            2,
        )
        .unwrap();
        for seed in 0..10u64 {
            let apps: Vec<AppDag> =
                (0..4).map(|i| generate_app(&cfg, seed * 10 + i, i as usize).unwrap()).collect();
            let total: usize = apps.iter().map(|a| a.task_count()).sum();
            // Tiny o forces quota floors of zero before the clamp.
            let params = SchedulerParams { k: 0.1, o: 0.01, cost: CostParams::default() };
            let run = schedule(&apps, &net, &params);
            assert!(run.stats.rounds <= total);
            assert_eq!(run.assignment.placements.len(), total);
        }
    }
}
