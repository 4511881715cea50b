//! Comparison schedulers. All four reuse the engine's lane semantics and
//! the same node-selection score as the hierarchical scheduler, so the
//! differences under test are purely about ordering and quota policy.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::app::{AppDag, AppId, TaskId};
use crate::engine::{Assignment, Placement, ScheduleState};
use crate::hmtsa::{self, ScheduleStats, SchedulerParams, SchedulerRun};
use crate::net::{NetworkGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Hmtsa,
    Cofe,
    Daas,
    Whole,
    Ours1,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::Hmtsa,
        SchedulerKind::Cofe,
        SchedulerKind::Daas,
        SchedulerKind::Whole,
        SchedulerKind::Ours1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Hmtsa => "hmtsa",
            SchedulerKind::Cofe => "cofe",
            SchedulerKind::Daas => "daas",
            SchedulerKind::Whole => "whole",
            SchedulerKind::Ours1 => "ours1",
        }
    }
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheduler '{s}' (expected one of hmtsa, cofe, daas, whole, ours1)"))
    }
}

/// Run the named scheduler over one instance.
pub fn dispatch(
    kind: SchedulerKind,
    apps: &[AppDag],
    network: &NetworkGraph,
    params: &SchedulerParams,
) -> SchedulerRun {
    match kind {
        SchedulerKind::Hmtsa => hmtsa::schedule(apps, network, params),
        SchedulerKind::Cofe => cofe_schedule(apps, network, params),
        SchedulerKind::Daas => daas_schedule(apps, network, params),
        SchedulerKind::Whole => whole_schedule(apps, network, params),
        SchedulerKind::Ours1 => ours1_schedule(apps, network, params),
    }
}

/// Event time on the simulated clock, ordered for a min-heap.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Event(f64);
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// Event-driven baseline: scheduling is triggered only when a task
/// completes. Every task whose predecessors have all finished by the event
/// time is dispatched, ordered by application deadline, then task priority.
pub fn cofe_schedule(apps: &[AppDag], network: &NetworkGraph, params: &SchedulerParams) -> SchedulerRun {
    let (priorities, _, _) = hmtsa::initial_ranking(apps, network, &params.cost);
    let mut state = ScheduleState::new(network, apps);
    let mut assignment = Assignment::default();
    let mut stats = ScheduleStats::default();
    let preds: Vec<Vec<Vec<(TaskId, f64)>>> = apps.iter().map(|a| a.predecessors()).collect();

    let total: usize = apps.iter().map(|a| a.task_count()).sum();
    let mut events = BinaryHeap::new();
    events.push(Event(0.0));
    let mut placed = 0usize;
    while placed < total {
        let Event(now) = events.pop().expect("completion events pending while tasks remain");
        let mut ready: Vec<(AppId, TaskId)> = Vec::new();
        for (a, dag) in apps.iter().enumerate() {
            for t in 0..dag.task_count() {
                if state.is_placed(a, t) {
                    continue;
                }
                let ok = preds[a][t].iter().all(|&(p, _)| {
                    state.outcome(a, p).map(|o| o.finish <= now).unwrap_or(false)
                });
                if ok {
                    ready.push((a, t));
                }
            }
        }
        ready.sort_by(|&(a1, t1), &(a2, t2)| {
            apps[a1]
                .qos
                .deadline_s
                .total_cmp(&apps[a2].qos.deadline_s)
                .then(priorities[a2].combined(t2).total_cmp(&priorities[a1].combined(t1)))
                .then(a1.cmp(&a2))
                .then(priorities[a1].topo_pos[t1].cmp(&priorities[a2].topo_pos[t2]))
        });
        if ready.is_empty() {
            continue; // stale event: the completion enabled nothing new
        }
        stats.rounds += 1;
        for (a, t) in ready {
            let node = hmtsa::select_node(&state, &priorities[a], &apps[a], a, t, &params.cost, &mut stats.candidate_evals);
            let outcome = state.place(a, t, node).expect("ready tasks have placed predecessors");
            assignment.placements.push(Placement { app: a, task: t, node });
            events.push(Event(outcome.finish));
            placed += 1;
        }
    }
    SchedulerRun { assignment, stats, trace: None }
}

/// Static-priority baseline: compute the initial priorities once, then
/// assign every task in one pass of descending combined priority without
/// ever refreshing the progress terms.
pub fn daas_schedule(apps: &[AppDag], network: &NetworkGraph, params: &SchedulerParams) -> SchedulerRun {
    let (priorities, _, _) = hmtsa::initial_ranking(apps, network, &params.cost);
    let mut order: Vec<(AppId, TaskId)> = apps
        .iter()
        .enumerate()
        .flat_map(|(a, dag)| (0..dag.task_count()).map(move |t| (a, t)))
        .collect();
    order.sort_by(|&(a1, t1), &(a2, t2)| {
        priorities[a2]
            .combined(t2)
            .total_cmp(&priorities[a1].combined(t1))
            .then(a1.cmp(&a2))
            .then(priorities[a1].topo_pos[t1].cmp(&priorities[a2].topo_pos[t2]))
    });

    let mut state = ScheduleState::new(network, apps);
    let mut assignment = Assignment::default();
    let mut stats = ScheduleStats { rounds: 1, candidate_evals: 0 };
    for (a, t) in order {
        let node = hmtsa::select_node(&state, &priorities[a], &apps[a], a, t, &params.cost, &mut stats.candidate_evals);
        state.place(a, t, node).expect("priority order is predecessor-closed per app");
        assignment.placements.push(Placement { app: a, task: t, node });
    }
    let assignment = crate::engine::order_by_execution(&assignment, network, apps)
        .expect("planned assignment is valid");
    SchedulerRun { assignment, stats, trace: None }
}

/// Whole-application baseline: rank applications by the source task's
/// latency priority, then put each application's entire task set on the one
/// node minimizing its total execution time plus the node's current lane
/// backlog. The source task stays pinned to the owner.
pub fn whole_schedule(apps: &[AppDag], network: &NetworkGraph, params: &SchedulerParams) -> SchedulerRun {
    let (priorities, _, _) = hmtsa::initial_ranking(apps, network, &params.cost);
    let mut order: Vec<AppId> = (0..apps.len()).collect();
    order.sort_by(|&a, &b| priorities[b].q_d[0].total_cmp(&priorities[a].q_d[0]).then(a.cmp(&b)));

    let mut state = ScheduleState::new(network, apps);
    let mut assignment = Assignment::default();
    let mut stats = ScheduleStats { rounds: 1, candidate_evals: 0 };
    for a in order {
        let dag = &apps[a];
        let mut best: Option<(f64, NodeId)> = None;
        for node in 0..network.node_count() {
            let cap = &network.nodes[node].capacity;
            let exec_total: f64 =
                dag.tasks.iter().skip(1).map(|t| t.exec_time(cap)).sum();
            let score = exec_total + state.lane_backlog(node);
            stats.candidate_evals += 1;
            let better = match best {
                None => true,
                Some((s, n)) => score.total_cmp(&s) == Ordering::Less || (score == s && node < n),
            };
            if better {
                best = Some((score, node));
            }
        }
        let chosen = best.expect("at least one node").1;
        for &t in &priorities[a].topo {
            let node = if t == 0 { dag.owner } else { chosen };
            state.place(a, t, node).expect("topological order");
            assignment.placements.push(Placement { app: a, task: t, node });
        }
    }
    let assignment = crate::engine::order_by_execution(&assignment, network, apps)
        .expect("planned assignment is valid");
    SchedulerRun { assignment, stats, trace: None }
}

/// Collapsed-hierarchy variant: identical to the hierarchical scheduler but
/// both the application ranking and the quota shares use the combined QoE
/// priority instead of the latency-first split.
pub fn ours1_schedule(apps: &[AppDag], network: &NetworkGraph, params: &SchedulerParams) -> SchedulerRun {
    hmtsa::run(apps, network, params, hmtsa::RankKey::Combined, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::{generate_app, AppConfig, DagEdge, QosProfile, TaskKind, TaskSpec};
    use crate::engine::evaluate;
    use crate::net::{build_random_network, Capacity, ComputeNode, Link, NetworkConfig};
    use crate::qoe::CostParams;

    fn uniform_network(n: usize, rate: f64, ber: f64, caps: &[f64]) -> NetworkGraph {
        let nodes = (0..n)
            .map(|id| ComputeNode {
                id,
                x: id as f64,
                y: 0.0,
                capacity: Capacity { cpu: caps[id], gpu: caps[id], io: caps[id] },
                is_app_node: false,
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

    fn random_instance(seed: u64, apps: usize) -> (NetworkGraph, Vec<AppDag>) {
        let net = build_random_network(&NetworkConfig::default(), seed).unwrap();
        let cfg = AppConfig::default();
        let dags = (0..apps).map(|i| generate_app(&cfg, seed * 100 + i as u64, i).unwrap()).collect();
        (net, dags)
    }

    #[test]
    fn all_schedulers_produce_valid_assignments() {
        let (net, apps) = random_instance(3, 6);
        let params = SchedulerParams::default();
        let total: usize = apps.iter().map(|a| a.task_count()).sum();
        for kind in SchedulerKind::ALL {
            let run = dispatch(kind, &apps, &net, &params);
            assert_eq!(run.assignment.placements.len(), total, "{kind}");
            evaluate(&run.assignment, &net, &apps, &params.cost)
                .unwrap_or_else(|e| panic!("{kind}: {e}"));
            // Source pinning.
            for p in &run.assignment.placements {
                if p.task == 0 {
                    assert_eq!(p.node, apps[p.app].owner, "{kind}");
                }
            }
        }
    }

    #[test]
    fn all_schedulers_agree_on_single_app_single_node() {
        let net = uniform_network(2, 10.0, 0.0, &[8.0, 8.0]);
        // Give the helper node the same capacity; with zero BER and a chain
        // the owner is still strictly better (no transfer), so every
        // scheduler keeps the whole chain local.
        let apps = vec![chain_app(0, &[8.0, 8.0, 8.0], qos(20.0, 0.5))];
        let params = SchedulerParams::default();
        let mut metrics = Vec::new();
        for kind in SchedulerKind::ALL {
            let run = dispatch(kind, &apps, &net, &params);
            let (_, m) = evaluate(&run.assignment, &net, &apps, &params.cost).unwrap();
            metrics.push(m);
        }
        for m in &metrics[1..] {
            assert_eq!(m, &metrics[0]);
        }
    }

    #[test]
    fn cofe_places_single_chain_in_topological_order() {
        let net = uniform_network(2, 10.0, 0.0, &[8.0, 8.0]);
        let apps = vec![chain_app(0, &[8.0, 8.0, 8.0], qos(20.0, 0.5))];
        let run = cofe_schedule(&apps, &net, &SchedulerParams::default());
        let tasks: Vec<usize> = run.assignment.placements.iter().map(|p| p.task).collect();
        assert_eq!(tasks, vec![0, 1, 2]);
    }

    #[test]
    fn cofe_dispatches_tighter_deadline_first() {
        let net = uniform_network(4, 10.0, 1e-4, &[8.0; 4]);
        let apps = vec![
            chain_app(0, &[8.0, 8.0], qos(20.0, 0.5)),
            chain_app(1, &[8.0, 8.0], qos(15.0, 0.5)),
        ];
        let run = cofe_schedule(&apps, &net, &SchedulerParams::default());
        assert_eq!(run.assignment.placements[0].app, 1);
        assert_eq!(run.assignment.placements[1].app, 0);
    }

    #[test]
    fn daas_ignores_progress_where_hmtsa_rebalances() {
        let net = uniform_network(4, 10.0, 1e-4, &[8.0; 4]);
        let apps = vec![
            chain_app(0, &[8.0; 4], qos(15.0, 0.7)),
            chain_app(1, &[8.0; 4], qos(19.5, 0.7)),
        ];
        let params = SchedulerParams { k: 1.0, o: 1.0, cost: CostParams::default() };
        let daas = daas_schedule(&apps, &net, &params);
        let hm = hmtsa::schedule(&apps, &net, &params);
        // DaaS follows the initial global priority order verbatim.
        let (priorities, _, _) = hmtsa::initial_ranking(&apps, &net, &CostParams::default());
        let mut expected: Vec<(usize, usize)> =
            (0..2).flat_map(|a| (0..4).map(move |t| (a, t))).collect();
        expected.sort_by(|&(a1, t1), &(a2, t2)| {
            priorities[a2]
                .combined(t2)
                .total_cmp(&priorities[a1].combined(t1))
                .then(a1.cmp(&a2))
        });
        let daas_order: Vec<(usize, usize)> =
            daas.assignment.placements.iter().map(|p| (p.app, p.task)).collect();
        assert_eq!(daas_order, expected);
        // The quota split hands app 0 a bigger batch up front, so the
        // hierarchical order deviates from the static interleave.
        let daas_apps: Vec<usize> = daas.assignment.placements.iter().map(|p| p.app).collect();
        let hm_apps: Vec<usize> = hm.assignment.placements.iter().map(|p| p.app).collect();
        assert_ne!(daas_apps, hm_apps, "progress refresh must change the order");
    }

    #[test]
    fn whole_keeps_single_app_local_when_owner_is_fastest() {
        let net = uniform_network(3, 10.0, 1e-4, &[9.9, 5.0, 5.0]);
        let apps = vec![chain_app(0, &[8.0, 8.0, 8.0], qos(20.0, 0.5))];
        let run = whole_schedule(&apps, &net, &SchedulerParams::default());
        assert!(run.assignment.placements.iter().all(|p| p.node == 0));
        let (outs, _) = evaluate(&run.assignment, &net, &apps, &CostParams::default()).unwrap();
        assert_eq!(outs[0].error, 0.0);
    }

    #[test]
    fn whole_spreads_two_apps_once_lane_load_registers() {
        // Owners are slow; two identical fast helpers. The second app must
        // see the first app's backlog on helper 2 and pick helper 3.
        let net = uniform_network(4, 10.0, 1e-4, &[5.0, 5.0, 9.0, 9.0]);
        let apps = vec![
            chain_app(0, &[8.0; 4], qos(15.0, 0.5)),
            chain_app(1, &[8.0; 4], qos(15.5, 0.5)),
        ];
        let run = whole_schedule(&apps, &net, &SchedulerParams::default());
        let nodes_of = |app: usize| -> Vec<usize> {
            run.assignment
                .placements
                .iter()
                .filter(|p| p.app == app && p.task != 0)
                .map(|p| p.node)
                .collect()
        };
        let a0 = nodes_of(0);
        let a1 = nodes_of(1);
        assert!(a0.iter().all(|&n| n == a0[0]), "one node per app");
        assert!(a1.iter().all(|&n| n == a1[0]));
        assert_ne!(a0[0], a1[0], "lane backlog must push the second app away");
    }

    #[test]
    fn whole_serializes_where_hmtsa_parallelizes() {
        let (net, apps) = random_instance(5, 4);
        let params = SchedulerParams::default();
        let w = whole_schedule(&apps, &net, &params);
        let h = hmtsa::schedule(&apps, &net, &params);
        let (_, wm) = evaluate(&w.assignment, &net, &apps, &params.cost).unwrap();
        let (_, hm) = evaluate(&h.assignment, &net, &apps, &params.cost).unwrap();
        assert!(
            hm.avg_completion_s < wm.avg_completion_s,
            "whole {} should be slower than hmtsa {}",
            wm.avg_completion_s,
            hm.avg_completion_s
        );
    }

    #[test]
    fn ours1_promotes_accuracy_heavy_app_that_hmtsa_defers() {
        let net = uniform_network(4, 10.0, 1e-4, &[8.0; 4]);
        // Latency-urgent app vs accuracy-critical app.
        let mut latency_app = chain_app(0, &[8.0; 3], qos(15.0, 0.9));
        latency_app.qos.error_limit = 0.9;
        let mut accuracy_app = chain_app(1, &[8.0; 3], qos(19.5, 0.1));
        accuracy_app.qos.error_limit = 1e-4;
        accuracy_app.qos.hard_e = true;
        let apps = vec![latency_app, accuracy_app];
        let params = SchedulerParams { k: 0.5, o: 1.0, cost: CostParams::default() };
        let hm = hmtsa::schedule(&apps, &net, &params);
        let o1 = ours1_schedule(&apps, &net, &params);
        // k = 0.5 admits one app per round; the ranking key decides which.
        assert_eq!(hm.assignment.placements[0].app, 0);
        assert_eq!(o1.assignment.placements[0].app, 1);
    }

    #[test]
    fn ours1_equals_hmtsa_on_a_single_app() {
        let (net, mut apps) = random_instance(8, 1);
        apps[0].qos.hard_d = true;
        let params = SchedulerParams::default();
        let hm = hmtsa::schedule(&apps, &net, &params);
        let o1 = ours1_schedule(&apps, &net, &params);
        assert_eq!(hm.assignment, o1.assignment);
    }

    #[test]
    fn baselines_are_deterministic() {
        let (net, apps) = random_instance(12, 5);
        let params = SchedulerParams::default();
        for kind in SchedulerKind::ALL {
            let a = dispatch(kind, &apps, &net, &params);
            let b = dispatch(kind, &apps, &net, &params);
            assert_eq!(a.assignment, b.assignment, "{kind}");
        }
    }

    #[test]
    fn scheduler_names_round_trip() {
        for kind in SchedulerKind::ALL {
            assert_eq!(kind.name().parse::<SchedulerKind>().unwrap(), kind);
        }
        assert!("nonsense".parse::<SchedulerKind>().is_err());
    }
}
