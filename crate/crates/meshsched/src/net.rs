//! Random mesh topology with fixed multi-hop routes.
//!
//! Nodes are placed uniformly in a square area and linked whenever they are
//! within communication range. Routes are static: for every ordered pair the
//! graph stores the simple path minimizing per-MB transmission time
//! (`Σ 1/rate` over hops), with ties broken by fewer hops, then lower path
//! BER, then lexicographically smaller node sequence. Transfer time is the
//! byte load divided by each hop's rate, summed; path BER is the worst hop.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("no connected placement found after {0} attempts")]
    ConnectivityFailure(usize),
    #[error("malformed topology: {0}")]
    Malformed(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("no route from node {0} to node {1}")]
    Unreachable(NodeId, NodeId),
}

/// Per-node computing capacity, one component per resource type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    /// CPU frequency, Gcycles/s.
    pub cpu: f64,
    /// GPU frequency, Gcycles/s.
    pub gpu: f64,
    /// I/O rate, MB/s.
    pub io: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeNode {
    pub id: NodeId,
    /// Position in meters.
    pub x: f64,
    pub y: f64,
    pub capacity: Capacity,
    /// True when this node generates an application this period.
    pub is_app_node: bool,
}

/// Undirected link; stored once per node pair, symmetric by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub rate_mbps: f64,
    pub ber: f64,
}

/// A fixed simple path, stored as link indices. Empty when src == dst.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Route {
    pub hops: Vec<usize>,
}

/// Network-wide arithmetic means used by the priority estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averages {
    pub rate_mbps: f64,
    pub capacity: Capacity,
    pub ber: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub node_count: usize,
    /// Side of the square deployment area, meters.
    pub area_side_m: f64,
    pub comm_range_m: f64,
    /// Uniform range for every capacity component (Gcycles/s or MB/s).
    pub capacity_range: (f64, f64),
    pub rate_range_mbps: (f64, f64),
    pub ber_set: Vec<f64>,
    /// Placement re-draws allowed before giving up on connectivity.
    pub max_placement_attempts: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            node_count: 40,
            area_side_m: 1000.0,
            comm_range_m: 500.0,
            capacity_range: (5.0, 10.0),
            rate_range_mbps: (1.0, 20.0),
            ber_set: vec![1e-4, 1e-5, 1e-6, 1e-7],
            max_placement_attempts: 100,
        }
    }
}

impl NetworkConfig {
    fn validate(&self) -> Result<(), NetError> {
        if self.node_count < 2 {
            return Err(NetError::InvalidConfig("node_count must be >= 2".into()));
        }
        if !(self.area_side_m > 0.0) || !(self.comm_range_m > 0.0) {
            return Err(NetError::InvalidConfig("area and range must be positive".into()));
        }
        for (name, (lo, hi)) in [
            ("capacity_range", self.capacity_range),
            ("rate_range_mbps", self.rate_range_mbps),
        ] {
            if !(lo > 0.0) || hi < lo {
                return Err(NetError::InvalidConfig(format!("{name} must be positive and ordered")));
            }
        }
        if self.ber_set.is_empty() {
            return Err(NetError::InvalidConfig("ber_set must be nonempty".into()));
        }
        if self.ber_set.iter().any(|&b| !(0.0..1.0).contains(&b)) {
            return Err(NetError::InvalidConfig("ber values must lie in [0,1)".into()));
        }
        if self.max_placement_attempts == 0 {
            return Err(NetError::InvalidConfig("max_placement_attempts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Immutable after construction; safe to share across experiment workers.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    pub nodes: Vec<ComputeNode>,
    pub links: Vec<Link>,
    /// Link index by unordered node pair.
    adjacency: Vec<Vec<Option<usize>>>,
    /// Fixed route for every ordered pair; `routes[src][dst]`.
    routes: Vec<Vec<Route>>,
    averages: Averages,
}

/// Serialized form of a topology: nodes and links only, derived state
/// (routes, averages) is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub f_cpu: f64,
    pub f_gpu: f64,
    pub io: f64,
    pub is_app_node: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkDoc {
    pub a: usize,
    pub b: usize,
    pub rate_mbps: f64,
    pub ber: f64,
}

impl NetworkGraph {
    /// Build a graph from explicit nodes and links, deriving adjacency,
    /// routes and averages. Fails on malformed input or a disconnected graph.
    pub fn from_parts(nodes: Vec<ComputeNode>, links: Vec<Link>) -> Result<Self, NetError> {
        let n = nodes.len();
        if n < 2 {
            return Err(NetError::Malformed("need at least two nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(NetError::Malformed(format!("node at position {i} has id {}", node.id)));
            }
            let c = node.capacity;
            if !(c.cpu > 0.0 && c.gpu > 0.0 && c.io > 0.0) {
                return Err(NetError::Malformed(format!("node {i} has a non-positive capacity")));
            }
        }
        let mut adjacency = vec![vec![None; n]; n];
        for (li, link) in links.iter().enumerate() {
            if link.a >= n || link.b >= n || link.a == link.b {
                return Err(NetError::Malformed(format!("link {li} has bad endpoints")));
            }
            if !(link.rate_mbps > 0.0) {
                return Err(NetError::Malformed(format!("link {li} has non-positive rate")));
            }
            if !(0.0..1.0).contains(&link.ber) {
                return Err(NetError::Malformed(format!("link {li} has ber outside [0,1)")));
            }
            if adjacency[link.a][link.b].is_some() {
                return Err(NetError::Malformed(format!("duplicate link between {} and {}", link.a, link.b)));
            }
            adjacency[link.a][link.b] = Some(li);
            adjacency[link.b][link.a] = Some(li);
        }
        if !connected(n, &adjacency) {
            return Err(NetError::Disconnected);
        }
        let routes = compute_routes(n, &links, &adjacency)?;
        let averages = compute_averages(&nodes, &links);
        Ok(Self { nodes, links, adjacency, routes, averages })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// The fixed route for an ordered pair; empty when `src == dst`.
    pub fn route(&self, src: NodeId, dst: NodeId) -> &Route {
        &self.routes[src][dst]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.adjacency[a][b].map(|li| &self.links[li])
    }

    pub fn averages(&self) -> Averages {
        self.averages
    }

    /// Transfer time in seconds for `mb` megabytes along `route`.
    pub fn transmission_time(&self, route: &Route, mb: f64) -> f64 {
        route.hops.iter().map(|&li| mb / self.links[li].rate_mbps).sum()
    }

    /// Worst-hop bit error rate along `route`; 0 for the empty route.
    pub fn path_ber(&self, route: &Route) -> f64 {
        route.hops.iter().map(|&li| self.links[li].ber).fold(0.0, f64::max)
    }

    /// Node ids flagged as application owners, ascending.
    pub fn app_node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.is_app_node).map(|n| n.id).collect()
    }

    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id,
                    x: n.x,
                    y: n.y,
                    f_cpu: n.capacity.cpu,
                    f_gpu: n.capacity.gpu,
                    io: n.capacity.io,
                    is_app_node: n.is_app_node,
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| LinkDoc { a: l.a, b: l.b, rate_mbps: l.rate_mbps, ber: l.ber })
                .collect(),
        }
    }

    pub fn from_doc(doc: &TopologyDoc) -> Result<Self, NetError> {
        let nodes = doc
            .nodes
            .iter()
            .map(|n| ComputeNode {
                id: n.id,
                x: n.x,
                y: n.y,
                capacity: Capacity { cpu: n.f_cpu, gpu: n.f_gpu, io: n.io },
                is_app_node: n.is_app_node,
            })
            .collect();
        let links = doc
            .links
            .iter()
            .map(|l| Link { a: l.a, b: l.b, rate_mbps: l.rate_mbps, ber: l.ber })
            .collect();
        Self::from_parts(nodes, links)
    }
}

/// Draw a connected random mesh. Node positions are uniform in the square
/// area; every pair within communication range gets a link with rate uniform
/// in `rate_range_mbps` and BER uniform over `ber_set`. Placement is redrawn
/// (with a derived sub-seed) until the graph is connected, up to
/// `max_placement_attempts` times. Deterministic per `(cfg, seed)`.
pub fn build_random_network(cfg: &NetworkConfig, seed_value: u64) -> Result<NetworkGraph, NetError> {
    cfg.validate()?;
    for attempt in 0..cfg.max_placement_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &[attempt as u64]));
        let n = cfg.node_count;
        let nodes: Vec<ComputeNode> = (0..n)
            .map(|id| ComputeNode {
                id,
                x: rng.gen_range(0.0..cfg.area_side_m),
                y: rng.gen_range(0.0..cfg.area_side_m),
                capacity: Capacity {
                    cpu: rng.gen_range(cfg.capacity_range.0..cfg.capacity_range.1),
                    gpu: rng.gen_range(cfg.capacity_range.0..cfg.capacity_range.1),
                    io: rng.gen_range(cfg.capacity_range.0..cfg.capacity_range.1),
                },
                is_app_node: false,
            })
            .collect();
        let mut links = Vec::new();
        let mut adjacency = vec![vec![None; n]; n];
        for a in 0..n {
            for b in (a + 1)..n {
                let dx = nodes[a].x - nodes[b].x;
                let dy = nodes[a].y - nodes[b].y;
                if (dx * dx + dy * dy).sqrt() <= cfg.comm_range_m {
                    let rate = rng.gen_range(cfg.rate_range_mbps.0..cfg.rate_range_mbps.1);
                    let ber = *cfg.ber_set.choose(&mut rng).expect("nonempty ber set");
                    adjacency[a][b] = Some(links.len());
                    adjacency[b][a] = Some(links.len());
                    links.push(Link { a, b, rate_mbps: rate, ber });
                }
            }
        }
        if connected(n, &adjacency) {
            let routes = compute_routes(n, &links, &adjacency)?;
            let averages = compute_averages(&nodes, &links);
            return Ok(NetworkGraph { nodes, links, adjacency, routes, averages });
        }
    }
    Err(NetError::ConnectivityFailure(cfg.max_placement_attempts))
}

fn connected(n: usize, adjacency: &[Vec<Option<usize>>]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for (w, e) in adjacency[v].iter().enumerate() {
            if e.is_some() && !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

fn compute_averages(nodes: &[ComputeNode], links: &[Link]) -> Averages {
    let nl = links.len().max(1) as f64;
    let nn = nodes.len() as f64;
    Averages {
        rate_mbps: links.iter().map(|l| l.rate_mbps).sum::<f64>() / nl,
        ber: links.iter().map(|l| l.ber).sum::<f64>() / nl,
        capacity: Capacity {
            cpu: nodes.iter().map(|n| n.capacity.cpu).sum::<f64>() / nn,
            gpu: nodes.iter().map(|n| n.capacity.gpu).sum::<f64>() / nn,
            io: nodes.iter().map(|n| n.capacity.io).sum::<f64>() / nn,
        },
    }
}

/// Route search label, ordered by the tie-break chain:
/// per-MB time, hop count, path BER, lexicographic node sequence.
#[derive(Clone, Debug)]
struct RouteLabel {
    cost: f64,
    hops: u32,
    ber: f64,
    /// Node sequence after the source.
    path: Vec<NodeId>,
}

impl RouteLabel {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.hops.cmp(&other.hops))
            .then(self.ber.total_cmp(&other.ber))
            .then(self.path.cmp(&other.path))
    }
}

struct HeapEntry {
    label: RouteLabel,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest label.
        other
            .label
            .cmp_key(&self.label)
            .then(other.node.cmp(&self.node))
    }
}

/// Dijkstra per source under the composite label order. Edge costs are
/// strictly positive (1/rate), so the first settled label per node is final.
fn compute_routes(
    n: usize,
    links: &[Link],
    adjacency: &[Vec<Option<usize>>],
) -> Result<Vec<Vec<Route>>, NetError> {
    let mut all = Vec::with_capacity(n);
    for src in 0..n {
        let mut best: Vec<Option<RouteLabel>> = vec![None; n];
        let mut settled = vec![false; n];
        let start = RouteLabel { cost: 0.0, hops: 0, ber: 0.0, path: Vec::new() };
        best[src] = Some(start.clone());
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry { label: start, node: src });
        while let Some(HeapEntry { label, node }) = heap.pop() {
            if settled[node] {
                continue;
            }
            settled[node] = true;
            for (next, entry) in adjacency[node].iter().enumerate() {
                let Some(&li) = entry.as_ref() else { continue };
                if settled[next] {
                    continue;
                }
                let link = &links[li];
                let mut path = label.path.clone();
                path.push(next);
                let cand = RouteLabel {
                    cost: label.cost + 1.0 / link.rate_mbps,
                    hops: label.hops + 1,
                    ber: label.ber.max(link.ber),
                    path,
                };
                let improves = match &best[next] {
                    None => true,
                    Some(b) => cand.cmp_key(b) == Ordering::Less,
                };
                if improves {
                    best[next] = Some(cand.clone());
                    heap.push(HeapEntry { label: cand, node: next });
                }
            }
        }
        let mut row = Vec::with_capacity(n);
        for dst in 0..n {
            let label = best[dst].as_ref().ok_or(NetError::Unreachable(src, dst))?;
            let mut hops = Vec::with_capacity(label.path.len());
            let mut prev = src;
            for &next in &label.path {
                hops.push(adjacency[prev][next].expect("path uses existing links"));
                prev = next;
            }
            row.push(Route { hops });
        }
        all.push(row);
    }
    Ok(all)
}
