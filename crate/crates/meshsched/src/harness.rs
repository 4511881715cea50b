//! Experiment harness: seeded instance construction, sweep execution, and
//! CSV emission.
//!
//! One master seed per replication drives everything through tagged
//! sub-seeds (network, app-node sampling, per-app generation), so the
//! generated instances never depend on which schedulers run or on row
//! execution order. Rows are embarrassingly parallel; the writer sorts
//! before emitting, so a sweep's CSV is byte-identical across runs.
//! Wall-clock timings and candidate-evaluation counters go to a separate
//! optional file to keep the results file reproducible.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{generate_app, AppConfig, AppDag, AppError};
use crate::baselines::{dispatch, SchedulerKind};
use crate::engine::{evaluate, EvalError, MetricsRecord};
use crate::hmtsa::SchedulerParams;
use crate::net::{build_random_network, NetError, NetworkGraph};
use crate::qoe::CostParams;
use crate::seed;

const PURPOSE_NETWORK: u64 = 1;
const PURPOSE_APP_NODES: u64 = 2;
const PURPOSE_APPS: u64 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no rows to summarize")]
    EmptyInput,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    AppCount,
    NodeCount,
    /// Fraction of applications with soft thresholds; hard_ratio is its
    /// complement.
    SoftRatio,
    K,
    O,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: crate::net::NetworkConfig,
    pub apps: AppConfig,
    pub cost: CostParams,
    pub scheduler: SchedulerParamsCfg,
    pub schedulers: Vec<SchedulerKind>,
    pub seeds: Vec<u64>,
    pub sweep: SweepSpec,
}

/// Scheduler knobs as they appear in config files (cost params live in
/// their own section).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SchedulerParamsCfg {
    pub k: f64,
    pub o: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: crate::net::NetworkConfig::default(),
            apps: AppConfig::default(),
            cost: CostParams::default(),
            scheduler: SchedulerParamsCfg { k: 0.25, o: 1.0 },
            schedulers: SchedulerKind::ALL.to_vec(),
            seeds: (0..20).collect(),
            sweep: SweepSpec { axis: SweepAxis::AppCount, values: vec![15.0, 20.0, 25.0, 30.0, 35.0] },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.sweep.values.is_empty() {
            return Err(HarnessError::InvalidConfig("sweep.values must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("seeds must be nonempty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::InvalidConfig("seeds must be distinct".into()));
        }
        if self.schedulers.is_empty() {
            return Err(HarnessError::InvalidConfig("schedulers must be nonempty".into()));
        }
        for (name, v) in [("k", self.scheduler.k), ("o", self.scheduler.o)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(HarnessError::InvalidConfig(format!("{name} must lie in (0,1]")));
            }
        }
        Ok(())
    }

    pub fn scheduler_params(&self) -> SchedulerParams {
        SchedulerParams { k: self.scheduler.k, o: self.scheduler.o, cost: self.cost }
    }
}

/// Resolve one sweep value into a concrete configuration.
pub fn apply_sweep(cfg: &ExperimentConfig, value: f64) -> ExperimentConfig {
    let mut out = cfg.clone();
    match cfg.sweep.axis {
        SweepAxis::AppCount => out.apps.count = value as usize,
        SweepAxis::NodeCount => out.network.node_count = value as usize,
        SweepAxis::SoftRatio => out.apps.hard_ratio = 1.0 - value,
        SweepAxis::K => out.scheduler.k = value,
        SweepAxis::O => out.scheduler.o = value,
    }
    out
}

/// A generated problem instance: the network with its App Nodes flagged,
/// plus one application per App Node (ascending owner id).
#[derive(Debug, Clone)]
pub struct Instance {
    pub network: NetworkGraph,
    pub apps: Vec<AppDag>,
}

/// Build the instance for `(cfg, seed)`. The `context` tag separates RNG
/// streams between sweep points; sweeps pass the sweep value's bits.
pub fn build_instance(cfg: &ExperimentConfig, seed_value: u64, context: u64) -> Result<Instance, HarnessError> {
    if cfg.apps.count == 0 {
        return Err(HarnessError::InvalidConfig("apps.count must be >= 1".into()));
    }
    if cfg.apps.count > cfg.network.node_count {
        return Err(HarnessError::InvalidConfig(format!(
            "apps.count = {} exceeds node_count = {}",
            cfg.apps.count, cfg.network.node_count
        )));
    }
    let mut network =
        build_random_network(&cfg.network, seed::derive(seed_value, &[context, PURPOSE_NETWORK]))?;
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &[context, PURPOSE_APP_NODES]));
    let mut owners: Vec<usize> =
        rand::seq::index::sample(&mut rng, network.node_count(), cfg.apps.count).into_vec();
    owners.sort_unstable();
    let mut apps = Vec::with_capacity(owners.len());
    for (i, &owner) in owners.iter().enumerate() {
        network.nodes[owner].is_app_node = true;
        let app_seed = seed::derive(seed_value, &[context, PURPOSE_APPS, i as u64]);
        apps.push(generate_app(&cfg.apps, app_seed, owner)?);
    }
    Ok(Instance { network, apps })
}

/// One experiment row: a `(sweep value, scheduler, seed)` triple with its
/// metrics, or an error message when the run failed.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub metrics: Option<MetricsRecord>,
    pub error: Option<String>,
    /// Wall-clock milliseconds spent scheduling (not in the results CSV).
    pub wall_ms: f64,
    pub candidate_evals: u64,
    pub rounds: usize,
}

/// Run one `(sweep value, seed, scheduler)` cell.
pub fn run_row(cfg: &ExperimentConfig, value: f64, seed_value: u64, kind: SchedulerKind) -> ResultRow {
    let resolved = apply_sweep(cfg, value);
    let started = Instant::now();
    let outcome = build_instance(&resolved, seed_value, value.to_bits()).and_then(|instance| {
        let run = dispatch(kind, &instance.apps, &instance.network, &resolved.scheduler_params());
        let (_, metrics) = evaluate(&run.assignment, &instance.network, &instance.apps, &resolved.cost)?;
        Ok((metrics, run.stats))
    });
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((metrics, stats)) => ResultRow {
            sweep_value: value,
            scheduler: kind,
            seed: seed_value,
            metrics: Some(metrics),
            error: None,
            wall_ms,
            candidate_evals: stats.candidate_evals,
            rounds: stats.rounds,
        },
        Err(e) => ResultRow {
            sweep_value: value,
            scheduler: kind,
            seed: seed_value,
            metrics: None,
            error: Some(e.to_string()),
            wall_ms,
            candidate_evals: 0,
            rounds: 0,
        },
    }
}

/// Run the full sweep: every `(sweep value, seed)` instance through every
/// configured scheduler. Failed rows are recorded, not fatal. Rows come
/// back sorted by `(sweep value, scheduler name, seed)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(f64, u64, SchedulerKind)> = cfg
        .sweep
        .values
        .iter()
        .flat_map(|&v| {
            cfg.seeds.iter().flat_map(move |&s| cfg.schedulers.iter().map(move |&k| (v, s, k)))
        })
        .collect();
    let mut rows: Vec<ResultRow> =
        jobs.par_iter().map(|&(v, s, k)| run_row(cfg, v, s, k)).collect();
    for row in rows.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "row (value {}, scheduler {}, seed {}) failed: {}",
            row.sweep_value,
            row.scheduler,
            row.seed,
            row.error.as_deref().unwrap_or("")
        );
    }
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.scheduler.name().cmp(b.scheduler.name()))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

pub const CSV_HEADER: &str = "sweep_value,scheduler,seed,avg_completion_s,deadline_ratio,accuracy_ratio,avg_latency_cost,avg_accuracy_cost,avg_qoe_cost";

/// Write the results CSV. Failed rows keep their key columns with empty
/// metric cells.
pub fn write_csv<W: Write>(rows: &[ResultRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        match &r.metrics {
            Some(m) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.sweep_value,
                r.scheduler,
                r.seed,
                m.avg_completion_s,
                m.deadline_ratio,
                m.accuracy_ratio,
                m.avg_latency_cost,
                m.avg_accuracy_cost,
                m.avg_qoe_cost
            )?,
            None => writeln!(w, "{},{},{},,,,,,", r.sweep_value, r.scheduler, r.seed)?,
        }
    }
    Ok(())
}

/// Write the wall-clock / work-counter side file.
pub fn write_timing_csv<W: Write>(rows: &[ResultRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "sweep_value,scheduler,seed,wall_ms,candidate_evals,rounds")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.sweep_value, r.scheduler, r.seed, r.wall_ms, r.candidate_evals, r.rounds
        )?;
    }
    Ok(())
}

/// Mean and 95% half-width (normal approximation) per metric for one
/// `(sweep value, scheduler)` group.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub scheduler: SchedulerKind,
    pub n: usize,
    pub mean: MetricsRecord,
    pub ci95: MetricsRecord,
}

fn metric_fields(m: &MetricsRecord) -> [f64; 6] {
    [
        m.avg_completion_s,
        m.deadline_ratio,
        m.accuracy_ratio,
        m.avg_latency_cost,
        m.avg_accuracy_cost,
        m.avg_qoe_cost,
    ]
}

fn record_from(fields: [f64; 6]) -> MetricsRecord {
    MetricsRecord {
        avg_completion_s: fields[0],
        deadline_ratio: fields[1],
        accuracy_ratio: fields[2],
        avg_latency_cost: fields[3],
        avg_accuracy_cost: fields[4],
        avg_qoe_cost: fields[5],
    }
}

/// Group successful rows by `(sweep value, scheduler)` and average them.
/// Rows must already be sorted, as produced by [`run_experiment`].
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>, HarnessError> {
    let ok: Vec<&ResultRow> = rows.iter().filter(|r| r.metrics.is_some()).collect();
    if ok.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut group: Vec<&ResultRow> = Vec::new();
    let flush = |group: &mut Vec<&ResultRow>, out: &mut Vec<SummaryRow>| {
        if group.is_empty() {
            return;
        }
        let n = group.len();
        let mut mean = [0.0f64; 6];
        for r in group.iter() {
            let f = metric_fields(r.metrics.as_ref().unwrap());
            for i in 0..6 {
                mean[i] += f[i];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut half = [0.0f64; 6];
        if n > 1 {
            let mut var = [0.0f64; 6];
            for r in group.iter() {
                let f = metric_fields(r.metrics.as_ref().unwrap());
                for i in 0..6 {
                    var[i] += (f[i] - mean[i]).powi(2);
                }
            }
            for i in 0..6 {
                var[i] /= (n - 1) as f64;
                half[i] = 1.96 * (var[i] / n as f64).sqrt();
            }
        }
        out.push(SummaryRow {
            sweep_value: group[0].sweep_value,
            scheduler: group[0].scheduler,
            n,
            mean: record_from(mean),
            ci95: record_from(half),
        });
        group.clear();
    };
    for r in ok {
        if let Some(first) = group.first() {
            if first.sweep_value.to_bits() != r.sweep_value.to_bits()
                || first.scheduler != r.scheduler
            {
                flush(&mut group, &mut out);
            }
        }
        group.push(r);
    }
    flush(&mut group, &mut out);
    Ok(out)
}

/// Self-contained instance document consumed by the `oracle` subcommand and
/// emitted by `gen-apps`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub network: crate::net::TopologyDoc,
    pub apps: Vec<AppDag>,
    pub cost: CostParams,
    pub scheduler: SchedulerParamsCfg,
}

impl InstanceDoc {
    pub fn from_instance(instance: &Instance, cfg: &ExperimentConfig) -> Self {
        Self {
            network: instance.network.to_doc(),
            apps: instance.apps.clone(),
            cost: cfg.cost,
            scheduler: cfg.scheduler,
        }
    }

    pub fn restore(&self) -> Result<Instance, HarnessError> {
        Ok(Instance { network: NetworkGraph::from_doc(&self.network)?, apps: self.apps.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            network: crate::net::NetworkConfig { node_count: 8, ..Default::default() },
            apps: AppConfig {
                count: 3,
                task_count_choices: vec![3, 4],
                ..AppConfig::default()
            },
            schedulers: vec![SchedulerKind::Hmtsa, SchedulerKind::Daas],
            seeds: vec![1, 2],
            sweep: SweepSpec { axis: SweepAxis::AppCount, values: vec![2.0, 3.0] },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn sweep_produces_one_row_per_cell() {
        let cfg = tiny_config();
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.metrics.is_some()));
        // Sorted by (value, scheduler, seed).
        let keys: Vec<(u64, &str, u64)> =
            rows.iter().map(|r| (r.sweep_value.to_bits(), r.scheduler.name(), r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn csv_is_byte_identical_across_runs() {
        let cfg = tiny_config();
        let mut a = Vec::new();
        write_csv(&run_experiment(&cfg).unwrap(), &mut a).unwrap();
        let mut b = Vec::new();
        write_csv(&run_experiment(&cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with(CSV_HEADER));
    }

    #[test]
    fn rows_are_independent_of_batch_execution() {
        let cfg = tiny_config();
        let rows = run_experiment(&cfg).unwrap();
        for r in &rows {
            let solo = run_row(&cfg, r.sweep_value, r.seed, r.scheduler);
            assert_eq!(solo.metrics.unwrap(), r.metrics.unwrap());
        }
    }

    #[test]
    fn instance_generation_ignores_scheduler_list() {
        let mut a = tiny_config();
        a.schedulers = vec![SchedulerKind::Hmtsa];
        let mut b = tiny_config();
        b.schedulers = SchedulerKind::ALL.to_vec();
        let ia = build_instance(&apply_sweep(&a, 3.0), 7, 3.0f64.to_bits()).unwrap();
        let ib = build_instance(&apply_sweep(&b, 3.0), 7, 3.0f64.to_bits()).unwrap();
        assert_eq!(
            serde_json::to_string(&ia.network.to_doc()).unwrap(),
            serde_json::to_string(&ib.network.to_doc()).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&ia.apps).unwrap(),
            serde_json::to_string(&ib.apps).unwrap()
        );
    }

    #[test]
    fn app_nodes_match_generated_apps() {
        let cfg = tiny_config();
        let instance = build_instance(&cfg, 5, 0).unwrap();
        let flagged = instance.network.app_node_ids();
        let owners: Vec<usize> = instance.apps.iter().map(|a| a.owner).collect();
        assert_eq!(flagged, owners);
        assert_eq!(owners.len(), 3);
    }

    #[test]
    fn sweep_axes_modify_the_right_knob() {
        let cfg = tiny_config();
        assert_eq!(apply_sweep(&cfg, 5.0).apps.count, 5);
        let mut c = cfg.clone();
        c.sweep.axis = SweepAxis::NodeCount;
        assert_eq!(apply_sweep(&c, 12.0).network.node_count, 12);
        c.sweep.axis = SweepAxis::SoftRatio;
        assert!((apply_sweep(&c, 0.25).apps.hard_ratio - 0.75).abs() < 1e-12);
        c.sweep.axis = SweepAxis::K;
        assert_eq!(apply_sweep(&c, 0.5).scheduler.k, 0.5);
        c.sweep.axis = SweepAxis::O;
        assert_eq!(apply_sweep(&c, 0.75).scheduler.o, 0.75);
    }

    #[test]
    fn summarize_handles_single_and_replicated_rows() {
        let cfg = tiny_config();
        let rows = run_experiment(&cfg).unwrap();
        let summary = summarize(&rows).unwrap();
        assert_eq!(summary.len(), 2 * 2); // (value, scheduler) pairs
        for s in &summary {
            assert_eq!(s.n, 2);
        }
        // Single row: zero-width interval, mean equals the row.
        let one = vec![rows[0].clone()];
        let s = summarize(&one).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n, 1);
        assert_eq!(s[0].mean, rows[0].metrics.unwrap());
        assert_eq!(metric_fields(&s[0].ci95), [0.0; 6]);
        // Means match an independent recomputation.
        let group: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| {
                r.sweep_value == summary[0].sweep_value && r.scheduler == summary[0].scheduler
            })
            .collect();
        let manual: f64 = group.iter().map(|r| r.metrics.unwrap().avg_qoe_cost).sum::<f64>()
            / group.len() as f64;
        assert!((summary[0].mean.avg_qoe_cost - manual).abs() < 1e-12);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![1, 1];
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::InvalidConfig(_))));
        let mut cfg = tiny_config();
        cfg.scheduler.k = 0.0;
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::InvalidConfig(_))));
        let mut cfg = tiny_config();
        cfg.apps.count = 50; // exceeds the 8-node network
        assert!(build_instance(&cfg, 1, 0).is_err());
    }

    #[test]
    fn experiment_config_json_round_trip() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(json, serde_json::to_string_pretty(&back).unwrap());
    }

    #[test]
    fn instance_doc_round_trips_through_json() {
        let cfg = tiny_config();
        let instance = build_instance(&cfg, 2, 0).unwrap();
        let doc = InstanceDoc::from_instance(&instance, &cfg);
        let json = serde_json::to_string(&doc).unwrap();
        let back: InstanceDoc = serde_json::from_str(&json).unwrap();
        let restored = back.restore().unwrap();
        assert_eq!(
            serde_json::to_string(&restored.network.to_doc()).unwrap(),
            serde_json::to_string(&instance.network.to_doc()).unwrap()
        );
        assert_eq!(restored.apps, instance.apps);
    }
}
