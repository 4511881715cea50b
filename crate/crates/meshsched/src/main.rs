//! Command-line front end: topology/instance generation, single scheduler
//! runs, experiment sweeps, and the exact oracle on tiny instances.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use meshsched::baselines::{dispatch, SchedulerKind};
use meshsched::engine::evaluate;
use meshsched::harness::{
    self, apply_sweep, build_instance, run_experiment, summarize, ExperimentConfig, InstanceDoc,
};
use meshsched::hmtsa;
use meshsched::net::build_random_network;
use meshsched::oracle::{oracle_optimum, OracleLimits};

#[derive(Parser)]
#[command(name = "meshsched", version, about = "Mesh-network QoE task scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config JSON; defaults match the built-in experiment setup.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random connected topology and print it as JSON.
    GenTopology {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a full instance (topology, App Nodes, applications).
    GenApps {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scheduler on one seeded instance and print its metrics.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        scheduler: SchedulerKind,
        #[arg(long)]
        seed: u64,
        /// Apply this sweep value before building the instance.
        #[arg(long)]
        sweep_value: Option<f64>,
        /// Include the placement sequence in the output.
        #[arg(long)]
        emit_assignment: bool,
        /// Include the per-round trace (hmtsa only).
        #[arg(long)]
        trace: bool,
    },
    /// Run the configured sweep and write the results CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Optional wall-clock / work-counter side file.
        #[arg(long)]
        timing_out: Option<PathBuf>,
        /// Also print per-(value, scheduler) means to stdout.
        #[arg(long)]
        summary: bool,
    },
    /// Exhaustive optimum of a tiny instance JSON (see `gen-apps`).
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        max_evaluations: Option<u64>,
        #[arg(long)]
        max_total_tasks: Option<usize>,
        #[arg(long)]
        max_nodes: Option<usize>,
    },
}

fn load_config(arg: &ConfigArg) -> Result<ExperimentConfig, String> {
    match &arg.config {
        None => Ok(ExperimentConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        None => {
            println!("{text}");
            Ok(())
        }
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::GenTopology { config, seed, out } => {
            let cfg = load_config(&config)?;
            let network = build_random_network(&cfg.network, seed).map_err(|e| e.to_string())?;
            let text = serde_json::to_string_pretty(&network.to_doc()).expect("serializable");
            emit(&out, &text)
        }
        Command::GenApps { config, seed, out } => {
            let cfg = load_config(&config)?;
            let instance = build_instance(&cfg, seed, 0).map_err(|e| e.to_string())?;
            let doc = InstanceDoc::from_instance(&instance, &cfg);
            let text = serde_json::to_string_pretty(&doc).expect("serializable");
            emit(&out, &text)
        }
        Command::Run { config, scheduler, seed, sweep_value, emit_assignment, trace } => {
            let base = load_config(&config)?;
            let (cfg, context) = match sweep_value {
                Some(v) => (apply_sweep(&base, v), v.to_bits()),
                None => (base, 0),
            };
            let instance = build_instance(&cfg, seed, context).map_err(|e| e.to_string())?;
            let params = cfg.scheduler_params();
            let run = if trace && scheduler == SchedulerKind::Hmtsa {
                hmtsa::schedule_traced(&instance.apps, &instance.network, &params)
            } else {
                dispatch(scheduler, &instance.apps, &instance.network, &params)
            };
            let (outcomes, metrics) =
                evaluate(&run.assignment, &instance.network, &instance.apps, &cfg.cost)
                    .map_err(|e| e.to_string())?;
            let mut doc = json!({
                "scheduler": scheduler.name(),
                "seed": seed,
                "metrics": metrics,
                "apps": outcomes,
                "stats": { "rounds": run.stats.rounds, "candidate_evals": run.stats.candidate_evals },
            });
            if emit_assignment {
                doc["assignment"] = serde_json::to_value(&run.assignment).expect("serializable");
            }
            if let Some(t) = &run.trace {
                doc["trace"] = serde_json::to_value(t).expect("serializable");
            }
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
            Ok(())
        }
        Command::Sweep { config, out, timing_out, summary } => {
            let cfg = load_config(&config)?;
            let rows = run_experiment(&cfg).map_err(|e| e.to_string())?;
            let mut buffer = Vec::new();
            harness::write_csv(&rows, &mut buffer).map_err(|e| e.to_string())?;
            fs::write(&out, &buffer).map_err(|e| format!("{}: {e}", out.display()))?;
            if let Some(path) = timing_out {
                let mut timing = Vec::new();
                harness::write_timing_csv(&rows, &mut timing).map_err(|e| e.to_string())?;
                fs::write(&path, &timing).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            eprintln!("wrote {} rows ({failed} failed) to {}", rows.len(), out.display());
            if summary {
                let rows = summarize(&rows).map_err(|e| e.to_string())?;
                println!("{}", serde_json::to_string_pretty(&rows).expect("serializable"));
            }
            Ok(())
        }
        Command::Oracle { instance, max_evaluations, max_total_tasks, max_nodes } => {
            let text =
                fs::read_to_string(&instance).map_err(|e| format!("{}: {e}", instance.display()))?;
            let doc: InstanceDoc =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", instance.display()))?;
            let restored = doc.restore().map_err(|e| e.to_string())?;
            let mut limits = OracleLimits::default();
            if let Some(v) = max_evaluations {
                limits.max_evaluations = v;
            }
            if let Some(v) = max_total_tasks {
                limits.max_total_tasks = v;
            }
            if let Some(v) = max_nodes {
                limits.max_nodes = v;
            }
            let result = oracle_optimum(&restored.apps, &restored.network, &doc.cost, &limits)
                .map_err(|e| e.to_string())?;
            let out = json!({
                "avg_qoe_cost": result.avg_qoe,
                "evaluations": result.evaluations,
                "assignment": result.assignment,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
            Ok(())
        }
    }
}
