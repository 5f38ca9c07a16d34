use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use edgesched::envsim::EnvironmentSpec;
use edgesched::eval::{
    baseline_schedule, evaluate_policy, ghe, measure_sco, report, speedup, BaselineKind,
    EmissionMix, ReportOptions, RunReport,
};
use edgesched::nn::read_checkpoint;
use edgesched::runtime::{run_training, RunOptions, TrainingConfig, TransportMode, METRICS_FILE};
use edgesched::workload::WorkloadTrace;
use edgesched::error::read_text;
use edgesched::{Error, Result};

/// Train and evaluate DAG schedulers for edge/cloud servers.
#[derive(Parser)]
#[command(name = "edgesched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Environment JSON, or `desk` for the bundled three-server setup.
    #[arg(long, env = "EDGESCHED_ENV", default_value = "desk")]
    env: String,
    /// Workload JSON, `presets` or `presets:<label>`, or
    /// `jittered:<count>:<seed>`.
    #[arg(long, env = "EDGESCHED_WORKLOAD", default_value = "presets")]
    workload: String,
    /// Training config JSON; unspecified fields take the desk defaults.
    #[arg(long, env = "EDGESCHED_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "EDGESCHED_SEED")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    InProcess,
    Tcp,
}

#[derive(Subcommand)]
enum Command {
    /// Run the actor/learner loop and write checkpoint, metrics and overhead
    /// samples to --out.
    Train {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, env = "EDGESCHED_ACTORS")]
        actors: Option<usize>,
        #[arg(long, env = "EDGESCHED_ITERATIONS")]
        iterations: Option<usize>,
        #[arg(long, env = "EDGESCHED_QUEUE_DEPTH")]
        queue_depth: Option<usize>,
        #[arg(long, env = "EDGESCHED_TRANSPORT", value_enum)]
        transport: Option<Transport>,
        #[arg(long, env = "EDGESCHED_PORT")]
        port: Option<u16>,
        /// Workload for the periodic greedy evaluation.
        #[arg(long, env = "EDGESCHED_EVAL_WORKLOAD", default_value = "jittered:20:99")]
        eval_workload: String,
        #[arg(long, env = "EDGESCHED_OUT")]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, env = "EDGESCHED_CHECKPOINT")]
        checkpoint: PathBuf,
        /// Also compare against the exhaustive oracle.
        #[arg(long)]
        oracle: bool,
    },
    /// Schedule each application with a baseline.
    Baseline {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        kind: BaselineKind,
    },
    /// Emissions for an energy amount under a generation mix.
    Ghe {
        #[arg(long)]
        energy_kwh: f64,
        /// `AU`, `US`, `DE` or a mix JSON file.
        #[arg(long, env = "EDGESCHED_MIX", default_value = "US")]
        mix: String,
    },
    /// Time-to-threshold ratio of two runs.
    Speedup {
        /// Run directory or metrics file of the reference technique.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        /// Target J. There is no default: the right value depends on the
        /// environment.
        #[arg(long, allow_negative_numbers = true)]
        threshold: f64,
    },
    /// Comparison tables and charts across runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, env = "EDGESCHED_OUT")]
        out: PathBuf,
    },
}

fn load_env(spec: &str) -> Result<EnvironmentSpec> {
    if spec == "desk" {
        Ok(EnvironmentSpec::desk())
    } else {
        EnvironmentSpec::load(spec)
    }
}

fn load_workload(spec: &str) -> Result<WorkloadTrace> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| Error::Parameter(format!("bad number {s:?} in workload {spec:?}")))
    };
    match parts.as_slice() {
        ["presets"] => Ok(WorkloadTrace::presets(480)),
        ["presets", label] => Ok(WorkloadTrace::presets(num(label)? as u32)),
        ["jittered", count, seed] => Ok(WorkloadTrace::jittered_presets(
            num(count)? as usize,
            480,
            0.2,
            num(seed)?,
        )),
        _ => WorkloadTrace::load(spec),
    }
}

fn load_config(inputs: &Inputs) -> Result<TrainingConfig> {
    let mut cfg = match &inputs.config {
        Some(path) => TrainingConfig::from_json(&read_text(path)?)?,
        None => TrainingConfig::desk(),
    };
    if let Some(seed) = inputs.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let dir = if path.is_dir() {
        path.to_path_buf()
    } else if path.file_name().is_some_and(|n| n == METRICS_FILE) {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        return Err(Error::Validation(format!(
            "{}: expected a run directory or {METRICS_FILE}",
            path.display()
        )));
    };
    let run = RunReport::load(&dir)?;
    Ok(run
        .rows
        .iter()
        .filter_map(|r| r.eval_j.map(|j| (r.wall_clock_s, j)))
        .collect())
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Train {
            inputs,
            actors,
            iterations,
            queue_depth,
            transport,
            port,
            eval_workload,
            out,
        } => {
            let env = load_env(&inputs.env)?;
            let workload = load_workload(&inputs.workload)?;
            let mut cfg = load_config(&inputs)?;
            if let Some(a) = actors {
                cfg.runtime.actors = a;
            }
            if let Some(i) = iterations {
                cfg.iterations = i;
            }
            if let Some(q) = queue_depth {
                cfg.runtime.queue_depth = q;
            }
            if let Some(t) = transport {
                cfg.runtime.transport = match t {
                    Transport::InProcess => TransportMode::InProcess,
                    Transport::Tcp => TransportMode::Tcp,
                };
            }
            if let Some(p) = port {
                cfg.runtime.port = p;
            }
            if cfg.runtime.eval_every == 0 {
                cfg.runtime.eval_every = 10;
            }
            let eval = load_workload(&eval_workload)?;
            let options = RunOptions {
                out_dir: Some(out.clone()),
                eval_workload: Some(eval.clone()),
                inject_actor_panic: None,
            };
            let outcome = run_training(&env, &workload, &cfg, &options)?;
            let sco = measure_sco(&outcome.params, &env, &eval, cfg.mdp, 20, 100)?;
            RunReport::write_sco(&out, &sco)?;
            let last = outcome.metrics.last();
            Ok(json!({
                "out": out,
                "iterations": outcome.metrics.len(),
                "version": outcome.params.version,
                "final_eval_j": last.and_then(|m| m.eval_j),
                "checkpoint": outcome.checkpoint,
                "stats": outcome.stats,
            }))
        }
        Command::Eval {
            inputs,
            checkpoint,
            oracle,
        } => {
            let env = load_env(&inputs.env)?;
            let workload = load_workload(&inputs.workload)?;
            let cfg = load_config(&inputs)?;
            let params = read_checkpoint(&checkpoint)?.into_params(&cfg.network_for(&env)?)?;
            let eval = evaluate_policy(&params, &env, &workload, cfg.mdp)?;
            let mut result = json!({ "policy": eval });
            if oracle {
                let mut total = 0.0;
                for dag in &workload.apps {
                    total += baseline_schedule(BaselineKind::Oracle, dag, &env, 0)?.costs.weighted;
                }
                let mean = total / workload.apps.len() as f64;
                result["oracle_j"] = json!(mean);
                result["ratio"] = json!(eval.weighted / mean);
            }
            Ok(result)
        }
        Command::Baseline { inputs, kind } => {
            let env = load_env(&inputs.env)?;
            let workload = load_workload(&inputs.workload)?;
            let seed = inputs.seed.unwrap_or(0);
            let mut apps = Vec::new();
            let mut total = 0.0;
            for (i, dag) in workload.apps.iter().enumerate() {
                let r = baseline_schedule(kind, dag, &env, seed.wrapping_add(i as u64))?;
                total += r.costs.weighted;
                apps.push(json!({
                    "app": i,
                    "assignment": r.assignment,
                    "T": r.costs.response_time,
                    "E": r.costs.energy,
                    "F": r.costs.monetary,
                    "J": r.costs.weighted,
                }));
            }
            Ok(json!({ "kind": kind, "apps": apps, "mean_j": total / workload.apps.len() as f64 }))
        }
        Command::Ghe { energy_kwh, mix } => {
            let m = if Path::new(&mix).is_file() {
                EmissionMix::load(&mix)?
            } else {
                EmissionMix::preset(&mix)?
            };
            Ok(json!({ "energy_kwh": energy_kwh, "region": m.region, "kg_co2e": ghe(energy_kwh, &m)? }))
        }
        Command::Speedup {
            reference,
            candidate,
            threshold,
        } => {
            let r = curve(&reference)?;
            let c = curve(&candidate)?;
            Ok(json!({ "threshold": threshold, "result": speedup(&r, &c, threshold)? }))
        }
        Command::Report { runs, threshold, out } => {
            let options = ReportOptions {
                threshold,
                ..ReportOptions::default()
            };
            let summary = report(&runs, &out, &options)?;
            Ok(json!({ "runs": summary.runs, "files": summary.files }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EDGESCHED_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
