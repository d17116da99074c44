//! Command implementations: run a study, write its artifacts.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::artifacts::{
    ensure_dir, read_jsonl, records_to_csv, write_bytes, write_json, write_jsonl,
    write_trajectory, PolicyFile, StepRecord,
};
use crate::config::{self, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::study::{self, RolloutMetrics};

#[derive(Debug, Parser)]
#[command(name = "qsplan", version, about = "Quasi-static dual-arm insertion planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (TOML); the nominal preset when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replaces `bbo.seed` and `scenario.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; replaces `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted-path override, e.g. `world.friction.handle=0.05`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Friction,
    Chamfer,
    StabilityAblation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy: policy.json, training_log.jsonl, scenarios.json, summary.json.
    Train(Common),
    /// Execute a stored policy in the configured world.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Base against robust training per chamfer ratio.
    Compare(Common),
    /// Friction, chamfer or stability-ablation study.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Policy for the chamfer axis; trained from the config when absent.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Convert a trajectory JSON-lines file to csv or json.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Output file; next to the input when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved config as TOML.
    Config(Common),
}

pub fn resolve(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = config::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.bbo.seed = seed;
        cfg.scenario.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command; the returned text is printed on success.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Train(c) => train(&resolve(&c)?),
        Command::Rollout { common, policy } => rollout(&resolve(&common)?, &policy),
        Command::Compare(c) => compare(&resolve(&c)?),
        Command::Sweep {
            common,
            axis,
            policy,
        } => sweep(&resolve(&common)?, axis, policy.as_deref()),
        Command::Export { input, format, out } => export(&input, &format, out.as_deref()),
        Command::Config(c) => Ok(resolve(&c)?.to_toml()),
    }
}

fn prepare(cfg: &ExperimentConfig) -> CliResult<&Path> {
    let dir = cfg.output.dir.as_path();
    ensure_dir(dir)?;
    write_bytes(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(dir)
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: usize,
    best_cost: f64,
    breakdown: qsplan_core::CostBreakdown,
    nominal: RolloutMetrics,
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<String> {
    let dir = prepare(cfg)?;
    let t = study::train_policy(cfg)?;
    let (traj, nominal) = study::rollout_policy(cfg, &t.policy, None, cfg.rollout.strict_slip);
    write_json(&dir.join("policy.json"), &t.policy)?;
    write_jsonl(&dir.join("training_log.jsonl"), &t.history)?;
    write_json(&dir.join("scenarios.json"), &t.scenarios)?;
    write_trajectory(dir, "nominal_trajectory", &traj)?;
    let summary = TrainSummary {
        iterations: t.history.len(),
        best_cost: t.best_cost,
        breakdown: t.breakdown,
        nominal,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(format!(
        "trained {} iterations, best cost {:.6}, nominal success {}",
        summary.iterations, summary.best_cost, nominal.report.success
    ))
}

pub fn rollout(cfg: &ExperimentConfig, policy_path: &Path) -> CliResult<String> {
    let policy = PolicyFile::read(policy_path)?;
    let dir = prepare(cfg)?;
    let (traj, m) = study::rollout_policy(cfg, &policy, None, cfg.rollout.strict_slip);
    write_trajectory(dir, "trajectory", &traj)?;
    write_json(&dir.join("metrics.json"), &m)?;
    Ok(format!(
        "success {}, depth {:.3}, tilt {:.2} deg, slips {}, unstable steps {}",
        m.report.success,
        m.report.depth_fraction,
        m.report.tilt.to_degrees(),
        m.report.slip_events,
        m.report.instability_events
    ))
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let err = |e: csv::Error| CliError::Config(format!("csv encoding: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Config(format!("csv encoding: {e}")))
}

pub fn compare(cfg: &ExperimentConfig) -> CliResult<String> {
    let dir = prepare(cfg)?;
    let report = study::compare(cfg)?;
    for (ratio, base, robust) in &report.policies {
        write_json(&dir.join(format!("policies/base_{ratio}.json")), base)?;
        write_json(&dir.join(format!("policies/robust_{ratio}.json")), robust)?;
    }
    write_json(&dir.join("compare.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.chamfer_ratio.to_string(),
                r.base_success.to_string(),
                r.robust_success.to_string(),
                r.evaluations.to_string(),
            ]
        })
        .collect();
    let header = ["chamfer_ratio", "base_success", "robust_success", "evaluations"];
    write_bytes(&dir.join("compare.csv"), &csv_table(&header, &rows)?)?;
    Ok(report
        .rows
        .iter()
        .map(|r| {
            format!(
                "ratio {}: base {}/{} robust {}/{}",
                r.chamfer_ratio, r.base_success, r.evaluations, r.robust_success, r.evaluations
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, policy: Option<&Path>) -> CliResult<String> {
    // Read the policy before creating any output.
    let given = policy.map(PolicyFile::read).transpose()?;
    let dir = prepare(cfg)?;
    match axis {
        SweepAxis::Friction => {
            let r = study::friction_sweep(cfg)?;
            for (mu, p) in &r.policies {
                write_json(&dir.join(format!("policies/friction_{mu}.json")), p)?;
            }
            write_json(&dir.join("sweep_friction.json"), &r)?;
            let rows: Vec<Vec<String>> = r
                .rows
                .iter()
                .map(|x| {
                    vec![
                        x.mu.to_string(),
                        x.mean_stretch.to_string(),
                        x.mean_force.to_string(),
                        x.slip_events.to_string(),
                        u8::from(x.success).to_string(),
                    ]
                })
                .collect();
            let header = ["mu", "mean_stretch", "mean_force", "slip_events", "success"];
            write_bytes(&dir.join("sweep_friction.csv"), &csv_table(&header, &rows)?)?;
            let mut lines: Vec<String> = r
                .rows
                .iter()
                .map(|x| format!("mu {}: mean stretch {:.4} m, mean force {:.3} N", x.mu, x.mean_stretch, x.mean_force))
                .collect();
            lines.extend(r.cross.iter().map(|c| {
                format!(
                    "policy mu {} in world mu {}: slips {}, success {}",
                    c.policy_mu, c.world_mu, c.slip_events, c.success
                )
            }));
            Ok(lines.join("\n"))
        }
        SweepAxis::Chamfer => {
            let policy = match given {
                Some(p) => p,
                None => {
                    let t = study::train_policy(cfg)?;
                    write_json(&dir.join("policy.json"), &t.policy)?;
                    t.policy
                }
            };
            let rows = study::chamfer_sweep(cfg, &policy)?;
            write_json(&dir.join("sweep_chamfer.json"), &rows)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|x| vec![x.chamfer_ratio.to_string(), x.success.to_string(), x.evaluations.to_string()])
                .collect();
            write_bytes(
                &dir.join("sweep_chamfer.csv"),
                &csv_table(&["chamfer_ratio", "success", "evaluations"], &table)?,
            )?;
            Ok(rows
                .iter()
                .map(|x| format!("ratio {}: {}/{}", x.chamfer_ratio, x.success, x.evaluations))
                .collect::<Vec<_>>()
                .join("\n"))
        }
        SweepAxis::StabilityAblation => {
            let r = study::stability_ablation(cfg)?;
            for (a, p) in &r.policies {
                write_json(&dir.join(format!("policies/alpha4_{a}.json")), p)?;
            }
            write_json(&dir.join("sweep_stability.json"), &r)?;
            let table: Vec<Vec<String>> = r
                .rows
                .iter()
                .map(|x| {
                    vec![
                        x.alpha4.to_string(),
                        x.instability_events.to_string(),
                        x.crossing_events.to_string(),
                        u8::from(x.success).to_string(),
                    ]
                })
                .collect();
            let header = ["alpha4", "instability_events", "crossing_events", "success"];
            write_bytes(&dir.join("sweep_stability.csv"), &csv_table(&header, &table)?)?;
            Ok(r.rows
                .iter()
                .map(|x| {
                    format!(
                        "alpha4 {}: unstable steps {}, crossed steps {}",
                        x.alpha4, x.instability_events, x.crossing_events
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"))
        }
    }
}

pub fn export(input: &Path, format: &str, out: Option<&Path>) -> CliResult<String> {
    let ext = match format {
        "csv" => "csv",
        "json" => "json",
        other => return Err(CliError::Format(other.to_string())),
    };
    let records: Vec<StepRecord> = read_jsonl(input)?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension(ext));
    if ext == "csv" {
        write_bytes(&target, &records_to_csv(&records)?)?;
    } else {
        write_json(&target, &records)?;
    }
    Ok(format!("wrote {} rows to {}", records.len(), target.display()))
}
