//! Training and evaluation studies, independent of any file layout.

use serde::{Deserialize, Serialize};

use qsplan_core::optimizer::train;
use qsplan_core::scenarios::{evaluate_success, sample_scenarios};
use qsplan_core::{
    CostBreakdown, IterationRecord, ParamMatrix, Planner, Pose2, RolloutSettings, ScenarioSet,
    Simulator, SuccessReport, Trajectory, WeightMode,
};

use crate::artifacts::{PolicyFile, POLICY_VERSION};
use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Training scenarios: the estimate alone when `count == 1`, otherwise a
/// seeded draw around it.
pub fn training_scenarios(cfg: &ExperimentConfig) -> CliResult<ScenarioSet> {
    let hole = cfg.world.hole.mouth_center;
    let sc = &cfg.scenario;
    if sc.count == 1 {
        return Ok(ScenarioSet::nominal(hole));
    }
    Ok(sample_scenarios(hole, sc.sigma, sc.count, sc.seed, sc.include_nominal, sc.weight_mode)?)
}

/// True hole poses for success counts, shared by every method of a study.
pub fn evaluation_holes(cfg: &ExperimentConfig) -> CliResult<Vec<Pose2>> {
    let set = sample_scenarios(
        cfg.world.hole.mouth_center,
        cfg.scenario.sigma,
        cfg.study.evaluation_count,
        cfg.study.evaluation_seed,
        false,
        WeightMode::Uniform,
    )?;
    Ok(set.scenarios.iter().map(|s| s.hole).collect())
}

pub fn planner(cfg: &ExperimentConfig) -> CliResult<Planner> {
    Ok(Planner::new(
        cfg.world.clone(),
        cfg.weights,
        cfg.dmp,
        cfg.task,
        training_scenarios(cfg)?,
        RolloutSettings::default(),
    )?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trained {
    pub policy: PolicyFile,
    pub theta: ParamMatrix,
    pub best_cost: f64,
    /// Scenario-averaged breakdown of the returned policy.
    pub breakdown: CostBreakdown,
    pub history: Vec<IterationRecord>,
    pub scenarios: ScenarioSet,
}

pub fn train_policy(cfg: &ExperimentConfig) -> CliResult<Trained> {
    let p = planner(cfg)?;
    let out = train(&p, p.zero_theta(), &cfg.bbo)?;
    let breakdown = p.cost(&out.best_theta);
    Ok(Trained {
        policy: PolicyFile {
            version: POLICY_VERSION,
            steps: cfg.dmp.steps,
            start: p.start_pose(),
            estimated_hole: p.estimated_hole(),
            params: p.dmp_params(&out.best_theta),
        },
        theta: out.best_theta,
        best_cost: out.best_cost,
        breakdown,
        history: out.history,
        scenarios: p.scenarios.clone(),
    })
}

/// Rollout metrics beyond the success verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub report: SuccessReport,
    /// Mean spring stretch `|u_i - c_i|` over steps and handles [m].
    pub mean_stretch: f64,
    /// Mean squeeze force `|f_i|` [N].
    pub mean_force: f64,
    pub crossing_events: usize,
    pub steps: usize,
}

/// Rolls `policy` out in the config's world, whose hole pose is the true one.
pub fn rollout_policy(
    cfg: &ExperimentConfig,
    policy: &PolicyFile,
    true_hole: Option<Pose2>,
    strict_slip: bool,
) -> (Trajectory, RolloutMetrics) {
    let world = match true_hole {
        Some(h) => cfg.world.with_hole_pose(h),
        None => cfg.world.clone(),
    };
    let sim = Simulator::new(&world);
    let settings = RolloutSettings {
        duration: policy.params.duration,
        strict_slip,
    };
    let traj = sim.rollout(&policy.controls(), &policy.start, &cfg.weights, &settings);
    let report = evaluate_success(&traj, &world, &cfg.success);
    let metrics = RolloutMetrics {
        report,
        mean_stretch: traj.mean_stretch(),
        mean_force: traj.mean_force(),
        crossing_events: traj.crossing_events(),
        steps: traj.len(),
    };
    (traj, metrics)
}

/// Success reports of `policy` against each true hole, in input order.
pub fn evaluate_policy(
    cfg: &ExperimentConfig,
    policy: &PolicyFile,
    holes: &[Pose2],
) -> Vec<SuccessReport> {
    use rayon::prelude::*;
    holes
        .par_iter()
        .map(|h| rollout_policy(cfg, policy, Some(*h), cfg.rollout.strict_slip).1.report)
        .collect()
}

fn successes(reports: &[SuccessReport]) -> usize {
    reports.iter().filter(|r| r.success).count()
}

fn with_chamfer_ratio(cfg: &ExperimentConfig, ratio: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.world.hole.set_chamfer_ratio(&c.world.peg, ratio);
    c
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub chamfer_ratio: f64,
    pub base_success: usize,
    pub robust_success: usize,
    pub evaluations: usize,
    pub base_cost: f64,
    pub robust_cost: f64,
    pub base_reports: Vec<SuccessReport>,
    pub robust_reports: Vec<SuccessReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub holes: Vec<Pose2>,
    #[serde(skip)]
    pub policies: Vec<(f64, PolicyFile, PolicyFile)>,
}

/// Base (one scenario) against robust (`scenario.count` scenarios) training
/// at each chamfer ratio, both judged on the same fresh hole draws.
pub fn compare(cfg: &ExperimentConfig) -> CliResult<CompareReport> {
    let holes = evaluation_holes(cfg)?;
    let mut rows = Vec::new();
    let mut policies = Vec::new();
    for &ratio in &cfg.study.chamfer_ratios {
        let robust_cfg = with_chamfer_ratio(cfg, ratio);
        let mut base_cfg = robust_cfg.clone();
        base_cfg.scenario.count = 1;
        let base = train_policy(&base_cfg)?;
        let robust = if robust_cfg.scenario.count == 1 {
            base.clone()
        } else {
            train_policy(&robust_cfg)?
        };
        let base_reports = evaluate_policy(&robust_cfg, &base.policy, &holes);
        let robust_reports = evaluate_policy(&robust_cfg, &robust.policy, &holes);
        rows.push(CompareRow {
            chamfer_ratio: ratio,
            base_success: successes(&base_reports),
            robust_success: successes(&robust_reports),
            evaluations: holes.len(),
            base_cost: base.best_cost,
            robust_cost: robust.best_cost,
            base_reports,
            robust_reports,
        });
        policies.push((ratio, base.policy, robust.policy));
    }
    Ok(CompareReport {
        rows,
        holes,
        policies,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrictionRow {
    pub mu: f64,
    pub best_cost: f64,
    pub mean_stretch: f64,
    pub mean_force: f64,
    pub slip_events: usize,
    pub success: bool,
}

/// A policy trained at `policy_mu` executed with strict slip at `world_mu`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossTest {
    pub policy_mu: f64,
    pub world_mu: f64,
    pub slip_events: usize,
    pub terminated_early: bool,
    pub success: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrictionReport {
    pub rows: Vec<FrictionRow>,
    pub cross: Vec<CrossTest>,
    #[serde(skip)]
    pub policies: Vec<(f64, PolicyFile)>,
}

pub fn friction_sweep(cfg: &ExperimentConfig) -> CliResult<FrictionReport> {
    let mut rows = Vec::new();
    let mut policies = Vec::new();
    for &mu in &cfg.study.friction_values {
        let mut c = cfg.clone();
        c.world.friction.handle = mu;
        let t = train_policy(&c)?;
        let (_, m) = rollout_policy(&c, &t.policy, None, false);
        rows.push(FrictionRow {
            mu,
            best_cost: t.best_cost,
            mean_stretch: m.mean_stretch,
            mean_force: m.mean_force,
            slip_events: m.report.slip_events,
            success: m.report.success,
        });
        policies.push((mu, t.policy));
    }
    let mut cross = Vec::new();
    for (policy_mu, policy) in &policies {
        for &world_mu in &cfg.study.friction_values {
            let mut c = cfg.clone();
            c.world.friction.handle = world_mu;
            let (_, m) = rollout_policy(&c, policy, None, true);
            cross.push(CrossTest {
                policy_mu: *policy_mu,
                world_mu,
                slip_events: m.report.slip_events,
                terminated_early: m.report.terminated_early,
                success: m.report.success,
            });
        }
    }
    Ok(FrictionReport {
        rows,
        cross,
        policies,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChamferRow {
    pub chamfer_ratio: f64,
    pub success: usize,
    pub evaluations: usize,
    pub reports: Vec<SuccessReport>,
}

/// One policy judged across chamfer ratios on shared hole draws.
pub fn chamfer_sweep(cfg: &ExperimentConfig, policy: &PolicyFile) -> CliResult<Vec<ChamferRow>> {
    let holes = evaluation_holes(cfg)?;
    Ok(cfg
        .study
        .chamfer_ratios
        .iter()
        .map(|&ratio| {
            let reports = evaluate_policy(&with_chamfer_ratio(cfg, ratio), policy, &holes);
            ChamferRow {
                chamfer_ratio: ratio,
                success: successes(&reports),
                evaluations: reports.len(),
                reports,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub alpha4: f64,
    pub best_cost: f64,
    pub instability_events: usize,
    pub crossing_events: usize,
    pub success: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    #[serde(skip)]
    pub policies: Vec<(f64, PolicyFile)>,
}

/// Training without the stability term against training with it.
pub fn stability_ablation(cfg: &ExperimentConfig) -> CliResult<AblationReport> {
    let mut rows = Vec::new();
    let mut policies = Vec::new();
    for alpha4 in [0.0, cfg.weights.alpha4] {
        let mut c = cfg.clone();
        c.weights.alpha4 = alpha4;
        let t = train_policy(&c)?;
        let (_, m) = rollout_policy(&c, &t.policy, None, false);
        rows.push(AblationRow {
            alpha4,
            best_cost: t.best_cost,
            instability_events: m.report.instability_events,
            crossing_events: m.crossing_events,
            success: m.report.success,
        });
        policies.push((alpha4, t.policy));
    }
    Ok(AblationReport { rows, policies })
}
