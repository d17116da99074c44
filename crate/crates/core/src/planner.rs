//! The insertion task: boundary controls from the grasp, and the
//! scenario-averaged rollout cost that training minimizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{total_cost, CostBreakdown, CostWeights};
use crate::error::{Error, Result};
use crate::geometry::{PegShape, Pose2, Vec2};
use crate::mechanics::{ControlPair, RolloutSettings, Simulator, Trajectory};
use crate::optimizer::{clamp_cost, Objective};
use crate::policy::{generate, DmpParams, DmpSettings, ParamMatrix};
use crate::scenarios::{evaluate_success, ScenarioSet, SuccessCriteria, SuccessReport};
use crate::world::WorldConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// Height of the peg tip above the estimated mouth at the start [m].
    pub start_clearance: f64,
    /// Lateral start offset from the estimated hole axis [m].
    pub start_offset: f64,
    /// Target tip depth as a fraction of hole depth.
    pub target_depth_fraction: f64,
    /// Squeeze of the start and end grasps [m]; `l0` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grasp_squeeze: Option<f64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            start_clearance: 0.01,
            start_offset: 0.0,
            target_depth_fraction: 0.95,
            grasp_squeeze: None,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_clearance.is_finite() && self.start_offset.is_finite()) {
            return Err(Error::config("task.start_clearance", "must be finite"));
        }
        if !(self.target_depth_fraction > 0.0 && self.target_depth_fraction <= 1.0) {
            return Err(Error::config("task.target_depth_fraction", "must lie in (0, 1]"));
        }
        if let Some(s) = self.grasp_squeeze {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("task.grasp_squeeze", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Start pose of the peg in the world, relative to the hole pose `hole`.
    pub fn start_pose(&self, peg: &PegShape, hole: &Pose2) -> Pose2 {
        hole.compose(&Pose2::new(
            self.start_offset,
            peg.tip_depth() + self.start_clearance,
            0.0,
        ))
    }

    /// Inserted peg pose for a hole at `hole` with depth `depth`.
    pub fn target_pose(&self, peg: &PegShape, hole: &Pose2, depth: f64) -> Pose2 {
        hole.compose(&Pose2::new(
            0.0,
            peg.tip_depth() - self.target_depth_fraction * depth,
            0.0,
        ))
    }
}

/// Controls that hold the peg at `z` with each spring compressed by `squeeze`.
pub fn grasp_controls(peg: &PegShape, z: &Pose2, squeeze: f64) -> ControlPair {
    let (a, b) = peg.handle_points();
    let inward = z.transform_vector(&Vec2::new(squeeze, 0.0));
    ControlPair::new(z.transform_point(&a) + inward, z.transform_point(&b) - inward)
}

/// Everything needed to turn a parameter matrix into a scenario-averaged cost.
#[derive(Debug, Clone)]
pub struct Planner {
    pub world: WorldConfig,
    pub weights: CostWeights,
    pub dmp: DmpSettings,
    pub task: TaskConfig,
    pub scenarios: ScenarioSet,
    pub rollout: RolloutSettings,
    simulators: Vec<Simulator>,
    targets: Vec<Pose2>,
}

impl Planner {
    /// `world.hole.mouth_center` is the estimated hole pose; each scenario
    /// replaces it with its own true pose.
    pub fn new(
        world: WorldConfig,
        weights: CostWeights,
        dmp: DmpSettings,
        task: TaskConfig,
        scenarios: ScenarioSet,
        rollout: RolloutSettings,
    ) -> Result<Self> {
        world.validate()?;
        weights.validate()?;
        dmp.validate()?;
        task.validate()?;
        if scenarios.is_empty() {
            return Err(Error::config("scenario.count", "must be >= 1"));
        }
        let mut order: Vec<usize> = (0..scenarios.len()).collect();
        order.sort_by_key(|&i| scenarios.scenarios[i].id);
        let mut scenarios = scenarios;
        scenarios.scenarios = order.iter().map(|&i| scenarios.scenarios[i]).collect();
        let depth = world.hole.depth();
        let simulators = scenarios
            .scenarios
            .iter()
            .map(|s| Simulator::new(&world.with_hole_pose(s.hole)))
            .collect();
        let targets = scenarios
            .scenarios
            .iter()
            .map(|s| task.target_pose(&world.peg, &s.hole, depth))
            .collect();
        Ok(Self {
            world,
            weights,
            dmp,
            task,
            scenarios,
            rollout: RolloutSettings {
                duration: dmp.duration,
                ..rollout
            },
            simulators,
            targets,
        })
    }

    pub fn estimated_hole(&self) -> Pose2 {
        self.world.hole.mouth_center
    }

    pub fn start_pose(&self) -> Pose2 {
        self.task.start_pose(&self.world.peg, &self.estimated_hole())
    }

    pub fn nominal_target(&self) -> Pose2 {
        self.task
            .target_pose(&self.world.peg, &self.estimated_hole(), self.world.hole.depth())
    }

    /// Grasps at the start and nominal target, lifted so the springs carry
    /// the peg weight at those poses.
    pub fn boundary_controls(&self) -> ([f64; 4], [f64; 4]) {
        let l0 = self.task.grasp_squeeze.unwrap_or(self.weights.l0);
        let lift = self.world.peg_weight / (2.0 * self.world.stiffness.k_c);
        let grasp = |z: &Pose2| {
            let mut u = grasp_controls(&self.world.peg, z, l0);
            u.u1.y += lift;
            u.u2.y += lift;
            u.to_array()
        };
        (grasp(&self.start_pose()), grasp(&self.nominal_target()))
    }

    pub fn dmp_params(&self, theta: &ParamMatrix) -> DmpParams {
        let (u0, ut) = self.boundary_controls();
        self.dmp.params(theta.clone(), u0, ut)
    }

    pub fn controls(&self, theta: &ParamMatrix) -> Vec<ControlPair> {
        generate(&self.dmp_params(theta), self.dmp.steps)
    }

    pub fn zero_theta(&self) -> ParamMatrix {
        self.dmp.zero_theta()
    }

    /// Rollout in scenario `s` and its cost breakdown.
    pub fn scenario_rollout(&self, theta: &ParamMatrix, s: usize) -> (Trajectory, CostBreakdown) {
        let controls = self.controls(theta);
        let traj = self.simulators[s].rollout(&controls, &self.start_pose(), &self.weights, &self.rollout);
        let cost = total_cost(&traj, &self.weights, theta, &self.targets[s]);
        (traj, cost)
    }

    /// `Σ_s p_s J_s` with each `J_s` clamped, summed in scenario-id order.
    pub fn cost(&self, theta: &ParamMatrix) -> CostBreakdown {
        let controls = self.controls(theta);
        let start = self.start_pose();
        let mut out = CostBreakdown::default();
        for (s, scenario) in self.scenarios.scenarios.iter().enumerate() {
            let traj = self.simulators[s].rollout(&controls, &start, &self.weights, &self.rollout);
            let mut b = total_cost(&traj, &self.weights, theta, &self.targets[s]);
            b.total = clamp_cost(b.total);
            out = CostBreakdown::weighted_sum([(1.0, &out), (scenario.weight, &b)]);
        }
        out
    }

    /// Rolls `theta` out against a true hole pose and judges the result.
    pub fn evaluate(
        &self,
        theta: &ParamMatrix,
        true_hole: &Pose2,
        criteria: &SuccessCriteria,
        rollout: &RolloutSettings,
    ) -> (Trajectory, SuccessReport) {
        let world = self.world.with_hole_pose(*true_hole);
        let sim = Simulator::new(&world);
        let settings = RolloutSettings {
            duration: self.dmp.duration,
            ..*rollout
        };
        let traj = sim.rollout(&self.controls(theta), &self.start_pose(), &self.weights, &settings);
        let report = evaluate_success(&traj, &world, criteria);
        (traj, report)
    }

    /// Success reports for many true hole poses, in input order.
    pub fn evaluate_many(
        &self,
        theta: &ParamMatrix,
        holes: &[Pose2],
        criteria: &SuccessCriteria,
        rollout: &RolloutSettings,
    ) -> Vec<SuccessReport> {
        holes
            .par_iter()
            .map(|h| self.evaluate(theta, h, criteria, rollout).1)
            .collect()
    }
}

impl Objective for Planner {
    fn evaluate(&self, theta: &ParamMatrix) -> CostBreakdown {
        self.cost(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grasp_controls_compress_both_springs() {
        let peg = PegShape::rectangle(0.0375, 0.05);
        let z = Pose2::new(0.1, 0.2, 0.3);
        let u = grasp_controls(&peg, &z, 0.025);
        let (a, b) = peg.handle_points();
        let (c1, c2) = (z.transform_point(&a), z.transform_point(&b));
        assert!(((u.u1 - c1).norm() - 0.025).abs() < 1e-15);
        assert!(((u.u2 - c2).norm() - 0.025).abs() < 1e-15);
        // Both anchors sit inside the peg, pushing toward the center.
        assert!((u.u1 - c1).dot(&(c2 - c1)) > 0.0);
        assert!((u.u2 - c2).dot(&(c1 - c2)) > 0.0);
    }

    #[test]
    fn target_tip_sits_at_requested_depth() {
        let peg = PegShape::rectangle(0.0375, 0.05);
        let task = TaskConfig::default();
        let z = task.target_pose(&peg, &Pose2::IDENTITY, 0.03);
        assert!((peg.tip_depth() - z.y - 0.95 * 0.03).abs() < 1e-15);
    }
}
