//! Sampled hole poses and insertion success.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2};
use crate::mechanics::Trajectory;
use crate::world::WorldConfig;

/// Standard deviations of the hole-pose estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSigma {
    /// [m]
    pub x: f64,
    /// [m]
    pub y: f64,
    /// [rad]
    pub theta: f64,
}

impl PoseSigma {
    pub const ZERO: PoseSigma = PoseSigma {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    /// 0.34 mm in position and 3.63° in angle.
    pub fn reference() -> Self {
        Self {
            x: 0.34e-3,
            y: 0.34e-3,
            theta: 3.63f64.to_radians(),
        }
    }
}

impl Default for PoseSigma {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    #[default]
    Uniform,
    /// Proportional to the Gaussian density of each draw, normalized.
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Draw index; aggregation sums in this order.
    pub id: usize,
    /// True hole pose.
    pub hole: Pose2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub nominal_target: Pose2,
    pub sigma: PoseSigma,
    pub scenarios: Vec<Scenario>,
    pub seed: u64,
}

impl ScenarioSet {
    /// A single scenario at the nominal pose.
    pub fn nominal(nominal: Pose2) -> Self {
        Self {
            nominal_target: nominal,
            sigma: PoseSigma::ZERO,
            scenarios: vec![Scenario {
                id: 0,
                hole: nominal,
                weight: 1.0,
            }],
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.scenarios.iter().map(|s| s.weight).sum()
    }
}

pub fn sample_scenarios(
    nominal: Pose2,
    sigma: PoseSigma,
    count: usize,
    seed: u64,
    include_nominal: bool,
    mode: WeightMode,
) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::config("scenario.count", "must be >= 1"));
    }
    for (key, s) in [
        ("scenario.sigma.x", sigma.x),
        ("scenario.sigma.y", sigma.y),
        ("scenario.sigma.theta", sigma.theta),
    ] {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::config(key, "must be >= 0"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut offsets = Vec::with_capacity(count);
    for i in 0..count {
        let e = [
            std_normal.sample(&mut rng),
            std_normal.sample(&mut rng),
            std_normal.sample(&mut rng),
        ];
        if include_nominal && i == 0 {
            offsets.push([0.0; 3]);
        } else {
            offsets.push(e);
        }
    }
    let raw: Vec<f64> = match mode {
        WeightMode::Uniform => vec![1.0; count],
        // Densities of standardized offsets; the normalizing constant cancels.
        WeightMode::Density => offsets
            .iter()
            .map(|e: &[f64; 3]| (-0.5 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2])).exp())
            .collect(),
    };
    let total: f64 = raw.iter().sum();
    let scenarios = offsets
        .iter()
        .zip(&raw)
        .enumerate()
        .map(|(id, (e, w))| Scenario {
            id,
            hole: Pose2::new(
                nominal.x + sigma.x * e[0],
                nominal.y + sigma.y * e[1],
                nominal.theta + sigma.theta * e[2],
            ),
            weight: w / total,
        })
        .collect();
    Ok(ScenarioSet {
        nominal_target: nominal,
        sigma,
        scenarios,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuccessCriteria {
    /// Required tip depth below the mouth, as a fraction of hole depth.
    pub min_depth_fraction: f64,
    /// Largest tilt relative to the hole [rad].
    pub max_tilt: f64,
    /// Steps at the end of the rollout that must have converged.
    pub settle_steps: usize,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        Self {
            min_depth_fraction: 0.8,
            max_tilt: 3f64.to_radians(),
            settle_steps: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub success: bool,
    pub depth_fraction: f64,
    /// Peg center offset from the hole axis [m].
    pub lateral_offset: f64,
    /// [rad]
    pub tilt: f64,
    pub slip_events: usize,
    pub instability_events: usize,
    pub nonconverged_tail: usize,
    pub terminated_early: bool,
}

/// Judges the final state of `traj` against the true hole in `world`.
pub fn evaluate_success(
    traj: &Trajectory,
    world: &WorldConfig,
    criteria: &SuccessCriteria,
) -> SuccessReport {
    let Some(z) = traj.final_state() else {
        return SuccessReport {
            success: false,
            depth_fraction: 0.0,
            lateral_offset: f64::NAN,
            tilt: f64::NAN,
            slip_events: 0,
            instability_events: 0,
            nonconverged_tail: 0,
            terminated_early: traj.terminated_early,
        };
    };
    let hole = &world.hole;
    let local = hole.mouth_center.inverse().compose(z);
    let tip = world.peg.tip_depth();
    let depth_fraction = (tip - local.y) / hole.depth();
    let tilt = wrap_angle(local.theta).abs();
    let tail = criteria.settle_steps.min(traj.samples.len());
    let nonconverged_tail = traj.samples[traj.samples.len() - tail..]
        .iter()
        .filter(|s| !s.converged)
        .count();
    let success = depth_fraction >= criteria.min_depth_fraction
        && tilt <= criteria.max_tilt
        && nonconverged_tail == 0
        && !traj.terminated_early;
    SuccessReport {
        success,
        depth_fraction,
        lateral_offset: local.x,
        tilt,
        slip_events: traj.slip_events(),
        instability_events: traj.instability_events(),
        nonconverged_tail,
        terminated_early: traj.terminated_early,
    }
}
