//! Physical description of one insertion world.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HoleShape, PegShape, Pose2};

/// Spring and penalty stiffnesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stiffness {
    /// Impedance spring `k_c` of each arm, isotropic [N/m].
    pub k_c: f64,
    /// Contact penalty stiffness [N/m].
    pub k_pen: f64,
    /// Reference translational stiffness `k_t` [N/m].
    pub k_t: f64,
    /// Reference rotational stiffness `k_r` [N·m/rad].
    pub k_r: f64,
}

impl Default for Stiffness {
    fn default() -> Self {
        Self {
            k_c: 100.0,
            k_pen: 1e5,
            k_t: 1e4,
            k_r: 10.0,
        }
    }
}

impl Stiffness {
    /// Diagonal of `K0`.
    pub fn reference_diagonal(&self) -> [f64; 3] {
        [self.k_t, self.k_t, self.k_r]
    }
}

/// Friction coefficients per surface pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Friction {
    /// Handle against peg side face.
    pub handle: f64,
    /// Peg against hole plate; diagnostics only.
    pub environment: f64,
}

impl Default for Friction {
    fn default() -> Self {
        Self {
            handle: 0.6,
            environment: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactSettings {
    /// Maximum spacing of peg boundary samples [m].
    pub sample_spacing: f64,
}

impl Default for ContactSettings {
    fn default() -> Self {
        Self {
            sample_spacing: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Weighted gradient norm at which an equilibrium counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Length converting torques to forces in the weighted norm [m].
    pub rotation_scale: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            rotation_scale: 0.01,
            lambda_min: 1e-10,
            lambda_max: 1e10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub peg: PegShape,
    pub hole: HoleShape,
    #[serde(default)]
    pub stiffness: Stiffness,
    #[serde(default)]
    pub friction: Friction,
    #[serde(default)]
    pub contact: ContactSettings,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Weight of the peg acting along world -y [N].
    #[serde(default)]
    pub peg_weight: f64,
}

impl Default for WorldConfig {
    /// 75 mm wide peg over a hole with 1 mm clearance and a 0.128 chamfer ratio.
    fn default() -> Self {
        let peg = PegShape::rectangle(0.0375, 0.05);
        let mut hole = HoleShape::single(Pose2::IDENTITY, 0.076, 0.03, 0.0);
        hole.set_chamfer_ratio(&peg, 0.128);
        Self {
            peg,
            hole,
            stiffness: Stiffness::default(),
            friction: Friction::default(),
            contact: ContactSettings::default(),
            solver: SolverSettings::default(),
            peg_weight: 0.0,
        }
    }
}

impl WorldConfig {
    /// Two 20 mm prongs on a 100 mm body over a plate with two slots.
    pub fn two_prong() -> Self {
        use crate::geometry::{HoleSlot, Prong};
        let peg = PegShape {
            half_width: 0.05,
            half_height: 0.04,
            prongs: vec![
                Prong {
                    offset: -0.03,
                    width: 0.02,
                    length: 0.035,
                },
                Prong {
                    offset: 0.03,
                    width: 0.02,
                    length: 0.035,
                },
            ],
        };
        let slot = |offset| HoleSlot {
            offset,
            width: 0.021,
            depth: 0.03,
            chamfer_width: 0.128 * 0.02,
        };
        let hole = HoleShape {
            mouth_center: Pose2::IDENTITY,
            chamfer_angle: PI / 4.0,
            slots: vec![slot(-0.03), slot(0.03)],
        };
        Self {
            peg,
            hole,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.peg.validate()?;
        self.hole.validate()?;
        let s = &self.stiffness;
        for (key, v) in [
            ("world.stiffness.k_c", s.k_c),
            ("world.stiffness.k_pen", s.k_pen),
            ("world.stiffness.k_t", s.k_t),
            ("world.stiffness.k_r", s.k_r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        for (key, mu) in [
            ("world.friction.handle", self.friction.handle),
            ("world.friction.environment", self.friction.environment),
        ] {
            if !(mu > 0.0 && mu <= 2.0) {
                return Err(Error::config(key, "must lie in (0, 2]"));
            }
        }
        if !(self.peg_weight >= 0.0 && self.peg_weight.is_finite()) {
            return Err(Error::config("world.peg_weight", "must be >= 0"));
        }
        let c = &self.contact;
        if !(c.sample_spacing > 0.0) {
            return Err(Error::config("world.contact.sample_spacing", "must be > 0"));
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return Err(Error::config("world.solver", "tolerance and max_iterations must be > 0"));
        }
        Ok(())
    }

    pub fn with_hole_pose(&self, pose: Pose2) -> Self {
        let mut w = self.clone();
        w.hole.mouth_center = pose;
        w
    }
}
