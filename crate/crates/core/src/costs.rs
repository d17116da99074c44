//! Cost terms for trajectory evaluation.
//!
//! All terms are unitless. Integrals over time use the rectangle rule on the
//! per-step samples recorded by a rollout.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2, Vec2};
use crate::mechanics::Trajectory;
use crate::policy::ParamMatrix;

/// Value returned by the stability cost when `det(H K0⁻¹)` is not positive.
pub const STABILITY_CAP: f64 = 1e3;
/// Determinant below which the stability cost saturates at the cap.
pub const DET_EPSILON: f64 = 1e-12;
const PSI_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    /// Terminal kinematic error.
    pub alpha1: f64,
    /// Handle friction-cone barrier.
    pub alpha2: f64,
    /// Squeeze deviation from `l0`.
    pub alpha3: f64,
    /// Grasp stability.
    pub alpha4: f64,
    /// Parameter regularization.
    pub alpha5: f64,
    /// Length scale [m].
    pub d0: f64,
    /// Rest squeeze depth [m].
    pub l0: f64,
    /// Length equivalent of one radian in the kinematic cost [m/rad].
    pub rho: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            alpha1: 10.0,
            alpha2: 1.0,
            alpha3: 1e-3,
            alpha4: 1e-3,
            alpha5: 1e-8,
            d0: 1e-3,
            l0: 0.025,
            rho: 0.01,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (key, a) in [
            ("weights.alpha1", self.alpha1),
            ("weights.alpha2", self.alpha2),
            ("weights.alpha3", self.alpha3),
            ("weights.alpha4", self.alpha4),
            ("weights.alpha5", self.alpha5),
        ] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::config(key, "must be >= 0"));
            }
        }
        for (key, v) in [
            ("weights.d0", self.d0),
            ("weights.l0", self.l0),
            ("weights.rho", self.rho),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        Ok(())
    }

    /// Weight matrix `Σ = diag(1, 1, rho²)` of the kinematic cost.
    pub fn sigma(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, self.rho * self.rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub kinematic: f64,
    pub friction: f64,
    pub energy: f64,
    pub stability: f64,
    pub regularization: f64,
    pub total: f64,
}

impl CostBreakdown {
    /// Builds a breakdown from unweighted terms.
    pub fn from_terms(
        weights: &CostWeights,
        kinematic: f64,
        friction: f64,
        energy: f64,
        stability: f64,
        regularization: f64,
    ) -> Self {
        let total = weights.alpha1 * kinematic
            + weights.alpha2 * friction
            + weights.alpha3 * energy
            + weights.alpha4 * stability
            + weights.alpha5 * regularization;
        Self {
            kinematic,
            friction,
            energy,
            stability,
            regularization,
            total,
        }
    }

    /// Term-wise weighted sum, used for scenario averages.
    pub fn weighted_sum<'a>(items: impl IntoIterator<Item = (f64, &'a CostBreakdown)>) -> Self {
        let mut out = CostBreakdown::default();
        for (p, b) in items {
            out.kinematic += p * b.kinematic;
            out.friction += p * b.friction;
            out.energy += p * b.energy;
            out.stability += p * b.stability;
            out.regularization += p * b.regularization;
            out.total += p * b.total;
        }
        out
    }
}

/// Friction-cone margin: positive inside the cone, negative outside.
pub fn friction_cone(mu: f64, n: &Vec2, f: &Vec2) -> f64 {
    let nf = n.dot(f);
    -mu * nf - (f.norm_squared() - nf * nf).max(0.0).sqrt()
}

/// `(1 + tanh x) / 2`, evaluated as the logistic `1 / (1 + e^{-2x})` so the
/// left tail does not round to zero.
pub fn psi(x: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * x).exp())
}

/// `-ln ψ(x)`, with ψ floored at 1e-300.
pub fn neg_log_psi(x: f64) -> f64 {
    let v = if x >= 0.0 {
        (-2.0 * x).exp().ln_1p()
    } else {
        -2.0 * x + (2.0 * x).exp().ln_1p()
    };
    v.min(-PSI_FLOOR.ln())
}

pub fn cost_friction_point(mu: f64, n: &Vec2, u: &Vec2, c: &Vec2, d0: f64) -> f64 {
    let f = (u - c) / d0;
    neg_log_psi(friction_cone(mu, n, &f))
}

pub fn cost_energy_point(u: &Vec2, c: &Vec2, l0: f64, d0: f64) -> f64 {
    let e = (u - c).norm() - l0;
    e * e / (2.0 * d0 * d0)
}

/// `-log det(H K0⁻¹)`, or [`STABILITY_CAP`] when the determinant is not
/// safely positive.
pub fn cost_stability(hessian: &Matrix3<f64>, k0: &[f64; 3]) -> f64 {
    let det = hessian.determinant() / (k0[0] * k0[1] * k0[2]);
    if det > DET_EPSILON && det.is_finite() {
        -det.ln()
    } else {
        STABILITY_CAP
    }
}

/// `‖z_T - z_tgt‖²_Σ / d0²` with the angle residual wrapped.
pub fn cost_kinematic(z_t: &Pose2, z_tgt: &Pose2, sigma: &Matrix3<f64>, d0: f64) -> f64 {
    let dz = nalgebra::Vector3::new(
        z_t.x - z_tgt.x,
        z_t.y - z_tgt.y,
        wrap_angle(z_t.theta - z_tgt.theta),
    );
    dz.dot(&(sigma * dz)) / (d0 * d0)
}

/// Evaluates all five terms on a rollout.
///
/// Integrals sum the samples at steps `1..=N` times `Δt`.
pub fn total_cost(
    traj: &Trajectory,
    weights: &CostWeights,
    theta: &ParamMatrix,
    z_tgt: &Pose2,
) -> CostBreakdown {
    let n = traj.samples.len();
    if n == 0 {
        return CostBreakdown::from_terms(weights, 0.0, 0.0, 0.0, 0.0, theta.norm_squared());
    }
    let dt = if traj.times.len() > 1 {
        traj.times[1] - traj.times[0]
    } else {
        0.0
    };
    let (mut friction, mut energy, mut stability) = (0.0, 0.0, 0.0);
    for s in &traj.samples[1..] {
        friction += s.friction_cost[0] + s.friction_cost[1];
        energy += s.energy_cost[0] + s.energy_cost[1];
        stability += s.stability_cost;
    }
    let z_t = traj.states[n - 1];
    CostBreakdown::from_terms(
        weights,
        cost_kinematic(&z_t, z_tgt, &weights.sigma(), weights.d0),
        friction * dt,
        energy * dt,
        stability * dt,
        theta.norm_squared(),
    )
}

/// `Σ p_s J_s` in the given order.
pub fn scenario_cost(per_scenario: &[(f64, f64)]) -> f64 {
    per_scenario.iter().fold(0.0, |acc, (p, j)| acc + p * j)
}
