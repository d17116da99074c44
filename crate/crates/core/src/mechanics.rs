//! Quasi-static mechanics of a peg held by two impedance-controlled handles.
//!
//! The potential is the sum of the two handle springs and a frictionless
//! quadratic penalty on peg points that penetrate the hole plate. Both parts
//! have closed-form gradients and Hessians. Equilibria are local minimizers of the potential
//! over the peg pose, tracked by continuation along a control sequence.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::costs::{self, CostWeights};
use crate::geometry::{perp, ContactRecord, Environment, PegModel, Pose2, Vec2};
use crate::world::WorldConfig;

/// Desired handle positions `u1`, `u2` of the two impedance controllers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlPair {
    pub u1: Vec2,
    pub u2: Vec2,
}

impl ControlPair {
    pub fn new(u1: Vec2, u2: Vec2) -> Self {
        Self { u1, u2 }
    }

    /// `(u1x, u1y, u2x, u2y)`.
    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(Vec2::new(a[0], a[1]), Vec2::new(a[2], a[3]))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.u1.x, self.u1.y, self.u2.x, self.u2.y]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub z_star: Pose2,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted gradient norm at `z_star`.
    pub grad_norm: f64,
    pub energy: f64,
    /// Full Hessian of the potential, springs plus contact penalty.
    pub hessian: Matrix3<f64>,
    /// Hessian of the handle springs alone (free-manipulation potential).
    pub spring_hessian: Matrix3<f64>,
    /// `det(spring_hessian · K0⁻¹)`.
    pub det_scaled: f64,
    pub contacts: Vec<ContactRecord>,
    /// Multiplicity index `m` of the rotational branch.
    pub branch: i64,
}

/// Per-step record of forces, cost integrands and event flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    /// Spring forces `k_c (u_i - c_i)` on the peg [N].
    pub forces: [Vec2; 2],
    /// Spring stretch `|u_i - c_i|` [m].
    pub stretch: [f64; 2],
    /// Friction-cone margin of each handle force [N].
    pub cone: [f64; 2],
    pub friction_cost: [f64; 2],
    pub energy_cost: [f64; 2],
    pub stability_cost: f64,
    pub det_scaled: f64,
    pub slip: [bool; 2],
    pub unstable: bool,
    /// `(u1 - u2)·(c1 - c2) <= 0`: the handles have crossed over.
    pub crossed: bool,
    pub converged: bool,
    pub contact_count: usize,
}

impl StepSample {
    pub fn slipped(&self) -> bool {
        self.slip[0] || self.slip[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub controls: Vec<ControlPair>,
    pub states: Vec<Pose2>,
    pub equilibria: Vec<EquilibriumResult>,
    pub samples: Vec<StepSample>,
    /// Set when strict-slip mode stopped the rollout at the first slip.
    pub terminated_early: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> Option<&Pose2> {
        self.states.last()
    }

    pub fn slip_events(&self) -> usize {
        self.samples.iter().filter(|s| s.slipped()).count()
    }

    pub fn instability_events(&self) -> usize {
        self.samples.iter().filter(|s| s.unstable).count()
    }

    pub fn crossing_events(&self) -> usize {
        self.samples.iter().filter(|s| s.crossed).count()
    }

    pub fn nonconverged_steps(&self) -> usize {
        self.samples.iter().filter(|s| !s.converged).count()
    }

    /// Mean spring stretch over steps and both handles [m].
    pub fn mean_stretch(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|s| s.stretch[0] + s.stretch[1]).sum();
        sum / (2.0 * self.samples.len() as f64)
    }

    /// Mean squeeze force magnitude `|f_i|` over steps and handles [N].
    pub fn mean_force(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .samples
            .iter()
            .map(|s| s.forces[0].norm() + s.forces[1].norm())
            .sum();
        sum / (2.0 * self.samples.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSettings {
    /// Duration `T` spanned by the control sequence [s].
    pub duration: f64,
    /// Stop at the first handle slip instead of recording it.
    pub strict_slip: bool,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            duration: 5.0,
            strict_slip: false,
        }
    }
}

/// Points within this distance above the plate are kept as contact
/// candidates.
const CANDIDATE_MARGIN: f64 = 1e-4;

/// Relative size of round-off in the potential.
const ENERGY_NOISE: f64 = 1e-12;

/// A world prepared for repeated potential evaluations.
#[derive(Debug, Clone)]
pub struct Simulator {
    world: WorldConfig,
    env: Environment,
    peg: PegModel,
    hole_inverse: Pose2,
}

impl Simulator {
    pub fn new(world: &WorldConfig) -> Self {
        let env = Environment::new(&world.hole);
        Self {
            world: world.clone(),
            hole_inverse: world.hole.mouth_center.inverse(),
            peg: PegModel::new(&world.peg, world.contact.sample_spacing),
            env,
        }
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn handle_points(&self, z: &Pose2) -> (Vec2, Vec2) {
        let (a, b) = self.world.peg.handle_points();
        (z.transform_point(&a), z.transform_point(&b))
    }

    /// Outward side-face normals of the peg at the two handles.
    pub fn handle_normals(&self, z: &Pose2) -> (Vec2, Vec2) {
        let n = z.transform_vector(&Vec2::new(1.0, 0.0));
        (-n, n)
    }

    pub fn spring_energy(&self, z: &Pose2, u: &ControlPair) -> f64 {
        let (c1, c2) = self.handle_points(z);
        0.5 * self.world.stiffness.k_c * ((u.u1 - c1).norm_squared() + (u.u2 - c2).norm_squared())
    }

    pub fn spring_gradient(&self, z: &Pose2, u: &ControlPair) -> Vector3<f64> {
        let k = self.world.stiffness.k_c;
        let (c1, c2) = self.handle_points(z);
        let du = u.u1 - u.u2;
        Vector3::new(
            k * (2.0 * z.x - u.u1.x - u.u2.x),
            k * (2.0 * z.y - u.u1.y - u.u2.y),
            -0.5 * k * du.dot(&perp(&(c1 - c2))),
        )
    }

    pub fn spring_hessian(&self, z: &Pose2, u: &ControlPair) -> Matrix3<f64> {
        let k = self.world.stiffness.k_c;
        let (c1, c2) = self.handle_points(z);
        let rot = 0.5 * k * (u.u1 - u.u2).dot(&(c1 - c2));
        Matrix3::from_diagonal(&Vector3::new(2.0 * k, 2.0 * k, rot))
    }

    /// `det(H · K0⁻¹)` for a Hessian `H`.
    pub fn det_scaled(&self, hessian: &Matrix3<f64>) -> f64 {
        let [kt, _, kr] = self.world.stiffness.reference_diagonal();
        hessian.determinant() / (kt * kt * kr)
    }

    #[inline]
    fn peg_in_hole_frame(&self, z: &Pose2) -> Pose2 {
        self.hole_inverse.compose(z)
    }

    /// Body-frame samples that can touch the plate near pose `z`.
    fn candidates(&self, z: &Pose2) -> Vec<Vec2> {
        let t = self.peg_in_hole_frame(z);
        self.peg
            .samples
            .iter()
            .filter(|p| t.transform_point(p).y <= CANDIDATE_MARGIN)
            .copied()
            .collect()
    }

    pub fn penalty_energy(&self, z: &Pose2) -> f64 {
        let t = self.peg_in_hole_frame(z);
        let sum: f64 = self
            .peg
            .samples
            .iter()
            .map(|p| {
                let q = t.transform_point(p);
                if q.y > 0.0 {
                    0.0
                } else {
                    let d = self.env.depth_local(&q);
                    d * d
                }
            })
            .sum();
        0.5 * self.world.stiffness.k_pen * sum
    }

    /// Penalty gradient and Hessian. A point at depth `δ` with escape
    /// direction `n` and lever `r` from the peg origin contributes
    /// `-k δ aᵀ` with `a = (n, n·Jr)`; its Hessian is `k a aᵀ` for a face
    /// contact, `k JqᵀJq` for a vertex contact, plus `k δ n·r` on the
    /// rotational diagonal.
    fn penalty_derivatives_on(&self, points: &[Vec2], z: &Pose2, want_hessian: bool) -> (Vector3<f64>, Matrix3<f64>) {
        let t = self.peg_in_hole_frame(z);
        let k = self.world.stiffness.k_pen;
        let hole_rot = crate::geometry::rotation(self.world.hole.mouth_center.theta);
        let (s, c) = z.theta.sin_cos();
        let mut g = Vector3::zeros();
        let mut h = Matrix3::zeros();
        for p in points {
            if let Some((d, n_local, face)) = self.env.depth_normal_local(&t.transform_point(p)) {
                let n = hole_rot * n_local;
                let r = Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y);
                let jr = perp(&r);
                let a = Vector3::new(n.x, n.y, n.dot(&jr));
                g -= a * (k * d);
                if want_hessian {
                    if face {
                        h += a * a.transpose() * k;
                    } else {
                        let jq = nalgebra::Matrix2x3::new(1.0, 0.0, jr.x, 0.0, 1.0, jr.y);
                        h += jq.transpose() * jq * k;
                    }
                    h[(2, 2)] += k * d * n.dot(&r);
                }
            }
        }
        (g, h)
    }

    pub fn potential(&self, z: &Pose2, u: &ControlPair) -> f64 {
        self.spring_energy(z, u) + self.penalty_energy(z) + self.world.peg_weight * z.y
    }

    pub fn grad_z(&self, z: &Pose2, u: &ControlPair) -> Vector3<f64> {
        let points = self.candidates(z);
        let mut g = self.spring_gradient(z, u);
        g.y += self.world.peg_weight;
        if !points.is_empty() {
            g += self.penalty_derivatives_on(&points, z, false).0;
        }
        g
    }

    pub fn hessian_zz(&self, z: &Pose2, u: &ControlPair) -> Matrix3<f64> {
        let points = self.candidates(z);
        let mut h = self.spring_hessian(z, u);
        if !points.is_empty() {
            h += self.penalty_derivatives_on(&points, z, true).1;
        }
        h
    }

    pub fn contacts(&self, z: &Pose2) -> Vec<ContactRecord> {
        self.env.contacts_world(
            self.peg.samples.iter().map(|p| z.transform_point(p)),
            self.world.friction.environment,
        )
    }

    fn weighted_norm(&self, g: &Vector3<f64>) -> f64 {
        let l = self.world.solver.rotation_scale;
        (g.x * g.x + g.y * g.y + (g.z / l).powi(2)).sqrt()
    }

    /// Damped Newton descent on the potential from `z_init`.
    pub fn solve_equilibrium(&self, z_init: &Pose2, u: &ControlPair) -> EquilibriumResult {
        let settings = self.world.solver;
        let l = settings.rotation_scale;
        let scale = Vector3::new(1.0, 1.0, l * l);
        let mut z = *z_init;
        let mut lambda = settings.lambda_min;
        let mut energy = self.potential(&z, u);
        let mut grad = self.grad_z(&z, u);
        let mut gnorm = self.weighted_norm(&grad);
        let mut iterations = 0;
        let mut stalled = false;

        while gnorm > settings.tolerance && iterations < settings.max_iterations && !stalled {
            iterations += 1;
            let hess = self.hessian_zz(&z, u);
            let mut accepted = false;
            while !accepted {
                let dir = descent_direction(&hess, &grad, lambda, &scale);
                let slope = grad.dot(&dir);
                let noise = ENERGY_NOISE * energy.abs().max(f64::MIN_POSITIVE);
                let mut alpha = 1.0;
                for _ in 0..40 {
                    let trial = Pose2::from_vector(&(z.to_vector() + dir * alpha));
                    let e = self.potential(&trial, u);
                    let predicted = alpha * slope;
                    let ok = if -predicted > noise {
                        // Armijo sufficient decrease.
                        e <= energy + 1e-4 * predicted
                    } else {
                        // Energy changes are lost in round-off; require the
                        // gradient to shrink instead.
                        e <= energy + noise
                    };
                    if ok {
                        let g = self.grad_z(&trial, u);
                        let n = self.weighted_norm(&g);
                        if -predicted > noise || n < gnorm {
                            z = trial;
                            energy = e;
                            grad = g;
                            gnorm = n;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    lambda = (lambda * 0.5).max(settings.lambda_min);
                } else {
                    lambda *= 2.0;
                    if lambda > settings.lambda_max {
                        stalled = true;
                        break;
                    }
                }
            }
        }

        let converged = gnorm <= settings.tolerance;
        if converged {
            // One undamped Newton step to sit well below the tolerance.
            let hess = self.hessian_zz(&z, u);
            if let Some(chol) = hess.cholesky() {
                let trial = Pose2::from_vector(&(z.to_vector() - chol.solve(&grad)));
                let e = self.potential(&trial, u);
                if e <= energy + ENERGY_NOISE * energy.abs() {
                    let g = self.grad_z(&trial, u);
                    let n = self.weighted_norm(&g);
                    if n < gnorm {
                        z = trial;
                        energy = e;
                        gnorm = n;
                    }
                }
            }
        }

        let hessian = self.hessian_zz(&z, u);
        let spring_hessian = self.spring_hessian(&z, u);
        let det_scaled = self.det_scaled(&spring_hessian);
        let du = u.u2 - u.u1;
        let branch = if du.norm() > 0.0 {
            ((z.theta - du.y.atan2(du.x)) / std::f64::consts::PI).round() as i64
        } else {
            0
        };
        EquilibriumResult {
            z_star: z,
            converged,
            iterations,
            grad_norm: gnorm,
            energy,
            hessian,
            spring_hessian,
            det_scaled,
            contacts: self.contacts(&z),
            branch,
        }
    }

    /// Per-step forces, cost integrands and flags at an equilibrium.
    pub fn step_sample(
        &self,
        eq: &EquilibriumResult,
        u: &ControlPair,
        weights: &CostWeights,
    ) -> StepSample {
        let z = &eq.z_star;
        let k = self.world.stiffness.k_c;
        let mu = self.world.friction.handle;
        let (c1, c2) = self.handle_points(z);
        let (n1, n2) = self.handle_normals(z);
        let d = [u.u1 - c1, u.u2 - c2];
        let n = [n1, n2];
        let forces = [d[0] * k, d[1] * k];
        let cone = [
            costs::friction_cone(mu, &n[0], &forces[0]),
            costs::friction_cone(mu, &n[1], &forces[1]),
        ];
        let friction_cost = [
            costs::cost_friction_point(mu, &n[0], &u.u1, &c1, weights.d0),
            costs::cost_friction_point(mu, &n[1], &u.u2, &c2, weights.d0),
        ];
        let energy_cost = [
            costs::cost_energy_point(&u.u1, &c1, weights.l0, weights.d0),
            costs::cost_energy_point(&u.u2, &c2, weights.l0, weights.d0),
        ];
        let stability_cost = costs::cost_stability(
            &eq.spring_hessian,
            &self.world.stiffness.reference_diagonal(),
        );
        StepSample {
            forces,
            stretch: [d[0].norm(), d[1].norm()],
            cone,
            friction_cost,
            energy_cost,
            stability_cost,
            det_scaled: eq.det_scaled,
            slip: [cone[0] < 0.0, cone[1] < 0.0],
            unstable: eq.det_scaled <= 0.0,
            crossed: (u.u1 - u.u2).dot(&(c1 - c2)) <= 0.0,
            converged: eq.converged,
            contact_count: eq.contacts.len(),
        }
    }

    /// Quasi-static rollout: each equilibrium seeds the next solve.
    pub fn rollout(
        &self,
        controls: &[ControlPair],
        z0: &Pose2,
        weights: &CostWeights,
        settings: &RolloutSettings,
    ) -> Trajectory {
        let n = controls.len();
        let dt = if n > 1 {
            settings.duration / (n - 1) as f64
        } else {
            0.0
        };
        let mut traj = Trajectory {
            times: Vec::with_capacity(n),
            controls: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            equilibria: Vec::with_capacity(n),
            samples: Vec::with_capacity(n),
            terminated_early: false,
        };
        let mut seed = *z0;
        for (k, u) in controls.iter().enumerate() {
            let eq = self.solve_equilibrium(&seed, u);
            let sample = self.step_sample(&eq, u, weights);
            seed = eq.z_star;
            traj.times.push(k as f64 * dt);
            traj.controls.push(*u);
            traj.states.push(eq.z_star);
            traj.equilibria.push(eq);
            traj.samples.push(sample);
            if settings.strict_slip && sample.slipped() {
                traj.terminated_early = k + 1 < n;
                break;
            }
        }
        traj
    }
}

/// Regularized Newton direction, or a diagonally scaled gradient step when
/// `H + λS` is not positive definite.
fn descent_direction(
    hess: &Matrix3<f64>,
    grad: &Vector3<f64>,
    lambda: f64,
    scale: &Vector3<f64>,
) -> Vector3<f64> {
    let damped = hess + Matrix3::from_diagonal(&(scale * lambda));
    if let Some(chol) = damped.cholesky() {
        return -chol.solve(grad);
    }
    Vector3::from_fn(|i, _| {
        let d = hess[(i, i)].abs().max(lambda * scale[i]).max(1e-12 * scale[i]);
        -grad[i] / d
    })
}

pub fn potential(world: &WorldConfig, z: &Pose2, u: &ControlPair) -> f64 {
    Simulator::new(world).potential(z, u)
}

pub fn grad_z(world: &WorldConfig, z: &Pose2, u: &ControlPair) -> Vector3<f64> {
    Simulator::new(world).grad_z(z, u)
}

pub fn hessian_zz(world: &WorldConfig, z: &Pose2, u: &ControlPair) -> Matrix3<f64> {
    Simulator::new(world).hessian_zz(z, u)
}

pub fn solve_equilibrium(world: &WorldConfig, z_init: &Pose2, u: &ControlPair) -> EquilibriumResult {
    Simulator::new(world).solve_equilibrium(z_init, u)
}

pub fn rollout(
    world: &WorldConfig,
    controls: &[ControlPair],
    z0: &Pose2,
    weights: &CostWeights,
    settings: &RolloutSettings,
) -> Trajectory {
    Simulator::new(world).rollout(controls, z0, weights, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn free_world() -> WorldConfig {
        // Hole far away so nothing touches the peg near the origin.
        WorldConfig::default().with_hole_pose(Pose2::new(0.0, -5.0, 0.0))
    }

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn potential_examples() {
        let sim = Simulator::new(&free_world());
        let z = Pose2::new(0.01, 0.02, 0.3);
        let (c1, c2) = sim.handle_points(&z);
        assert_eq!(sim.potential(&z, &ControlPair::new(c1, c2)), 0.0);
        let stretched = ControlPair::new(c1 + v(0.01, 0.0), c2);
        assert_abs_diff_eq!(sim.potential(&z, &stretched), 5.0e-3, epsilon = 1e-15);

        let world = WorldConfig::default();
        let sim = Simulator::new(&world);
        // Left corner 1 mm into the top face, well left of the chamfer.
        let x = -0.1;
        let z = Pose2::new(x, world.peg.half_height - 0.001, 0.0);
        let (c1, c2) = sim.handle_points(&z);
        let springs = ControlPair::new(c1, c2);
        let e = sim.potential(&z, &springs);
        // The whole bottom edge sits on the top face: one term per sample.
        let bottom = sim
            .peg
            .samples
            .iter()
            .filter(|p| (p.y + world.peg.half_height).abs() < 1e-12)
            .count() as f64;
        assert_abs_diff_eq!(e, bottom * 5.0e-2, epsilon = 1e-9);

        // A single penetrating point: corner of a peg tilted about it, with
        // samples coarse enough that its neighbours clear the face.
        let mut world = world;
        world.contact.sample_spacing = 0.005;
        let sim = Simulator::new(&world);
        let tilt = 0.6;
        let corner = v(-world.peg.half_width, -world.peg.half_height);
        let rot = crate::geometry::rotation(tilt);
        let origin = v(-0.1, -0.001) - rot * corner;
        let z = Pose2::new(origin.x, origin.y, tilt);
        let (c1, c2) = sim.handle_points(&z);
        assert_abs_diff_eq!(sim.potential(&z, &ControlPair::new(c1, c2)), 5.0e-2, epsilon = 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let sim = Simulator::new(&free_world());
        let u = ControlPair::new(v(-0.05, 0.02), v(0.07, 0.04));
        let mid = (u.u1 + u.u2) / 2.0;
        let d = u.u2 - u.u1;
        let z = Pose2::new(mid.x, mid.y, d.y.atan2(d.x));
        assert!(sim.grad_z(&z, &u).norm() < 1e-12);

        let u = ControlPair::new(v(-0.03, 0.01), v(0.03, 0.01));
        let g = sim.grad_z(&Pose2::IDENTITY, &u);
        assert_abs_diff_eq!(g.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.y, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hessian_examples() {
        let sim = Simulator::new(&free_world());
        // c1 - c2 = (-0.075, 0) at the identity pose.
        let aligned = ControlPair::new(v(-0.05, 0.0), v(0.05, 0.0));
        let h = sim.hessian_zz(&Pose2::IDENTITY, &aligned);
        assert_abs_diff_eq!(
            h,
            Matrix3::from_diagonal(&Vector3::new(200.0, 200.0, 0.375)),
            epsilon = 1e-12
        );
        let crossed = ControlPair::new(v(0.05, 0.0), v(-0.05, 0.0));
        let h = sim.hessian_zz(&Pose2::IDENTITY, &crossed);
        assert_abs_diff_eq!(h[(2, 2)], -0.375, epsilon = 1e-12);
    }

    #[test]
    fn free_equilibrium_examples() {
        let sim = Simulator::new(&free_world());
        let u = ControlPair::new(v(-0.05, 0.02), v(0.05, 0.02));
        let eq = sim.solve_equilibrium(&Pose2::new(0.003, -0.004, 0.05), &u);
        assert!(eq.converged);
        assert_abs_diff_eq!(eq.z_star.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(eq.z_star.y, 0.02, epsilon = 1e-9);
        assert_abs_diff_eq!(eq.z_star.theta, 0.0, epsilon = 1e-8);
        assert_eq!(eq.branch, 0);
        assert!(eq.det_scaled > 0.0);

        for d in [0.01, 0.08, 0.3] {
            let u = ControlPair::new(v(0.0, 0.0), v(d, d));
            let eq = sim.solve_equilibrium(&Pose2::new(0.0, 0.0, 0.7), &u);
            assert!(eq.converged);
            assert_abs_diff_eq!(eq.z_star.theta, std::f64::consts::FRAC_PI_4, epsilon = 1e-8);
            assert_eq!(eq.branch, 0);
        }
    }

    #[test]
    fn anti_aligned_branch_is_unstable() {
        let sim = Simulator::new(&free_world());
        // Starting exactly on the anti-aligned branch the rotational gradient
        // vanishes, so the solver stays there.
        let u = ControlPair::new(v(0.05, 0.0), v(-0.05, 0.0));
        let eq = sim.solve_equilibrium(&Pose2::IDENTITY, &u);
        assert!(eq.converged);
        assert_eq!(eq.branch.rem_euclid(2), 1);
        assert!(eq.det_scaled < 0.0);
    }

    #[test]
    fn constant_controls_hold_still() {
        let world = free_world();
        let sim = Simulator::new(&world);
        let u = ControlPair::new(v(-0.06, 0.01), v(0.06, 0.01));
        let traj = sim.rollout(&[u; 12], &Pose2::new(0.001, 0.0, 0.01), &CostWeights::default(), &RolloutSettings::default());
        assert_eq!(traj.len(), 12);
        let z = traj.states[0];
        assert!(traj.states.iter().all(|s| *s == z));
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn crossing_controls_flag_instability() {
        let sim = Simulator::new(&free_world());
        // u1 sweeps from the left of u2 to its right along a line.
        let controls: Vec<ControlPair> = (0..=40)
            .map(|k| {
                let s = -0.06 + 0.12 * k as f64 / 40.0;
                ControlPair::new(v(s, 0.0), v(0.0, 0.0))
            })
            .collect();
        let traj = sim.rollout(&controls, &Pose2::new(-0.03, 0.0, 0.0), &CostWeights::default(), &RolloutSettings::default());
        assert!(traj.instability_events() >= 1);
        assert!(traj.crossing_events() >= 1);
    }

    #[test]
    fn strict_slip_stops_early() {
        // Pressing the held peg down onto the plate loads both handles along
        // the peg faces; a light squeeze cannot carry that load.
        let world = WorldConfig::default();
        let sim = Simulator::new(&world);
        let z0 = Pose2::new(-0.15, world.peg.half_height, 0.0);
        let (c1, c2) = sim.handle_points(&z0);
        let squeeze = v(0.002, 0.0);
        let controls: Vec<ControlPair> = (0..20)
            .map(|k| {
                let down = v(0.0, -0.001 * k as f64);
                ControlPair::new(c1 + squeeze + down, c2 - squeeze + down)
            })
            .collect();
        let lax = sim.rollout(&controls, &z0, &CostWeights::default(), &RolloutSettings::default());
        let strict = sim.rollout(
            &controls,
            &z0,
            &CostWeights::default(),
            &RolloutSettings {
                strict_slip: true,
                ..RolloutSettings::default()
            },
        );
        assert!(lax.slip_events() > 0);
        assert!(!lax.terminated_early);
        assert_eq!(lax.len(), controls.len());
        assert!(strict.terminated_early);
        assert!(strict.len() < lax.len());
        assert!(strict.samples.last().unwrap().slipped());
        assert_eq!(&lax.states[..strict.len()], &strict.states[..]);
    }

    fn controls_strategy() -> impl Strategy<Value = ControlPair> {
        (-0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2)
            .prop_filter("distinct anchors", |(a, b, c, d)| ((a - c).powi(2) + (b - d).powi(2)).sqrt() > 1e-3)
            .prop_map(|(a, b, c, d)| ControlPair::from_array([a, b, c, d]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn free_equilibrium_is_midpoint_and_colinear(u in controls_strategy(), dth in -1.2f64..1.2) {
            let sim = Simulator::new(&free_world());
            let d = u.u2 - u.u1;
            let z0 = Pose2::new(0.0, 0.0, d.y.atan2(d.x) + dth);
            let eq = sim.solve_equilibrium(&z0, &u);
            prop_assert!(eq.converged);
            let mid = (u.u1 + u.u2) / 2.0;
            prop_assert!((eq.z_star.x - mid.x).abs() <= 1e-9);
            prop_assert!((eq.z_star.y - mid.y).abs() <= 1e-9);
            let (c1, c2) = sim.handle_points(&eq.z_star);
            let a = u.u1 - u.u2;
            let b = c1 - c2;
            let sin = (a.x * b.y - a.y * b.x) / (a.norm() * b.norm());
            prop_assert!(sin.abs() <= 1e-8, "sin {sin}");
            prop_assert_eq!(eq.branch, 0);
            prop_assert!(eq.det_scaled > 0.0);
        }

        #[test]
        fn branch_parity_sets_det_sign(u in controls_strategy(), m in -3i64..=3) {
            let sim = Simulator::new(&free_world());
            let d = u.u2 - u.u1;
            let z0 = Pose2::new(0.0, 0.0, d.y.atan2(d.x) + m as f64 * std::f64::consts::PI);
            let eq = sim.solve_equilibrium(&z0, &u);
            prop_assert!(eq.converged);
            prop_assert_eq!(eq.branch, m);
            if m.rem_euclid(2) == 0 {
                prop_assert!(eq.det_scaled > 0.0);
            } else {
                prop_assert!(eq.det_scaled < 0.0);
            }
        }

        #[test]
        fn hessian_is_symmetric(x in -0.1f64..0.1, y in 0.0f64..0.1, th in -0.5f64..0.5, u in controls_strategy()) {
            let sim = Simulator::new(&WorldConfig::default());
            let h = sim.hessian_zz(&Pose2::new(x, y, th), &u);
            let scale = h.abs().max().max(1e-12);
            prop_assert!((h - h.transpose()).abs().max() <= 1e-9 * scale);
        }
    }
}
