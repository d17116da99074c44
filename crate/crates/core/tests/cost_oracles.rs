use qsplan_core::costs::{neg_log_psi, total_cost};
use qsplan_core::geometry::wrap_angle;
use qsplan_core::planner::grasp_controls;
use qsplan_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn planner(world: WorldConfig, steps: usize) -> Planner {
    let hole = world.hole.mouth_center;
    let dmp = DmpSettings {
        steps,
        ..DmpSettings::default()
    };
    Planner::new(
        world,
        CostWeights::default(),
        dmp,
        TaskConfig::default(),
        ScenarioSet::nominal(hole),
        RolloutSettings::default(),
    )
    .unwrap()
}

/// Recomputes every term from raw states and controls in one pass, using the
/// closed forms for handle geometry and the spring Hessian.
fn oracle(
    world: &WorldConfig,
    w: &CostWeights,
    traj: &Trajectory,
    theta: &ParamMatrix,
    target: &Pose2,
) -> [f64; 6] {
    let r = world.peg.half_width;
    let k = world.stiffness.k_c;
    let mu = world.friction.handle;
    let k0 = world.stiffness.reference_diagonal();
    let dt = traj.times[1] - traj.times[0];
    let mut t = [0.0; 6];
    for (step, (z, u)) in traj.states.iter().zip(&traj.controls).enumerate() {
        let (s, c) = z.theta.sin_cos();
        let axis = Vec2::new(c, s);
        let center = Vec2::new(z.x, z.y);
        let handles = [(center - axis * r, u.u1, -axis), (center + axis * r, u.u2, axis)];
        let mut fr = 0.0;
        let mut en = 0.0;
        for (ci, ui, n) in handles {
            let f = (ui - ci) / w.d0;
            let nf = n.dot(&f);
            let tang = (f - n * nf).norm();
            fr += neg_log_psi(-mu * nf - tang);
            let e = (ui - ci).norm() - w.l0;
            en += e * e / (2.0 * w.d0 * w.d0);
        }
        let dot = (u.u1 - u.u2).dot(&(handles[0].0 - handles[1].0));
        let det = (2.0 * k) * (2.0 * k) * (0.5 * k * dot) / (k0[0] * k0[1] * k0[2]);
        let st = if det > 1e-12 { -det.ln() } else { 1e3 };
        if step > 0 {
            t[1] += fr * dt;
            t[2] += en * dt;
            t[3] += st * dt;
        }
    }
    let z = traj.states.last().unwrap();
    let dx = z.x - target.x;
    let dy = z.y - target.y;
    let dth = wrap_angle(z.theta - target.theta) * w.rho;
    t[0] = (dx * dx + dy * dy + dth * dth) / (w.d0 * w.d0);
    t[4] = theta.as_slice().iter().map(|v| v * v).sum();
    t[5] = w.alpha1 * t[0] + w.alpha2 * t[1] + w.alpha3 * t[2] + w.alpha4 * t[3] + w.alpha5 * t[4];
    t
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn breakdown_matches_independent_summation() {
    let world = WorldConfig {
        peg_weight: 0.5,
        ..WorldConfig::default()
    };
    let p = planner(world.clone(), 200);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..6 {
        let theta = ParamMatrix::from_fn(4, 10, |_, _| rng.random_range(-60.0..60.0));
        let (traj, b) = p.scenario_rollout(&theta, 0);
        let o = oracle(&world, &p.weights, &traj, &theta, &p.nominal_target());
        let got = [b.kinematic, b.friction, b.energy, b.stability, b.regularization, b.total];
        for (g, e) in got.iter().zip(&o) {
            assert!(rel(*g, *e) < 1e-10, "{got:?} vs {o:?}");
        }
    }
}

#[test]
fn halving_the_step_changes_integrals_by_under_two_percent() {
    // A smooth control path in free space, sampled at two resolutions. Low
    // friction so the weight pushes the handle forces out of the cone.
    let mut world = WorldConfig::default();
    world.hole.mouth_center = Pose2::new(0.0, -1.0, 0.0);
    world.peg_weight = 0.5;
    world.friction.handle = 0.05;
    let w = CostWeights::default();
    let sim = Simulator::new(&world);
    let path = |steps: usize| -> Vec<ControlPair> {
        (0..=steps)
            .map(|k| {
                let s = k as f64 / steps as f64;
                let z = Pose2::new(0.01 * s, 0.05 - 0.03 * s, 0.1 * (std::f64::consts::PI * s).sin());
                let mut u = grasp_controls(&world.peg, &z, w.l0 + 0.005 * (std::f64::consts::PI * s).sin());
                u.u1.y += 0.02 * (2.0 * std::f64::consts::PI * s).sin();
                u
            })
            .collect()
    };
    let target = Pose2::new(0.01, 0.02, 0.0);
    let theta = ParamMatrix::zeros(4, 10);
    let run = |steps: usize| {
        let controls = path(steps);
        let traj = sim.rollout(&controls, &Pose2::new(0.0, 0.05, 0.0), &w, &RolloutSettings::default());
        total_cost(&traj, &w, &theta, &target)
    };
    let (a, b) = (run(200), run(400));
    assert!(a.friction > 1.0 && a.energy > 1.0, "{a:?}");
    for (x, y) in [(a.friction, b.friction), (a.energy, b.energy), (a.stability, b.stability)] {
        assert!(rel(x, y) < 0.02, "{x} vs {y}");
    }
}

#[test]
fn stationary_policy_at_target_costs_only_stability() {
    let mut world = WorldConfig::default();
    world.hole.mouth_center = Pose2::new(0.0, -1.0, 0.0);
    let w = CostWeights::default();
    let z = Pose2::new(0.01, 0.02, 0.0);
    let u = grasp_controls(&world.peg, &z, w.l0);
    let controls = vec![u; 201];
    let sim = Simulator::new(&world);
    let traj = sim.rollout(&controls, &z, &w, &RolloutSettings::default());
    let theta = ParamMatrix::zeros(4, 0);
    let b = total_cost(&traj, &w, &theta, &z);
    let k = world.stiffness.k_c;
    let k0 = world.stiffness.reference_diagonal();
    let dot = (2.0 * (0.0375 - w.l0)) * (2.0 * 0.0375);
    let rest = -((4.0 * k * k * 0.5 * k * dot) / (k0[0] * k0[1] * k0[2])).ln();
    assert!(b.kinematic < 1e-12, "{b:?}");
    assert!(b.energy < 1e-12);
    assert!(b.friction < 1e-10);
    assert_eq!(b.regularization, 0.0);
    assert!(rel(b.stability, rest * 5.0) < 1e-9, "{} vs {}", b.stability, rest * 5.0);
    assert!(rel(b.total, w.alpha4 * rest * 5.0) < 1e-6);
}
