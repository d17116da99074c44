//! Fixtures shared by the benchmarks in `benches/`.

use qsplan_core::{
    ControlPair, CostWeights, DmpSettings, Planner, Pose2, RolloutSettings, ScenarioSet,
    TaskConfig, Vec2, WorldConfig,
};

/// Default world with a 0.5 N peg.
pub fn world() -> WorldConfig {
    WorldConfig {
        peg_weight: 0.5,
        ..WorldConfig::default()
    }
}

pub fn planner() -> Planner {
    let w = world();
    let hole = w.hole.mouth_center;
    Planner::new(
        w,
        CostWeights::default(),
        DmpSettings::default(),
        TaskConfig::default(),
        ScenarioSet::nominal(hole),
        RolloutSettings::default(),
    )
    .expect("default planner is valid")
}

/// A pose with the left bottom corner pressed into the chamfer.
pub fn contact_pose() -> (Pose2, ControlPair) {
    let z = Pose2::new(-0.003, 0.0425, 0.0);
    let u = ControlPair::new(Vec2::new(-0.0125, 0.045), Vec2::new(0.0125, 0.045));
    (z, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qsplan_core::Simulator;

    #[test]
    fn contact_pose_touches_the_chamfer() {
        let (z, _) = contact_pose();
        let contacts = Simulator::new(&world()).contacts(&z);
        assert!(!contacts.is_empty());
    }
}
