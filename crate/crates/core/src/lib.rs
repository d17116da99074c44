//! Quasi-static planning of dual-arm peg insertion.
//!
//! A rigid planar peg is held by two impedance-controlled handles. Control
//! trajectories come from movement primitives whose weights are tuned by
//! black-box optimization against a cost on friction, squeeze, grasp
//! stability and terminal accuracy, averaged over sampled hole poses.

pub mod costs;
pub mod error;
pub mod geometry;
pub mod mechanics;
pub mod optimizer;
pub mod planner;
pub mod policy;
pub mod scenarios;
pub mod world;

pub use costs::{CostBreakdown, CostWeights};
pub use error::{Error, Result};
pub use geometry::{
    ContactRecord, Environment, HoleShape, HoleSlot, PegShape, Pose2, Prong, SurfaceId, Vec2,
};
pub use mechanics::{
    ControlPair, EquilibriumResult, RolloutSettings, Simulator, StepSample, Trajectory,
};
pub use optimizer::{BboSettings, IterationRecord, Objective, OptimizerState, TrainOutcome, UpdateStrategy};
pub use planner::{Planner, TaskConfig};
pub use policy::{DmpParams, DmpSettings, ParamMatrix};
pub use scenarios::{PoseSigma, Scenario, ScenarioSet, SuccessCriteria, SuccessReport, WeightMode};
pub use world::{ContactSettings, Friction, SolverSettings, Stiffness, WorldConfig};
