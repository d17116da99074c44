//! Sampling-based black-box optimization over policy parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::CostBreakdown;
use crate::error::{Error, Result};
use crate::policy::ParamMatrix;

/// Ceiling applied to every candidate cost before ranking.
pub const COST_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateStrategy {
    #[default]
    Elite,
    RewardWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BboSettings {
    /// Candidates per iteration `R`.
    pub candidates: usize,
    pub max_iterations: usize,
    pub strategy: UpdateStrategy,
    /// Initial exploration deviation [forcing units].
    pub initial_sigma: f64,
    /// Per-iteration decay of the exploration deviation.
    pub sigma_decay: f64,
    /// Temperature of the reward-weighted update.
    pub temperature: f64,
    /// Relative improvement below which the run counts as stalled.
    pub stall_tolerance: f64,
    /// Consecutive stalled iterations before stopping.
    pub stall_window: usize,
    pub seed: u64,
}

impl Default for BboSettings {
    fn default() -> Self {
        Self {
            candidates: 15,
            max_iterations: 100,
            strategy: UpdateStrategy::Elite,
            initial_sigma: 20.0,
            sigma_decay: 0.98,
            temperature: 10.0,
            stall_tolerance: 1e-4,
            stall_window: 10,
            seed: 0,
        }
    }
}

impl BboSettings {
    pub fn validate(&self) -> Result<()> {
        if self.candidates < 2 {
            return Err(Error::config("bbo.candidates", "must be >= 2"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("bbo.max_iterations", "must be >= 1"));
        }
        if !(self.initial_sigma > 0.0 && self.initial_sigma.is_finite()) {
            return Err(Error::config("bbo.initial_sigma", "must be > 0"));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return Err(Error::config("bbo.sigma_decay", "must lie in (0, 1]"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("bbo.temperature", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub best_cost: f64,
    pub mean_cost: f64,
    /// Cost of the mean (candidate 0) this iteration.
    pub incumbent_cost: f64,
    /// Term averages over the candidates of this iteration.
    pub mean_terms: CostBreakdown,
    pub exploration_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub mean_theta: ParamMatrix,
    pub exploration_sigma: f64,
    pub iteration: usize,
    pub best_theta: ParamMatrix,
    pub best_cost: f64,
    pub history: Vec<IterationRecord>,
    pub rng_seed: u64,
}

impl OptimizerState {
    pub fn new(mean_theta: ParamMatrix, exploration_sigma: f64, rng_seed: u64) -> Self {
        Self {
            best_theta: mean_theta.clone(),
            mean_theta,
            exploration_sigma,
            iteration: 0,
            best_cost: f64::INFINITY,
            history: Vec::new(),
            rng_seed,
        }
    }
}

/// Cost of one candidate, with its per-term breakdown.
pub trait Objective: Sync {
    fn evaluate(&self, theta: &ParamMatrix) -> CostBreakdown;
}

impl<F> Objective for F
where
    F: Fn(&ParamMatrix) -> CostBreakdown + Sync,
{
    fn evaluate(&self, theta: &ParamMatrix) -> CostBreakdown {
        self(theta)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for candidate `r` at `iteration`.
pub fn candidate_seed(seed: u64, iteration: usize, r: usize) -> u64 {
    seed ^ splitmix64(splitmix64(iteration as u64) ^ (r as u64).rotate_left(32))
}

/// Draws `count` candidates around the mean; index 0 is the mean itself.
pub fn sample_candidates(state: &OptimizerState, count: usize) -> Vec<ParamMatrix> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..count)
        .map(|r| {
            if r == 0 {
                return state.mean_theta.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(candidate_seed(state.rng_seed, state.iteration, r));
            let mut theta = state.mean_theta.clone();
            for v in theta.as_mut_slice() {
                *v += state.exploration_sigma * normal.sample(&mut rng);
            }
            theta
        })
        .collect()
}

pub fn clamp_cost(c: f64) -> f64 {
    if c.is_finite() {
        c.min(COST_CAP)
    } else {
        COST_CAP
    }
}

/// Moves the mean, decays exploration and updates the incumbent.
pub fn update(
    state: &OptimizerState,
    candidates: &[ParamMatrix],
    costs: &[f64],
    settings: &BboSettings,
) -> OptimizerState {
    assert_eq!(candidates.len(), costs.len(), "one cost per candidate");
    let costs: Vec<f64> = costs.iter().map(|c| clamp_cost(*c)).collect();
    let mut best_idx = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best_idx] {
            best_idx = i;
        }
    }
    let mean_theta = match settings.strategy {
        UpdateStrategy::Elite => candidates[best_idx].clone(),
        UpdateStrategy::RewardWeighted => {
            let lo = costs[best_idx];
            let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo + 1e-12;
            let w: Vec<f64> = costs
                .iter()
                .map(|c| (-settings.temperature * (c - lo) / span).exp())
                .collect();
            let total: f64 = w.iter().sum();
            let mut acc = ParamMatrix::zeros(candidates[0].rows(), candidates[0].cols());
            for (wi, cand) in w.iter().zip(candidates) {
                acc = acc.add_scaled(cand, wi / total);
            }
            acc
        }
    };
    let mut next = state.clone();
    next.mean_theta = mean_theta;
    next.exploration_sigma = state.exploration_sigma * settings.sigma_decay;
    next.iteration = state.iteration + 1;
    if costs[best_idx] < state.best_cost {
        next.best_cost = costs[best_idx];
        next.best_theta = candidates[best_idx].clone();
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub best_theta: ParamMatrix,
    pub best_cost: f64,
    pub history: Vec<IterationRecord>,
    pub state: OptimizerState,
}

/// Runs sample → evaluate → update until the iteration budget is spent or
/// the best cost stalls.
pub fn train(
    objective: &dyn Objective,
    initial: ParamMatrix,
    settings: &BboSettings,
) -> Result<TrainOutcome> {
    settings.validate()?;
    let mut state = OptimizerState::new(initial, settings.initial_sigma, settings.seed);
    let mut stalled = 0;
    for _ in 0..settings.max_iterations {
        let candidates = sample_candidates(&state, settings.candidates);
        let results: Vec<CostBreakdown> = candidates
            .par_iter()
            .map(|c| objective.evaluate(c))
            .collect();
        let costs: Vec<f64> = results.iter().map(|b| clamp_cost(b.total)).collect();
        let previous_best = state.best_cost;
        let sigma = state.exploration_sigma;
        state = update(&state, &candidates, &costs, settings);
        let inv = 1.0 / results.len() as f64;
        let mean_terms = CostBreakdown::weighted_sum(results.iter().map(|b| (inv, b)));
        state.history.push(IterationRecord {
            iteration: state.iteration,
            best_cost: state.best_cost,
            mean_cost: costs.iter().sum::<f64>() * inv,
            incumbent_cost: costs[0],
            mean_terms,
            exploration_sigma: sigma,
        });
        let improvement = if previous_best.is_finite() {
            (previous_best - state.best_cost) / previous_best.abs().max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        if improvement < settings.stall_tolerance {
            stalled += 1;
            if stalled >= settings.stall_window {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(TrainOutcome {
        best_theta: state.best_theta.clone(),
        best_cost: state.best_cost,
        history: state.history.clone(),
        state,
    })
}
