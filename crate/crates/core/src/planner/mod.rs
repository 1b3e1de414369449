//! Bilevel planning: enumerate abstract plans with learned operators, then
//! sample continuous parameters for each plan until one runs in simulation.

mod heuristic;
mod refine;
mod search;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{Action, Environment, Task};
use crate::samplers::ParamSampler;
use crate::symbolic::{AbstractState, GroundOperator, Object, Operator};

pub use heuristic::{GroundTask, Heuristic};
pub use refine::{refine, Refinement};
pub use search::{PlanSearch, SearchEnd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no abstract plan reaches the goal")]
    NoAbstractPlan,
    #[error("planning timed out")]
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub n_abstract: usize,
    pub n_samples: usize,
    pub timeout_secs: f64,
    pub heuristic: Heuristic,
    /// Cap on search nodes per episode.
    pub max_nodes: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_abstract: 8,
            n_samples: 10,
            timeout_secs: 10.0,
            heuristic: Heuristic::HAdd,
            max_nodes: 200_000,
        }
    }
}

/// Ground operators with the abstract states they are predicted to produce;
/// `states` has one more entry than `steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractPlan {
    pub steps: Vec<GroundOperator>,
    pub states: Vec<AbstractState>,
}

impl AbstractPlan {
    pub fn cost(&self) -> usize {
        self.steps.len()
    }
}

/// Up to `n_abstract` distinct plans, stably sorted by cost, and the number
/// of search nodes created.
pub fn gen_abstract_plans(
    s0: &AbstractState,
    goal: &AbstractState,
    ops: &[Arc<Operator>],
    objects: &[Object],
    n_abstract: usize,
    heuristic: Heuristic,
) -> Result<(Vec<AbstractPlan>, usize), PlanError> {
    let task = GroundTask::new(s0, goal, ops, objects);
    let mut search = PlanSearch::new(&task, heuristic, n_abstract, PlannerConfig::default().max_nodes, None);
    let mut plans = Vec::new();
    while plans.len() < n_abstract {
        match search.next_plan() {
            Ok(p) => plans.push(p),
            Err(_) => break,
        }
    }
    if plans.is_empty() {
        return Err(PlanError::NoAbstractPlan);
    }
    plans.sort_by_key(AbstractPlan::cost);
    Ok((plans, search.nodes_created))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    NoAbstractPlan,
    /// Every abstract plan tried failed to refine.
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptTrace {
    pub plan: Vec<String>,
    pub samples_per_step: Vec<usize>,
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub actions: Option<Vec<Action>>,
    pub failure: Option<FailureReason>,
    pub nodes_created: usize,
    pub samples_drawn: usize,
    pub attempts: Vec<AttemptTrace>,
    pub wall_time_secs: f64,
}

impl PlanOutcome {
    pub fn solved(&self) -> bool {
        self.actions.is_some()
    }
}

/// Refines abstract plans in the order search finds them, at most
/// `n_abstract` of them, within the wall-clock budget.
pub fn bilevel_plan(
    env: &dyn Environment,
    task: &Task,
    ops: &[Arc<Operator>],
    samplers: &dyn ParamSampler,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> PlanOutcome {
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(cfg.timeout_secs.max(0.0));
    let s0 = env.abstract_state(&task.init);
    let ground = GroundTask::new(&s0, &task.goal, ops, &task.objects);
    let mut search = PlanSearch::new(&ground, cfg.heuristic, cfg.n_abstract, cfg.max_nodes, Some(deadline));
    let mut attempts = Vec::new();
    let mut samples_drawn = 0;
    let mut actions = None;
    let mut failure = None;
    while attempts.len() < cfg.n_abstract {
        let plan = match search.next_plan() {
            Ok(p) => p,
            Err(end) => {
                failure = Some(match end {
                    SearchEnd::Timeout => FailureReason::Timeout,
                    _ if attempts.is_empty() => FailureReason::NoAbstractPlan,
                    _ => FailureReason::Exhausted,
                });
                break;
            }
        };
        let r = refine(&plan, &task.init, samplers, cfg.n_samples, env, rng, Some(deadline));
        samples_drawn += r.samples();
        let refined = r.actions.is_some();
        attempts.push(AttemptTrace {
            plan: plan.steps.iter().map(|g| g.to_string()).collect(),
            samples_per_step: r.samples_per_step.clone(),
            refined,
        });
        if refined {
            actions = r.actions;
            break;
        }
        if r.timed_out {
            failure = Some(FailureReason::Timeout);
            break;
        }
    }
    if actions.is_none() && failure.is_none() {
        failure = Some(FailureReason::Exhausted);
    }
    PlanOutcome {
        actions,
        failure,
        nodes_created: search.nodes_created,
        samples_drawn,
        attempts,
        wall_time_secs: start.elapsed().as_secs_f64(),
    }
}
