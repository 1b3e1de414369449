//! Sample-and-backtrack refinement of an abstract plan.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::AbstractPlan;
use crate::envs::{Action, Environment, State};
use crate::samplers::ParamSampler;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Refinement {
    pub actions: Option<Vec<Action>>,
    /// Parameter draws per plan step, summed over backtracking.
    pub samples_per_step: Vec<usize>,
    pub timed_out: bool,
}

impl Refinement {
    pub fn samples(&self) -> usize {
        self.samples_per_step.iter().sum()
    }
}

/// Depth-first search over parameter draws. Step `i` gets `n_samples` draws
/// per visit; a draw is kept when every atom the plan expects after the step
/// holds in the simulated state. An exhausted step sends the search back one
/// step. Steps whose controller takes no continuous parameters are tried once.
pub fn refine(
    plan: &AbstractPlan,
    x0: &State,
    samplers: &dyn ParamSampler,
    n_samples: usize,
    env: &dyn Environment,
    rng: &mut ChaCha8Rng,
    deadline: Option<Instant>,
) -> Refinement {
    let n = plan.steps.len();
    let mut out = Refinement {
        samples_per_step: vec![0; n],
        ..Default::default()
    };
    let mut states = vec![x0.clone()];
    let mut actions: Vec<Action> = Vec::with_capacity(n);
    let mut tries = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            out.timed_out = true;
            return out;
        }
        if tries[i] >= n_samples {
            if i == 0 {
                return out;
            }
            tries[i] = 0;
            i -= 1;
            states.pop();
            actions.pop();
            continue;
        }
        tries[i] += 1;
        out.samples_per_step[i] += 1;
        let step = &plan.steps[i];
        let x = &states[i];
        let theta = samplers.sample(step, x, rng);
        if theta.is_empty() {
            // Parameterless controllers are deterministic; one try settles it.
            tries[i] = n_samples;
        }
        let u = Action {
            controller: step.op.controller.name.clone(),
            args: step.controller_args.clone(),
            theta,
        };
        let Ok(next) = env.simulate(x, &u) else {
            continue;
        };
        if !plan.states[i + 1].is_subset(&env.abstract_state(&next)) {
            continue;
        }
        states.push(next);
        actions.push(u);
        i += 1;
    }
    out.actions = Some(actions);
    out
}
