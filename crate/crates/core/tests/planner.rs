use std::collections::BTreeSet;
use std::sync::Arc;

use opcraft::envs::{Action, Environment, Micro, Task};
use opcraft::harness::acceptance::{fixture_success, non_refinable_fixture};
use opcraft::planner::{bilevel_plan, gen_abstract_plans, refine, FailureReason, Heuristic, PlanError, PlannerConfig};
use opcraft::samplers::{OracleSamplers, ParamSampler};
use opcraft::symbolic::{apply, enumerate_groundings, is_injective, AbstractState, GroundOperator, Operator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The fixture without its unrealizable shortcut.
fn move_pick(block_x: f64) -> (Micro, Task, Vec<Arc<Operator>>) {
    let (env, task, mut ops) = non_refinable_fixture(block_x);
    ops.retain(|o| o.name != "Grab");
    (env, task, ops)
}

fn replays_to_goal(env: &dyn Environment, task: &Task, actions: &[Action]) -> bool {
    let mut x = task.init.clone();
    for u in actions {
        match env.simulate(&x, u) {
            Ok(next) => x = next,
            Err(_) => return false,
        }
    }
    env.goal_reached(task, &x)
}

fn check_chain(plan: &opcraft::planner::AbstractPlan, goal: &AbstractState) {
    assert_eq!(plan.states.len(), plan.steps.len() + 1);
    for (i, g) in plan.steps.iter().enumerate() {
        assert!(g.preconditions.is_subset(&plan.states[i]));
        assert_eq!(apply(&plan.states[i], g).unwrap(), plan.states[i + 1]);
    }
    assert!(goal.is_subset(plan.states.last().unwrap()));
}

/// All goal-reaching sequences of at most `depth` injective ground steps.
fn exhaustive_plans(
    s0: &AbstractState,
    goal: &AbstractState,
    ground: &[GroundOperator],
    depth: usize,
) -> Vec<Vec<String>> {
    let mut found = Vec::new();
    let mut frontier: Vec<(AbstractState, Vec<String>)> = vec![(s0.clone(), Vec::new())];
    for _ in 0..=depth {
        let mut next = Vec::new();
        for (s, path) in frontier {
            if goal.is_subset(&s) {
                found.push(path.clone());
            }
            for g in ground {
                if let Ok(s2) = apply(&s, g) {
                    let mut p = path.clone();
                    p.push(g.to_string());
                    next.push((s2, p));
                }
            }
        }
        frontier = next;
    }
    found
}

#[test]
fn goal_already_true_gives_empty_plan() {
    let (env, task, ops) = move_pick(5.0);
    let s0 = env.abstract_state(&task.init);
    let goal: AbstractState = s0
        .iter()
        .filter(|a| &*a.predicate.name == "HandEmpty")
        .cloned()
        .collect();
    let (plans, _) = gen_abstract_plans(&s0, &goal, &ops, &task.objects, 8, Heuristic::HAdd).unwrap();
    assert!(plans[0].steps.is_empty());

    let trivial = Task::new(task.init.clone(), goal);
    let env: Arc<dyn Environment> = Arc::new(env);
    let samplers = OracleSamplers { env: Arc::clone(&env) };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = bilevel_plan(&*env, &trivial, &ops, &samplers, &PlannerConfig::default(), &mut rng);
    assert_eq!(out.actions, Some(Vec::new()));
}

#[test]
fn unique_two_step_plan_comes_first() {
    let (env, task, ops) = move_pick(5.0);
    let s0 = env.abstract_state(&task.init);
    let ground: Vec<GroundOperator> = ops
        .iter()
        .flat_map(|o| enumerate_groundings(o, &task.objects))
        .filter(|g| is_injective(&g.objects))
        .collect();
    let oracle = exhaustive_plans(&s0, &task.goal, &ground, 2);
    assert_eq!(oracle.len(), 1, "{oracle:?}");
    assert_eq!(oracle[0].len(), 2);

    let (plans, nodes) = gen_abstract_plans(&s0, &task.goal, &ops, &task.objects, 8, Heuristic::HAdd).unwrap();
    let first: Vec<String> = plans[0].steps.iter().map(|g| g.to_string()).collect();
    assert_eq!(first, oracle[0]);
    assert!(nodes > 0);
    for p in &plans {
        check_chain(p, &task.goal);
    }
    assert!(plans.windows(2).all(|w| w[0].cost() <= w[1].cost()));
}

#[test]
fn unreachable_goal_has_no_abstract_plan() {
    let (env, task, ops) = move_pick(5.0);
    let s0 = env.abstract_state(&task.init);
    let only_move: Vec<Arc<Operator>> = ops.iter().filter(|o| o.name == "MoveTo").cloned().collect();
    let err = gen_abstract_plans(&s0, &task.goal, &only_move, &task.objects, 8, Heuristic::HAdd).unwrap_err();
    assert_eq!(err, PlanError::NoAbstractPlan);

    let env: Arc<dyn Environment> = Arc::new(env);
    let samplers = OracleSamplers { env: Arc::clone(&env) };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = bilevel_plan(&*env, &task, &only_move, &samplers, &PlannerConfig::default(), &mut rng);
    assert_eq!(out.failure, Some(FailureReason::NoAbstractPlan));
}

#[test]
fn oracle_samplers_refine_within_budget() {
    let (env, task, ops) = move_pick(6.5);
    let s0 = env.abstract_state(&task.init);
    let (plans, _) = gen_abstract_plans(&s0, &task.goal, &ops, &task.objects, 1, Heuristic::HAdd).unwrap();
    let env: Arc<dyn Environment> = Arc::new(env);
    let samplers = OracleSamplers { env: Arc::clone(&env) };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = refine(&plans[0], &task.init, &samplers, 10, &*env, &mut rng, None);
    let actions = r.actions.expect("refines");
    assert!(r.samples_per_step.iter().all(|&n| (1..=10).contains(&n)));
    assert!(replays_to_goal(&*env, &task, &actions));
}

/// Always proposes a position outside the world, which leaves `Move` a no-op.
struct OutOfRange;

impl ParamSampler for OutOfRange {
    fn sample(&self, ground: &GroundOperator, _x: &opcraft::envs::State, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &*ground.op.controller.name {
            "Move" => vec![-50.0],
            _ => Vec::new(),
        }
    }
}

#[test]
fn hopeless_sampler_fails_within_draw_budget() {
    let (env, task, ops) = move_pick(6.5);
    let s0 = env.abstract_state(&task.init);
    let (plans, _) = gen_abstract_plans(&s0, &task.goal, &ops, &task.objects, 1, Heuristic::HAdd).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 10;
    let r = refine(&plans[0], &task.init, &OutOfRange, n, &env, &mut rng, None);
    assert!(r.actions.is_none());
    assert!(r.samples() <= n.pow(plans[0].steps.len() as u32));
    assert!(r.samples() >= n);
}

#[test]
fn second_abstract_plan_rescues_unrefinable_first() {
    let (env, task, ops) = non_refinable_fixture(5.0);
    let env: Arc<dyn Environment> = Arc::new(env);
    let samplers = OracleSamplers { env: Arc::clone(&env) };
    let s0 = env.abstract_state(&task.init);
    let (plans, _) = gen_abstract_plans(&s0, &task.goal, &ops, &task.objects, 8, Heuristic::HAdd).unwrap();
    assert_eq!(plans[0].steps[0].name(), "Grab");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = bilevel_plan(&*env, &task, &ops, &samplers, &PlannerConfig::default(), &mut rng);
    assert!(out.attempts.len() >= 2);
    assert!(!out.attempts[0].refined);
    assert!(replays_to_goal(&*env, &task, out.actions.as_ref().expect("solved")));

    let single = PlannerConfig {
        n_abstract: 1,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = bilevel_plan(&*env, &task, &ops, &samplers, &single, &mut rng);
    assert!(!out.solved());
    assert_eq!(out.failure, Some(FailureReason::Exhausted));
}

#[test]
fn fixture_success_drops_to_zero_with_one_abstract_plan() {
    assert_eq!(fixture_success(8, 10), 100.0);
    assert_eq!(fixture_success(1, 10), 0.0);
}

#[test]
fn expired_deadline_reports_timeout() {
    let (env, task, ops) = move_pick(5.0);
    let env: Arc<dyn Environment> = Arc::new(env);
    let samplers = OracleSamplers { env: Arc::clone(&env) };
    let cfg = PlannerConfig {
        timeout_secs: 0.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = bilevel_plan(&*env, &task, &ops, &samplers, &cfg, &mut rng);
    assert_eq!(out.failure, Some(FailureReason::Timeout));
}

#[test]
fn planning_is_deterministic() {
    let (env, task, ops) = non_refinable_fixture(3.0);
    let env: Arc<dyn Environment> = Arc::new(env);
    let samplers = OracleSamplers { env: Arc::clone(&env) };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = bilevel_plan(&*env, &task, &ops, &samplers, &PlannerConfig::default(), &mut rng);
        (out.actions, out.attempts, out.nodes_created)
    };
    assert_eq!(run(), run());
}

#[test]
fn distinct_plans_have_distinct_state_sequences() {
    let (env, task, ops) = non_refinable_fixture(5.0);
    let s0 = env.abstract_state(&task.init);
    let (plans, _) = gen_abstract_plans(&s0, &task.goal, &ops, &task.objects, 8, Heuristic::GoalCount).unwrap();
    let seqs: BTreeSet<Vec<AbstractState>> = plans.iter().map(|p| p.states.clone()).collect();
    assert_eq!(seqs.len(), plans.len());
}
