//! The end-to-end acceptance criteria, each reported as one pass/fail line.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    evaluate, gen_eval_tasks, properties, run_seed, seed_report, summarize, ExperimentConfig, ExperimentReport,
    HarnessError, Method, Trained,
};
use crate::envs::{Environment, Micro, Task};
use crate::learner::LearnerConfig;
use crate::planner::{bilevel_plan, PlannerConfig};
use crate::samplers::OracleSamplers;
use crate::symbolic::{Atom, ControllerRef, Object, Operator, Variable};

#[derive(Clone, Debug, PartialEq)]
pub struct Criterion {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    fn new(id: &str, passed: bool, detail: String) -> Self {
        Self {
            id: id.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.detail
        )
    }
}

#[derive(Clone, Debug)]
pub struct AcceptanceOptions {
    pub seeds: Vec<u64>,
    pub num_train_demos: usize,
    pub num_eval_tasks: usize,
    pub timeout_secs: f64,
    /// Criterion numbers to run; empty runs all.
    pub only: BTreeSet<u32>,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            num_train_demos: 50,
            num_eval_tasks: 50,
            timeout_secs: 10.0,
            only: BTreeSet::new(),
        }
    }
}

impl AcceptanceOptions {
    fn config(&self, env: &str, method: Method) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(env, method);
        cfg.seeds = self.seeds.clone();
        cfg.num_train_demos = self.num_train_demos;
        cfg.num_eval_tasks = self.num_eval_tasks;
        cfg.planner.timeout_secs = self.timeout_secs;
        cfg
    }

    fn wants(&self, k: u32) -> bool {
        self.only.is_empty() || self.only.contains(&k)
    }
}

/// An experiment that also keeps what it learned, for ablations that only
/// change evaluation.
pub struct Run {
    pub report: ExperimentReport,
    pub trained: Vec<Trained>,
}

pub fn run_keeping_models(cfg: &ExperimentConfig) -> Result<Run, HarnessError> {
    let env = cfg.validate()?;
    let mut trained = Vec::new();
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let (t, r) = run_seed(cfg, &env, seed)?;
        trained.push(t);
        seeds.push(r);
    }
    Ok(Run {
        report: summarize(cfg, seeds),
        trained,
    })
}

/// Evaluates already learned models under a different planner configuration.
pub fn reevaluate(cfg: &ExperimentConfig, trained: &[Trained]) -> Result<ExperimentReport, HarnessError> {
    let env = cfg.validate()?;
    let seeds = trained
        .iter()
        .map(|t| {
            let tasks = gen_eval_tasks(&*env, cfg.num_eval_tasks, t.seed);
            let outcomes = evaluate(
                &env,
                &tasks,
                &t.model.ops,
                &t.samplers,
                cfg.sampler_source,
                &cfg.planner,
                t.seed,
            );
            seed_report(t, outcomes)
        })
        .collect();
    Ok(summarize(cfg, seeds))
}

fn op_counts(r: &ExperimentReport) -> Vec<usize> {
    r.seeds.iter().map(|s| s.operator_count).collect()
}

fn brief(r: &ExperimentReport) -> String {
    format!(
        "success {} %, operators {:?}, coverage {}",
        r.aggregate.success_rate.render(2),
        op_counts(r),
        r.aggregate.coverage.render(3)
    )
}

/// Every seed at or above `min_success` with an operator count in `ops`.
fn meets(r: &ExperimentReport, min_success: f64, ops: std::ops::RangeInclusive<usize>) -> bool {
    r.aggregate.success_rate.mean >= min_success && r.seeds.iter().all(|s| ops.contains(&s.operator_count))
}

/// A `micro` task whose cheapest abstract plan uses an operator that the
/// simulator can never realize: `Grab` claims to pick a block from afar
/// through the `Jump` controller, which does nothing. Only the longer plan
/// `MoveTo`, `Pick` refines, so a planner that trusts its first abstract
/// plan always fails.
pub fn non_refinable_fixture(block_x: f64) -> (Micro, Task, Vec<Arc<Operator>>) {
    let env = Micro::new();
    let pred = |n: &str| Arc::clone(env.predicate(n).expect("micro predicate"));
    let (at, holding, empty) = (pred("At"), pred("Holding"), pred("HandEmpty"));
    let r = Variable::new("?r", "bot");
    let b = Variable::new("?b", "block");
    let rb = || vec![r.clone(), b.clone()];
    let op = |name: &str, ctrl: &str, pre: Vec<_>, add: Vec<_>, del: Vec<_>| Operator {
        name: name.to_string(),
        params: rb(),
        preconditions: pre.into_iter().collect(),
        add_effects: add.into_iter().collect(),
        delete_effects: del.into_iter().collect(),
        quantified_deletes: BTreeSet::new(),
        controller: ControllerRef {
            name: ctrl.into(),
            args: rb(),
        },
    };
    let at_rb = Atom::new(&at, rb());
    let holding_rb = Atom::new(&holding, rb());
    let empty_r = Atom::new(&empty, vec![r.clone()]);
    let ops = vec![
        op("MoveTo", "Move", vec![empty_r.clone()], vec![at_rb.clone()], vec![]),
        op(
            "Pick",
            "Pick",
            vec![at_rb, empty_r.clone()],
            vec![holding_rb.clone()],
            vec![empty_r.clone()],
        ),
        op("Grab", "Jump", vec![empty_r.clone()], vec![holding_rb], vec![empty_r]),
    ];
    let init = Micro::state(1.0, &[block_x]);
    let bot = Object::new("bot", "bot");
    let block = Object::new("b0", "block");
    let goal = [Atom::new(&holding, vec![bot, block])].into_iter().collect();
    (env, Task::new(init, goal), ops.into_iter().map(Arc::new).collect())
}

/// Share of fixture tasks solved with `n_abstract` abstract plans allowed.
pub fn fixture_success(n_abstract: usize, n_tasks: usize) -> f64 {
    let mut solved = 0;
    for k in 0..n_tasks {
        let (env, task, ops) = non_refinable_fixture(2.0 + 7.0 * k as f64 / n_tasks.max(1) as f64);
        let env: Arc<dyn Environment> = Arc::new(env);
        let samplers = OracleSamplers { env: Arc::clone(&env) };
        let cfg = PlannerConfig {
            n_abstract,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        if bilevel_plan(&*env, &task, &ops, &samplers, &cfg, &mut rng).solved() {
            solved += 1;
        }
    }
    100.0 * solved as f64 / n_tasks.max(1) as f64
}

/// Runs the selected criteria, handing each result to `emit` as soon as it
/// is known. Errors abort the run.
pub fn run_acceptance(
    opts: &AcceptanceOptions,
    mut emit: impl FnMut(&Criterion),
) -> Result<Vec<Criterion>, HarnessError> {
    let mut results = Vec::new();
    let mut push = |c: Criterion, results: &mut Vec<Criterion>| {
        emit(&c);
        results.push(c);
    };

    let mut cluttered: Option<Run> = None;
    if opts.wants(1) || opts.wants(5) {
        cluttered = Some(run_keeping_models(&opts.config("cluttered1d", Method::Ours))?);
    }
    if opts.wants(1) {
        let r = &cluttered.as_ref().expect("run above").report;
        push(
            Criterion::new(
                "1 cluttered1d ours: success >= 95%, 2 operators per seed",
                meets(r, 95.0, 2..=2),
                brief(r),
            ),
            &mut results,
        );
    }

    if opts.wants(2) {
        let ours = run_keeping_models(&opts.config("screws", Method::Ours))?.report;
        push(
            Criterion::new(
                "2a screws ours: success >= 95%, 4 operators per seed",
                meets(&ours, 95.0, 4..=4),
                brief(&ours),
            ),
            &mut results,
        );
        let ci = run_keeping_models(&opts.config("screws", Method::ClusterIntersect))?.report;
        let ok = ci.aggregate.success_rate.mean <= 10.0 && ci.aggregate.operator_count.mean >= 10.0;
        push(
            Criterion::new(
                "2b screws cluster_intersect: success <= 10%, >= 10 operators",
                ok,
                brief(&ci),
            ),
            &mut results,
        );
    }

    let mut satellites: Option<ExperimentReport> = None;
    if opts.wants(3) || opts.wants(4) {
        satellites = Some(run_keeping_models(&opts.config("satellites", Method::Ours))?.report);
    }
    if opts.wants(3) {
        let ours = satellites.as_ref().expect("run above");
        let primary = meets(ours, 80.0, 6..=10);
        let c = if primary {
            Criterion::new(
                "3 satellites ours: success >= 80%, 6-10 operators (primary branch)",
                true,
                brief(ours),
            )
        } else {
            let ci = run_keeping_models(&opts.config("satellites", Method::ClusterIntersect))?.report;
            let full = ours.seeds.iter().all(|s| s.coverage >= 1.0 - 1e-12);
            let ok = ours.aggregate.success_rate.mean >= ci.aggregate.success_rate.mean && full;
            Criterion::new(
                "3 satellites ours (fallback branch): success >= cluster_intersect, coverage 1",
                ok,
                format!("ours {}; cluster_intersect {}", brief(ours), brief(&ci)),
            )
        };
        push(c, &mut results);
    }

    if opts.wants(4) {
        let default = satellites.as_ref().expect("run above");
        let mut cfg = opts.config("satellites", Method::Ours);
        cfg.learner = LearnerConfig {
            lambda: Some(0.0),
            ..Default::default()
        };
        let ablated = run_keeping_models(&cfg)?.report;
        let more = op_counts(&ablated)
            .iter()
            .zip(op_counts(default))
            .filter(|(a, d)| **a > *d)
            .count();
        let gain = ablated.aggregate.success_rate.mean - default.aggregate.success_rate.mean;
        let ok = more >= 3.min(default.seeds.len()) && gain <= 5.0;
        push(
            Criterion::new(
                "4 satellites lambda = 0: more operators on >= 3 of 5 seeds, success gain <= 5 points",
                ok,
                format!(
                    "operators {:?} vs default {:?} ({more} seeds larger); success {} vs {}",
                    op_counts(&ablated),
                    op_counts(default),
                    ablated.aggregate.success_rate.render(2),
                    default.aggregate.success_rate.render(2)
                ),
            ),
            &mut results,
        );
    }

    if opts.wants(5) {
        let full = fixture_success(PlannerConfig::default().n_abstract, 10);
        let single = fixture_success(1, 10);
        let run = cluttered.as_ref().expect("run above");
        let mut cfg = opts.config("cluttered1d", Method::Ours);
        cfg.planner.n_abstract = 1;
        let down = reevaluate(&cfg, &run.trained)?;
        let base = run.report.aggregate.success_rate.mean;
        let ok = full == 100.0 && single == 0.0 && down.aggregate.success_rate.mean == base;
        push(
            Criterion::new(
                "5 n_abstract = 1: fixture drops 100% -> 0%, cluttered1d unchanged",
                ok,
                format!(
                    "fixture {full:.0}% -> {single:.0}%; cluttered1d {:.2}% -> {:.2}%",
                    base, down.aggregate.success_rate.mean
                ),
            ),
            &mut results,
        );
    }

    if opts.wants(6) {
        let seed = opts.seeds.first().copied().unwrap_or(0);
        for (letter, p) in ('a'..).zip(properties::run_all(seed)) {
            let detail = if p.passed() {
                format!("{} cases {}", p.cases, p.notes).trim_end().to_string()
            } else {
                format!("{} of {} cases failed: {}", p.failed, p.cases, p.examples.join("; "))
            };
            push(
                Criterion::new(&format!("6{letter} property: {}", p.name), p.passed(), detail),
                &mut results,
            );
        }
    }
    Ok(results)
}

/// Thresholds `experiment --check` applies to a report, where the pairing of
/// environment and method has one.
pub fn check_report(r: &ExperimentReport) -> Option<bool> {
    match (r.env.as_str(), r.method.as_str()) {
        ("cluttered1d", "ours") => Some(meets(r, 95.0, 2..=2)),
        ("screws", "ours") => Some(meets(r, 95.0, 4..=4)),
        ("screws", "cluster_intersect") => {
            Some(r.aggregate.success_rate.mean <= 10.0 && r.aggregate.operator_count.mean >= 10.0)
        }
        ("satellites", "ours") => Some(meets(r, 80.0, 6..=10)),
        _ => None,
    }
}
