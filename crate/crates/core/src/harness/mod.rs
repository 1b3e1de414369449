//! End-to-end experiments: demonstrations, learning, sampler fitting and
//! evaluation on held-out tasks, repeated over seeds.

pub mod acceptance;
pub mod artifacts;
pub mod properties;
pub mod report;

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{abstract_demos, KeepBonus};
use crate::envs::{env_by_name, Demonstration, EnvError, Environment, Task, TaskScale};
use crate::learner::{cluster_and_intersect, hill_climb, LearnError, LearnedModel, LearnerConfig};
use crate::planner::{bilevel_plan, PlannerConfig};
use crate::samplers::{fit_samplers, LearnedSamplers, OracleSamplers, ParamSampler, SamplerConfig, SamplerError};
use crate::symbolic::Operator;

pub use report::{summarize, ExperimentReport, MeanStderr, SeedReport, TaskOutcome};

/// Random stream ids derived from one seed.
const TRAIN_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;
const PLAN_STREAM_BASE: u64 = 1 << 32;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ours,
    ClusterIntersect,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::ClusterIntersect => "cluster_intersect",
        }
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ours" => Ok(Method::Ours),
            "cluster_intersect" | "ci" => Ok(Method::ClusterIntersect),
            other => Err(HarnessError::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Where the planner's continuous parameters come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerSource {
    #[default]
    Learned,
    /// The environment's own parameter candidates.
    Oracle,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("seed {seed}: {source}")]
    Learn { seed: u64, source: LearnError },
    #[error("seed {seed}: {source}")]
    Sampler { seed: u64, source: SamplerError },
    #[error("seed {seed}: demonstrator failed: {source}")]
    Demo { seed: u64, source: EnvError },
    #[error(transparent)]
    Io(#[from] crate::envs::io::IoError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: String,
    pub method: Method,
    pub num_train_demos: usize,
    pub num_eval_tasks: usize,
    pub seeds: Vec<u64>,
    pub planner: PlannerConfig,
    pub learner: LearnerConfig,
    pub sampler: SamplerConfig,
    pub sampler_source: SamplerSource,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(env: &str, method: Method) -> Self {
        Self {
            env: env.to_string(),
            method,
            num_train_demos: 50,
            num_eval_tasks: 50,
            seeds: vec![0, 1, 2, 3, 4],
            planner: PlannerConfig::default(),
            learner: LearnerConfig::default(),
            sampler: SamplerConfig::default(),
            sampler_source: SamplerSource::Learned,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<Arc<dyn Environment>, HarnessError> {
        let env = env_by_name(&self.env)?;
        if self.num_train_demos == 0 {
            return Err(HarnessError::Config(
                "at least one training demonstration is needed".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds given".into()));
        }
        if self.planner.n_abstract == 0 || self.planner.n_samples == 0 {
            return Err(HarnessError::Config("n_abstract and n_samples must be positive".into()));
        }
        if self.planner.timeout_secs.is_nan() || self.planner.timeout_secs <= 0.0 {
            return Err(HarnessError::Config("timeout must be positive".into()));
        }
        if self.learner.lambda.is_some_and(|l| l.is_nan() || l < 0.0) {
            return Err(HarnessError::Config("lambda must be non-negative".into()));
        }
        Ok(env)
    }
}

/// Training tasks for `seed` solved by the environment's demonstrator.
pub fn gen_demos(env: &dyn Environment, n: usize, seed: u64) -> Result<Vec<Demonstration>, HarnessError> {
    let mut rng = stream_rng(seed, TRAIN_STREAM);
    let tasks: Vec<Task> = (0..n).map(|_| env.sample_task(TaskScale::Train, &mut rng)).collect();
    tasks
        .par_iter()
        .map(|t| {
            env.oracle_solve(t)
                .map_err(|source| HarnessError::Demo { seed, source })
        })
        .collect()
}

pub fn gen_eval_tasks(env: &dyn Environment, n: usize, seed: u64) -> Vec<Task> {
    let mut rng = stream_rng(seed, EVAL_STREAM);
    (0..n).map(|_| env.sample_task(TaskScale::Eval, &mut rng)).collect()
}

/// Operators and samplers learned for one seed.
#[derive(Clone, Debug)]
pub struct Trained {
    pub seed: u64,
    pub model: LearnedModel,
    pub samplers: LearnedSamplers,
    pub learning_time_secs: f64,
    pub sampler_time_secs: f64,
}

pub fn learn_operators(
    env: &dyn Environment,
    method: Method,
    demos: &[Demonstration],
    cfg: &LearnerConfig,
    seed: u64,
) -> Result<LearnedModel, HarnessError> {
    let abs = abstract_demos(env, demos);
    match method {
        Method::Ours => hill_climb(&abs, cfg)
            .map(|(m, _)| m)
            .map_err(|source| HarnessError::Learn { seed, source }),
        Method::ClusterIntersect => Ok(cluster_and_intersect(&abs)),
    }
}

pub fn train(
    env: &dyn Environment,
    method: Method,
    demos: &[Demonstration],
    learner: &LearnerConfig,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Trained, HarnessError> {
    let start = Instant::now();
    let model = learn_operators(env, method, demos, learner, seed)?;
    let learning_time_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let abs = abstract_demos(env, demos);
    let samplers = fit_samplers(env, &model.ops, &model.datasets, demos, &abs, sampler, seed)
        .map_err(|source| HarnessError::Sampler { seed, source })?;
    Ok(Trained {
        seed,
        model,
        samplers,
        learning_time_secs,
        sampler_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Plans every task in parallel; outcomes come back in task order.
pub fn evaluate(
    env: &Arc<dyn Environment>,
    tasks: &[Task],
    ops: &[Arc<Operator>],
    samplers: &LearnedSamplers,
    source: SamplerSource,
    planner: &PlannerConfig,
    seed: u64,
) -> Vec<TaskOutcome> {
    let oracle = OracleSamplers { env: Arc::clone(env) };
    let sampler: &dyn ParamSampler = match source {
        SamplerSource::Learned => samplers,
        SamplerSource::Oracle => &oracle,
    };
    tasks
        .par_iter()
        .enumerate()
        .map(|(k, task)| {
            let mut rng = stream_rng(seed, PLAN_STREAM_BASE + k as u64);
            let out = bilevel_plan(&**env, task, ops, sampler, planner, &mut rng);
            TaskOutcome::from_plan(k, &out)
        })
        .collect()
}

pub fn seed_report(trained: &Trained, outcomes: Vec<TaskOutcome>) -> SeedReport {
    SeedReport::new(
        trained.seed,
        trained.model.ops.len(),
        trained.model.coverage,
        trained.learning_time_secs,
        trained.sampler_time_secs,
        outcomes,
    )
}

/// Runs the full pipeline for one seed and returns what was learned with its
/// evaluation.
pub fn run_seed(
    cfg: &ExperimentConfig,
    env: &Arc<dyn Environment>,
    seed: u64,
) -> Result<(Trained, SeedReport), HarnessError> {
    log::info!(
        "{} {} seed {seed}: generating {} demonstrations",
        cfg.env,
        cfg.method.name(),
        cfg.num_train_demos
    );
    let demos = gen_demos(&**env, cfg.num_train_demos, seed)?;
    let trained = train(&**env, cfg.method, &demos, &cfg.learner, &cfg.sampler, seed)?;
    log::info!(
        "seed {seed}: {} operators, coverage {:.3}, learned in {:.1}s",
        trained.model.ops.len(),
        trained.model.coverage,
        trained.learning_time_secs
    );
    let tasks = gen_eval_tasks(&**env, cfg.num_eval_tasks, seed);
    let outcomes = evaluate(
        env,
        &tasks,
        &trained.model.ops,
        &trained.samplers,
        cfg.sampler_source,
        &cfg.planner,
        seed,
    );
    let report = seed_report(&trained, outcomes);
    log::info!("seed {seed}: solved {:.1}%", report.success_rate);
    Ok((trained, report))
}

/// Seeds run one after another; evaluation inside a seed is parallel. When
/// `out_dir` is set, each seed's operators and samplers and the report are
/// written there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let env = cfg.validate()?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (trained, report) = run_seed(cfg, &env, seed)?;
        if let Some(dir) = &cfg.out_dir {
            artifacts::save_trained(&*env, &dir.join(format!("seed{seed}")), &trained)?;
        }
        seeds.push(report);
    }
    let report = summarize(cfg, seeds);
    if let Some(dir) = &cfg.out_dir {
        artifacts::save_report(dir, &report)?;
    }
    Ok(report)
}

/// Keep-bonus names accepted on the command line.
pub fn parse_keep_bonus(s: &str) -> Result<KeepBonus, HarnessError> {
    match s {
        "kept" => Ok(KeepBonus::Kept),
        "changed" => Ok(KeepBonus::Changed),
        other => Err(HarnessError::Config(format!("unknown keep bonus '{other}'"))),
    }
}
