use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use opcraft::envs::{env_by_name, EnvError};
use opcraft::harness::acceptance::{check_report, run_acceptance, AcceptanceOptions};
use opcraft::harness::{
    artifacts, evaluate, gen_demos, gen_eval_tasks, parse_keep_bonus, run_experiment, summarize, train,
    ExperimentConfig, HarnessError, Method, SamplerSource, SeedReport, Trained,
};
use opcraft::learner::LearnedModel;
use opcraft::symbolic::render_operator_set;

#[derive(Parser)]
#[command(
    name = "opcraft",
    version,
    about = "Learn planning operators from demonstrations and plan with them"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate demonstrations for each seed into OUT/seed<S>/demos.json.
    GenDemos {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        demos: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn operators and samplers from OUT/seed<S>/demos.json, generating the
    /// demonstrations first if the file is missing.
    Learn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate operators and samplers saved by `learn` on fresh tasks.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, default_value = "ours")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline for every seed and report.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        learn: LearnArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 1 when the report misses its target thresholds.
        #[arg(long)]
        check: bool,
    },
    /// Print saved operators as text.
    ExportOps {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance criteria, one pass/fail line each.
    Acceptance {
        #[arg(long, env = "OPCRAFT_SEED", value_delimiter = ',', default_value = "0,1,2,3,4")]
        seed: Vec<u64>,
        #[arg(long, default_value_t = 50)]
        demos: usize,
        #[arg(long, default_value_t = 50)]
        eval_tasks: usize,
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        /// Criterion numbers to run, e.g. `1,5`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "cluttered1d")]
    env: String,
    /// Comma-separated seeds.
    #[arg(long, env = "OPCRAFT_SEED", value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long, default_value = "ours")]
    method: String,
    #[arg(long, default_value_t = 50)]
    demos: usize,
    /// Weight of the operator count; defaults to one over (demos × transitions).
    #[arg(long)]
    lambda: Option<f64>,
    /// `kept` or `changed`.
    #[arg(long, default_value = "kept")]
    keep_bonus: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 50)]
    eval_tasks: usize,
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
    #[arg(long, default_value_t = 8)]
    n_abstract: usize,
    /// Use the environment's own parameter candidates instead of learned samplers.
    #[arg(long)]
    oracle_samplers: bool,
}

fn config(
    common: &Common,
    learn: Option<&LearnArgs>,
    eval: Option<&EvalArgs>,
) -> Result<ExperimentConfig, HarnessError> {
    let method = learn.map_or(Ok(Method::Ours), |l| l.method.parse())?;
    let mut cfg = ExperimentConfig::new(&common.env, method);
    cfg.seeds = common.seed.clone();
    if let Some(l) = learn {
        cfg.num_train_demos = l.demos;
        cfg.learner.lambda = l.lambda;
        cfg.learner.keep_bonus = parse_keep_bonus(&l.keep_bonus)?;
    }
    if let Some(e) = eval {
        cfg.num_eval_tasks = e.eval_tasks;
        cfg.planner.timeout_secs = e.timeout;
        cfg.planner.n_abstract = e.n_abstract;
        if e.oracle_samplers {
            cfg.sampler_source = SamplerSource::Oracle;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed{seed}"))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::GenDemos { common, demos, out } => {
            let env = env_by_name(&common.env)?;
            for &seed in &common.seed {
                let d = gen_demos(&*env, demos, seed)?;
                let dir = seed_dir(&out, seed);
                artifacts::save_demos(&*env, &dir, &d)?;
                println!("seed {seed}: {} demonstrations -> {}", d.len(), dir.display());
            }
        }
        Command::Learn { common, learn, out } => {
            let cfg = config(&common, Some(&learn), None)?;
            let env = env_by_name(&cfg.env)?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&out, seed);
                let demos = if dir.join(artifacts::DEMOS_FILE).exists() {
                    artifacts::load_demos(&*env, &dir)?
                } else {
                    let d = gen_demos(&*env, cfg.num_train_demos, seed)?;
                    artifacts::save_demos(&*env, &dir, &d)?;
                    d
                };
                let trained = train(&*env, cfg.method, &demos, &cfg.learner, &cfg.sampler, seed)?;
                artifacts::save_trained(&*env, &dir, &trained)?;
                println!(
                    "seed {seed}: {} operators, coverage {:.3}, {:.2}s -> {}",
                    trained.model.ops.len(),
                    trained.model.coverage,
                    trained.learning_time_secs,
                    dir.display()
                );
            }
        }
        Command::Eval {
            common,
            eval,
            method,
            out,
        } => {
            let mut cfg = config(&common, None, Some(&eval))?;
            cfg.method = method.parse()?;
            let env = env_by_name(&cfg.env)?;
            let mut seeds: Vec<SeedReport> = Vec::new();
            for &seed in &cfg.seeds {
                let dir = seed_dir(&out, seed);
                let ops = artifacts::load_operators(&*env, &dir)
                    .with_context(|| format!("no learned operators in {}; run `learn` first", dir.display()))?;
                let samplers = artifacts::load_samplers(&*env, &dir)?;
                let summary = artifacts::load_learn_summary(&*env, &dir)?;
                let tasks = gen_eval_tasks(&*env, cfg.num_eval_tasks, seed);
                let outcomes = evaluate(&env, &tasks, &ops, &samplers, cfg.sampler_source, &cfg.planner, seed);
                let trained = Trained {
                    seed,
                    model: LearnedModel {
                        datasets: vec![Vec::new(); ops.len()],
                        ops,
                        coverage: summary.coverage,
                    },
                    samplers,
                    learning_time_secs: summary.learning_time_secs,
                    sampler_time_secs: summary.sampler_time_secs,
                };
                seeds.push(opcraft::harness::seed_report(&trained, outcomes));
            }
            let report = summarize(&cfg, seeds);
            artifacts::save_report(&out, &report)?;
            print!("{}", report.to_table());
        }
        Command::Experiment {
            common,
            learn,
            eval,
            out,
            check,
        } => {
            let mut cfg = config(&common, Some(&learn), Some(&eval))?;
            cfg.out_dir = out;
            let report = run_experiment(&cfg)?;
            print!("{}", report.to_table());
            if check {
                match check_report(&report) {
                    Some(true) => println!("check: pass"),
                    Some(false) => {
                        println!("check: FAIL");
                        return Ok(ExitCode::from(1));
                    }
                    None => println!("check: no thresholds for {} / {}", report.env, report.method),
                }
            }
        }
        Command::ExportOps { common, out } => {
            let env = env_by_name(&common.env)?;
            for &seed in &common.seed {
                let ops = artifacts::load_operators(&*env, &seed_dir(&out, seed))?;
                print!("{}", render_operator_set(ops.iter().map(|o| &**o)));
            }
        }
        Command::Acceptance {
            seed,
            demos,
            eval_tasks,
            timeout,
            only,
        } => {
            let opts = AcceptanceOptions {
                seeds: seed,
                num_train_demos: demos,
                num_eval_tasks: eval_tasks,
                timeout_secs: timeout,
                only: only.into_iter().collect::<BTreeSet<u32>>(),
            };
            let results = run_acceptance(&opts, |c| println!("{}", c.line()))?;
            let failed = results.iter().filter(|c| !c.passed).count();
            println!("{} of {} criteria passed", results.len() - failed, results.len());
            if failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn is_usage_error(e: &anyhow::Error) -> bool {
    match e.downcast_ref::<HarnessError>() {
        Some(HarnessError::Config(_)) | Some(HarnessError::Env(EnvError::UnknownEnv(_))) => true,
        _ => matches!(e.downcast_ref::<EnvError>(), Some(EnvError::UnknownEnv(_))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
