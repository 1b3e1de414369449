use std::process::Command;

use opcraft::envs::env_by_name;
use opcraft::envs::io::{self, IoError, SCHEMA_VERSION};
use opcraft::harness::{
    artifacts, gen_demos, learn_operators, run_experiment, train, ExperimentConfig, HarnessError, Method,
};
use opcraft::learner::LearnerConfig;
use opcraft::samplers::SamplerConfig;
use opcraft::symbolic::render_operator_set;

fn opcraft() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_opcraft"));
    c.env_remove("OPCRAFT_SEED");
    c
}

#[test]
fn learned_cluttered_operators_match_golden_file() {
    let env = env_by_name("cluttered1d").unwrap();
    let demos = gen_demos(&*env, 50, 0).unwrap();
    let model = learn_operators(&*env, Method::Ours, &demos, &LearnerConfig::default(), 0).unwrap();
    let text = render_operator_set(model.ops.iter().map(|o| &**o));
    assert_eq!(text, include_str!("golden/cluttered1d_seed0_operators.txt"));
}

#[test]
fn zero_evaluation_tasks_give_empty_report() {
    let mut cfg = ExperimentConfig::new("screws", Method::Ours);
    cfg.seeds = vec![0];
    cfg.num_train_demos = 5;
    cfg.num_eval_tasks = 0;
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.seeds.len(), 1);
    assert!(report.seeds[0].tasks.is_empty());
    assert_eq!(report.seeds[0].success_rate, 0.0);
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut cfg = ExperimentConfig::new("screws", Method::Ours);
    cfg.num_train_demos = 0;
    assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
    let mut cfg = ExperimentConfig::new("screws", Method::Ours);
    cfg.seeds.clear();
    assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
    let cfg = ExperimentConfig::new("nowhere", Method::Ours);
    assert!(matches!(cfg.validate(), Err(HarnessError::Env(_))));
    assert!("bogus".parse::<Method>().is_err());
    assert_eq!("ci".parse::<Method>().unwrap(), Method::ClusterIntersect);
}

#[test]
fn artifacts_round_trip() {
    let env = env_by_name("cluttered1d").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let demos = gen_demos(&*env, 6, 1).unwrap();
    artifacts::save_demos(&*env, dir.path(), &demos).unwrap();
    assert_eq!(artifacts::load_demos(&*env, dir.path()).unwrap(), demos);

    let sampler = SamplerConfig {
        generator_epochs: 50,
        discriminator_epochs: 50,
        ..Default::default()
    };
    let trained = train(&*env, Method::Ours, &demos, &LearnerConfig::default(), &sampler, 1).unwrap();
    artifacts::save_trained(&*env, dir.path(), &trained).unwrap();
    assert_eq!(artifacts::load_operators(&*env, dir.path()).unwrap(), trained.model.ops);
    let samplers = artifacts::load_samplers(&*env, dir.path()).unwrap();
    assert_eq!(
        artifacts::samplers_to_json(&*env, &samplers),
        artifacts::samplers_to_json(&*env, &trained.samplers)
    );
    let summary = artifacts::load_learn_summary(&*env, dir.path()).unwrap();
    assert_eq!(summary.coverage, trained.model.coverage);
}

#[test]
fn wrong_schema_version_or_env_is_refused() {
    let env = env_by_name("screws").unwrap();
    let demos = gen_demos(&*env, 2, 0).unwrap();
    let text = io::demos_to_json(&*env, &demos);
    let bumped = text.replacen(
        &format!("\"schema_version\": {SCHEMA_VERSION}"),
        &format!("\"schema_version\": {}", SCHEMA_VERSION + 1),
        1,
    );
    assert_ne!(bumped, text);
    assert!(matches!(
        io::demos_from_json(&*env, &bumped),
        Err(IoError::SchemaVersion { .. })
    ));
    let other = env_by_name("cluttered1d").unwrap();
    assert!(matches!(
        io::demos_from_json(&*other, &text),
        Err(IoError::EnvMismatch { .. })
    ));
}

#[test]
fn cli_usage_errors_exit_with_two() {
    let out = opcraft().args(["experiment", "--env", "nowhere"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = opcraft().args(["experiment", "--method", "bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = opcraft().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_eval_without_learned_operators_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = opcraft()
        .args(["eval", "--env", "screws", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learn"));
}

#[test]
fn cli_learn_then_eval_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let out = opcraft().args(args).arg("--out").arg(dir.path()).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["learn", "--env", "screws", "--seed", "0,1", "--demos", "10"]);
    assert!(dir.path().join("seed1").join(artifacts::OPERATORS_FILE).exists());
    let table = run(&["eval", "--env", "screws", "--seed", "0,1", "--eval-tasks", "3"]);
    assert!(table.contains("mean (se)"));
    let report = artifacts::load_report(dir.path()).unwrap();
    assert_eq!(report.seeds.len(), 2);
    assert!(report.seeds.iter().all(|s| s.tasks.len() == 3));
    let ops = run(&["export-ops", "--env", "screws", "--seed", "1"]);
    assert!(ops.contains("Controller:"));
}

#[test]
fn cli_seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = opcraft()
        .env("OPCRAFT_SEED", "7")
        .args(["gen-demos", "--env", "screws", "--demos", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("seed7").join(artifacts::DEMOS_FILE).exists());
}
