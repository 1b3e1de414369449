//! Files written by the pipeline stages, so later stages can start from
//! earlier results.
//!
//! A seed directory holds `demos.json`, `operators.json`, `operators.txt`,
//! `samplers.json` and `learn.json`; an experiment directory holds
//! `report.json`, `report.csv`, `tasks.csv` and `report.txt`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::report::ExperimentReport;
use super::Trained;
use crate::envs::io::{self, IoError};
use crate::envs::{Demonstration, Environment};
use crate::samplers::LearnedSamplers;
use crate::symbolic::{render_operator_set, Operator};

pub const DEMOS_FILE: &str = "demos.json";
pub const OPERATORS_FILE: &str = "operators.json";
pub const OPERATORS_TEXT_FILE: &str = "operators.txt";
pub const SAMPLERS_FILE: &str = "samplers.json";
pub const LEARN_FILE: &str = "learn.json";

/// Learning statistics saved next to the operators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnSummary {
    pub seed: u64,
    pub operator_count: usize,
    pub coverage: f64,
    pub learning_time_secs: f64,
    pub sampler_time_secs: f64,
}

pub fn save_demos(env: &dyn Environment, dir: &Path, demos: &[Demonstration]) -> Result<(), IoError> {
    io::write_file(&dir.join(DEMOS_FILE), &io::demos_to_json(env, demos))
}

pub fn load_demos(env: &dyn Environment, dir: &Path) -> Result<Vec<Demonstration>, IoError> {
    io::demos_from_json(env, &io::read_file(&dir.join(DEMOS_FILE))?)
}

pub fn samplers_to_json(env: &dyn Environment, samplers: &LearnedSamplers) -> String {
    io::to_string("samplers", env, samplers)
}

pub fn samplers_from_json(env: &dyn Environment, text: &str) -> Result<LearnedSamplers, IoError> {
    io::from_string(text, "samplers", env)
}

pub fn save_trained(env: &dyn Environment, dir: &Path, trained: &Trained) -> Result<(), IoError> {
    let ops: Vec<&Operator> = trained.model.ops.iter().map(|o| &**o).collect();
    io::write_file(
        &dir.join(OPERATORS_FILE),
        &io::operators_to_json(env, ops.iter().copied()),
    )?;
    io::write_file(&dir.join(OPERATORS_TEXT_FILE), &render_operator_set(ops))?;
    io::write_file(&dir.join(SAMPLERS_FILE), &samplers_to_json(env, &trained.samplers))?;
    let summary = LearnSummary {
        seed: trained.seed,
        operator_count: trained.model.ops.len(),
        coverage: trained.model.coverage,
        learning_time_secs: trained.learning_time_secs,
        sampler_time_secs: trained.sampler_time_secs,
    };
    io::write_file(&dir.join(LEARN_FILE), &io::to_string("learn_summary", env, summary))
}

pub fn load_operators(env: &dyn Environment, dir: &Path) -> Result<Vec<Arc<Operator>>, IoError> {
    let ops = io::operators_from_json(env, &io::read_file(&dir.join(OPERATORS_FILE))?)?;
    Ok(ops.into_iter().map(Arc::new).collect())
}

pub fn load_samplers(env: &dyn Environment, dir: &Path) -> Result<LearnedSamplers, IoError> {
    samplers_from_json(env, &io::read_file(&dir.join(SAMPLERS_FILE))?)
}

pub fn load_learn_summary(env: &dyn Environment, dir: &Path) -> Result<LearnSummary, IoError> {
    io::from_string(&io::read_file(&dir.join(LEARN_FILE))?, "learn_summary", env)
}

pub fn save_report(dir: &Path, report: &ExperimentReport) -> Result<(), IoError> {
    io::write_file(&dir.join("report.json"), &report.to_json())?;
    io::write_file(&dir.join("report.csv"), &report.to_csv())?;
    io::write_file(&dir.join("tasks.csv"), &report.tasks_csv())?;
    io::write_file(&dir.join("report.txt"), &report.to_table())
}

pub fn load_report(dir: &Path) -> Result<ExperimentReport, IoError> {
    Ok(serde_json::from_str(&io::read_file(&dir.join("report.json"))?)?)
}
