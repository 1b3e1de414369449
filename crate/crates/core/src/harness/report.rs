//! Per-task outcomes, per-seed summaries and their aggregation into
//! `mean (stderr)` rows, rendered as JSON, CSV and an aligned text table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::planner::{FailureReason, PlanOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: usize,
    pub solved: bool,
    pub failure: Option<FailureReason>,
    pub plan_length: Option<usize>,
    pub abstract_plans_tried: usize,
    pub nodes_created: usize,
    pub samples_drawn: usize,
    pub wall_time_secs: f64,
}

impl TaskOutcome {
    pub fn from_plan(task: usize, out: &PlanOutcome) -> Self {
        Self {
            task,
            solved: out.solved(),
            failure: out.failure,
            plan_length: out.actions.as_ref().map(Vec::len),
            abstract_plans_tried: out.attempts.len(),
            nodes_created: out.nodes_created,
            samples_drawn: out.samples_drawn,
            wall_time_secs: out.wall_time_secs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// Percentage of evaluation tasks solved; 0 when there are none.
    pub success_rate: f64,
    pub mean_nodes_created: f64,
    pub operator_count: usize,
    pub coverage: f64,
    pub learning_time_secs: f64,
    pub sampler_time_secs: f64,
    pub tasks: Vec<TaskOutcome>,
}

impl SeedReport {
    pub fn new(
        seed: u64,
        operator_count: usize,
        coverage: f64,
        learning_time_secs: f64,
        sampler_time_secs: f64,
        mut tasks: Vec<TaskOutcome>,
    ) -> Self {
        tasks.sort_by_key(|t| t.task);
        let n = tasks.len();
        let (success_rate, mean_nodes_created) = if n == 0 {
            (0.0, 0.0)
        } else {
            let solved = tasks.iter().filter(|t| t.solved).count();
            let nodes: usize = tasks.iter().map(|t| t.nodes_created).sum();
            (100.0 * solved as f64 / n as f64, nodes as f64 / n as f64)
        };
        Self {
            seed,
            success_rate,
            mean_nodes_created,
            operator_count,
            coverage,
            learning_time_secs,
            sampler_time_secs,
            tasks,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    /// Sample standard deviation over the square root of the count.
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, stderr: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, stderr: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
        }
    }

    pub fn render(&self, decimals: usize) -> String {
        format!("{:.*} ({:.*})", decimals, self.mean, decimals, self.stderr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub success_rate: MeanStderr,
    pub operator_count: MeanStderr,
    pub coverage: MeanStderr,
    pub mean_nodes_created: MeanStderr,
    pub learning_time_secs: MeanStderr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub env: String,
    pub method: String,
    pub num_train_demos: usize,
    pub num_eval_tasks: usize,
    pub seeds: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

pub fn summarize(cfg: &ExperimentConfig, mut seeds: Vec<SeedReport>) -> ExperimentReport {
    seeds.sort_by_key(|s| s.seed);
    let col = |f: fn(&SeedReport) -> f64| MeanStderr::of(&seeds.iter().map(f).collect::<Vec<_>>());
    let aggregate = Aggregate {
        success_rate: col(|s| s.success_rate),
        operator_count: col(|s| s.operator_count as f64),
        coverage: col(|s| s.coverage),
        mean_nodes_created: col(|s| s.mean_nodes_created),
        learning_time_secs: col(|s| s.learning_time_secs),
    };
    ExperimentReport {
        env: cfg.env.clone(),
        method: cfg.method.name().to_string(),
        num_train_demos: cfg.num_train_demos,
        num_eval_tasks: cfg.num_eval_tasks,
        seeds,
        aggregate,
    }
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    /// One row per seed plus `mean` and `stderr` rows. Timings are left out,
    /// so equal configurations give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("env,method,seed,success_rate,operator_count,coverage,mean_nodes_created\n");
        for s in &self.seeds {
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{},{:.6},{:.2}",
                self.env, self.method, s.seed, s.success_rate, s.operator_count, s.coverage, s.mean_nodes_created
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "{},{},mean,{:.4},{:.4},{:.6},{:.2}",
            self.env,
            self.method,
            a.success_rate.mean,
            a.operator_count.mean,
            a.coverage.mean,
            a.mean_nodes_created.mean
        );
        let _ = writeln!(
            out,
            "{},{},stderr,{:.4},{:.4},{:.6},{:.2}",
            self.env,
            self.method,
            a.success_rate.stderr,
            a.operator_count.stderr,
            a.coverage.stderr,
            a.mean_nodes_created.stderr
        );
        out
    }

    /// Per-task outcomes, one row per seed and task, without timings.
    pub fn tasks_csv(&self) -> String {
        let mut out =
            String::from("seed,task,solved,failure,plan_length,abstract_plans_tried,nodes_created,samples_drawn\n");
        for s in &self.seeds {
            for t in &s.tasks {
                let failure = t
                    .failure
                    .map(|f| serde_json::to_value(f).expect("enum serializes"))
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    s.seed,
                    t.task,
                    t.solved,
                    failure,
                    t.plan_length.map(|l| l.to_string()).unwrap_or_default(),
                    t.abstract_plans_tried,
                    t.nodes_created,
                    t.samples_drawn
                );
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let header = [
            "seed",
            "success %",
            "operators",
            "coverage",
            "nodes",
            "learn s",
            "sampler s",
        ];
        let mut rows: Vec<[String; 7]> = self
            .seeds
            .iter()
            .map(|s| {
                [
                    s.seed.to_string(),
                    format!("{:.2}", s.success_rate),
                    s.operator_count.to_string(),
                    format!("{:.3}", s.coverage),
                    format!("{:.1}", s.mean_nodes_created),
                    format!("{:.2}", s.learning_time_secs),
                    format!("{:.2}", s.sampler_time_secs),
                ]
            })
            .collect();
        let a = &self.aggregate;
        rows.push([
            "mean (se)".to_string(),
            a.success_rate.render(2),
            a.operator_count.render(2),
            a.coverage.render(3),
            a.mean_nodes_created.render(1),
            a.learning_time_secs.render(2),
            String::new(),
        ]);
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = format!(
            "{} / {}: {} demos, {} eval tasks\n",
            self.env, self.method, self.num_train_demos, self.num_eval_tasks
        );
        let line = |cells: &[&str]| {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        out.push_str(&line(&header));
        out.push('\n');
        for r in &rows {
            out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_stderr_uses_sample_deviation() {
        let m = MeanStderr::of(&[90.0, 100.0, 95.0, 85.0]);
        assert!((m.mean - 92.5).abs() < 1e-12);
        // sample variance 41.666..., over n = 4
        assert!((m.stderr - (125.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(MeanStderr::of(&[7.0]).stderr, 0.0);
    }

    #[test]
    fn empty_evaluation_has_zero_rate() {
        let s = SeedReport::new(3, 2, 1.0, 0.0, 0.0, Vec::new());
        assert_eq!(s.success_rate, 0.0);
        assert!(s.tasks.is_empty());
    }
}
