//! Experiment grids: (task × method × seed × budget × variant) cells, each
//! persisted as a run summary, plus the aggregate CSV over all of them.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::util::{read_json, write_atomic};
use super::CliError;
use crate::codepolicy::{scripted_program, CodePolicyProgram};
use crate::feedback::FeedbackMode;
use crate::llmgen::{GenerationCache, Generator, LlmEndpointConfig};
use crate::sim::{find_task, Sim, CORE_TASKS};
use crate::trainer::{
    run_config_hash, run_teacher_direct, train_bc, train_llm_iteach, train_warm_start_only, AblationArm, Method,
    RunSummary, TrainerConfig,
};

/// Where the teacher program comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySource {
    Scripted,
    /// Directory holding `<task>.policy.json` files.
    Files { dir: PathBuf },
    Llm {
        #[serde(default)]
        endpoint: LlmEndpointConfig,
        /// Defaults to `<output_dir>/llm-cache`.
        #[serde(default)]
        cache_dir: Option<PathBuf>,
    },
}

/// Overrides applied to interactive runs; unset fields keep the trainer config.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variant {
    pub beta: Option<f64>,
    pub mode: Option<FeedbackMode>,
    pub warm_start: Option<bool>,
}

impl Variant {
    pub fn apply(&self, cfg: &TrainerConfig) -> TrainerConfig {
        let mut c = cfg.clone();
        if let Some(b) = self.beta {
            c.feedback.beta = b;
        }
        if let Some(m) = self.mode {
            c.feedback.mode = m;
        }
        if let Some(w) = self.warm_start {
            c.use_warm_start = w;
        }
        c
    }

    pub fn from_arm(arm: AblationArm) -> Self {
        Self { beta: None, mode: Some(arm.mode), warm_start: Some(arm.warm_start) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tasks: Vec<String>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Interactive runs train for the largest budget and are evaluated at the
    /// others; behavior cloning gets one run per budget.
    pub episode_budgets: Vec<usize>,
    /// Interactive-run variants; ignored by the other methods.
    pub variants: Vec<Variant>,
    pub trainer: TrainerConfig,
    pub policy: PolicySource,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tasks: CORE_TASKS.iter().map(|s| s.to_string()).collect(),
            methods: vec![Method::Iteach, Method::Bc],
            seeds: vec![0],
            episode_budgets: vec![400],
            variants: vec![Variant::default()],
            trainer: TrainerConfig::default(),
            policy: PolicySource::Scripted,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    /// Checks everything that can be checked before any run starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.tasks.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return bad("tasks, methods and seeds must be non-empty".into());
        }
        if self.episode_budgets.is_empty() || self.episode_budgets.contains(&0) {
            return bad("episode_budgets must be non-empty and positive".into());
        }
        if self.variants.is_empty() {
            return bad("variants must be non-empty (use [{}] for none)".into());
        }
        for t in &self.tasks {
            find_task(t).map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.trainer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for v in &self.variants {
            v.apply(&self.trainer).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let PolicySource::Llm { endpoint, .. } = &self.policy {
            endpoint.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// One unit of work.
#[derive(Clone, Debug)]
pub struct Cell {
    pub task: String,
    pub method: Method,
    pub seed: u64,
    pub config: TrainerConfig,
    pub hash: String,
}

impl Cell {
    fn new(task: &str, method: Method, seed: u64, config: TrainerConfig) -> Self {
        let hash = run_config_hash(task, method, &config);
        Self { task: task.to_string(), method, seed, config, hash }
    }

    pub fn file_name(&self) -> String {
        format!("{}__{}__{}__seed{}.json", self.task, self.method.as_str(), &self.hash[..16], self.seed)
    }
}

pub fn expand_grid(exp: &ExperimentConfig) -> Vec<Cell> {
    let mut budgets = exp.episode_budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    let max_budget = *budgets.last().expect("validated non-empty");
    let mut cells = Vec::new();
    for task in &exp.tasks {
        for &method in &exp.methods {
            let configs: Vec<TrainerConfig> = match method {
                Method::Iteach => exp
                    .variants
                    .iter()
                    .map(|v| {
                        let mut c = v.apply(&exp.trainer);
                        c.training_episodes = max_budget;
                        c.eval_checkpoints = budgets[..budgets.len() - 1].to_vec();
                        c
                    })
                    .collect(),
                Method::Bc => budgets
                    .iter()
                    .map(|&b| TrainerConfig { training_episodes: b, ..exp.trainer.clone() })
                    .collect(),
                Method::TeacherDirect | Method::WarmStartOnly => vec![exp.trainer.clone()],
            };
            for c in configs {
                for &seed in &exp.seeds {
                    cells.push(Cell::new(task, method, seed, c.clone()));
                }
            }
        }
    }
    cells
}

/// Resolves the teacher program for every task up front.
pub fn load_programs(
    exp: &ExperimentConfig,
) -> Result<Vec<(String, CodePolicyProgram)>, CliError> {
    let mut out = Vec::new();
    for name in &exp.tasks {
        let task = find_task(name).map_err(|e| CliError::Config(e.to_string()))?;
        let program = match &exp.policy {
            PolicySource::Scripted => scripted_program(&task).map_err(|e| CliError::Config(e.to_string()))?,
            PolicySource::Files { dir } => {
                let p: CodePolicyProgram = read_json(&dir.join(format!("{name}.policy.json")))?;
                p.validate_for(&task).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
                p
            }
            PolicySource::Llm { endpoint, cache_dir } => {
                let dir = cache_dir.clone().unwrap_or_else(|| exp.output_dir.join("llm-cache"));
                let g = Generator::from_config(endpoint.clone(), Some(GenerationCache::new(dir)))
                    .map_err(|e| CliError::Failure(e.to_string()))?;
                let (p, record) = g.generate_codepolicy(&task).map_err(|e| CliError::Failure(e.to_string()))?;
                let json = serde_json::to_string_pretty(&record).expect("record serializes");
                write_atomic(&exp.output_dir.join("policies").join(format!("{name}.generation.json")), json.as_bytes())?;
                p
            }
        };
        out.push((name.clone(), program));
    }
    Ok(out)
}

/// Trains or evaluates one cell.
pub fn execute_cell(cell: &Cell, program: &CodePolicyProgram) -> Result<RunSummary, String> {
    let sim = Sim::builtin(&cell.task).map_err(|e| e.to_string())?;
    let metrics = match cell.method {
        Method::Iteach => train_llm_iteach(&sim, program, &cell.config, cell.seed, None).map(|(_, m)| m),
        Method::Bc => train_bc(&sim, program, &cell.config, cell.seed).map(|(_, m)| m),
        Method::WarmStartOnly => train_warm_start_only(&sim, program, &cell.config, cell.seed).map(|(_, m)| m),
        Method::TeacherDirect => run_teacher_direct(&sim, program, &cell.config, cell.seed),
    }
    .map_err(|e| e.to_string())?;
    Ok(RunSummary { config: cell.config.clone(), seed: cell.seed, metrics })
}

/// A previously completed run for this cell, if one is on disk.
fn completed(path: &Path, cell: &Cell) -> Option<RunSummary> {
    let text = std::fs::read_to_string(path).ok()?;
    let s: RunSummary = serde_json::from_str(&text).ok()?;
    (s.metrics.config_hash == cell.hash && s.seed == cell.seed).then_some(s)
}

/// One row of `aggregate.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: String,
    pub method: Method,
    pub episodes: usize,
    pub seed: u64,
    pub success_rate: f64,
    pub correction_rate: Option<f64>,
    pub beta: Option<f64>,
    pub feedback_mode: Option<FeedbackMode>,
    pub warm_start: Option<bool>,
    pub config_hash: String,
}

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "task",
    "method",
    "episodes",
    "seed",
    "success_rate",
    "correction_rate",
    "beta",
    "feedback_mode",
    "warm_start",
    "config_hash",
];

/// Interactive runs give one row per evaluation checkpoint.
pub fn rows_for(summary: &RunSummary) -> Vec<AggregateRow> {
    let m = &summary.metrics;
    let c = &summary.config;
    let base = AggregateRow {
        task: m.task.clone(),
        method: m.method,
        episodes: 0,
        seed: summary.seed,
        success_rate: m.final_success_rate,
        correction_rate: None,
        beta: None,
        feedback_mode: None,
        warm_start: None,
        config_hash: m.config_hash.clone(),
    };
    match m.method {
        Method::Iteach => m
            .checkpoints
            .iter()
            .map(|ck| AggregateRow {
                episodes: ck.episodes,
                success_rate: ck.success_rate,
                correction_rate: m.correction_rate_until(ck.episodes),
                beta: Some(c.feedback.beta),
                feedback_mode: Some(c.feedback.mode),
                warm_start: Some(c.use_warm_start),
                ..base.clone()
            })
            .collect(),
        Method::Bc => vec![AggregateRow { episodes: c.training_episodes, ..base }],
        Method::WarmStartOnly => vec![AggregateRow { warm_start: Some(true), ..base }],
        Method::TeacherDirect => vec![base],
    }
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.method.as_str().to_string(),
            r.episodes.to_string(),
            r.seed.to_string(),
            format!("{:.4}", r.success_rate),
            super::util::fmt_opt(r.correction_rate),
            r.beta.map(|b| b.to_string()).unwrap_or_default(),
            r.feedback_mode.map(mode_name).unwrap_or_default().to_string(),
            r.warm_start.map(|b| b.to_string()).unwrap_or_default(),
            r.config_hash.clone(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn mode_name(m: FeedbackMode) -> &'static str {
    match m {
        FeedbackMode::Both => "both",
        FeedbackMode::EvaluativeOnly => "evaluative_only",
        FeedbackMode::CorrectiveOnly => "corrective_only",
    }
}

#[derive(Debug, Default)]
pub struct GridOutcome {
    pub executed: usize,
    pub resumed: usize,
    pub failures: Vec<(Cell, String)>,
    pub summaries: Vec<RunSummary>,
}

/// Runs every missing cell, then rewrites `aggregate.csv` from all completed
/// cells of the grid. Failed cells are listed in `failures.csv`.
pub fn run_grid(exp: &ExperimentConfig, progress: bool) -> Result<GridOutcome, CliError> {
    exp.validate()?;
    let programs = load_programs(exp)?;
    let program_for = |task: &str| &programs.iter().find(|(t, _)| t == task).expect("program per task").1;
    let runs_dir = exp.output_dir.join("runs");
    let cells = expand_grid(exp);
    let config_json = serde_json::to_string_pretty(exp).expect("config serializes");
    write_atomic(&exp.output_dir.join("experiment.json"), config_json.as_bytes())?;

    let results: Vec<(Cell, Result<(RunSummary, bool), String>)> = cells
        .into_par_iter()
        .map(|cell| {
            let path = runs_dir.join(cell.file_name());
            if let Some(s) = completed(&path, &cell) {
                return (cell, Ok((s, false)));
            }
            let r = execute_cell(&cell, program_for(&cell.task)).and_then(|s| {
                write_atomic(&path, s.to_json().as_bytes()).map_err(|e| e.to_string())?;
                if progress {
                    eprintln!(
                        "{} {} seed {} episodes {}: success {:.2}",
                        cell.task,
                        cell.method.as_str(),
                        cell.seed,
                        cell.config.training_episodes,
                        s.metrics.final_success_rate
                    );
                }
                Ok(s)
            });
            (cell, r.map(|s| (s, true)))
        })
        .collect();

    let mut out = GridOutcome::default();
    let mut rows = Vec::new();
    for (cell, r) in results {
        match r {
            Ok((s, fresh)) => {
                if fresh {
                    out.executed += 1;
                } else {
                    out.resumed += 1;
                }
                rows.extend(rows_for(&s));
                out.summaries.push(s);
            }
            Err(e) => out.failures.push((cell, e)),
        }
    }
    write_atomic(&exp.output_dir.join("aggregate.csv"), &aggregate_csv(&rows))?;
    let failures_path = exp.output_dir.join("failures.csv");
    if out.failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| CliError::io(&failures_path, e))?;
        }
    } else {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "method", "seed", "config_hash", "error"]).expect("in-memory write");
        for (c, e) in &out.failures {
            w.write_record([c.task.as_str(), c.method.as_str(), &c.seed.to_string(), &c.hash, e])
                .expect("in-memory write");
        }
        write_atomic(&failures_path, &w.into_inner().expect("in-memory flush"))?;
    }
    Ok(out)
}
