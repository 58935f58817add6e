//! The `tutor` command line. Exit codes: 0 success, 1 experiment failure,
//! 2 configuration error.

mod experiment;
mod report;
mod util;

pub use experiment::{
    aggregate_csv, expand_grid, rows_for, run_grid, AggregateRow, Cell, ExperimentConfig, GridOutcome, PolicySource,
    Variant, AGGREGATE_COLUMNS,
};
pub use report::{build_report, read_aggregate, run_report, series, stats, Report, Stats};
pub use util::{parse_seeds, write_atomic};

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::agent::Checkpoint;
use crate::codepolicy::{scripted_program, serialize_program, CodePolicyProgram};
use crate::feedback::{collect_demonstration, FeedbackMode};
use crate::llmgen::{GenerationCache, Generator, LlmEndpointConfig};
use crate::rng::Rng;
use crate::sim::{find_task, Sim};
use crate::trainer::{
    evaluate, evaluate_teacher, train_bc, train_llm_iteach, AblationArm, Method, RunSummary, TrainerConfig,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Failure(format!("{}: {e}", path.display()))
    }
}

#[derive(Parser, Debug)]
#[command(name = "tutor", version, about = "Interactive imitation learning with a code-policy teacher")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a task's teacher program, scripted or generated by an LLM.
    GeneratePolicy(GeneratePolicyArgs),
    /// Roll the teacher out in direct control and save the demonstrations.
    CollectDemos(CollectDemosArgs),
    /// Train one agent.
    Train(TrainArgs),
    /// Success rate of a saved agent or of a teacher program.
    Evaluate(EvaluateArgs),
    /// Run an experiment grid from a config file.
    Run(RunArgs),
    /// Interactive runs across similarity thresholds.
    SweepBeta(SweepBetaArgs),
    /// Interactive runs across feedback channels and warm start.
    Ablate(GridArgs),
    /// Tables and plot data from aggregate CSVs.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct LlmArgs {
    /// Chat-completion API root, e.g. http://localhost:8000/v1.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Serve only cached generations.
    #[arg(long)]
    pub offline: bool,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
}

impl LlmArgs {
    fn endpoint(&self) -> LlmEndpointConfig {
        let mut cfg = LlmEndpointConfig { offline: self.offline, token_env: self.token_env.clone(), ..Default::default() };
        if let Some(e) = &self.endpoint {
            cfg.base_url = e.clone();
        }
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        cfg
    }

    fn requested(&self) -> bool {
        self.endpoint.is_some() || self.offline
    }
}

#[derive(Args, Debug)]
pub struct GeneratePolicyArgs {
    #[arg(long)]
    pub task: String,
    /// Use the hand-authored program instead of an LLM.
    #[arg(long)]
    pub scripted: bool,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long, default_value = "policies")]
    pub out: PathBuf,
}

/// Teacher program selection shared by the single-run commands.
#[derive(Args, Debug, Clone)]
pub struct PolicyArgs {
    /// Teacher program JSON; the scripted program when omitted.
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

impl PolicyArgs {
    fn load(&self, task: &str) -> Result<CodePolicyProgram, CliError> {
        let spec = find_task(task).map_err(|e| CliError::Config(e.to_string()))?;
        let p = match &self.policy {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                crate::codepolicy::parse_program(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => scripted_program(&spec).map_err(|e| CliError::Config(e.to_string()))?,
        };
        p.validate_for(&spec).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
pub struct CollectDemosArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_steps: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value = "demos")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TrainMethod {
    Bc,
    Iteach,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Both,
    EvaluativeOnly,
    CorrectiveOnly,
}

impl From<ModeArg> for FeedbackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Both => FeedbackMode::Both,
            ModeArg::EvaluativeOnly => FeedbackMode::EvaluativeOnly,
            ModeArg::CorrectiveOnly => FeedbackMode::CorrectiveOnly,
        }
    }
}

/// Trainer overrides; flags win over the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainerArgs {
    /// JSON trainer config; missing fields take their defaults.
    #[arg(long)]
    pub trainer_config: Option<PathBuf>,
    /// Interactive episodes, or demonstrations for behavior cloning.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub feedback_mode: Option<ModeArg>,
    #[arg(long)]
    pub no_warm_start: bool,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Sample actions during evaluation instead of taking the mean.
    #[arg(long)]
    pub eval_stochastic: bool,
}

impl TrainerArgs {
    fn resolve(&self) -> Result<TrainerConfig, CliError> {
        let mut cfg: TrainerConfig = match &self.trainer_config {
            Some(p) => util::read_json(p)?,
            None => TrainerConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut TrainerConfig) {
        if let Some(e) = self.episodes {
            cfg.training_episodes = e;
        }
        if let Some(b) = self.beta {
            cfg.feedback.beta = b;
        }
        if let Some(m) = self.feedback_mode {
            cfg.feedback.mode = m.into();
        }
        if self.no_warm_start {
            cfg.use_warm_start = false;
        }
        if let Some(n) = self.eval_episodes {
            cfg.eval_episodes = n;
        }
        if self.eval_stochastic {
            cfg.eval_stochastic = true;
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub method: TrainMethod,
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Also write the per-step episode log (interactive runs).
    #[arg(long)]
    pub log_episodes: bool,
    #[arg(long, default_value = "train-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub task: String,
    /// Saved agent checkpoint; evaluates the teacher program when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 300)]
    pub max_steps: usize,
    #[arg(long)]
    pub stochastic: bool,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Write the result JSON here as well as printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Grid overrides shared by `run`, `sweep-beta` and `ablate`.
#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Experiment config JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated task names.
    #[arg(long)]
    pub tasks: Option<String>,
    /// `0..10` or `0,1,2`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Comma-separated episode budgets.
    #[arg(long)]
    pub budgets: Option<String>,
    /// Directory of `<task>.policy.json` teacher programs.
    #[arg(long)]
    pub policy_dir: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    #[arg(long)]
    pub quiet: bool,
}

impl GridArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut exp: ExperimentConfig = match &self.config {
            Some(p) => util::read_json(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.trainer.trainer_config {
            exp.trainer = util::read_json(p)?;
        }
        self.trainer.apply(&mut exp.trainer);
        if let Some(o) = &self.out {
            exp.output_dir = o.clone();
        }
        if let Some(t) = &self.tasks {
            exp.tasks = t.split(',').map(|s| s.trim().to_string()).collect();
        }
        if let Some(s) = &self.seeds {
            exp.seeds = parse_seeds(s).map_err(CliError::Config)?;
        }
        if let Some(e) = self.trainer.episodes {
            exp.episode_budgets = vec![e];
        }
        if let Some(b) = &self.budgets {
            exp.episode_budgets = util::parse_list(b).map_err(CliError::Config)?;
        }
        if let Some(d) = &self.policy_dir {
            exp.policy = PolicySource::Files { dir: d.clone() };
        }
        if self.llm.requested() {
            exp.policy = PolicySource::Llm { endpoint: self.llm.endpoint(), cache_dir: self.llm.cache_dir.clone() };
        }
        Ok(exp)
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated methods: bc, iteach, teacher-direct, warm-start-only.
    #[arg(long)]
    pub methods: Option<String>,
}

#[derive(Args, Debug)]
pub struct SweepBetaArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "0,10,20,45,90,180")]
    pub betas: String,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Aggregate CSVs, or directories containing `aggregate.csv`.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn cmd_generate_policy(a: &GeneratePolicyArgs) -> Result<(), CliError> {
    let task = find_task(&a.task).map_err(|e| CliError::Config(e.to_string()))?;
    let policy_path = a.out.join(format!("{}.policy.json", task.name));
    let program = if a.scripted {
        scripted_program(&task).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        let endpoint = a.llm.endpoint();
        let cache = GenerationCache::new(a.llm.cache_dir.clone().unwrap_or_else(|| a.out.join("llm-cache")));
        let generator = Generator::from_config(endpoint, Some(cache.clone())).map_err(|e| match e {
            crate::llmgen::LlmError::Config(m) => CliError::Config(m),
            other => CliError::Failure(other.to_string()),
        })?;
        match generator.generate_codepolicy(&task) {
            Ok((p, record)) => {
                let json = serde_json::to_string_pretty(&record).expect("record serializes");
                write_atomic(&a.out.join(format!("{}.generation.json", task.name)), json.as_bytes())?;
                p
            }
            Err(e) => {
                let hint = cache.path_for(&generator.key(&task));
                let mut msg = e.to_string();
                if hint.exists() {
                    msg.push_str(&format!(" (transcript: {})", hint.display()));
                }
                return Err(CliError::Failure(msg));
            }
        }
    };
    write_atomic(&policy_path, serialize_program(&program).as_bytes())?;
    println!("{}: {} steps, valid -> {}", task.name, program.steps.len(), policy_path.display());
    for (i, s) in program.steps.iter().enumerate() {
        println!("  {}. {}", i + 1, s.description);
    }
    Ok(())
}

#[derive(Serialize)]
struct DemoLine<'a> {
    episode: usize,
    success: bool,
    steps: &'a [crate::types::TrajectorySample],
}

fn cmd_collect_demos(a: &CollectDemosArgs) -> Result<(), CliError> {
    let program = a.policy.load(&a.task)?;
    let sim = Sim::builtin(&a.task).map_err(|e| CliError::Config(e.to_string()))?;
    let root = Rng::from_seed(a.seed).fork("demos");
    let mut out = Vec::new();
    let mut ok = 0;
    for e in 0..a.episodes {
        let (traj, success) = collect_demonstration(&sim, &program, &mut root.fork(&format!("demo-{e}")), a.max_steps)
            .map_err(|e| CliError::Failure(e.to_string()))?;
        ok += success as usize;
        serde_json::to_writer(&mut out, &DemoLine { episode: e, success, steps: &traj.samples })
            .expect("in-memory write");
        out.push(b'\n');
    }
    let path = a.out.join(format!("demos-{}-seed{}.jsonl", a.task, a.seed));
    write_atomic(&path, &out)?;
    println!("{ok}/{} successful demonstrations -> {}", a.episodes, path.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = a.trainer.resolve()?;
    let program = a.policy.load(&a.task)?;
    let sim = Sim::builtin(&a.task).map_err(|e| CliError::Config(e.to_string()))?;
    let fail = |e: crate::trainer::TrainerError| CliError::Failure(e.to_string());
    let (model, metrics, log) = match a.method {
        TrainMethod::Bc => {
            let (m, r) = train_bc(&sim, &program, &cfg, a.seed).map_err(fail)?;
            (m, r, None)
        }
        TrainMethod::Iteach => {
            let mut log = Vec::new();
            let sink: Option<&mut dyn std::io::Write> = if a.log_episodes { Some(&mut log) } else { None };
            let (m, r) = train_llm_iteach(&sim, &program, &cfg, a.seed, sink).map_err(fail)?;
            (m, r, a.log_episodes.then_some(log))
        }
    };
    let stem = format!("{}__{}__{}__seed{}", a.task, metrics.method.as_str(), &metrics.config_hash[..16], a.seed);
    let summary = RunSummary { config: cfg, seed: a.seed, metrics };
    write_atomic(&a.out.join(format!("{stem}.json")), summary.to_json().as_bytes())?;
    let ckpt = serde_json::to_string(&Checkpoint::from_model(&model)).expect("checkpoint serializes");
    write_atomic(&a.out.join(format!("{stem}.model.json")), ckpt.as_bytes())?;
    if let Some(log) = log {
        write_atomic(&a.out.join(format!("{stem}.episodes.jsonl")), &log)?;
    }
    let m = &summary.metrics;
    println!(
        "{} {} seed {}: success {:.4}, mean correction rate {}, {} gradient steps",
        m.task,
        m.method.as_str(),
        m.seed,
        m.final_success_rate,
        util::fmt_opt(m.mean_correction_rate()),
        m.grad_steps
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalResult<'a> {
    task: &'a str,
    subject: &'a str,
    seed: u64,
    episodes: usize,
    stochastic: bool,
    success_rate: f64,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let sim = Sim::builtin(&a.task).map_err(|e| CliError::Config(e.to_string()))?;
    if a.episodes == 0 {
        return Err(CliError::Config("--episodes must be positive".into()));
    }
    let cfg = TrainerConfig {
        eval_episodes: a.episodes,
        max_episode_steps: a.max_steps,
        eval_stochastic: a.stochastic,
        ..Default::default()
    };
    let rng = Rng::from_seed(a.seed);
    let (subject, rate) = match &a.model {
        Some(path) => {
            let model = Checkpoint::load(path)
                .and_then(Checkpoint::into_model)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ("agent", evaluate(&model, &sim, &cfg, &rng))
        }
        None => ("teacher", evaluate_teacher(&sim, &a.policy.load(&a.task)?, &cfg, &rng)),
    };
    let rate = rate.map_err(|e| CliError::Failure(e.to_string()))?;
    let result = EvalResult {
        task: &a.task,
        subject,
        seed: a.seed,
        episodes: a.episodes,
        stochastic: a.stochastic,
        success_rate: rate,
    };
    print_json(&result);
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&result).expect("serializable");
        write_atomic(&out.join(format!("eval-{}-{subject}-seed{}.json", a.task, a.seed)), json.as_bytes())?;
    }
    Ok(())
}

fn run_and_report(exp: &ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let outcome = run_grid(exp, !quiet)?;
    println!(
        "{} runs executed, {} resumed, {} failed -> {}",
        outcome.executed,
        outcome.resumed,
        outcome.failures.len(),
        exp.output_dir.join("aggregate.csv").display()
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        for (c, e) in &outcome.failures {
            eprintln!("failed: {} {} seed {}: {e}", c.task, c.method.as_str(), c.seed);
        }
        Err(CliError::Failure(format!("{} runs failed", outcome.failures.len())))
    }
}

fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let mut exp = a.grid.resolve()?;
    if let Some(m) = &a.methods {
        exp.methods = util::parse_list::<Method>(m).map_err(CliError::Config)?;
    }
    run_and_report(&exp, a.grid.quiet)
}

fn cmd_sweep_beta(a: &SweepBetaArgs) -> Result<(), CliError> {
    let mut exp = a.grid.resolve()?;
    let betas: Vec<f64> = util::parse_list(&a.betas).map_err(CliError::Config)?;
    exp.methods = vec![Method::Iteach];
    exp.variants = betas.into_iter().map(|b| Variant { beta: Some(b), ..Default::default() }).collect();
    run_and_report(&exp, a.grid.quiet)
}

fn cmd_ablate(a: &GridArgs) -> Result<(), CliError> {
    let mut exp = a.resolve()?;
    exp.methods = vec![Method::Iteach];
    exp.variants = AblationArm::ALL.iter().map(|&arm| Variant::from_arm(arm)).collect();
    run_and_report(&exp, a.quiet)
}

fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    for p in run_report(&a.input, &a.out)? {
        println!("wrote {}", p.display());
    }
    let table = std::fs::read_to_string(a.out.join("report.txt")).map_err(|e| CliError::io(&a.out, e))?;
    print!("{table}");
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GeneratePolicy(a) => cmd_generate_policy(a),
        Command::CollectDemos(a) => cmd_collect_demos(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Run(a) => cmd_run(a),
        Command::SweepBeta(a) => cmd_sweep_beta(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
