//! Learning pipelines: warm start, behavior cloning, the interactive loop with
//! teacher feedback, evaluation, and the sweep/ablation experiments built on
//! them.

mod concurrent;
mod experiments;
mod pipelines;
mod rollout;

pub use concurrent::train_llm_iteach_concurrent;
pub use experiments::{run_ablation, run_beta_sweep, AblationArm, AblationRow, SweepRow};
pub use pipelines::{
    evaluate, evaluate_teacher, init_model, run_teacher_direct, run_warm_start, train_bc, train_llm_iteach, train_warm_start_only,
};
pub use pipelines::WarmStart;
pub use rollout::{assign_weights, rollout_iil_episode, EpisodeOutcome, ReplayBuffer, StepRecord};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{AdamConfig, AgentError};
use crate::codepolicy::PolicyError;
use crate::feedback::{FeedbackConfig, FeedbackError};
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("teacher produced {successes} successful demonstrations in {attempts} attempts on {task}, needed {needed}")]
    TeacherTooWeak { task: String, successes: usize, attempts: usize, needed: usize },
    #[error("no demonstrations to train on")]
    NoDemonstrations,
    #[error("aborted episodes cannot enter the replay buffer")]
    AbortedEpisode,
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error("log write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bc,
    Iteach,
    TeacherDirect,
    WarmStartOnly,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bc => "bc",
            Method::Iteach => "iteach",
            Method::TeacherDirect => "teacher-direct",
            Method::WarmStartOnly => "warm-start-only",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "bc" => Method::Bc,
            "iteach" => Method::Iteach,
            "teacher-direct" => Method::TeacherDirect,
            "warm-start-only" => Method::WarmStartOnly,
            other => return Err(format!("unknown method {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Episodes running this long without success are aborted.
    pub max_episode_steps: usize,
    pub warm_start_demos: usize,
    pub warm_start_max_attempts: usize,
    pub warm_start_epochs: usize,
    /// Interactive episodes, or demonstrations for behavior cloning.
    pub training_episodes: usize,
    pub grad_steps_per_episode: usize,
    pub batch_size: usize,
    pub eval_episodes: usize,
    pub use_warm_start: bool,
    /// Extra evaluations during interactive training, after this many episodes.
    pub eval_checkpoints: Vec<usize>,
    pub hidden_layers: Vec<usize>,
    pub sigma: f64,
    /// Features are multiplied by this before the first layer.
    pub input_scale: f64,
    /// Network translation outputs are multiplied by this to give meters.
    pub output_scale: f64,
    /// Scale of the output layer's initial weights; 0 starts from the null policy.
    pub output_gain: f64,
    pub adam: AdamConfig,
    /// Sample actions during evaluation instead of using the mean.
    pub eval_stochastic: bool,
    /// Behavior-cloning gradient steps; defaults to the matched interactive budget.
    pub bc_grad_steps: Option<usize>,
    pub feedback: FeedbackConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            max_episode_steps: 300,
            warm_start_demos: 10,
            warm_start_max_attempts: 100,
            warm_start_epochs: 50,
            training_episodes: 400,
            grad_steps_per_episode: 20,
            batch_size: 64,
            eval_episodes: 100,
            use_warm_start: true,
            eval_checkpoints: Vec::new(),
            hidden_layers: vec![64, 64],
            sigma: 0.001,
            input_scale: 10.0,
            output_scale: 0.01,
            output_gain: 0.0,
            adam: AdamConfig::default(),
            eval_stochastic: false,
            bc_grad_steps: None,
            feedback: FeedbackConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let positive = [
            ("max_episode_steps", self.max_episode_steps),
            ("warm_start_demos", self.warm_start_demos),
            ("warm_start_max_attempts", self.warm_start_max_attempts),
            ("training_episodes", self.training_episodes),
            ("batch_size", self.batch_size),
            ("eval_episodes", self.eval_episodes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainerError::Config(format!("{name} must be positive")));
        }
        if self.hidden_layers.contains(&0) {
            return Err(TrainerError::Config("hidden layer widths must be positive".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(TrainerError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if ![self.input_scale, self.output_scale].iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(TrainerError::Config("input_scale and output_scale must be positive".into()));
        }
        if !(self.adam.learning_rate.is_finite() && self.adam.learning_rate > 0.0) {
            return Err(TrainerError::Config("learning rate must be positive".into()));
        }
        self.feedback.validate()?;
        Ok(())
    }

    /// Gradient steps a behavior-cloning run takes.
    pub fn bc_budget(&self) -> usize {
        self.bc_grad_steps.unwrap_or(self.training_episodes * self.grad_steps_per_episode)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub success: bool,
    pub aborted: bool,
    pub length: usize,
    pub correction_rate: f64,
    /// Mean loss over the gradient steps that followed the episode.
    pub mean_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    pub episodes: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub task: String,
    pub method: Method,
    pub seed: u64,
    pub config_hash: String,
    pub episodes: Vec<EpisodeMetrics>,
    pub checkpoints: Vec<CheckpointEval>,
    pub warm_start_samples: usize,
    pub grad_steps: usize,
    pub final_success_rate: f64,
    /// Kept out of serialized summaries so they stay byte-identical across reruns.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunMetrics {
    pub fn new(task: &str, method: Method, seed: u64, config_hash: String) -> Self {
        Self {
            task: task.to_string(),
            method,
            seed,
            config_hash,
            episodes: Vec::new(),
            checkpoints: Vec::new(),
            warm_start_samples: 0,
            grad_steps: 0,
            final_success_rate: 0.0,
            wall_clock_secs: 0.0,
        }
    }

    /// Mean correction rate over all interactive episodes.
    pub fn mean_correction_rate(&self) -> Option<f64> {
        mean(self.episodes.iter().map(|e| e.correction_rate))
    }

    /// Mean correction rate over the first `n` interactive episodes.
    pub fn correction_rate_until(&self, n: usize) -> Option<f64> {
        mean(self.episodes.iter().take(n).map(|e| e.correction_rate))
    }

    /// Mean correction rate over the first and last quarter of the episodes.
    pub fn correction_rate_quartiles(&self) -> Option<(f64, f64)> {
        let n = self.episodes.len();
        let q = n / 4;
        if q == 0 {
            return None;
        }
        let first = mean(self.episodes[..q].iter().map(|e| e.correction_rate))?;
        let last = mean(self.episodes[n - q..].iter().map(|e| e.correction_rate))?;
        Some((first, last))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// JSON written per completed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: TrainerConfig,
    pub seed: u64,
    pub metrics: RunMetrics,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run summary serializes")
    }
}

/// Hex SHA-256 of the canonical JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// Hash identifying one (task, method, config) cell; the seed is kept separate.
pub fn run_config_hash(task: &str, method: Method, cfg: &TrainerConfig) -> String {
    config_hash(&(task, method, cfg))
}
