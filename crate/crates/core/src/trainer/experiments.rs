use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipelines::train_llm_iteach;
use super::{RunMetrics, TrainerConfig, TrainerError};
use crate::codepolicy::CodePolicyProgram;
use crate::feedback::{FeedbackError, FeedbackMode};
use crate::sim::Sim;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub task: String,
    pub beta: f64,
    pub seed: u64,
    pub success_rate: f64,
    pub correction_rate: f64,
}

/// One interactive run per (beta, seed).
pub fn run_beta_sweep(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    betas: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, TrainerError> {
    if let Some(&b) = betas.iter().find(|b| !(0.0..=180.0).contains(*b)) {
        return Err(FeedbackError::BadBeta(b).into());
    }
    let cells: Vec<(f64, u64)> = betas.iter().flat_map(|&b| seeds.iter().map(move |&s| (b, s))).collect();
    cells
        .par_iter()
        .map(|&(beta, seed)| {
            let mut c = cfg.clone();
            c.feedback.beta = beta;
            let (_, m) = train_llm_iteach(sim, program, &c, seed, None)?;
            Ok(SweepRow {
                task: sim.task.name.clone(),
                beta,
                seed,
                success_rate: m.final_success_rate,
                correction_rate: m.mean_correction_rate().unwrap_or(0.0),
            })
        })
        .collect()
}

/// Feedback channels and warm start toggled in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationArm {
    pub mode: FeedbackMode,
    pub warm_start: bool,
}

impl AblationArm {
    pub const ALL: [AblationArm; 6] = [
        AblationArm { mode: FeedbackMode::EvaluativeOnly, warm_start: false },
        AblationArm { mode: FeedbackMode::CorrectiveOnly, warm_start: false },
        AblationArm { mode: FeedbackMode::Both, warm_start: false },
        AblationArm { mode: FeedbackMode::EvaluativeOnly, warm_start: true },
        AblationArm { mode: FeedbackMode::CorrectiveOnly, warm_start: true },
        AblationArm { mode: FeedbackMode::Both, warm_start: true },
    ];

    pub fn label(&self) -> String {
        let fb = match self.mode {
            FeedbackMode::EvaluativeOnly => "EF",
            FeedbackMode::CorrectiveOnly => "CF",
            FeedbackMode::Both => "EF+CF",
        };
        if self.warm_start {
            format!("{fb}+WS")
        } else {
            fb.to_string()
        }
    }

    pub fn apply(&self, cfg: &TrainerConfig) -> TrainerConfig {
        let mut c = cfg.clone();
        c.feedback.mode = self.mode;
        c.use_warm_start = self.warm_start;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub task: String,
    pub arm: AblationArm,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Trains every arm for every seed. Each row keeps the full metrics, whose
/// checkpoints give the success-versus-episodes curve.
pub fn run_ablation(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>, TrainerError> {
    let cells: Vec<(AblationArm, u64)> =
        AblationArm::ALL.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    cells
        .par_iter()
        .map(|&(arm, seed)| {
            let (_, metrics) = train_llm_iteach(sim, program, &arm.apply(cfg), seed, None)?;
            Ok(AblationRow { task: sim.task.name.clone(), arm, seed, metrics })
        })
        .collect()
}
