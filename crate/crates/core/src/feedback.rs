//! Teacher feedback: the direction-similarity test between the agent's action
//! and the code policy's action, and the evaluative/corrective verdict built
//! on it. Also hosts direct-control demonstration collection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codepolicy::{evaluate_policy, CodePolicyProgram, PolicyError, StepCounter};
use crate::geom::{angle_between_eps, EPS_ZERO};
use crate::rng::Rng;
use crate::sim::{GroundingView, Sim, SimError};
use crate::types::{Action, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeedbackError {
    #[error("beta must lie in [0, 180] degrees, got {0}")]
    BadBeta(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Teacher verdict for one timestep.
///
/// There is no negative evaluative value: disagreement is expressed as a
/// correction. `Withheld` only appears in the evaluative-only ablation, where
/// disagreement produces no feedback at all and the sample carries zero weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Feedback {
    Evaluative,
    Corrective(Action),
    Withheld,
}

impl Feedback {
    pub fn is_corrective(&self) -> bool {
        matches!(self, Feedback::Corrective(_))
    }

    /// Single-letter tag used in episode logs.
    pub fn tag(&self) -> &'static str {
        match self {
            Feedback::Evaluative => "E",
            Feedback::Corrective(_) => "C",
            Feedback::Withheld => "W",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Both,
    EvaluativeOnly,
    CorrectiveOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    /// Similarity threshold in degrees.
    pub beta: f64,
    pub epsilon_zero: f64,
    pub mode: FeedbackMode,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self { beta: 20.0, epsilon_zero: EPS_ZERO, mode: FeedbackMode::Both }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        if !(0.0..=180.0).contains(&self.beta) {
            return Err(FeedbackError::BadBeta(self.beta));
        }
        Ok(())
    }
}

/// True when the gripper commands agree and the translations point within
/// `beta` degrees of each other (strictly). Two null translations agree; a
/// null and a non-null translation never do.
pub fn similar(agent: &Action, teacher: &Action, cfg: &FeedbackConfig) -> bool {
    if agent.gripper != teacher.gripper {
        return false;
    }
    let eps = cfg.epsilon_zero;
    let (na, nt) = (agent.translation.norm() < eps, teacher.translation.norm() < eps);
    match (na, nt) {
        (true, true) => true,
        (false, false) => match angle_between_eps(agent.translation, teacher.translation, eps) {
            Some(angle) => angle < cfg.beta,
            None => false,
        },
        _ => false,
    }
}

pub fn give_feedback(agent: &Action, teacher: &Action, cfg: &FeedbackConfig) -> Feedback {
    match cfg.mode {
        FeedbackMode::CorrectiveOnly => Feedback::Corrective(*teacher),
        FeedbackMode::Both if similar(agent, teacher, cfg) => Feedback::Evaluative,
        FeedbackMode::Both => Feedback::Corrective(*teacher),
        FeedbackMode::EvaluativeOnly if similar(agent, teacher, cfg) => Feedback::Evaluative,
        FeedbackMode::EvaluativeOnly => Feedback::Withheld,
    }
}

/// Counts over one episode: `total` timesteps, `corrective` of them corrected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeFeedbackStats {
    pub total: usize,
    pub corrective: usize,
}

impl EpisodeFeedbackStats {
    pub fn correction_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.corrective as f64 / self.total as f64
        }
    }
}

/// Rolls the code policy out in direct control until success or `max_steps`.
/// The trajectory holds the (state, teacher action) pairs.
pub fn collect_demonstration(
    sim: &Sim,
    program: &CodePolicyProgram,
    rng: &mut Rng,
    max_steps: usize,
) -> Result<(Trajectory, bool), FeedbackError> {
    let mut state = sim.reset(rng)?;
    let mut counter = StepCounter::default();
    let mut traj = Trajectory::default();
    for _ in 0..max_steps {
        let (action, next_counter) =
            evaluate_policy(program, &GroundingView::new(&state, counter.current), counter, sim.workspace.max_step)?;
        counter = next_counter;
        let next = sim.step(&state, &action);
        traj.push(state, action, None);
        state = next;
        if sim.is_success(&state)? {
            return Ok((traj, true));
        }
    }
    Ok((traj, false))
}
