use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::agent::{PolicyModel, StateFeatures, WeightedSample};
use crate::codepolicy::{evaluate_policy, CodePolicyProgram, StepCounter};
use crate::feedback::{give_feedback, EpisodeFeedbackStats, Feedback, FeedbackConfig};
use crate::geom::Vec3;
use crate::rng::Rng;
use crate::sim::{GroundingView, Sim};
use crate::types::Action;

/// One line of the episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub gripper_pos: Vec3,
    pub gripper_closed: bool,
    pub attached: Option<String>,
    pub agent_action: Action,
    pub feedback: String,
    pub teacher_action: Action,
    pub executed: Action,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub samples: Vec<WeightedSample>,
    pub feedback: Vec<Feedback>,
    pub stats: EpisodeFeedbackStats,
    pub success: bool,
    pub aborted: bool,
    pub records: Vec<StepRecord>,
}

/// Per-sample weights for one finished episode: 1 for evaluative steps,
/// `N / N_c` for corrective steps, 0 for withheld ones.
pub fn assign_weights(feedback: &[Feedback]) -> Vec<f64> {
    let n = feedback.len();
    let n_c = feedback.iter().filter(|f| f.is_corrective()).count();
    let corrective_q = if n_c == 0 { 1.0 } else { n as f64 / n_c as f64 };
    feedback
        .iter()
        .map(|f| match f {
            Feedback::Evaluative => 1.0,
            Feedback::Corrective(_) => corrective_q,
            Feedback::Withheld => 0.0,
        })
        .collect()
}

/// Runs one interactive episode: the agent proposes, the teacher judges, and
/// corrected steps execute the teacher's action instead.
pub fn rollout_iil_episode(
    sim: &Sim,
    program: &CodePolicyProgram,
    model: &PolicyModel,
    max_steps: usize,
    feedback_cfg: &FeedbackConfig,
    rng: &mut Rng,
    record: bool,
) -> Result<EpisodeOutcome, TrainerError> {
    let max_step = sim.workspace.max_step;
    let mut state = sim.reset(rng)?;
    let mut counter = StepCounter::default();
    let mut samples = Vec::new();
    let mut feedback = Vec::new();
    let mut records = Vec::new();
    let mut success = false;
    for t in 0..max_steps {
        let features = StateFeatures::encode(&state);
        let agent = model.sample_action(features.as_slice(), rng, max_step)?;
        let (teacher, next_counter) =
            evaluate_policy(program, &GroundingView::new(&state, counter.current), counter, max_step)?;
        counter = next_counter;
        let fb = give_feedback(&agent, &teacher, feedback_cfg);
        let executed = match fb {
            Feedback::Corrective(a) => a,
            Feedback::Evaluative | Feedback::Withheld => agent,
        };
        if record {
            records.push(StepRecord {
                t,
                gripper_pos: state.gripper_pos,
                gripper_closed: state.gripper_closed,
                attached: state.attached_name().map(str::to_string),
                agent_action: agent,
                feedback: fb.tag().to_string(),
                teacher_action: teacher,
                executed,
                q: 0.0,
            });
        }
        samples.push(WeightedSample { features, action: executed, q: 0.0 });
        feedback.push(fb);
        state = sim.step(&state, &executed);
        if sim.is_success(&state)? {
            success = true;
            break;
        }
    }
    let weights = assign_weights(&feedback);
    for (s, q) in samples.iter_mut().zip(&weights) {
        s.q = *q;
    }
    for (r, q) in records.iter_mut().zip(&weights) {
        r.q = *q;
    }
    let stats = EpisodeFeedbackStats {
        total: feedback.len(),
        corrective: feedback.iter().filter(|f| f.is_corrective()).count(),
    };
    Ok(EpisodeOutcome { samples, feedback, stats, success, aborted: !success, records })
}

/// Retained training samples. Only successful episodes enter.
#[derive(Clone, Debug, Default)]
pub struct ReplayBuffer {
    samples: Vec<WeightedSample>,
    episodes: Vec<(usize, EpisodeFeedbackStats)>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_episode(&mut self, outcome: &EpisodeOutcome) -> Result<(), TrainerError> {
        if outcome.aborted {
            return Err(TrainerError::AbortedEpisode);
        }
        self.episodes.push((outcome.samples.len(), outcome.stats));
        self.samples.extend_from_slice(&outcome.samples);
        Ok(())
    }

    /// Adds demonstration samples with unit weight.
    pub fn push_demonstration(&mut self, samples: impl IntoIterator<Item = WeightedSample>) {
        let before = self.samples.len();
        self.samples.extend(samples.into_iter().map(|s| WeightedSample { q: 1.0, ..s }));
        let n = self.samples.len() - before;
        self.episodes.push((n, EpisodeFeedbackStats { total: n, corrective: 0 }));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn samples(&self) -> &[WeightedSample] {
        &self.samples
    }

    /// Uniform draw with replacement.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut Rng) -> Vec<WeightedSample> {
        (0..batch_size).map(|_| self.samples[rng.below(self.samples.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::FEATURE_DIM;
    use crate::codepolicy::scripted_program;
    use crate::feedback::FeedbackMode;
    use crate::types::Gripper;

    fn corrective() -> Feedback {
        Feedback::Corrective(Action::new(Vec3::ZERO, Gripper::Open))
    }

    #[test]
    fn weights_follow_counts() {
        let mut fb = vec![Feedback::Evaluative; 75];
        fb.extend(std::iter::repeat_n(corrective(), 25));
        let q = assign_weights(&fb);
        assert!(q[..75].iter().all(|&v| v == 1.0));
        assert!(q[75..].iter().all(|&v| v == 4.0));

        let q = assign_weights(&[Feedback::Evaluative; 7]);
        assert_eq!(q.iter().sum::<f64>(), 7.0);

        let q = assign_weights(&[Feedback::Withheld, Feedback::Evaluative]);
        assert_eq!(q, vec![0.0, 1.0]);
    }

    #[test]
    fn null_policy_episode_is_fully_corrected() {
        let sim = Sim::builtin("reach_target").unwrap();
        let program = scripted_program(&sim.task).unwrap();
        let model = PolicyModel::new(&[FEATURE_DIM, 8, 4], 0.001, 0.0, &mut Rng::from_seed(0)).unwrap();
        let mut rng = Rng::from_seed(1);
        let out =
            rollout_iil_episode(&sim, &program, &model, 300, &FeedbackConfig::default(), &mut rng, true).unwrap();
        assert!(out.success && !out.aborted);
        assert_eq!(out.records.len(), out.samples.len());
        for (s, r) in out.samples.iter().zip(&out.records) {
            assert_eq!(s.q, r.q);
            match r.feedback.as_str() {
                "C" => assert_eq!(s.action, r.teacher_action),
                "E" => assert_eq!(s.action, r.agent_action),
                other => panic!("unexpected tag {other}"),
            }
        }
        let corrective_q: f64 = out.samples.iter().zip(&out.feedback).filter(|(_, f)| f.is_corrective()).map(|(s, _)| s.q).sum();
        assert!((corrective_q - out.samples.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn aborted_episodes_rejected() {
        let sim = Sim::builtin("reach_target").unwrap();
        let program = scripted_program(&sim.task).unwrap();
        let model = PolicyModel::new(&[FEATURE_DIM, 8, 4], 0.001, 0.0, &mut Rng::from_seed(0)).unwrap();
        let cfg = FeedbackConfig { mode: FeedbackMode::EvaluativeOnly, ..Default::default() };
        let out = rollout_iil_episode(&sim, &program, &model, 50, &cfg, &mut Rng::from_seed(1), false).unwrap();
        assert!(out.aborted);
        assert_eq!(out.samples.len(), 50);
        let mut buf = ReplayBuffer::new();
        assert!(matches!(buf.push_episode(&out), Err(TrainerError::AbortedEpisode)));
        assert!(buf.is_empty());
    }
}
