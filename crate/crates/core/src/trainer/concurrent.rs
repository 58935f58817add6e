//! Rollouts and gradient steps on separate threads. Not reproducible
//! bit-for-bit: which parameter snapshot an episode sees depends on timing.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use super::pipelines::{evaluate, init_model, run_warm_start};
use super::rollout::{rollout_iil_episode, ReplayBuffer};
use super::{run_config_hash, EpisodeMetrics, Method, RunMetrics, TrainerConfig, TrainerError};
use crate::agent::{OptimizerState, PolicyModel};
use crate::codepolicy::CodePolicyProgram;
use crate::rng::Rng;
use crate::sim::Sim;

/// Same pipeline as [`super::train_llm_iteach`], but the learner trains while
/// episodes are collected. The learner never runs more than
/// `grad_steps_per_episode` steps ahead of the finished episodes, and
/// publishes a fresh parameter snapshot after every step.
pub fn train_llm_iteach_concurrent(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<(PolicyModel, RunMetrics), TrainerError> {
    cfg.validate()?;
    program.validate_for(&sim.task)?;
    let started = Instant::now();
    let root = Rng::from_seed(seed);
    let mut metrics =
        RunMetrics::new(&sim.task.name, Method::Iteach, seed, run_config_hash(&sim.task.name, Method::Iteach, cfg));
    let mut model = init_model(cfg, &root)?;
    let mut opt = OptimizerState::for_model(&model, cfg.adam);
    let warm = run_warm_start(sim, program, &mut model, &mut opt, cfg, &root)?;
    metrics.warm_start_samples = warm.samples.len();
    let warm_steps = warm.grad_steps;

    let buffer = Mutex::new(ReplayBuffer::new());
    if !warm.samples.is_empty() {
        buffer.lock().unwrap().push_demonstration(warm.samples);
    }
    let snapshot = RwLock::new(Arc::new(model.clone()));
    let finished = AtomicUsize::new(0);
    let rollouts_done = AtomicBool::new(false);
    let budget = cfg.training_episodes * cfg.grad_steps_per_episode;

    let (episodes, learner) = std::thread::scope(|scope| {
        let learner = scope.spawn(|| -> Result<usize, TrainerError> {
            let mut batch_rng = root.fork("batches");
            let mut steps = 0;
            while steps < budget {
                let allowed = finished.load(Ordering::Acquire) * cfg.grad_steps_per_episode;
                let batch = {
                    let buf = buffer.lock().unwrap();
                    (steps < allowed && !buf.is_empty()).then(|| buf.sample_batch(cfg.batch_size, &mut batch_rng))
                };
                match batch {
                    Some(batch) => {
                        let (_, grad) = model.loss_and_grad(&batch)?;
                        opt.step_model(&mut model, &grad)?;
                        steps += 1;
                        *snapshot.write().unwrap() = Arc::new(model.clone());
                    }
                    None if rollouts_done.load(Ordering::Acquire) && buffer.lock().unwrap().is_empty() => break,
                    None => std::thread::sleep(Duration::from_micros(50)),
                }
            }
            Ok(steps)
        });

        let rollout = || -> Result<Vec<EpisodeMetrics>, TrainerError> {
            let streams = root.fork("episodes");
            let mut out_metrics = Vec::with_capacity(cfg.training_episodes);
            for ep in 0..cfg.training_episodes {
                let current = snapshot.read().unwrap().clone();
                let mut erng = streams.fork(&format!("episode-{ep}"));
                let out = rollout_iil_episode(sim, program, &current, cfg.max_episode_steps, &cfg.feedback, &mut erng, false)?;
                if !out.aborted {
                    buffer.lock().unwrap().push_episode(&out)?;
                }
                finished.fetch_add(1, Ordering::Release);
                out_metrics.push(EpisodeMetrics {
                    episode: ep,
                    success: out.success,
                    aborted: out.aborted,
                    length: out.stats.total,
                    correction_rate: out.stats.correction_rate(),
                    mean_loss: None,
                });
            }
            Ok(out_metrics)
        };
        let episodes = rollout();
        rollouts_done.store(true, Ordering::Release);
        // unblock the learner if rollouts failed early
        finished.store(cfg.training_episodes, Ordering::Release);
        (episodes, learner.join().expect("learner thread panicked"))
    });
    metrics.episodes = episodes?;
    let steps = learner?;
    metrics.grad_steps = warm_steps + steps;
    metrics.final_success_rate = evaluate(&model, sim, cfg, &root)?;
    metrics.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((model, metrics))
}
