use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use super::rollout::{rollout_iil_episode, ReplayBuffer, StepRecord};
use super::{run_config_hash, CheckpointEval, EpisodeMetrics, Method, RunMetrics, TrainerConfig, TrainerError};
use crate::agent::{OptimizerState, PolicyModel, StateFeatures, WeightedSample, FEATURE_DIM, OUTPUT_DIM};
use crate::codepolicy::CodePolicyProgram;
use crate::feedback::collect_demonstration;
use crate::rng::Rng;
use crate::sim::Sim;
use crate::types::Trajectory;

/// Fresh model with the configured architecture.
pub fn init_model(cfg: &TrainerConfig, rng: &Rng) -> Result<PolicyModel, TrainerError> {
    let mut sizes = vec![FEATURE_DIM];
    sizes.extend(&cfg.hidden_layers);
    sizes.push(OUTPUT_DIM);
    Ok(PolicyModel::new(&sizes, cfg.sigma, cfg.output_gain, &mut rng.fork("init"))?
        .with_scales(cfg.input_scale, cfg.output_scale)?)
}

fn demo_samples(traj: &Trajectory) -> impl Iterator<Item = WeightedSample> + '_ {
    traj.samples.iter().map(|s| WeightedSample { features: StateFeatures::encode(&s.state), action: s.action, q: 1.0 })
}

/// Collects `needed` successful direct-control demonstrations, discarding failures.
fn collect_demos(
    sim: &Sim,
    program: &CodePolicyProgram,
    max_steps: usize,
    needed: usize,
    max_attempts: usize,
    rng: &Rng,
) -> Result<Vec<Trajectory>, TrainerError> {
    let mut demos = Vec::with_capacity(needed);
    let mut attempts = 0;
    while demos.len() < needed {
        if attempts == max_attempts {
            return Err(TrainerError::TeacherTooWeak {
                task: sim.task.name.clone(),
                successes: demos.len(),
                attempts,
                needed,
            });
        }
        let (traj, ok) = collect_demonstration(sim, program, &mut rng.fork(&format!("demo-{attempts}")), max_steps)?;
        attempts += 1;
        if ok {
            demos.push(traj);
        }
    }
    Ok(demos)
}

fn gradient_step(
    model: &mut PolicyModel,
    opt: &mut OptimizerState,
    batch: &[WeightedSample],
) -> Result<f64, TrainerError> {
    let (loss, grad) = model.loss_and_grad(batch)?;
    opt.step_model(model, &grad)?;
    Ok(loss)
}

pub struct WarmStart {
    pub samples: Vec<WeightedSample>,
    pub grad_steps: usize,
}

/// Trains on successful teacher demonstrations for a fixed number of epochs.
/// Leaves the model untouched when warm start is disabled.
pub fn run_warm_start(
    sim: &Sim,
    program: &CodePolicyProgram,
    model: &mut PolicyModel,
    opt: &mut OptimizerState,
    cfg: &TrainerConfig,
    rng: &Rng,
) -> Result<WarmStart, TrainerError> {
    if !cfg.use_warm_start {
        return Ok(WarmStart { samples: Vec::new(), grad_steps: 0 });
    }
    let demos = collect_demos(
        sim,
        program,
        cfg.max_episode_steps,
        cfg.warm_start_demos,
        cfg.warm_start_max_attempts,
        &rng.fork("warm-start"),
    )?;
    let samples: Vec<WeightedSample> = demos.iter().flat_map(demo_samples).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle_rng = rng.fork("warm-start-batches");
    let mut grad_steps = 0;
    for _ in 0..cfg.warm_start_epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, shuffle_rng.below(i + 1));
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<WeightedSample> = chunk.iter().map(|&i| samples[i]).collect();
            gradient_step(model, opt, &batch)?;
            grad_steps += 1;
        }
    }
    Ok(WarmStart { samples, grad_steps })
}

/// Success rate over `eval_episodes` episodes. Episode `e` always starts from
/// the spawn drawn by the `eval/episode-e` stream, whatever the policy.
pub fn evaluate(model: &PolicyModel, sim: &Sim, cfg: &TrainerConfig, rng: &Rng) -> Result<f64, TrainerError> {
    let eval = rng.fork("eval");
    let max_step = sim.workspace.max_step;
    let mut successes = 0;
    for e in 0..cfg.eval_episodes {
        let mut erng = eval.fork(&format!("episode-{e}"));
        let mut state = sim.reset(&mut erng)?;
        for _ in 0..cfg.max_episode_steps {
            let f = StateFeatures::encode(&state);
            let action = if cfg.eval_stochastic {
                model.sample_action(f.as_slice(), &mut erng, max_step)?
            } else {
                model.mean_action(f.as_slice(), max_step)?
            };
            state = sim.step(&state, &action);
            if sim.is_success(&state)? {
                successes += 1;
                break;
            }
        }
    }
    Ok(successes as f64 / cfg.eval_episodes as f64)
}

/// Direct-control success rate of the code policy on the evaluation spawns.
pub fn evaluate_teacher(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    rng: &Rng,
) -> Result<f64, TrainerError> {
    let eval = rng.fork("eval");
    let mut successes = 0;
    for e in 0..cfg.eval_episodes {
        let (_, ok) =
            collect_demonstration(sim, program, &mut eval.fork(&format!("episode-{e}")), cfg.max_episode_steps)?;
        successes += ok as usize;
    }
    Ok(successes as f64 / cfg.eval_episodes as f64)
}

/// Direct-control reference run: the code policy itself on the evaluation spawns.
pub fn run_teacher_direct(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<RunMetrics, TrainerError> {
    cfg.validate()?;
    program.validate_for(&sim.task)?;
    let started = Instant::now();
    let method = Method::TeacherDirect;
    let mut metrics = RunMetrics::new(&sim.task.name, method, seed, run_config_hash(&sim.task.name, method, cfg));
    metrics.final_success_rate = evaluate_teacher(sim, program, cfg, &Rng::from_seed(seed))?;
    metrics.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(metrics)
}

#[derive(Serialize)]
struct LogLine<'a> {
    episode: usize,
    #[serde(flatten)]
    record: &'a StepRecord,
}

/// The interactive pipeline: optional warm start, then per episode a rollout
/// with teacher feedback, buffer update (successful episodes only) and a
/// fixed number of gradient steps. Deterministic for a given seed.
pub fn train_llm_iteach(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<(PolicyModel, RunMetrics), TrainerError> {
    cfg.validate()?;
    program.validate_for(&sim.task)?;
    let started = Instant::now();
    let root = Rng::from_seed(seed);
    let mut metrics = RunMetrics::new(&sim.task.name, Method::Iteach, seed, run_config_hash(&sim.task.name, Method::Iteach, cfg));
    let mut model = init_model(cfg, &root)?;
    let mut opt = OptimizerState::for_model(&model, cfg.adam);
    let warm = run_warm_start(sim, program, &mut model, &mut opt, cfg, &root)?;
    metrics.warm_start_samples = warm.samples.len();
    metrics.grad_steps = warm.grad_steps;

    let mut buffer = ReplayBuffer::new();
    if !warm.samples.is_empty() {
        buffer.push_demonstration(warm.samples);
    }
    let episodes = root.fork("episodes");
    let mut batch_rng = root.fork("batches");
    for ep in 0..cfg.training_episodes {
        let mut erng = episodes.fork(&format!("episode-{ep}"));
        let out = rollout_iil_episode(
            sim,
            program,
            &model,
            cfg.max_episode_steps,
            &cfg.feedback,
            &mut erng,
            log.is_some(),
        )?;
        if let Some(w) = log.as_deref_mut() {
            for record in &out.records {
                serde_json::to_writer(&mut *w, &LogLine { episode: ep, record }).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
        }
        if !out.aborted {
            buffer.push_episode(&out)?;
        }
        let mut loss_sum = 0.0;
        let mut steps = 0;
        if !buffer.is_empty() {
            for _ in 0..cfg.grad_steps_per_episode {
                let batch = buffer.sample_batch(cfg.batch_size, &mut batch_rng);
                loss_sum += gradient_step(&mut model, &mut opt, &batch)?;
                steps += 1;
            }
        }
        metrics.grad_steps += steps;
        metrics.episodes.push(EpisodeMetrics {
            episode: ep,
            success: out.success,
            aborted: out.aborted,
            length: out.stats.total,
            correction_rate: out.stats.correction_rate(),
            mean_loss: (steps > 0).then(|| loss_sum / steps as f64),
        });
        if cfg.eval_checkpoints.contains(&(ep + 1)) && ep + 1 < cfg.training_episodes {
            metrics.checkpoints.push(CheckpointEval { episodes: ep + 1, success_rate: evaluate(&model, sim, cfg, &root)? });
        }
    }
    metrics.final_success_rate = evaluate(&model, sim, cfg, &root)?;
    metrics.checkpoints.push(CheckpointEval { episodes: cfg.training_episodes, success_rate: metrics.final_success_rate });
    metrics.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((model, metrics))
}

/// Behavior cloning on `training_episodes` successful teacher demonstrations,
/// with the gradient budget of the matching interactive run.
pub fn train_bc(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<(PolicyModel, RunMetrics), TrainerError> {
    if cfg.training_episodes == 0 {
        return Err(TrainerError::NoDemonstrations);
    }
    cfg.validate()?;
    program.validate_for(&sim.task)?;
    let started = Instant::now();
    let root = Rng::from_seed(seed);
    let mut metrics = RunMetrics::new(&sim.task.name, Method::Bc, seed, run_config_hash(&sim.task.name, Method::Bc, cfg));
    let mut model = init_model(cfg, &root)?;
    let mut opt = OptimizerState::for_model(&model, cfg.adam);
    let max_attempts = cfg.training_episodes * cfg.warm_start_max_attempts.div_ceil(cfg.warm_start_demos);
    let demos =
        collect_demos(sim, program, cfg.max_episode_steps, cfg.training_episodes, max_attempts, &root.fork("demos"))?;
    let mut buffer = ReplayBuffer::new();
    for d in &demos {
        buffer.push_demonstration(demo_samples(d));
    }
    if buffer.is_empty() {
        return Err(TrainerError::NoDemonstrations);
    }
    let mut batch_rng = root.fork("batches");
    for _ in 0..cfg.bc_budget() {
        let batch = buffer.sample_batch(cfg.batch_size, &mut batch_rng);
        gradient_step(&mut model, &mut opt, &batch)?;
    }
    metrics.grad_steps = cfg.bc_budget();
    metrics.final_success_rate = evaluate(&model, sim, cfg, &root)?;
    metrics.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((model, metrics))
}

/// Warm start alone, then evaluation.
pub fn train_warm_start_only(
    sim: &Sim,
    program: &CodePolicyProgram,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<(PolicyModel, RunMetrics), TrainerError> {
    cfg.validate()?;
    program.validate_for(&sim.task)?;
    let started = Instant::now();
    let root = Rng::from_seed(seed);
    let method = Method::WarmStartOnly;
    let mut metrics = RunMetrics::new(&sim.task.name, method, seed, run_config_hash(&sim.task.name, method, cfg));
    let mut model = init_model(cfg, &root)?;
    let mut opt = OptimizerState::for_model(&model, cfg.adam);
    let forced = TrainerConfig { use_warm_start: true, ..cfg.clone() };
    let warm = run_warm_start(sim, program, &mut model, &mut opt, &forced, &root)?;
    metrics.warm_start_samples = warm.samples.len();
    metrics.grad_steps = warm.grad_steps;
    metrics.final_success_rate = evaluate(&model, sim, cfg, &root)?;
    metrics.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((model, metrics))
}
