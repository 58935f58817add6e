use super::{AgentError, PolicyModel, WeightedSample};
use crate::rng::Rng;

/// Largest relative error between backpropagated and central-difference
/// gradients, `|a - n| / max(1e-8, |a| + |n|)`.
///
/// Checks every parameter, or `subsample` parameters drawn without
/// replacement when given. The constant part of the loss is left out of the
/// differences since it has no gradient.
pub fn grad_check(
    model: &PolicyModel,
    batch: &[WeightedSample],
    h: f64,
    subsample: Option<(usize, &mut Rng)>,
) -> Result<f64, AgentError> {
    let (_, analytic) = model.loss_and_grad(batch)?;
    let n = analytic.len();
    let indices: Vec<usize> = match subsample {
        Some((k, rng)) if k < n => {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = i + rng.below(n - i);
                idx.swap(i, j);
            }
            idx.truncate(k);
            idx
        }
        _ => (0..n).collect(),
    };
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in indices {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = probe.loss_up_to_constant(batch)?;
        probe.params_mut()[i] = orig - h;
        let down = probe.loss_up_to_constant(batch)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
