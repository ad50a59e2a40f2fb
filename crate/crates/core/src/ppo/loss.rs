//! Clipped-surrogate policy loss and squared-error critic loss.

use ndarray::{Array1, Array2};

use super::gaussian;
use super::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::tinynet::MlpParams;

#[derive(Debug, Clone)]
pub struct PolicyLoss {
    /// Total minimized objective.
    pub loss: f64,
    /// `mean(min(rho A, clip(rho) A))`
    pub surrogate: f64,
    pub entropy: f64,
    pub mean_abs_ratio_dev: f64,
    /// `mean((rho - 1) - ln rho)`, a non-negative estimate of the KL
    /// divergence from the collecting policy.
    pub approx_kl: f64,
    /// Fraction of samples whose clipped branch was selected.
    pub clip_fraction: f64,
    pub grads: MlpParams,
}

/// `-mean(min(rho A, clip(rho, 1-eps, 1+eps) A)) - entropy_coef * H` and its
/// gradient with respect to every policy parameter, including `log_std`.
pub fn ppo_loss(
    batch: &TrajectoryBatch,
    policy: &MlpParams,
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<PolicyLoss> {
    let log_std = policy
        .log_std
        .as_ref()
        .ok_or(Error::InvalidLayers(policy.layer_sizes()))?;
    let log_std = log_std.as_slice().expect("standard layout");
    let n = batch.len();
    let (means, cache) = policy.forward_batch(batch.observations.view())?;
    let dim = means.ncols();

    let mut d_mean = Array2::<f64>::zeros((n, dim));
    let mut d_log_std = Array1::<f64>::zeros(dim);
    let mut g_mean = vec![0.0; dim];
    let mut g_ls = vec![0.0; dim];
    let (mut surrogate, mut ratio_dev, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    let inv_n = 1.0 / n as f64;

    for t in 0..n {
        let mean = means.row(t);
        let mean = mean.as_slice().expect("standard layout");
        let action = batch.actions.row(t);
        let action = action.as_slice().expect("standard layout");
        let new_lp = gaussian::log_prob(mean, log_std, action);
        let log_ratio = new_lp - batch.log_probs[t];
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite("probability ratio"));
        }
        let adv = batch.advantages[t];
        let unclipped = ratio * adv;
        let clipped_obj = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
        ratio_dev += (ratio - 1.0).abs();
        kl += ratio - 1.0 - log_ratio;
        if unclipped <= clipped_obj {
            surrogate += unclipped;
            // d(-unclipped / n)/d logp = -rho A / n
            let coeff = -ratio * adv * inv_n;
            gaussian::log_prob_grads(mean, log_std, action, &mut g_mean, &mut g_ls);
            for d in 0..dim {
                d_mean[[t, d]] = coeff * g_mean[d];
                d_log_std[d] += coeff * g_ls[d];
            }
        } else {
            surrogate += clipped_obj;
            clipped += 1;
        }
    }
    surrogate *= inv_n;
    let entropy = gaussian::entropy(log_std);
    d_log_std -= entropy_coef;

    let mut grads = policy.backward(&cache, d_mean.view())?;
    grads.log_std = Some(d_log_std);
    Ok(PolicyLoss {
        loss: -surrogate - entropy_coef * entropy,
        surrogate,
        entropy,
        mean_abs_ratio_dev: ratio_dev * inv_n,
        approx_kl: kl * inv_n,
        clip_fraction: clipped as f64 * inv_n,
        grads,
    })
}

/// Mean squared error between the critic and the return targets.
pub fn value_loss(batch: &TrajectoryBatch, value: &MlpParams) -> Result<(f64, MlpParams)> {
    let (pred, cache) = value.forward_batch(batch.observations.view())?;
    let n = batch.len() as f64;
    let mut diff = pred;
    for (d, target) in diff.column_mut(0).iter_mut().zip(&batch.returns) {
        *d -= target;
    }
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    diff *= 2.0 / n;
    let grads = value.backward(&cache, diff.view())?;
    Ok((loss, grads))
}
