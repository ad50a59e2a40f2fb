//! Diagonal Gaussian action distribution with state-independent `log_std`.

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Log density of `action`, summed over dimensions.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Partial derivatives of [`log_prob`] with respect to the mean and
/// `log_std`, written into the two output slices.
pub fn log_prob_grads(
    mean: &[f64],
    log_std: &[f64],
    action: &[f64],
    d_mean: &mut [f64],
    d_log_std: &mut [f64],
) {
    for d in 0..mean.len() {
        let inv_std = (-log_std[d]).exp();
        let z = (action[d] - mean[d]) * inv_std;
        d_mean[d] = z * inv_std;
        d_log_std[d] = z * z - 1.0;
    }
}

/// Differential entropy; its gradient with respect to each `log_std` is 1.
pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
}
