//! Monte-Carlo return targets and advantage normalization.

use super::ReturnMode;
use crate::error::{Error, Result};

/// Discounted return of every step of one episode, bootstrapped with the
/// critic's estimate of the state reached after the last reward.
pub fn compute_returns(
    rewards: &[f64],
    bootstrap: f64,
    gamma: f64,
    mode: ReturnMode,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidConfig {
            field: "ppo.gamma".into(),
            reason: format!("{gamma} is outside (0, 1]"),
        });
    }
    let n = rewards.len();
    let mut out = vec![0.0; n];
    match mode {
        ReturnMode::Standard => {
            let mut acc = bootstrap;
            for t in (0..n).rev() {
                acc = rewards[t] + gamma * acc;
                out[t] = acc;
            }
        }
        ReturnMode::PaperLiteral => {
            // The reward weight gamma^(i-1) does not depend on t, so the sum
            // is a plain suffix sum of pre-weighted rewards.
            let mut suffix = 0.0;
            for t in (0..n).rev() {
                suffix += gamma.powi(t as i32 - 1) * rewards[t];
                out[t] = suffix + gamma.powi((n - t) as i32) * bootstrap;
            }
        }
    }
    Ok(out)
}

/// `returns - values`, without normalization.
pub fn raw_advantages(returns: &[f64], values: &[f64]) -> Vec<f64> {
    returns.iter().zip(values).map(|(r, v)| r - v).collect()
}

/// Shifts and scales to zero mean and unit (population) variance. Batches
/// shorter than 2 and constant batches are only centred.
pub fn normalize(values: &mut [f64]) {
    if values.len() < 2 {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) * scale);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Double-loop summation straight from the definition.
    fn brute_force(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
        let n = rewards.len();
        (0..n)
            .map(|t| {
                let mut s = 0.0;
                for (i, r) in rewards.iter().enumerate().skip(t) {
                    s += gamma.powi((i - t) as i32) * r;
                }
                s + gamma.powi((n - t) as i32) * bootstrap
            })
            .collect()
    }

    #[test]
    fn single_step() {
        let v = compute_returns(&[-0.3], 2.0, 0.9, ReturnMode::Standard).unwrap();
        assert_eq!(v, vec![-0.3 + 0.9 * 2.0]);
    }

    #[test]
    fn undiscounted_sums() {
        let v = compute_returns(&[1.0, 1.0, 1.0], 0.0, 1.0, ReturnMode::Standard).unwrap();
        assert_eq!(v, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn rejects_gamma_outside_unit_interval() {
        for g in [0.0, 1.5, -1.0, f64::NAN] {
            assert!(compute_returns(&[1.0], 0.0, g, ReturnMode::Standard).is_err());
        }
    }

    #[test]
    fn matches_brute_force_on_random_episodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for k in 0..100 {
            let gamma = [0.5, 0.9, 0.99][k % 3];
            let len = rng.random_range(1..=500);
            let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-0.3..0.0)).collect();
            let boot = rng.random_range(-20.0..5.0);
            let fast = compute_returns(&rewards, boot, gamma, ReturnMode::Standard).unwrap();
            let slow = brute_force(&rewards, boot, gamma);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn paper_literal_weights() {
        let g: f64 = 0.5;
        let r = [1.0, 2.0, 4.0];
        let v = compute_returns(&r, 8.0, g, ReturnMode::PaperLiteral).unwrap();
        let expected = [
            g.powi(-1) * 1.0 + 2.0 + g * 4.0 + g.powi(3) * 8.0,
            2.0 + g * 4.0 + g.powi(2) * 8.0,
            g * 4.0 + g * 8.0,
        ];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_critic_has_zero_advantage() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(raw_advantages(&r, &r), vec![0.0; 3]);
    }

    #[test]
    fn normalization_moments_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..257).map(|_| rng.random_range(-30.0..4.0)).collect();
        let mut a = raw.clone();
        normalize(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-8);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&raw), argmax(&a));

        let mut single = vec![3.0];
        normalize(&mut single);
        assert_eq!(single, vec![3.0]);
    }

    proptest! {
        #[test]
        fn recursion_holds(rewards in proptest::collection::vec(-0.3f64..0.0, 1..300),
                           boot in -30.0f64..0.0, gamma in 0.5f64..1.0) {
            let v = compute_returns(&rewards, boot, gamma, ReturnMode::Standard).unwrap();
            let n = v.len();
            for t in 0..n - 1 {
                prop_assert_eq!(v[t], rewards[t] + gamma * v[t + 1]);
            }
            prop_assert_eq!(v[n - 1], rewards[n - 1] + gamma * boot);
        }

        #[test]
        fn bounded_by_reward_range(rewards in proptest::collection::vec(-0.2 * std::f64::consts::SQRT_2..=0.0, 1..300),
                                   boot in -30.0f64..10.0, gamma in 0.5f64..0.999) {
            let v = compute_returns(&rewards, boot, gamma, ReturnMode::Standard).unwrap();
            let n = v.len();
            let r_min = -0.2 * std::f64::consts::SQRT_2;
            for (t, vt) in v.iter().enumerate() {
                let tail = gamma.powi((n - t) as i32);
                let upper = tail * boot.max(0.0);
                let lower = r_min * (1.0 - tail) / (1.0 - gamma) + tail * boot.min(0.0);
                prop_assert!(*vt <= upper + 1e-12);
                prop_assert!(*vt >= lower - 1e-9);
            }
        }
    }
}
