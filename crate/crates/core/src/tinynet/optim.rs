use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Adam (or plain gradient descent) over one network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub steps: u64,
    pub first_moment: MlpParams,
    pub second_moment: MlpParams,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &MlpParams) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    pub fn adam(lr: f64, params: &MlpParams) -> Self {
        Self::new(OptimizerKind::Adam, lr, params)
    }

    pub fn sgd(lr: f64, params: &MlpParams) -> Self {
        Self::new(OptimizerKind::Sgd, lr, params)
    }

    /// Applies one descent step to `params` in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !params.same_shape(grads) {
            return Err(Error::DimensionMismatch {
                expected: params.num_params(),
                actual: grads.num_params(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= self.lr * g);
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
                let t = i32::try_from(self.steps).unwrap_or(i32::MAX);
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let blocks = params
                    .blocks_mut()
                    .into_iter()
                    .zip(grads.blocks())
                    .zip(self.first_moment.blocks_mut())
                    .zip(self.second_moment.blocks_mut());
                for (((p, g), m), v) in blocks {
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn net() -> MlpParams {
        MlpParams::init_policy(&[5, 8, 4, 3], 5).unwrap()
    }

    fn grads_from(p: &MlpParams, f: impl Fn(usize) -> f64) -> MlpParams {
        let mut g = p.zeros_like();
        let flat: Vec<f64> = (0..p.num_params()).map(f).collect();
        g.set_flat(&flat).unwrap();
        g
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut p = net();
            let before = p.clone();
            let mut opt = Optimizer::new(kind, 1e-3, &p);
            let zero = p.zeros_like();
            opt.step(&mut p, &zero).unwrap();
            assert_eq!(p, before);
        }
    }

    #[test]
    fn first_adam_step_is_signed_lr() {
        let mut p = net();
        let before = p.to_flat();
        let g = grads_from(&p, |i| (i as f64 - 40.0) * 0.37 + 0.05);
        let mut opt = Optimizer::adam(1e-3, &p);
        opt.step(&mut p, &g).unwrap();
        for ((a, b), g) in p.to_flat().iter().zip(&before).zip(g.to_flat()) {
            assert!((a - b + 1e-3 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn sgd_step_is_exact() {
        let mut p = net();
        let before = p.to_flat();
        let g = grads_from(&p, |i| (i as f64).sin());
        let mut opt = Optimizer::sgd(0.01, &p);
        opt.step(&mut p, &g).unwrap();
        for ((a, b), g) in p.to_flat().iter().zip(&before).zip(g.to_flat()) {
            assert_eq!(*a, b - 0.01 * g);
        }
    }

    #[test]
    fn non_finite_grads_are_rejected() {
        let mut p = net();
        let g = grads_from(&p, |i| if i == 3 { f64::NAN } else { 0.0 });
        let mut opt = Optimizer::adam(1e-3, &p);
        assert!(matches!(opt.step(&mut p, &g), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = net();
        let other = MlpParams::init(&[5, 8, 3], 0).unwrap();
        let mut opt = Optimizer::adam(1e-3, &p);
        assert!(opt.step(&mut p, &other).is_err());
    }

    proptest! {
        #[test]
        fn updates_stay_finite(scale in 1e-6f64..1e6, lr in 1e-5f64..1e-2, sgd in any::<bool>()) {
            let mut p = net();
            let kind = if sgd { OptimizerKind::Sgd } else { OptimizerKind::Adam };
            let mut opt = Optimizer::new(kind, lr, &p);
            for k in 0..5 {
                let g = grads_from(&p, |i| scale * ((i + k) as f64).cos());
                opt.step(&mut p, &g).unwrap();
            }
            prop_assert!(p.is_finite());
        }
    }
}
