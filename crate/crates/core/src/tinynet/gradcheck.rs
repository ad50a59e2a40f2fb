use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MlpParams;
use crate::error::Result;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms; central differences cannot resolve them below roundoff.
pub const GRAD_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, GRAD_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub probes: usize,
}

/// Compares the gradient returned by `loss_fn` against central differences
/// with step `h` on `n_probes` randomly chosen parameters (all of them when
/// `n_probes` covers the whole network).
pub fn grad_check<F>(
    params: &MlpParams,
    loss_fn: F,
    n_probes: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&MlpParams) -> Result<(f64, MlpParams)>,
{
    let (_, grads) = loss_fn(params)?;
    let analytic = grads.to_flat();
    let base = params.to_flat();
    let n = base.len();

    let indices: Vec<usize> = if n_probes >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_probes).map(|_| rng.random_range(0..n)).collect()
    };

    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut eval_at = |flat: &[f64]| -> Result<f64> {
        probe.set_flat(flat)?;
        Ok(loss_fn(&probe)?.0)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        probes: indices.len(),
    };
    for &i in &indices {
        flat[i] = base[i] + h;
        let plus = eval_at(&flat)?;
        flat[i] = base[i] - h;
        let minus = eval_at(&flat)?;
        flat[i] = base[i];

        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
                probes: indices.len(),
            };
        }
    }
    Ok(report)
}

fn uniform_batch(seed: u64, n: usize, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0))
}

/// Mean squared error against fixed targets.
fn mse(p: &MlpParams, x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, MlpParams)> {
    let (out, cache) = p.forward_batch(x.view())?;
    let diff = &out - y;
    let n = x.nrows() as f64;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let grads = p.backward(&cache, (diff * (2.0 / n)).view())?;
    Ok((loss, grads))
}

/// Checks a freshly initialized tanh network of the given sizes under an MSE
/// loss on a random batch of 8 inputs in `[-1, 1]`.
pub fn check_random_mlp(sizes: &[usize], seed: u64, n_probes: usize, h: f64) -> Result<GradCheckReport> {
    let p = MlpParams::init(sizes, seed)?;
    let x = uniform_batch(seed ^ 0x5eed, 8, p.input_dim());
    let y = uniform_batch(seed ^ 0x7a6e, 8, p.output_dim());
    grad_check(&p, |p| mse(p, &x, &y), n_probes, h, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinynet::Activation;

    fn batch(seed: u64, n: usize, dim: usize) -> Array2<f64> {
        uniform_batch(seed, n, dim)
    }

    #[test]
    fn linear_loss_on_linear_net_is_exact() {
        let p = MlpParams::init(&[4, 6, 2], 1)
            .unwrap()
            .with_activation(Activation::Identity);
        let x = batch(2, 3, 4);
        let loss = |p: &MlpParams| {
            let (out, cache) = p.forward_batch(x.view())?;
            let w = Array2::from_shape_fn(out.dim(), |(i, j)| 1.0 + i as f64 - 0.5 * j as f64);
            let l = (&out * &w).sum();
            Ok((l, p.backward(&cache, w.view())?))
        };
        // The loss is linear in every single parameter, so any step is exact
        // and a large one keeps roundoff out of the way.
        let report = grad_check(&p, loss, usize::MAX, 0.5, 0).unwrap();
        assert!(report.max_rel_error < 1e-10, "{report:?}");
    }

    #[test]
    fn tanh_net_matches_central_differences() {
        let p = MlpParams::init(&[5, 128, 64, 3], 8).unwrap();
        let x = batch(3, 8, 5);
        let y = batch(4, 8, 3);
        let report = grad_check(&p, |p| mse(p, &x, &y), 400, 1e-5, 17).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn corrupted_backward_is_caught() {
        // Square middle layer so the weight gradient can be transposed.
        let p = MlpParams::init(&[5, 8, 8, 3], 6).unwrap();
        let x = batch(5, 4, 5);
        let y = batch(6, 4, 3);
        let corrupted = |p: &MlpParams| {
            let (l, mut g) = mse(p, &x, &y)?;
            g.layers[1].weight = g.layers[1].weight.t().as_standard_layout().into_owned();
            Ok((l, g))
        };
        let report = grad_check(&p, corrupted, usize::MAX, 1e-5, 0).unwrap();
        assert!(report.max_rel_error > 1e-2, "{report:?}");

        let honest = grad_check(&p, |p| mse(p, &x, &y), usize::MAX, 1e-5, 0).unwrap();
        assert!(honest.max_rel_error < 1e-4, "{honest:?}");
    }

    #[test]
    fn random_mlp_helper() {
        let r = check_random_mlp(&[5, 16, 8, 1], 2, usize::MAX, 1e-5).unwrap();
        assert_eq!(r.probes, 5 * 16 + 16 + 16 * 8 + 8 + 8 + 1);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 2e-12) < 1e-5);
    }
}
