#![allow(dead_code)]

use irvuln::corpus::ClassWeights;
use irvuln::neural::{Model, ModelConfig};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-5;

pub struct GradientCheck {
    pub worst: f64,
    pub checked: usize,
    /// Entries whose magnitude sits below the resolution of the central difference.
    pub floored: usize,
}

/// Compares every analytic gradient of the mean weighted loss against a
/// central difference with step `FD_STEP`.
///
/// The difference of two losses cannot resolve changes smaller than about
/// `ε·|L|`, so gradients below `ε·|L| / (h · tol)` are compared on that
/// absolute scale instead of their own magnitude.
pub fn check_gradients(config: &ModelConfig, batch: usize, seed: u64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(config.clone(), seed).unwrap();
    for mut t in model.params.tensors_mut() {
        t.mapv_inplace(|v| v + rng.random_range(-1.0..1.0));
    }
    let inputs = Array3::from_shape_simple_fn((config.seq_len, batch, config.input_dim), || rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..batch).map(|b| b % config.num_classes).collect();
    let weights = ClassWeights { weights: (0..config.num_classes).map(|k| 0.5 + k as f64).collect() };
    let base = model.loss_and_gradients(&inputs, &labels, &weights).unwrap();
    let floor = f64::EPSILON * base.loss.abs().max(1.0) / FD_STEP / FD_TOLERANCE;

    let mut result = GradientCheck { worst: 0.0, checked: 0, floored: 0 };
    for (ti, g) in base.grads.tensors().iter().enumerate() {
        for (j, &analytic) in g.iter().enumerate() {
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                *m.params.tensors_mut().swap_remove(ti).iter_mut().nth(j).unwrap() += delta;
                m.loss_and_gradients(&inputs, &labels, &weights).unwrap().loss
            };
            let numeric = (loss_at(FD_STEP) - loss_at(-FD_STEP)) / (2.0 * FD_STEP);
            let scale = analytic.abs().max(numeric.abs());
            if scale < floor {
                result.floored += 1;
            }
            result.worst = result.worst.max((analytic - numeric).abs() / scale.max(floor));
            result.checked += 1;
        }
    }
    result
}
