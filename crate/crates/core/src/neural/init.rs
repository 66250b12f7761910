use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
}

/// A random `n × n` orthogonal matrix: Gram-Schmidt on a Gaussian matrix with
/// the column signs fixed so the distribution is uniform (Haar).
pub(crate) fn orthogonal(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut q: Array2<f64> = Array2::from_shape_simple_fn((n, n), || rng.sample(StandardNormal));
    for j in 0..n {
        // Two passes keep the columns orthogonal to machine precision.
        for _ in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dot(&q.column(j));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-proj, &qk);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|x| x / norm);
    }
    q
}

/// `gates` independent orthogonal `units × units` blocks side by side.
pub(crate) fn orthogonal_blocks(units: usize, gates: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut out = Array2::zeros((units, units * gates));
    for g in 0..gates {
        out.slice_mut(s![.., g * units..(g + 1) * units]).assign(&orthogonal(units, rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1, 3, 64] {
            let q = orthogonal(n, &mut rng);
            let qtq = q.t().dot(&q);
            for ((i, j), v) in qtq.indexed_iter() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-12, "{n}: ({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn glorot_bounds() {
        let w = glorot_uniform(100, 64, &mut ChaCha8Rng::seed_from_u64(1));
        let limit = (6.0f64 / 164.0).sqrt();
        assert!(w.iter().all(|x| x.abs() <= limit));
        assert!(w.iter().any(|x| x.abs() > 0.9 * limit));
    }
}
