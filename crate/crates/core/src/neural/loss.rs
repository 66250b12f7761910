use ndarray::{Array1, ArrayView1};

use crate::corpus::ClassWeights;

/// Lower bound applied to the true-class probability inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut e = logits.mapv(|x| (x - max).exp());
    let sum = e.sum();
    e /= sum;
    e
}

/// `-w[label] · ln(max(probs[label], PROB_FLOOR))`
pub fn weighted_cross_entropy(probs: ArrayView1<f64>, label: usize, weights: &ClassWeights) -> f64 {
    -weights.get(label) * probs[label].max(PROB_FLOOR).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn uniform_is_ln_k() {
        for k in [2usize, 3, 24] {
            let p = Array1::from_elem(k, 1.0 / k as f64);
            assert_relative_eq!(weighted_cross_entropy(p.view(), 1, &ClassWeights::uniform(k)), (k as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn certain_is_zero_and_weight_scales() {
        let w = ClassWeights::uniform(2);
        assert_eq!(weighted_cross_entropy(array![0.0, 1.0].view(), 1, &w), 0.0);
        let p = array![0.3, 0.7];
        let w2 = ClassWeights { weights: vec![2.0, 2.0] };
        assert_eq!(weighted_cross_entropy(p.view(), 0, &w2), 2.0 * weighted_cross_entropy(p.view(), 0, &w));
    }

    #[test]
    fn zero_probability_is_floored() {
        let l = weighted_cross_entropy(array![1.0, 0.0].view(), 1, &ClassWeights::uniform(2));
        assert_relative_eq!(l, -(1e-12f64).ln());
        assert!(l.is_finite());
    }

    #[test]
    fn softmax_normalizes() {
        for logits in [array![0.0, 0.0, 0.0], array![1000.0, -1000.0, 3.0], array![-5.0, 2.5, 0.1]] {
            let p = softmax(logits.view());
            assert!((p.sum() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
        assert_eq!(softmax(array![0.0, 0.0].view()), array![0.5, 0.5]);
    }
}
