use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped from below before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `W x + b`.
pub fn dense(x: &[f64], w: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    if w.shape().len() != 2 || w.cols() != x.len() || b.len() != w.rows() {
        return Err(Error::Shape(format!(
            "dense: W {:?}, b {:?}, x {}",
            w.shape(),
            b.shape(),
            x.len()
        )));
    }
    let mut out = b.data().to_vec();
    w.matvec_acc(x, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite("dense".into()))
    }
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Gradient of `weight · cross_entropy(softmax(z), label)` with respect to
/// the logits `z`, given `probs = softmax(z)`.
pub fn softmax_cross_entropy_grad(probs: &[f64], label: usize, weight: f64) -> Vec<f64> {
    if probs[label] < PROB_FLOOR {
        return vec![0.0; probs.len()];
    }
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| weight * (p - if i == label { 1.0 } else { 0.0 }))
        .collect()
}

/// Per-element scale factors for inverted dropout: 0 for dropped units and
/// `1 / (1 − rate)` for kept ones. `None` means identity.
pub fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R, train: bool) -> Result<Option<Vec<f64>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !train || rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

pub fn dropout<R: Rng>(x: &Tensor, rate: f64, rng: &mut R, train: bool) -> Result<Tensor> {
    let mut out = x.clone();
    if let Some(mask) = dropout_mask(x.len(), rate, rng, train)? {
        out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let big = softmax(&[1000.0, 0.0]);
        assert!(big[0] == 1.0 && big[1] >= 0.0);
    }

    #[test]
    fn cross_entropy_is_clamped() {
        assert!(cross_entropy(&[1.0, 0.0], 0).abs() < 1e-15);
        assert!((cross_entropy(&[1.0, 0.0], 1) - 12.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn dense_checks_shapes() {
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::vector(vec![0.5, -0.5]);
        assert_eq!(dense(&[1.0, 1.0], &w, &b).unwrap(), vec![3.5, 6.5]);
        assert!(dense(&[1.0], &w, &b).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::vector(vec![1.0; 1000]);
        assert_eq!(dropout(&x, 0.2, &mut rng, false).unwrap(), x);
        let y = dropout(&x, 0.2, &mut rng, true).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
        let kept = y.data().iter().filter(|&&v| v > 0.0).count();
        assert!((700..900).contains(&kept));
        assert!(dropout(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout(&x, -0.1, &mut rng, false).is_err());
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = vec![0.3, -1.1, 0.7];
        let loss = |z: &[f64]| 1.7 * cross_entropy(&softmax(z), 2);
        let analytic = softmax_cross_entropy_grad(&softmax(&z), 2, 1.7);
        let report = grad_check(loss, &z, &analytic, usize::MAX, 1e-5, &mut rng);
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    proptest! {
        #[test]
        fn softmax_is_shift_invariant(z in proptest::collection::vec(-30.0f64..30.0, 1..8), c in -100.0f64..100.0) {
            let a = softmax(&z);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
