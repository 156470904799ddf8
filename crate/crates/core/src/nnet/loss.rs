use alloc::format;
use alloc::vec::Vec;
use libm::{exp, fabs, log, log1p};

use crate::{Error, Result};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before logs.
pub const PROB_CLIP: f64 = 1e-7;

/// Mean binary cross-entropy over all `N x C` cells.
pub fn multi_label_soft_margin_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            if y != 0 {
                -log(p)
            } else {
                -log(1.0 - p)
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Cross-entropy of one cell from its logit, equal to the clipped
/// probability form but without the rounding of `1 - p`.
pub(crate) fn cell_loss_from_logit(z: f64, y: u8) -> f64 {
    let limit = log((1.0 - PROB_CLIP) / PROB_CLIP);
    let z = z.clamp(-limit, limit);
    // -log(sigmoid(s)) with s = z for y = 1 and s = -z for y = 0
    let s = if y != 0 { z } else { -z };
    (-s).max(0.0) + log1p(exp(-fabs(s)))
}

/// Gradient of the loss with respect to each pre-sigmoid logit: `(p - y) / (N C)`.
pub fn loss_grad_logits(probs: &[f64], labels: &[u8]) -> Result<Vec<f64>> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let scale = 1.0 / probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - f64::from(y)) * scale)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::sigmoid;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let eps = PROB_CLIP;
        let exact =
            multi_label_soft_margin_loss(&[1.0 - eps, eps, 1.0, 0.0], &[1, 0, 1, 0]).unwrap();
        assert!(exact <= 1e-6);
        assert_relative_eq!(
            multi_label_soft_margin_loss(&[0.5], &[1]).unwrap(),
            0.693147,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            multi_label_soft_margin_loss(&[0.8, 0.3], &[1, 0]).unwrap(),
            0.289909,
            epsilon = 1e-6
        );
        assert!(multi_label_soft_margin_loss(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn logit_form_matches_probability_form() {
        for z in [-40.0, -16.2, -3.0, -1e-3, 0.0, 0.7, 9.0, 16.2, 40.0] {
            for y in [0u8, 1] {
                let direct = multi_label_soft_margin_loss(&[sigmoid(z)], &[y]).unwrap();
                assert_relative_eq!(cell_loss_from_logit(z, y), direct, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn logit_gradient_matches_difference() {
        let z = [0.3, -1.2, 2.0, 0.0];
        let y = [1u8, 0, 0, 1];
        let loss_at = |z: &[f64]| {
            let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            multi_label_soft_margin_loss(&p, &y).unwrap()
        };
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let g = loss_grad_logits(&p, &y).unwrap();
        for i in 0..z.len() {
            let h = 1e-6;
            let (mut zp, mut zm) = (z.to_vec(), z.to_vec());
            zp[i] += h;
            zm[i] -= h;
            let fd = (loss_at(&zp) - loss_at(&zm)) / (2.0 * h);
            assert_relative_eq!(fd, g[i], epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn nonnegative_and_permutation_invariant(
            cells in proptest::collection::vec((0.0f64..=1.0, 0u8..2), 1..40),
            rot in 0usize..40,
        ) {
            let (p, y): (Vec<f64>, Vec<u8>) = cells.iter().copied().unzip();
            let l = multi_label_soft_margin_loss(&p, &y).unwrap();
            prop_assert!(l >= 0.0);
            let k = rot % p.len();
            let (mut p2, mut y2) = (p.clone(), y.clone());
            p2.rotate_left(k);
            y2.rotate_left(k);
            let l2 = multi_label_soft_margin_loss(&p2, &y2).unwrap();
            prop_assert!((l - l2).abs() <= 1e-12 * l.max(1.0));
            let mean = p.iter().zip(&y).map(|(&p, &y)| multi_label_soft_margin_loss(&[p], &[y]).unwrap()).sum::<f64>()
                / p.len() as f64;
            prop_assert!((l - mean).abs() <= 1e-12 * l.max(1.0));
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        assert!(loss_grad_logits(&[0.1, 0.2], &vec![1]).is_err());
    }
}
