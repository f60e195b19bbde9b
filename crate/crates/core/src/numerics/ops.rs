//! Differentiable primitives with hand-written backward passes.

use super::tensor::{add_assign, matvec, matvec_t_acc, outer_acc, sigmoid, Tensor};
use crate::error::{Error, Result};

fn check_affine(x: &[f64], w: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    if w.dims().len() != 2 {
        return Err(Error::shape("affine", format!("W must be a matrix, got dims {:?}", w.dims())));
    }
    let (m, n) = (w.rows(), w.cols());
    if x.len() != n {
        return Err(Error::shape(
            "affine",
            format!("W is {m}x{n} but x has length {}", x.len()),
        ));
    }
    if b.len() != m {
        return Err(Error::shape(
            "affine",
            format!("W is {m}x{n} but b has length {}", b.len()),
        ));
    }
    Ok((m, n))
}

/// `W x + b`.
pub fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    let (m, n) = check_affine(x, w, b)?;
    let mut out = vec![0.0; m];
    matvec(w.values(), m, n, x, &mut out);
    add_assign(&mut out, b.values());
    Ok(out)
}

/// Backward of [`affine`] for upstream gradient `g`: accumulates
/// `dW += g xᵀ`, `db += g` and returns `dx = Wᵀ g`.
pub fn affine_backward(
    x: &[f64],
    w: &Tensor,
    g: &[f64],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (m, n) = (w.rows(), w.cols());
    outer_acc(g, x, dw.values_mut());
    add_assign(db.values_mut(), g);
    let mut dx = vec![0.0; n];
    matvec_t_acc(w.values(), m, n, g, &mut dx);
    dx
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Cross-entropy of `softmax(logits)` against `target`, with its gradient
/// `softmax(logits) − onehot(target)`.
pub fn softmax_xent(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::Index {
            op: "softmax_xent",
            index: target,
            len: logits.len(),
        });
    }
    let logp = log_softmax(logits);
    let loss = -logp[target];
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Weighted binary cross-entropy on a logit: returns `(loss, dloss/dlogit)`.
///
/// `pos_weight` multiplies the positive-class term only.
pub fn weighted_bce_logit(logit: f64, target: f64, pos_weight: f64) -> (f64, f64) {
    // log σ(z) and log(1 − σ(z)) computed without cancellation
    let log_p = -softplus(-logit);
    let log_q = -softplus(logit);
    let loss = -(pos_weight * target * log_p + (1.0 - target) * log_q);
    let p = sigmoid(logit);
    let grad = pos_weight * target * (p - 1.0) + (1.0 - target) * p;
    (loss, grad)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity() {
        let w = Tensor::identity(2);
        let b = Tensor::zeros(&[2]);
        assert_eq!(affine(&[3.0, -1.0], &w, &b).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn affine_hand_arithmetic() {
        let w = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::vector(vec![1.0, 1.0]);
        assert_eq!(affine(&[1.0, 1.0], &w, &b).unwrap(), vec![4.0, 8.0]);
    }

    #[test]
    fn affine_backward_identity_jacobian() {
        let w = Tensor::identity(2);
        let mut dw = Tensor::zeros(&[2, 2]);
        let mut db = Tensor::zeros(&[2]);
        let dx = affine_backward(&[3.0, -1.0], &w, &[1.0, 0.0], &mut dw, &mut db);
        assert_eq!(dx, vec![1.0, 0.0]);
        assert_eq!(db.values(), &[1.0, 0.0]);
        assert_eq!(dw.values(), &[3.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn affine_shape_error_names_operands() {
        let w = Tensor::identity(2);
        let err = affine(&[1.0; 3], &w, &Tensor::zeros(&[2])).unwrap_err();
        assert!(err.to_string().contains("x has length 3"), "{err}");
        let err = affine(&[1.0; 2], &w, &Tensor::zeros(&[3])).unwrap_err();
        assert!(err.to_string().contains("b has length 3"), "{err}");
    }

    #[test]
    fn xent_uniform() {
        let (loss, _) = softmax_xent(&[0.0; 4], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn xent_stable_for_large_logits() {
        let (loss, grad) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-12 && loss.is_finite());
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn xent_symmetric_gradient() {
        let (_, grad) = softmax_xent(&[0.0, 0.0], 1).unwrap();
        assert_eq!(grad, vec![0.5, -0.5]);
    }

    #[test]
    fn xent_target_out_of_range() {
        assert!(matches!(
            softmax_xent(&[0.0, 0.0], 2),
            Err(Error::Index { index: 2, len: 2, .. })
        ));
    }

    #[test]
    fn bce_logit_matches_probability_form() {
        for &(z, t, w) in &[(0.3, 1.0, 2.0), (-1.2, 0.0, 3.0), (4.0, 1.0, 1.0)] {
            let p: f64 = sigmoid(z);
            let direct = -(w * t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            let (loss, grad) = weighted_bce_logit(z, t, w);
            assert!((loss - direct).abs() < 1e-12);
            let h = 1e-6;
            let num = (weighted_bce_logit(z + h, t, w).0 - weighted_bce_logit(z - h, t, w).0) / (2.0 * h);
            assert!((num - grad).abs() < 1e-8);
        }
    }
}
