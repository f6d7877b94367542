use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `pred`.
///
/// Predictions are clamped to `[1e-7, 1 − 1e-7]`; the gradient is that of
/// the unclamped formula evaluated at the clamped value.
pub fn bce_loss<T: Scalar>(pred: &DenseTensor<T>, target: &DenseTensor<T>) -> Result<(T, DenseTensor<T>)> {
    target.expect_shape("bce target", pred.shape())?;
    if pred.is_empty() {
        return Err(Error::InvalidInput("bce over an empty tensor".into()));
    }
    let lo = T::of(BCE_CLAMP);
    let hi = T::one() - lo;
    let inv_n = T::one() / T::of(pred.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.data().iter().zip(target.data()) {
        if y != T::zero() && y != T::one() {
            return Err(Error::InvalidInput(format!("bce target {y} is not 0 or 1")));
        }
        if p.is_nan() {
            return Err(Error::InvalidInput("bce prediction is NaN".into()));
        }
        let p = p.max(lo).min(hi);
        total += if y == T::one() { -p.ln() } else { -(T::one() - p).ln() };
        grad.push((p - y) / (p * (T::one() - p)) * inv_n);
    }
    Ok((total * inv_n, DenseTensor::new(pred.shape(), grad)?))
}

/// Fingerprint of which predictions hit the clamp.
pub(crate) fn clamp_mask<T: Scalar>(pred: &DenseTensor<T>) -> Vec<bool> {
    let lo = T::of(BCE_CLAMP);
    let hi = T::one() - lo;
    pred.data().iter().map(|&p| p < lo || p > hi).collect()
}
