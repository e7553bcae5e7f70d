//! Log-uniform prior term.
//!
//! Uses the sigmoid/softplus fit of `-KL(N(theta, sigma^2) || 1/|w|)` as a
//! function of `log alpha = log(sigma^2 / theta^2)`. The additive constant is
//! dropped.

use crate::error::{ensure_finite, Result};
use crate::math::{sigmoid, softplus};

pub const K1: f64 = 0.63576;
pub const K2: f64 = 1.87320;
pub const K3: f64 = 1.48695;

/// Added to `theta^2` before taking its log.
pub const THETA_EPS: f64 = 1e-16;

#[inline]
pub fn log_alpha(theta: f64, log_sigma2: f64) -> f64 {
    log_sigma2 - (theta * theta + THETA_EPS).ln()
}

/// Negative KL divergence to the log-uniform prior, up to a constant.
///
/// Increasing in `log alpha`; the training penalty is its negation.
pub fn neg_kl_log_uniform(theta: f64, log_sigma2: f64) -> Result<f64> {
    ensure_finite("theta", theta)?;
    ensure_finite("log_sigma2", log_sigma2)?;
    Ok(neg_kl_unchecked(log_alpha(theta, log_sigma2)))
}

/// Value together with derivatives with respect to `theta` and `log_sigma2`.
pub fn neg_kl_log_uniform_grad(theta: f64, log_sigma2: f64) -> Result<(f64, f64, f64)> {
    ensure_finite("theta", theta)?;
    ensure_finite("log_sigma2", log_sigma2)?;
    Ok(neg_kl_with_grad_unchecked(theta, log_sigma2))
}

#[inline]
pub(crate) fn neg_kl_unchecked(la: f64) -> f64 {
    // 0.5 * log(1 + theta^2 / sigma^2) == 0.5 * softplus(-log alpha)
    K1 * sigmoid(K2 + K3 * la) - 0.5 * softplus(-la)
}

#[inline]
pub(crate) fn neg_kl_with_grad_unchecked(theta: f64, log_sigma2: f64) -> (f64, f64, f64) {
    let t2 = theta * theta + THETA_EPS;
    let la = log_sigma2 - t2.ln();
    let s = sigmoid(K2 + K3 * la);
    let value = K1 * s - 0.5 * softplus(-la);
    let d_la = K1 * K3 * s * (1.0 - s) + 0.5 * sigmoid(-la);
    let d_theta = d_la * (-2.0 * theta / t2);
    (value, d_theta, d_la)
}
