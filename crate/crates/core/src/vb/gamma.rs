use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gamma(alpha, beta) hyper-prior on the mixture precisions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            alpha: 1e5,
            beta: 10.0,
        }
    }
}

impl GammaPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!(
                "gamma hyper-prior needs alpha > 0 and beta > 0, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// `sum_k [alpha log beta - lnGamma(alpha) + (alpha - 1) log lambda_k - beta lambda_k]`
pub fn gamma_log_prior(log_lambda: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    GammaPrior { alpha, beta }.validate()?;
    let norm = alpha * beta.ln() - libm::lgamma(alpha);
    Ok(log_lambda
        .iter()
        .map(|&ll| norm + (alpha - 1.0) * ll - beta * ll.exp())
        .sum())
}

/// Derivative with respect to each `log lambda_k`: `alpha - 1 - beta lambda_k`.
pub fn gamma_log_prior_grad(log_lambda: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>> {
    GammaPrior { alpha, beta }.validate()?;
    Ok(log_lambda
        .iter()
        .map(|&ll| alpha - 1.0 - beta * ll.exp())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_parameters() {
        assert!((gamma_log_prior(&[0.0], 1.0, 1.0).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_value() {
        let v = gamma_log_prior(&[0.0], 2.0, 3.0).unwrap();
        assert!((v + 0.802775).abs() < 1e-6, "{v}");
    }

    #[test]
    fn gradient_vanishes_at_mode() {
        let (alpha, beta) = (5.0, 2.0);
        let mode = (alpha - 1.0) / beta;
        let g = gamma_log_prior_grad(&[f64::ln(mode)], alpha, beta).unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ll = [0.3, -1.0, 2.0];
        let g = gamma_log_prior_grad(&ll, 3.5, 0.7).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut up = ll;
            let mut dn = ll;
            up[i] += h;
            dn[i] -= h;
            let fd = (gamma_log_prior(&up, 3.5, 0.7).unwrap() - gamma_log_prior(&dn, 3.5, 0.7).unwrap())
                / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(gamma_log_prior(&[0.0], 0.0, 1.0).is_err());
        assert!(gamma_log_prior(&[0.0], 1.0, -2.0).is_err());
        assert!(gamma_log_prior_grad(&[0.0], f64::NAN, 1.0).is_err());
    }
}
