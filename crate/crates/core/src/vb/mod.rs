//! Closed-form variational terms.
//!
//! Each weight `w_i` has a Gaussian posterior `N(theta_i, sigma_i^2)` around a
//! delta-distributed center `m_i = theta_i`. The prior factorizes into a
//! log-uniform prior on `w_i` and a Gaussian mixture on `m_i`, so the
//! regularizer splits into a per-weight log-uniform KL term and a mixture
//! log-density term, plus a gamma hyper-prior on the mixture precisions.

mod gamma;
mod kl;
mod mixture;
mod objective;

pub use gamma::{gamma_log_prior, gamma_log_prior_grad, GammaPrior};
pub use kl::{log_alpha, neg_kl_log_uniform, neg_kl_log_uniform_grad, K1, K2, K3, THETA_EPS};
pub use mixture::{gm_responsibilities, log_gm_density, log_gm_density_grad, MixtureGrad, MixturePrior};
pub use objective::{
    regularization_term, regularization_term_layers, ObjectiveConfig, RegularizationGrads,
};

use crate::error::{Error, Result};

/// Mean and log-variance vectors of a factorized Gaussian weight posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub theta: Vec<f64>,
    pub log_sigma2: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(theta: Vec<f64>, log_sigma2: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Empty("posterior must hold at least one weight".into()));
        }
        if theta.len() != log_sigma2.len() {
            return Err(Error::Shape(format!(
                "theta has {} entries but log_sigma2 has {}",
                theta.len(),
                log_sigma2.len()
            )));
        }
        if theta.iter().chain(&log_sigma2).any(|x| !x.is_finite()) {
            return Err(Error::Domain("posterior parameters must be finite".into()));
        }
        Ok(Self { theta, log_sigma2 })
    }

    /// Posterior centered on `theta` with a shared initial log-variance.
    pub fn from_means(theta: Vec<f64>, log_sigma2: f64) -> Result<Self> {
        let n = theta.len();
        Self::new(theta, vec![log_sigma2; n])
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `sigma^2 / (theta^2 + sigma^2)` for weight `i`.
    pub fn binary_dropout_rate(&self, i: usize) -> f64 {
        let s2 = self.log_sigma2[i].exp();
        let t2 = self.theta[i] * self.theta[i];
        if s2 + t2 == 0.0 {
            return 1.0;
        }
        s2 / (t2 + s2)
    }
}

/// Reparametrized draw `theta + sigma * noise`.
pub fn sample_weights(post: &GaussianPosterior, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != post.len() {
        return Err(Error::Shape(format!(
            "noise has {} entries, posterior has {}",
            noise.len(),
            post.len()
        )));
    }
    Ok(post
        .theta
        .iter()
        .zip(&post.log_sigma2)
        .zip(noise)
        .map(|((&t, &ls2), &e)| t + (0.5 * ls2).exp() * e)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn posterior_rejects_mismatched_lengths() {
        assert!(matches!(
            GaussianPosterior::new(vec![1.0, 2.0], vec![0.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            GaussianPosterior::new(vec![], vec![]),
            Err(Error::Empty(_))
        ));
        assert!(GaussianPosterior::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn zero_noise_returns_theta() {
        let post = GaussianPosterior::new(vec![0.3, -1.2, 4.0], vec![0.0, 1.0, -3.0]).unwrap();
        assert_eq!(sample_weights(&post, &[0.0; 3]).unwrap(), post.theta);
    }

    #[test]
    fn vanishing_variance_pins_samples() {
        let post = GaussianPosterior::from_means(vec![0.5, -0.25], 1e-20f64.ln()).unwrap();
        let w = sample_weights(&post, &[3.0, -4.0]).unwrap();
        for (a, b) in w.iter().zip(&post.theta) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn monte_carlo_mean_matches_theta() {
        let post = GaussianPosterior::new(vec![0.7, -2.0], vec![0.5f64.ln(), 2f64.ln()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..draws {
            let noise: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let w = sample_weights(&post, &noise).unwrap();
            sums[0] += w[0];
            sums[1] += w[1];
        }
        for i in 0..2 {
            let mean = sums[i] / draws as f64;
            let se = (post.log_sigma2[i].exp() / draws as f64).sqrt();
            assert!((mean - post.theta[i]).abs() < 4.0 * se, "weight {i}: {mean}");
        }
    }

    #[test]
    fn wrong_noise_length_is_rejected() {
        let post = GaussianPosterior::from_means(vec![0.0; 3], 0.0).unwrap();
        assert!(sample_weights(&post, &[0.0; 2]).is_err());
    }
}
