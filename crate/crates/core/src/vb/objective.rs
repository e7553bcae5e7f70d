//! Assembled regularization penalty and its gradients.

use serde::{Deserialize, Serialize};

use super::kl::neg_kl_with_grad_unchecked;
use super::{gamma_log_prior, gamma_log_prior_grad, GammaPrior, GaussianPosterior, MixtureGrad, MixturePrior};
use crate::error::{Error, Result};

/// Scales of the two prior terms plus the gamma hyper-prior and dataset size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub tau1: f64,
    pub tau2: f64,
    /// `None` drops the hyper-prior term entirely.
    pub gamma: Option<GammaPrior>,
    pub dataset_size: usize,
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if let Some(g) = &self.gamma {
            g.validate()?;
        }
        if self.dataset_size == 0 {
            return Err(Error::Config("dataset_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularizationGrads {
    /// One entry per posterior passed in.
    pub theta: Vec<Vec<f64>>,
    pub log_sigma2: Vec<Vec<f64>>,
    /// Present whenever a mixture prior was supplied.
    pub mixture: Option<MixtureGrad>,
}

/// Penalty added to the negative log-likelihood:
///
/// `sum_i [-tau1 negKL(theta_i, log sigma_i^2) - tau2 log GM(theta_i)] - log Gamma(lambda)`
///
/// The mixture and gamma terms only appear when `prior` is given.
pub fn regularization_term(
    post: &GaussianPosterior,
    prior: Option<&MixturePrior>,
    cfg: &ObjectiveConfig,
) -> Result<(f64, RegularizationGrads)> {
    regularization_term_layers(&[post], prior, cfg)
}

/// Same as [`regularization_term`] over several posteriors sharing one prior;
/// the hyper-prior is counted once.
pub fn regularization_term_layers(
    posts: &[&GaussianPosterior],
    prior: Option<&MixturePrior>,
    cfg: &ObjectiveConfig,
) -> Result<(f64, RegularizationGrads)> {
    cfg.validate()?;
    let table = prior.map(|p| p.table());
    let k = prior.map_or(0, |p| p.k());
    let mut terms = vec![0.0; k];
    let mut mix = prior.map(|p| MixtureGrad::zeros(p.k()));
    let use_mixture = cfg.tau2 != 0.0 && table.is_some();

    let mut value = 0.0;
    let mut g_theta = Vec::with_capacity(posts.len());
    let mut g_ls2 = Vec::with_capacity(posts.len());
    for post in posts {
        let n = post.len();
        let mut gt = vec![0.0; n];
        let mut gl = vec![0.0; n];
        for i in 0..n {
            let (t, ls2) = (post.theta[i], post.log_sigma2[i]);
            if !(t.is_finite() && ls2.is_finite()) {
                return Err(Error::Domain(format!("non-finite posterior entry ({t}, {ls2})")));
            }
            if cfg.tau1 != 0.0 {
                let (nkl, dt, dl) = neg_kl_with_grad_unchecked(t, ls2);
                value -= cfg.tau1 * nkl;
                gt[i] -= cfg.tau1 * dt;
                gl[i] -= cfg.tau1 * dl;
            }
            if use_mixture {
                let table = table.as_ref().unwrap();
                let grad = mix.as_mut().unwrap();
                let (lgm, dx) = table.accumulate(t, -cfg.tau2, &mut terms, grad);
                value -= cfg.tau2 * lgm;
                gt[i] -= cfg.tau2 * dx;
            }
        }
        g_theta.push(gt);
        g_ls2.push(gl);
    }

    if let (Some(p), Some(grad)) = (prior, mix.as_mut()) {
        if let Some(g) = cfg.gamma {
            value -= gamma_log_prior(&p.log_lambda, g.alpha, g.beta)?;
            let d = gamma_log_prior_grad(&p.log_lambda, g.alpha, g.beta)?;
            for (acc, d) in grad.log_lambda.iter_mut().zip(d) {
                *acc -= d;
            }
        }
        grad.mask_frozen(p);
    }

    Ok((
        value,
        RegularizationGrads {
            theta: g_theta,
            log_sigma2: g_ls2,
            mixture: mix,
        },
    ))
}
