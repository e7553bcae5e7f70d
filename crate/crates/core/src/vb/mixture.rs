//! Gaussian mixture prior over weight centers.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::math::{logsumexp, LN_2PI};

/// Mixture parameters stored in log space for `pi` and `lambda`.
///
/// An optional zero-spike component has its mean pinned to exactly 0 and its
/// mixing proportion frozen; `fixed_mask` marks such components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub log_pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_lambda: Vec<f64>,
    pub zero_index: Option<usize>,
    pub fixed_mask: Vec<bool>,
}

/// Gradient record for the free mixture parameters. Frozen entries are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureGrad {
    pub log_pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_lambda: Vec<f64>,
}

impl MixtureGrad {
    pub fn zeros(k: usize) -> Self {
        Self {
            log_pi: vec![0.0; k],
            mu: vec![0.0; k],
            log_lambda: vec![0.0; k],
        }
    }

    pub(crate) fn mask_frozen(&mut self, prior: &MixturePrior) {
        for (k, &fixed) in prior.fixed_mask.iter().enumerate() {
            if fixed {
                self.log_pi[k] = 0.0;
                self.mu[k] = 0.0;
            }
        }
    }
}

impl MixturePrior {
    /// Builds a mixture without fixed components; `log_pi` is renormalized.
    pub fn new(log_pi: Vec<f64>, mu: Vec<f64>, log_lambda: Vec<f64>) -> Result<Self> {
        let k = log_pi.len();
        if k == 0 {
            return Err(Error::Empty("mixture needs at least one component".into()));
        }
        if mu.len() != k || log_lambda.len() != k {
            return Err(Error::Shape(format!(
                "mixture vectors disagree: log_pi {k}, mu {}, log_lambda {}",
                mu.len(),
                log_lambda.len()
            )));
        }
        for (name, v) in [("log_pi", &log_pi), ("mu", &mu), ("log_lambda", &log_lambda)] {
            if v.iter().any(|x| x.is_nan() || x.is_infinite() && name != "log_pi") {
                return Err(Error::Domain(format!("{name} must be finite")));
            }
        }
        if log_pi.contains(&f64::INFINITY) || log_pi.iter().all(|&x| x == f64::NEG_INFINITY) {
            return Err(Error::Domain("mixing proportions must have positive mass".into()));
        }
        let mut prior = Self {
            log_pi,
            mu,
            log_lambda,
            zero_index: None,
            fixed_mask: vec![false; k],
        };
        let lse = logsumexp(&prior.log_pi);
        prior.log_pi.iter_mut().for_each(|x| *x -= lse);
        Ok(prior)
    }

    pub fn from_proportions(pi: &[f64], mu: &[f64], lambda: &[f64]) -> Result<Self> {
        if pi.iter().any(|&p| !(p >= 0.0)) || lambda.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Domain("proportions must be >= 0 and precisions > 0".into()));
        }
        Self::new(
            pi.iter().map(|p| p.ln()).collect(),
            mu.to_vec(),
            lambda.iter().map(|l| l.ln()).collect(),
        )
    }

    /// Marks `index` as the fixed zero spike. Its mean must already be 0.
    pub fn with_zero_spike(mut self, index: usize) -> Result<Self> {
        if index >= self.k() {
            return Err(Error::Shape(format!("zero index {index} out of range")));
        }
        if self.mu[index] != 0.0 {
            return Err(Error::Domain(format!(
                "zero-spike component has mean {}",
                self.mu[index]
            )));
        }
        self.mu[index] = 0.0;
        self.zero_index = Some(index);
        self.fixed_mask[index] = true;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn pi(&self) -> Vec<f64> {
        self.log_pi.iter().map(|x| x.exp()).collect()
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|x| x.exp()).collect()
    }

    /// Renormalizes the free mixing proportions so the total mass is 1 while
    /// fixed proportions keep their value.
    pub fn normalize(&mut self) {
        let free: Vec<usize> = (0..self.k()).filter(|&k| !self.fixed_mask[k]).collect();
        if free.is_empty() {
            return;
        }
        let fixed_mass: f64 = (0..self.k())
            .filter(|&k| self.fixed_mask[k])
            .map(|k| self.log_pi[k].exp())
            .sum();
        let free_logits: Vec<f64> = free.iter().map(|&k| self.log_pi[k]).collect();
        let lse = logsumexp(&free_logits);
        let log_free_mass = (1.0 - fixed_mass).max(f64::MIN_POSITIVE).ln();
        for &k in &free {
            self.log_pi[k] = self.log_pi[k] - lse + log_free_mass;
        }
    }

    /// `|logsumexp(log_pi)|`; 0 for a normalized mixture.
    pub fn normalization_error(&self) -> f64 {
        logsumexp(&self.log_pi).abs()
    }

    pub(crate) fn table(&self) -> ComponentTable {
        ComponentTable::new(self)
    }
}

/// Per-component constants for fast repeated density evaluation.
pub(crate) struct ComponentTable {
    /// `log pi_k + 0.5 log lambda_k - 0.5 log 2pi`
    offset: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl ComponentTable {
    fn new(prior: &MixturePrior) -> Self {
        Self {
            offset: prior
                .log_pi
                .iter()
                .zip(&prior.log_lambda)
                .map(|(lp, ll)| lp + 0.5 * ll - 0.5 * LN_2PI)
                .collect(),
            lambda: prior.lambda(),
            mu: prior.mu.clone(),
        }
    }

    pub(crate) fn k(&self) -> usize {
        self.mu.len()
    }

    /// Fills `terms` with per-component log joint densities and returns their logsumexp.
    #[inline]
    pub(crate) fn log_terms(&self, x: f64, terms: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.k() {
            let d = x - self.mu[k];
            let t = self.offset[k] - 0.5 * self.lambda[k] * d * d;
            terms[k] = t;
            if t > max {
                max = t;
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let mut s = 0.0;
        for &t in terms.iter() {
            s += (t - max).exp();
        }
        max + s.ln()
    }

    /// Log density and its derivative in `x`; accumulates `scale * d/dpsi`
    /// into `grad`.
    #[inline]
    pub(crate) fn accumulate(
        &self,
        x: f64,
        scale: f64,
        terms: &mut [f64],
        grad: &mut MixtureGrad,
    ) -> (f64, f64) {
        let lse = self.log_terms(x, terms);
        let mut dx = 0.0;
        for k in 0..self.k() {
            let r = (terms[k] - lse).exp();
            let d = x - self.mu[k];
            let ld = self.lambda[k] * d;
            dx -= r * ld;
            grad.log_pi[k] += scale * r;
            grad.mu[k] += scale * r * ld;
            grad.log_lambda[k] += scale * r * (0.5 - 0.5 * ld * d);
        }
        (lse, dx)
    }
}

/// `log sum_k pi_k N(x | mu_k, 1/lambda_k)`.
pub fn log_gm_density(x: f64, prior: &MixturePrior) -> Result<f64> {
    ensure_finite("x", x)?;
    let table = prior.table();
    let mut terms = vec![0.0; table.k()];
    Ok(table.log_terms(x, &mut terms))
}

/// Log density with derivatives in `x` and in every mixture parameter.
///
/// The returned gradient treats `log_pi` entries as independent inputs; frozen
/// entries are zeroed.
pub fn log_gm_density_grad(x: f64, prior: &MixturePrior) -> Result<(f64, f64, MixtureGrad)> {
    ensure_finite("x", x)?;
    let table = prior.table();
    let mut terms = vec![0.0; table.k()];
    let mut grad = MixtureGrad::zeros(table.k());
    let (v, dx) = table.accumulate(x, 1.0, &mut terms, &mut grad);
    grad.mask_frozen(prior);
    Ok((v, dx, grad))
}

/// Posterior component probabilities of `x`.
pub fn gm_responsibilities(x: f64, prior: &MixturePrior) -> Result<Vec<f64>> {
    ensure_finite("x", x)?;
    let table = prior.table();
    let mut terms = vec![0.0; table.k()];
    let lse = table.log_terms(x, &mut terms);
    let mut r: Vec<f64> = terms.iter().map(|t| (t - lse).exp()).collect();
    let s: f64 = r.iter().sum();
    r.iter_mut().for_each(|v| *v /= s);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> MixturePrior {
        MixturePrior::from_proportions(&[1.0], &[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn standard_normal_at_zero() {
        let v = log_gm_density(0.0, &standard()).unwrap();
        assert!((v + 0.918939).abs() < 1e-6, "{v}");
    }

    #[test]
    fn symmetric_pair_at_origin() {
        let p = MixturePrior::from_proportions(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        let v = log_gm_density(0.0, &p).unwrap();
        assert!((v + 1.418939).abs() < 1e-6, "{v}");
        let r = gm_responsibilities(0.0, &p).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn far_tail() {
        let v = log_gm_density(5.0, &standard()).unwrap();
        assert!((v + 13.418939).abs() < 1e-6, "{v}");
    }

    #[test]
    fn single_component_responsibility() {
        assert_eq!(gm_responsibilities(3.3, &standard()).unwrap(), vec![1.0]);
    }

    #[test]
    fn well_separated_component_claims_its_mean() {
        let mu: Vec<f64> = (0..5).map(|k| k as f64 - 2.0).collect();
        let p = MixturePrior::from_proportions(&[0.2; 5], &mu, &[100.0; 5]).unwrap();
        for (k, &m) in mu.iter().enumerate() {
            let r = gm_responsibilities(m, &p).unwrap();
            assert!(r[k] > 0.99, "component {k}: {r:?}");
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_precision_stays_finite() {
        let p = MixturePrior::from_proportions(&[0.5, 0.5], &[0.0, 0.1], &[1e12, 1e12]).unwrap();
        let v = log_gm_density(0.05, &p).unwrap();
        assert!(v.is_finite());
        let r = gm_responsibilities(0.3, &p).unwrap();
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_spike_requires_zero_mean() {
        let p = MixturePrior::from_proportions(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(p.clone().with_zero_spike(1).is_err());
        let p = p.with_zero_spike(0).unwrap();
        assert_eq!(p.fixed_mask, vec![true, false]);
    }

    #[test]
    fn normalize_keeps_fixed_mass() {
        let mut p = MixturePrior::from_proportions(&[0.999, 0.0005, 0.0005], &[0.0, -1.0, 1.0], &[1.0; 3])
            .unwrap()
            .with_zero_spike(0)
            .unwrap();
        p.log_pi[1] += 0.7;
        p.log_pi[2] -= 0.2;
        p.normalize();
        assert!(p.normalization_error() < 1e-12);
        assert!((p.log_pi[0] - 0.999f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = MixturePrior::from_proportions(&[0.3, 0.5, 0.2], &[-0.4, 0.1, 0.9], &[4.0, 9.0, 2.0]).unwrap();
        let x = 0.35;
        let (_, dx, g) = log_gm_density_grad(x, &p).unwrap();
        let h = 1e-6;
        let f = |q: &MixturePrior, x: f64| {
            let t = q.table();
            let mut terms = vec![0.0; t.k()];
            t.log_terms(x, &mut terms)
        };
        let fd = (f(&p, x + h) - f(&p, x - h)) / (2.0 * h);
        assert!((dx - fd).abs() < 1e-7);
        for k in 0..3 {
            for (which, analytic) in [(0, g.log_pi[k]), (1, g.mu[k]), (2, g.log_lambda[k])] {
                let mut up = p.clone();
                let mut dn = p.clone();
                let (a, b) = match which {
                    0 => (&mut up.log_pi[k], &mut dn.log_pi[k]),
                    1 => (&mut up.mu[k], &mut dn.mu[k]),
                    _ => (&mut up.log_lambda[k], &mut dn.log_lambda[k]),
                };
                *a += h;
                *b -= h;
                let fd = (f(&up, x) - f(&dn, x)) / (2.0 * h);
                assert!((analytic - fd).abs() < 1e-7, "k={k} param={which}: {analytic} vs {fd}");
            }
        }
    }
}
