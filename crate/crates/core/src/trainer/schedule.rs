use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{LearningRates, ParamGroup};
use crate::vb::GammaPrior;

/// Epoch budgets and hyperparameters for the three training phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub pretrain_epochs: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    /// Mixture-term scale during the joint phase.
    pub tau2_phase2: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Adam rates for the variational phases.
    pub learning_rates: LearningRates,
    /// Adam rate for `theta` and biases during pretraining.
    pub pretrain_lr: f64,
    pub pretrain_weight_decay: f64,
    /// Number of mixture components, including the zero spike.
    pub components: usize,
    pub pi0: f64,
    /// `log sigma^2` assigned to every weight at the start of the warm-up.
    pub init_log_sigma2: f64,
    pub gamma: Option<GammaPrior>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl TrainSchedule {
    /// Short schedule for a 10k-image subset.
    pub fn desk_scale() -> Self {
        Self {
            pretrain_epochs: 20,
            phase1_epochs: 20,
            phase2_epochs: 10,
            tau2_phase2: 2e-2,
            batch_size: 50,
            seed: 0,
            learning_rates: desk_learning_rates(),
            pretrain_lr: 2e-3,
            pretrain_weight_decay: 1e-5,
            components: 17,
            pi0: 0.999,
            init_log_sigma2: -10.0,
            gamma: Some(GammaPrior::default()),
        }
    }

    /// Full-length schedule with the reference learning rates.
    pub fn paper_scale() -> Self {
        Self {
            pretrain_epochs: 100,
            phase1_epochs: 200,
            phase2_epochs: 100,
            learning_rates: LearningRates::reference(),
            ..Self::desk_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(Error::Config(format!("pi0 must lie in (0, 1), got {}", self.pi0)));
        }
        if self.components < 3 || self.components.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "components must be odd and >= 3, got {}",
                self.components
            )));
        }
        if !(self.tau2_phase2 >= 0.0 && self.tau2_phase2.is_finite()) {
            return Err(Error::Config("tau2_phase2 must be finite and >= 0".into()));
        }
        if !(self.pretrain_lr > 0.0 && self.pretrain_lr.is_finite()) {
            return Err(Error::Config("pretrain_lr must be positive".into()));
        }
        if !(self.pretrain_weight_decay >= 0.0 && self.pretrain_weight_decay.is_finite()) {
            return Err(Error::Config("pretrain_weight_decay must be >= 0".into()));
        }
        if !self.init_log_sigma2.is_finite() {
            return Err(Error::Config("init_log_sigma2 must be finite".into()));
        }
        for group in ParamGroup::ALL {
            let lr = self
                .learning_rates
                .get(group)
                .map_err(|_| Error::Config(format!("learning_rates is missing `{group}`")))?;
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate for `{group}` must be positive")));
            }
        }
        if let Some(g) = &self.gamma {
            g.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Multiplier applied to the reference rates for the short schedule, which
/// runs roughly 30x fewer optimizer steps.
pub const DESK_LR_FACTOR: f64 = 10.0;

/// Reference rates scaled by [`DESK_LR_FACTOR`], except the mixing logits.
/// A faster `log pi` lets light components starve to ~1e-12 within a few
/// hundred steps, after which they can no longer claim any weight.
fn desk_learning_rates() -> LearningRates {
    let mut lr = LearningRates::reference().scaled(DESK_LR_FACTOR);
    lr.0.insert(ParamGroup::LogPi, LearningRates::reference().get(ParamGroup::LogPi).unwrap());
    lr
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_rates() {
        let lr = LearningRates::reference();
        assert_eq!(lr.get(ParamGroup::Theta).unwrap(), 5e-5);
        assert_eq!(lr.get(ParamGroup::LogSigma2).unwrap(), 1e-4);
        assert_eq!(lr.get(ParamGroup::Mu).unwrap(), 1e-4);
        assert_eq!(lr.get(ParamGroup::LogLambda).unwrap(), 1e-4);
        assert_eq!(lr.get(ParamGroup::LogPi).unwrap(), 3e-3);
    }

    #[test]
    fn paper_scale_epochs() {
        let s = TrainSchedule::paper_scale();
        assert_eq!(s.phase1_epochs, 200);
        assert!((50..=100).contains(&s.phase2_epochs));
        assert_eq!(s.tau2_phase2, 2e-2);
        assert_eq!(s.components, 17);
        assert_eq!(s.pi0, 0.999);
        assert_eq!(s.learning_rates, LearningRates::reference());
        s.validate().unwrap();
    }

    #[test]
    fn desk_scale_is_valid() {
        let s = TrainSchedule::desk_scale();
        assert_eq!((s.pretrain_epochs, s.phase1_epochs, s.phase2_epochs), (20, 20, 10));
        assert_eq!(s.learning_rates.get(ParamGroup::Theta).unwrap(), 5e-4);
        assert_eq!(s.learning_rates.get(ParamGroup::LogPi).unwrap(), 3e-3);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut s = TrainSchedule::desk_scale();
        s.components = 16;
        assert!(s.validate().is_err());
        let mut s = TrainSchedule::desk_scale();
        s.pi0 = 1.0;
        assert!(s.validate().is_err());
        let mut s = TrainSchedule::desk_scale();
        s.learning_rates.0.remove(&ParamGroup::LogPi);
        assert!(s.validate().is_err());
    }
}
