use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter families that get their own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Theta,
    LogSigma2,
    Bias,
    Mu,
    LogLambda,
    LogPi,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Theta,
        ParamGroup::LogSigma2,
        ParamGroup::Bias,
        ParamGroup::Mu,
        ParamGroup::LogLambda,
        ParamGroup::LogPi,
    ];
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamGroup::Theta => "theta",
            ParamGroup::LogSigma2 => "log_sigma2",
            ParamGroup::Bias => "bias",
            ParamGroup::Mu => "mu",
            ParamGroup::LogLambda => "log_lambda",
            ParamGroup::LogPi => "log_pi",
        };
        f.write_str(s)
    }
}

/// Learning rate per parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearningRates(pub BTreeMap<ParamGroup, f64>);

impl LearningRates {
    pub fn new(pairs: impl IntoIterator<Item = (ParamGroup, f64)>) -> Self {
        Self(pairs.into_iter().collect())
    }

    /// Rates used for the variational phases of the reference setup. Biases
    /// share the `theta` rate.
    pub fn reference() -> Self {
        Self::new([
            (ParamGroup::Theta, 5e-5),
            (ParamGroup::LogSigma2, 1e-4),
            (ParamGroup::Bias, 5e-5),
            (ParamGroup::Mu, 1e-4),
            (ParamGroup::LogLambda, 1e-4),
            (ParamGroup::LogPi, 3e-3),
        ])
    }

    pub fn get(&self, group: ParamGroup) -> Result<f64> {
        self.0.get(&group).copied().ok_or(Error::MissingLearningRate(group))
    }

    /// Every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|(&g, &lr)| (g, lr * factor)).collect())
    }
}

/// One parameter buffer and its gradient.
pub struct ParamTensor<'a> {
    pub group: ParamGroup,
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update over all tensors.
///
/// Moment buffers are allocated on the first call; later calls must pass
/// tensors of the same number and sizes, in the same order.
pub fn adam_step(tensors: &mut [ParamTensor<'_>], state: &mut AdamState, lrs: &LearningRates) -> Result<()> {
    let rates = tensors
        .iter()
        .map(|t| lrs.get(t.group))
        .collect::<Result<Vec<_>>>()?;
    for t in tensors.iter() {
        if t.values.len() != t.grads.len() {
            return Err(Error::Shape(format!(
                "{} has {} values but {} gradients",
                t.group,
                t.values.len(),
                t.grads.len()
            )));
        }
    }
    if state.step_count == 0 && state.first_moment.is_empty() {
        state.first_moment = tensors.iter().map(|t| vec![0.0; t.values.len()]).collect();
        state.second_moment = state.first_moment.clone();
    }
    let congruent = state.first_moment.len() == tensors.len()
        && tensors
            .iter()
            .zip(&state.first_moment)
            .all(|(t, m)| t.values.len() == m.len());
    if !congruent {
        return Err(Error::Shape("optimizer state does not match the parameter layout".into()));
    }

    state.step_count += 1;
    let t = state.step_count as f64;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    for ((tensor, lr), (m, v)) in tensors
        .iter_mut()
        .zip(rates)
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
    {
        for i in 0..m.len() {
            let g = tensor.grads[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            tensor.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
