use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainSchedule;
use crate::error::{Error, Result};
use crate::io::DatasetSplit;
use crate::math::argmax;
use crate::net::{
    adam_step, draw_noise, l2_loss_and_grads, loss_and_grads, AdamState, Batch, LearningRates, Network,
    NetworkGrads, ParamGroup, ParamTensor,
};
use crate::vb::{MixturePrior, ObjectiveConfig};

const PRETRAIN_STREAM: u64 = 0x5052_4554;
const PHASE1_STREAM: u64 = 0x5644_0001;
const PHASE2_STREAM: u64 = 0x5357_0002;

/// Anything that maps a batch of inputs to class logits.
pub trait Classifier {
    fn logits(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

impl Classifier for Network {
    fn logits(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward_deterministic(inputs)
    }
}

/// Mean loss per training example for one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Callback run after every epoch with the current model state.
pub type EpochHook<'a> = dyn FnMut(&EpochStats, &Network, Option<&MixturePrior>) + 'a;

fn no_hook(_: &EpochStats, _: &Network, _: Option<&MixturePrior>) {}

enum Objective<'a> {
    L2 { weight_decay: f64 },
    Variational(&'a ObjectiveConfig),
}

fn phase_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.rotate_left(17))
}

fn param_tensors<'a>(
    net: &'a mut Network,
    prior: Option<&'a mut MixturePrior>,
    grads: &'a NetworkGrads,
    groups: &[ParamGroup],
) -> Vec<ParamTensor<'a>> {
    let mut out = Vec::new();
    for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
        let post = &mut layer.posterior;
        if groups.contains(&ParamGroup::Theta) {
            out.push(ParamTensor { group: ParamGroup::Theta, values: &mut post.theta, grads: &g.theta });
        }
        if groups.contains(&ParamGroup::LogSigma2) {
            out.push(ParamTensor {
                group: ParamGroup::LogSigma2,
                values: &mut post.log_sigma2,
                grads: &g.log_sigma2,
            });
        }
        if groups.contains(&ParamGroup::Bias) {
            out.push(ParamTensor { group: ParamGroup::Bias, values: &mut layer.bias, grads: &g.bias });
        }
    }
    if let (Some(prior), Some(mg)) = (prior, grads.mixture.as_ref()) {
        if groups.contains(&ParamGroup::Mu) {
            out.push(ParamTensor { group: ParamGroup::Mu, values: &mut prior.mu, grads: &mg.mu });
        }
        if groups.contains(&ParamGroup::LogLambda) {
            out.push(ParamTensor {
                group: ParamGroup::LogLambda,
                values: &mut prior.log_lambda,
                grads: &mg.log_lambda,
            });
        }
        if groups.contains(&ParamGroup::LogPi) {
            out.push(ParamTensor { group: ParamGroup::LogPi, values: &mut prior.log_pi, grads: &mg.log_pi });
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    name: &str,
    net: &mut Network,
    mut prior: Option<&mut MixturePrior>,
    data: &DatasetSplit,
    objective: Objective<'_>,
    groups: &[ParamGroup],
    lrs: &LearningRates,
    epochs: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    hook: &mut EpochHook<'_>,
) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::Empty("training data".into()));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = AdamState::default();
    let mut stats = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let inputs = data.images.select(Axis(0), chunk);
            let labels: Vec<u8> = chunk.iter().map(|&i| data.labels[i]).collect();
            let batch = Batch { inputs: inputs.view(), labels: &labels };
            let (loss, grads) = match &objective {
                Objective::L2 { weight_decay } => l2_loss_and_grads(net, batch, *weight_decay)?,
                Objective::Variational(cfg) => {
                    let noise = draw_noise(net, chunk.len(), rng);
                    loss_and_grads(net, batch, prior.as_deref(), cfg, &noise)?
                }
            };
            epoch_loss += match objective {
                Objective::L2 { .. } => loss.total * chunk.len() as f64,
                Objective::Variational(_) => loss.total * chunk.len() as f64 / n as f64,
            };
            let mut tensors = param_tensors(net, prior.as_deref_mut(), &grads, groups);
            adam_step(&mut tensors, &mut state, lrs)?;
            if let Some(p) = prior.as_deref_mut() {
                p.normalize();
            }
        }
        let mean_loss = epoch_loss / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Domain(format!("{name}: loss diverged in epoch {epoch}")));
        }
        log::info!("{name} epoch {}/{epochs}: loss {mean_loss:.5}", epoch + 1);
        let s = EpochStats { epoch, mean_loss };
        hook(&s, net, prior.as_deref());
        stats.push(s);
    }
    Ok(stats)
}

/// Trains means and biases under cross-entropy plus `weight_decay |theta|^2`.
///
/// Returns the trained network and its flattened weight vector.
pub fn pretrain_l2(
    mut net: Network,
    data: &DatasetSplit,
    weight_decay: f64,
    schedule: &TrainSchedule,
) -> Result<(Network, Vec<f64>)> {
    let lrs = LearningRates::new([
        (ParamGroup::Theta, schedule.pretrain_lr),
        (ParamGroup::Bias, schedule.pretrain_lr),
    ]);
    let mut rng = phase_rng(schedule.seed, PRETRAIN_STREAM);
    run_epochs(
        "pretrain",
        &mut net,
        None,
        data,
        Objective::L2 { weight_decay },
        &[ParamGroup::Theta, ParamGroup::Bias],
        &lrs,
        schedule.pretrain_epochs,
        schedule.batch_size,
        &mut rng,
        &mut no_hook,
    )?;
    let w = net.flat_theta();
    Ok((net, w))
}

/// Unnormalized initial mixing logits: `log pi0` at the center and
/// `log((1 - pi0) / K)` elsewhere.
pub fn initial_log_pi(k: usize, pi0: f64) -> Vec<f64> {
    let center = k / 2;
    (0..k)
        .map(|i| if i == center { pi0.ln() } else { ((1.0 - pi0) / k as f64).ln() })
        .collect()
}

/// Mixture with `K` evenly spaced means `j * delta`, `j = -(K-1)/2 ..= (K-1)/2`,
/// where `delta = 2 std(w) / K`, and a frozen zero spike in the middle.
pub fn init_mixture_from_weights(w: &[f64], k: usize, pi0: f64) -> Result<MixturePrior> {
    if w.len() < 2 {
        return Err(Error::Degenerate("need at least two weights".into()));
    }
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Config(format!("component count must be odd, got {k}")));
    }
    if !(pi0 > 0.0 && pi0 < 1.0) {
        return Err(Error::Config(format!("pi0 must lie in (0, 1), got {pi0}")));
    }
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    // a constant vector can leave rounding residue in the variance
    if !(std > 1e-12 * scale && std.is_finite()) {
        return Err(Error::Degenerate(format!("weight distribution has std {std}")));
    }
    let delta = 2.0 * std / k as f64;
    let half = (k as i64 - 1) / 2;
    let mu: Vec<f64> = (-half..=half).map(|j| j as f64 * delta).collect();
    let log_lambda = vec![-2.0 * (0.9 * delta).ln(); k];

    let center = (k - 1) / 2;
    let mut prior = MixturePrior::new(initial_log_pi(k, pi0), mu, log_lambda)?;
    // `new` normalized every logit; pin the spike back to pi0 and spread the
    // remaining mass over the other components.
    prior.log_pi[center] = pi0.ln();
    let mut prior = prior.with_zero_spike(center)?;
    prior.normalize();
    Ok(prior)
}

/// Warm-up phase: variational dropout alone (`tau1 = 1`, `tau2 = 0`).
///
/// Every `log sigma^2` is reset to `schedule.init_log_sigma2` first.
pub fn train_phase1_vd(net: Network, data: &DatasetSplit, schedule: &TrainSchedule) -> Result<Network> {
    train_phase1_vd_with_hook(net, data, schedule, &mut no_hook)
}

/// [`train_phase1_vd`] with a per-epoch callback.
pub fn train_phase1_vd_with_hook(
    mut net: Network,
    data: &DatasetSplit,
    schedule: &TrainSchedule,
    hook: &mut EpochHook<'_>,
) -> Result<Network> {
    schedule.validate()?;
    for layer in &mut net.layers {
        layer.posterior.log_sigma2.fill(schedule.init_log_sigma2);
    }
    let cfg = ObjectiveConfig {
        tau1: 1.0,
        tau2: 0.0,
        gamma: None,
        dataset_size: data.len(),
    };
    let mut rng = phase_rng(schedule.seed, PHASE1_STREAM);
    run_epochs(
        "vd",
        &mut net,
        None,
        data,
        Objective::Variational(&cfg),
        &[ParamGroup::Theta, ParamGroup::LogSigma2, ParamGroup::Bias],
        &schedule.learning_rates,
        schedule.phase1_epochs,
        schedule.batch_size,
        &mut rng,
        hook,
    )?;
    Ok(net)
}

/// Joint phase: posterior and free mixture parameters trained together with
/// `tau1 = 1` and `tau2 = schedule.tau2_phase2`.
pub fn train_phase2_sws(
    net: Network,
    data: &DatasetSplit,
    prior: MixturePrior,
    schedule: &TrainSchedule,
) -> Result<(Network, MixturePrior)> {
    train_phase2_sws_with_hook(net, data, prior, schedule, &mut no_hook)
}

/// [`train_phase2_sws`] with a per-epoch callback.
pub fn train_phase2_sws_with_hook(
    mut net: Network,
    data: &DatasetSplit,
    mut prior: MixturePrior,
    schedule: &TrainSchedule,
    hook: &mut EpochHook<'_>,
) -> Result<(Network, MixturePrior)> {
    schedule.validate()?;
    let cfg = ObjectiveConfig {
        tau1: 1.0,
        tau2: schedule.tau2_phase2,
        gamma: schedule.gamma,
        dataset_size: data.len(),
    };
    let mut rng = phase_rng(schedule.seed, PHASE2_STREAM);
    run_epochs(
        "vd+sws",
        &mut net,
        Some(&mut prior),
        data,
        Objective::Variational(&cfg),
        &ParamGroup::ALL,
        &schedule.learning_rates,
        schedule.phase2_epochs,
        schedule.batch_size,
        &mut rng,
        hook,
    )?;
    Ok((net, prior))
}

/// Fraction of rows whose argmax logit (lowest index on ties) matches the label.
pub fn evaluate_accuracy<C: Classifier + ?Sized>(model: &C, data: &DatasetSplit) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data".into()));
    }
    let mut correct = 0usize;
    let n = data.len();
    for start in (0..n).step_by(1000) {
        let end = (start + 1000).min(n);
        let logits = model.logits(data.images.slice(ndarray::s![start..end, ..]))?;
        for (row, &label) in logits.rows().into_iter().zip(&data.labels[start..end]) {
            if argmax(row.as_slice().unwrap_or(&row.to_vec())) == label as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / n as f64)
}
