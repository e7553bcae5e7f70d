//! End-to-end runs: training phases followed by compression, with accuracy
//! measured on the network decoded from the container bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compress::{
    compress_network, compression_report, prune_structure, quantize_gm, quantize_vd_baseline, CompressedModel,
    CompressionReport, QuantizedNetwork,
};
use crate::error::{Error, Result};
use crate::io::{CompressionMethod, CompressionOptions, DatasetSplit};
use crate::net::Network;
use crate::trainer::{
    evaluate_accuracy, init_mixture_from_weights, pretrain_l2, train_phase1_vd, train_phase2_sws, TrainSchedule,
};
use crate::vb::MixturePrior;

const INIT_STREAM: u64 = 0x494e_4954;

/// Fresh He-initialized network for `dims`, seeded from the schedule.
pub fn initial_network(dims: &[usize], schedule: &TrainSchedule) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ INIT_STREAM);
    Network::random(dims, schedule.init_log_sigma2, &mut rng)
}

#[derive(Clone, Debug)]
pub struct PretrainedModel {
    pub net: Network,
    /// Flattened weights at the end of pretraining; seeds the mixture.
    pub weights: Vec<f64>,
}

pub fn pretrain(dims: &[usize], train: &DatasetSplit, schedule: &TrainSchedule) -> Result<PretrainedModel> {
    let net = initial_network(dims, schedule)?;
    let (net, weights) = pretrain_l2(net, train, schedule.pretrain_weight_decay, schedule)?;
    Ok(PretrainedModel { net, weights })
}

/// Warm-up then joint phase, starting from a pretrained network.
pub fn train_vdsws(
    pre: &PretrainedModel,
    train: &DatasetSplit,
    schedule: &TrainSchedule,
) -> Result<(Network, MixturePrior)> {
    let vd = train_phase1_vd(pre.net.clone(), train, schedule)?;
    let prior = init_mixture_from_weights(&pre.weights, schedule.components, schedule.pi0)?;
    train_phase2_sws(vd, train, prior, schedule)
}

/// Variational dropout alone for the combined epoch budget of both phases.
pub fn train_vd_only(pre: &PretrainedModel, train: &DatasetSplit, schedule: &TrainSchedule) -> Result<Network> {
    let mut s = schedule.clone();
    s.phase1_epochs = schedule.phase1_epochs + schedule.phase2_epochs;
    train_phase1_vd(pre.net.clone(), train, &s)
}

/// Everything produced by one compression run.
#[derive(Clone, Debug)]
pub struct CompressionOutcome {
    /// After quantization, before pruning.
    pub quantized: QuantizedNetwork,
    pub pruned: QuantizedNetwork,
    pub container: CompressedModel,
    pub bytes: Vec<u8>,
    pub report: CompressionReport,
}

/// Quantizes `net` with the chosen method, prunes, packs, and (when test
/// data is given) scores the network decoded from the packed bytes.
pub fn compress_model(
    net: &Network,
    prior: Option<&MixturePrior>,
    opts: &CompressionOptions,
    test: Option<&DatasetSplit>,
) -> Result<CompressionOutcome> {
    let quantized = match opts.method {
        CompressionMethod::Sws => {
            let prior = prior.ok_or_else(|| Error::Config("sws compression needs a trained mixture prior".into()))?;
            quantize_gm(net, prior)?
        }
        CompressionMethod::VdBaseline => quantize_vd_baseline(net, opts.threshold, opts.baseline_components)?,
    };
    finish(&net.dims(), quantized, opts.offset_bits, test)
}

fn finish(
    original_dims: &[usize],
    quantized: QuantizedNetwork,
    offset_bits: u8,
    test: Option<&DatasetSplit>,
) -> Result<CompressionOutcome> {
    let pruned = prune_structure(&quantized)?;
    let container = compress_network(&pruned, offset_bits)?;
    let bytes = container.to_bytes()?;
    let accuracy = match test {
        Some(t) => Some(evaluate_accuracy(&CompressedModel::from_bytes(&bytes)?.decode()?, t)?),
        None => None,
    };
    let report = compression_report(original_dims, &container, accuracy)?;
    Ok(CompressionOutcome {
        quantized,
        pruned,
        container,
        bytes,
        report,
    })
}

/// One line of an accuracy-vs-compression sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau2: f64,
    pub accuracy: f64,
    pub sparsity_pct: f64,
    pub cr: f64,
}

pub const SWEEP_HEADER: &str = "tau2,accuracy,sparsity_pct,cr";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!("{},{:.6},{:.6},{:.6}", self.tau2, self.accuracy, self.sparsity_pct, self.cr)
    }
}

/// Repeats the joint phase and compression for each `tau2`, sharing one
/// pretraining and warm-up run.
pub fn sweep_tau2(
    pre: &PretrainedModel,
    train: &DatasetSplit,
    test: &DatasetSplit,
    schedule: &TrainSchedule,
    opts: &CompressionOptions,
    tau2_values: &[f64],
) -> Result<Vec<SweepRow>> {
    let vd = train_phase1_vd(pre.net.clone(), train, schedule)?;
    let opts = CompressionOptions {
        method: CompressionMethod::Sws,
        ..opts.clone()
    };
    tau2_values
        .iter()
        .map(|&tau2| {
            let mut s = schedule.clone();
            s.tau2_phase2 = tau2;
            let prior = init_mixture_from_weights(&pre.weights, s.components, s.pi0)?;
            let (net, prior) = train_phase2_sws(vd.clone(), train, prior, &s)?;
            let out = compress_model(&net, Some(&prior), &opts, Some(test))?;
            Ok(SweepRow {
                tau2,
                accuracy: out.report.accuracy_after.unwrap_or(f64::NAN),
                sparsity_pct: 100.0 * out.report.nonzero_fraction,
                cr: out.report.compression_ratio,
            })
        })
        .collect()
}
