//! Runs the training phases on a local MNIST copy and prints per-epoch test
//! accuracy and sparsity, then the figures for the compressed container.
//!
//! ```text
//! cargo run --release --example desk_probe -- data/mnist [schedule.toml]
//! ```
//!
//! Pretrained networks are cached under the system temp directory, keyed by
//! the pretraining settings.

use std::time::Instant;

use bvnc::io::{load_mnist_idx, load_model, save_model, CompressionOptions, DatasetSplit};
use bvnc::math::argmax;
use bvnc::net::Network;
use bvnc::pipeline::{compress_model, pretrain, PretrainedModel};
use bvnc::trainer::{
    evaluate_accuracy, init_mixture_from_weights, train_phase1_vd_with_hook, train_phase2_sws_with_hook,
    TrainSchedule,
};
use bvnc::vb::{gm_responsibilities, MixturePrior};

fn nonzero_fraction(net: &Network, prior: &MixturePrior) -> f64 {
    let zero = prior.zero_index.unwrap();
    let theta = net.flat_theta();
    let n = theta
        .iter()
        .filter(|&&x| argmax(&gm_responsibilities(x, prior).unwrap()) != zero)
        .count();
    n as f64 / theta.len() as f64
}

fn dropped_fraction(net: &Network) -> f64 {
    let dropped: usize = net
        .posteriors()
        .iter()
        .map(|p| (0..p.len()).filter(|&i| p.binary_dropout_rate(i) >= 0.95).count())
        .sum();
    dropped as f64 / net.num_weights() as f64
}

fn main() -> bvnc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let dir = std::path::PathBuf::from(args.get(1).map_or("data/mnist", |s| s.as_str()));
    let schedule: TrainSchedule = match args.get(2) {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?).expect("schedule file"),
        None => TrainSchedule::desk_scale(),
    };
    println!("{}", toml::to_string(&schedule).unwrap());
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?.take(10_000);
    let test: DatasetSplit =
        load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;

    let key = format!(
        "bvnc-pre-{}-{}-{}-{}-{}.bvnm",
        schedule.pretrain_epochs, schedule.pretrain_lr, schedule.pretrain_weight_decay, schedule.batch_size, schedule.seed
    );
    let cache = std::env::temp_dir().join(key);
    let t = Instant::now();
    let pre = match load_model(&cache) {
        Ok((net, _)) => {
            let weights = net.flat_theta();
            PretrainedModel { net, weights }
        }
        Err(_) => {
            let pre = pretrain(&[784, 300, 100, 10], &train, &schedule)?;
            save_model(&cache, &pre.net, None)?;
            pre
        }
    };
    println!("pretrain acc {:.4} ({:.1?})", evaluate_accuracy(&pre.net, &test)?, t.elapsed());

    let t = Instant::now();
    let net = train_phase1_vd_with_hook(pre.net.clone(), &train, &schedule, &mut |s, net, _| {
        println!(
            "  vd {:>3} loss {:.4} acc {:.4} dropped {:.4}",
            s.epoch + 1,
            s.mean_loss,
            evaluate_accuracy(net, &test).unwrap(),
            dropped_fraction(net)
        );
    })?;
    println!("vd done ({:.1?})", t.elapsed());

    let prior = init_mixture_from_weights(&pre.weights, schedule.components, schedule.pi0)?;
    let t = Instant::now();
    let (net, prior) = train_phase2_sws_with_hook(net, &train, prior, &schedule, &mut |s, net, prior| {
        println!(
            "  sws {:>3} loss {:.4} acc {:.4} nonzero {:.4}",
            s.epoch + 1,
            s.mean_loss,
            evaluate_accuracy(net, &test).unwrap(),
            nonzero_fraction(net, prior.unwrap())
        );
    })?;
    println!("sws done ({:.1?})", t.elapsed());
    println!("mu {:?}\npi {:?}\nlambda {:?}", prior.mu, prior.pi(), prior.lambda());

    let out = compress_model(&net, Some(&prior), &CompressionOptions::default(), Some(&test))?;
    let r = &out.report;
    println!(
        "compressed acc {:.4} nonzero {:.4} cr {:.1} dims {:?}",
        r.accuracy_after.unwrap(),
        r.nonzero_fraction,
        r.compression_ratio,
        out.pruned.dims()
    );
    Ok(())
}
