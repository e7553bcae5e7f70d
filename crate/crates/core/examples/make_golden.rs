//! Regenerates the golden fixtures under `crates/core/tests/fixtures`:
//! a synthetic 4x4-pixel IDX dataset, a toy model trained on it, and the
//! container produced by compressing that model.
//!
//! ```text
//! cargo run --release --example make_golden
//! ```

use std::path::Path;

use bvnc::io::{load_mnist_idx, save_model, write_idx_images, write_idx_labels, CompressionOptions};
use bvnc::net::LearningRates;
use bvnc::pipeline::{compress_model, pretrain, train_vdsws};
use bvnc::trainer::{evaluate_accuracy, TrainSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Class `c` lights up column `c` of a 4x4 image; every pixel gets noise.
fn synthetic(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * 16);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 3) as u8;
        for px in 0..16 {
            let base: u8 = if px % 4 == label as usize { 110 } else { 40 };
            pixels.push(base.saturating_add(rng.random_range(0..140)));
        }
        labels.push(label);
    }
    (pixels, labels)
}

fn golden_schedule() -> TrainSchedule {
    TrainSchedule {
        pretrain_epochs: 30,
        phase1_epochs: 30,
        phase2_epochs: 20,
        batch_size: 10,
        pretrain_lr: 1e-2,
        pretrain_weight_decay: 1e-4,
        learning_rates: LearningRates::reference().scaled(100.0),
        ..TrainSchedule::desk_scale()
    }
}

fn main() -> bvnc::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir)?;
    for (name, n, seed) in [("train", 150, 1u64), ("test", 60, 2)] {
        let (pixels, labels) = synthetic(n, seed);
        write_idx_images(dir.join(format!("toy-{name}-images.idx")), 4, 4, &pixels)?;
        write_idx_labels(dir.join(format!("toy-{name}-labels.idx")), &labels)?;
    }
    let train = load_mnist_idx(dir.join("toy-train-images.idx"), dir.join("toy-train-labels.idx"))?;
    let test = load_mnist_idx(dir.join("toy-test-images.idx"), dir.join("toy-test-labels.idx"))?;

    let schedule = golden_schedule();
    let pre = pretrain(&[16, 8, 3], &train, &schedule)?;
    let (net, prior) = train_vdsws(&pre, &train, &schedule)?;
    save_model(dir.join("toy-model.bvnm"), &net, Some(&prior))?;
    println!("model accuracy {:.4}", evaluate_accuracy(&net, &test)?);

    let out = compress_model(&net, Some(&prior), &CompressionOptions::default(), Some(&test))?;
    std::fs::write(dir.join("toy-model.bvnc"), &out.bytes)?;
    print!("{}", out.report.to_text());
    Ok(())
}
