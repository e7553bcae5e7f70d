use bvnc::io::DatasetSplit;
use bvnc::math::argmax;
use bvnc::net::{Activation, LearningRates, Network, ParamGroup, VariationalDenseLayer};
use bvnc::trainer::{
    evaluate_accuracy, init_mixture_from_weights, initial_log_pi, pretrain_l2, train_phase1_vd, train_phase2_sws,
    TrainSchedule,
};
use bvnc::vb::{gm_responsibilities, GaussianPosterior};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two Gaussian blobs separated along the first two inputs; the remaining
/// inputs are pure noise.
fn blobs(n: usize, noise_dims: usize, seed: u64) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2 + noise_dims;
    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let c = if label == 0 { -1.0 } else { 1.0 };
        x[[i, 0]] = c + rng.random_range(-0.4..0.4);
        x[[i, 1]] = -c + rng.random_range(-0.4..0.4);
        for j in 2..d {
            x[[i, j]] = rng.random_range(-1.0..1.0);
        }
        y.push(label);
    }
    DatasetSplit::new(x, y).unwrap()
}

fn toy_schedule() -> TrainSchedule {
    TrainSchedule {
        pretrain_epochs: 10,
        phase1_epochs: 30,
        phase2_epochs: 30,
        batch_size: 10,
        pretrain_lr: 1e-2,
        pretrain_weight_decay: 0.0,
        learning_rates: LearningRates::reference().scaled(100.0),
        ..TrainSchedule::desk_scale()
    }
}

fn toy_net(dims: &[usize], seed: u64) -> Network {
    Network::random(dims, -10.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn pretraining_separates_toy_blobs() {
    let data = blobs(20, 0, 1);
    let mut s = toy_schedule();
    s.pretrain_epochs = 25; // 50 steps of 10
    let net = toy_net(&[2, 2], 3);
    let (net, w) = pretrain_l2(net, &data, 0.0, &s).unwrap();
    assert_eq!(evaluate_accuracy(&net, &data).unwrap(), 1.0);
    assert_eq!(w, net.flat_theta());
}

#[test]
fn heavy_weight_decay_collapses_means() {
    let data = blobs(20, 2, 2);
    let mut s = toy_schedule();
    s.pretrain_epochs = 100; // 200 steps
    s.pretrain_lr = 3e-2;
    let (net, _) = pretrain_l2(toy_net(&[4, 3, 2], 4), &data, 1e3, &s).unwrap();
    let norm = net.flat_theta().iter().map(|t| t * t).sum::<f64>().sqrt();
    assert!(norm < 1e-2, "|theta| = {norm}");
}

#[test]
fn pretraining_is_reproducible() {
    let data = blobs(40, 2, 3);
    let s = toy_schedule();
    let a = pretrain_l2(toy_net(&[4, 5, 2], 5), &data, 1e-3, &s).unwrap();
    let b = pretrain_l2(toy_net(&[4, 5, 2], 5), &data, 1e-3, &s).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn mixture_init_follows_the_table() {
    // +-0.85 in equal numbers has population std 0.85
    let w: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.85 } else { -0.85 }).collect();
    let p = init_mixture_from_weights(&w, 17, 0.999).unwrap();
    let zero = p.zero_index.unwrap();
    assert_eq!(zero, 8);
    assert_eq!(p.mu[zero], 0.0);
    for k in 0..17 {
        assert!((p.mu[k] - (k as f64 - 8.0) * 0.1).abs() < 1e-12, "mu[{k}] = {}", p.mu[k]);
        assert_eq!(p.mu[k], -p.mu[16 - k]);
        assert!((p.log_lambda[k] - 4.8159).abs() < 1e-4);
    }
    assert!((p.pi()[zero] - 0.999).abs() < 1e-12);
    assert!(p.normalization_error() < 1e-9);

    let raw = initial_log_pi(17, 0.999);
    assert_eq!(raw[0], ((1.0 - 0.999) / 17.0f64).ln());
    assert_eq!(raw[8], 0.999f64.ln());
    assert!(init_mixture_from_weights(&[0.3; 10], 17, 0.999).is_err());
}

#[test]
fn warm_up_prunes_noise_inputs_and_keeps_accuracy() {
    let data = blobs(200, 6, 6);
    let s = toy_schedule();
    let (pre, _) = pretrain_l2(toy_net(&[8, 6, 2], 7), &data, 1e-4, &s).unwrap();
    let before = evaluate_accuracy(&pre, &data).unwrap();
    let vd = train_phase1_vd(pre, &data, &s).unwrap();
    let after = evaluate_accuracy(&vd, &data).unwrap();
    let dropped = vd
        .posteriors()
        .iter()
        .map(|p| (0..p.len()).filter(|&i| p.binary_dropout_rate(i) > 0.95).count())
        .sum::<usize>();
    assert!(dropped > 0);
    assert!(after >= before - 0.02, "{before} -> {after}");
}

#[test]
fn joint_phase_pulls_weights_towards_their_components() {
    let data = blobs(200, 6, 8);
    let s = toy_schedule();
    let (pre, w) = pretrain_l2(toy_net(&[8, 6, 2], 9), &data, 1e-4, &s).unwrap();
    let vd = train_phase1_vd(pre, &data, &s).unwrap();
    let prior = init_mixture_from_weights(&w, s.components, s.pi0).unwrap();
    let spread = |net: &Network, prior: &bvnc::vb::MixturePrior| {
        let theta = net.flat_theta();
        let d: Vec<f64> = theta
            .iter()
            .map(|&t| (t - prior.mu[argmax(&gm_responsibilities(t, prior).unwrap())]).abs())
            .collect();
        d.iter().sum::<f64>() / d.len() as f64
    };
    let start = spread(&vd, &prior);
    let (net, prior) = train_phase2_sws(vd, &data, prior, &s).unwrap();
    assert!(spread(&net, &prior) < start);
    assert!(prior.normalization_error() < 1e-9);
    assert_eq!(prior.mu[prior.zero_index.unwrap()], 0.0);
    assert!((prior.pi()[prior.zero_index.unwrap()] - s.pi0).abs() < 1e-12);
}

#[test]
fn warm_up_leaves_the_mixture_groups_alone() {
    let s = toy_schedule();
    assert!(s.learning_rates.get(ParamGroup::Mu).is_ok());
    let data = blobs(20, 0, 10);
    let net = toy_net(&[2, 2], 11);
    let vd = train_phase1_vd(net.clone(), &data, &s).unwrap();
    assert_eq!(vd.dims(), net.dims());
}

#[test]
fn accuracy_edge_cases() {
    // perfect single-layer classifier on its own data
    let data = blobs(50, 0, 12);
    let post = GaussianPosterior::from_means(vec![-1.0, 1.0, 1.0, -1.0], -10.0).unwrap();
    let net = Network::new(vec![VariationalDenseLayer::new(2, 2, post, vec![0.0; 2]).unwrap()], Activation::Relu)
        .unwrap();
    assert_eq!(evaluate_accuracy(&net, &data).unwrap(), 1.0);

    // zero network predicts class 0 everywhere (lowest-index tie-break)
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
    let zeros = labels.iter().filter(|&&l| l == 0).count() as f64 / n as f64;
    let data = DatasetSplit::new(Array2::from_elem((n, 3), 0.5), labels).unwrap();
    let zero_net = Network::new(vec![VariationalDenseLayer::zeros(3, 10, -10.0).unwrap()], Activation::Relu).unwrap();
    let acc = evaluate_accuracy(&zero_net, &data).unwrap();
    assert_eq!(acc, zeros);
    let sigma = (0.1f64 * 0.9 / n as f64).sqrt();
    assert!((acc - 0.1).abs() < 3.0 * sigma, "{acc}");

    let empty = DatasetSplit::new(Array2::zeros((0, 3)), vec![]).unwrap();
    assert!(evaluate_accuracy(&zero_net, &empty).is_err());
}
