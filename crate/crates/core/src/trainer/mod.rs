//! Training phases: L2 pretraining, variational-dropout warm-up and joint
//! variational dropout + soft weight sharing.

mod phases;
mod schedule;

pub use phases::{
    evaluate_accuracy, init_mixture_from_weights, initial_log_pi, pretrain_l2, train_phase1_vd,
    train_phase1_vd_with_hook, train_phase2_sws, train_phase2_sws_with_hook, Classifier, EpochHook, EpochStats,
};
pub use schedule::TrainSchedule;
