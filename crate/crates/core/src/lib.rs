//! Bayesian compression of dense classifiers.
//!
//! Networks are trained with Gaussian weight posteriors under a log-uniform
//! prior (sparse variational dropout) and, optionally, an adaptive Gaussian
//! mixture prior over the weight centers (soft weight sharing). The trained
//! model is then quantized, structurally pruned, packed into an offset-CSR
//! layout and Huffman coded.
//!
//! Module map:
//! - [`vb`]: closed-form variational terms and their gradients.
//! - [`net`]: dense layers, forward/backward passes and Adam.
//! - [`trainer`]: L2 pretraining, VD warm-up and joint VD+SWS phases.
//! - [`compress`]: quantization, pruning, CSR, Huffman, container and accounting.
//! - [`io`]: MNIST IDX reader, model files and run configuration.
//! - [`pipeline`]: end-to-end training and compression runs.
//! - [`cli`]: the `bvnc` command-line front end.


pub mod cli;
pub mod compress;
pub mod error;
pub mod io;
pub mod math;
pub mod net;
pub mod pipeline;
pub mod trainer;
pub mod vb;

pub use error::{Error, Result};
