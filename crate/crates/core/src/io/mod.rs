//! Dataset, model and configuration I/O.

mod config;
mod mnist;
mod model_file;

pub use config::{CompressionMethod, CompressionOptions, DataOptions, Mode, RunConfig, SweepOptions};
pub use mnist::{
    load_mnist_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels, DatasetSplit,
    Provenance, IMAGES_MAGIC, LABELS_MAGIC,
};
pub(crate) use model_file::Reader;
pub use model_file::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
