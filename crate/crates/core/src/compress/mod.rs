//! Post-training codec: mixture quantization, structural pruning, offset-CSR
//! packing and Huffman coding, plus bit-exact size accounting.

mod baseline;
mod bits;
mod container;
mod csr;
mod huffman;
mod prune;
mod quantize;
mod report;

pub use baseline::{fit_fixed_quantizer, quantize_vd_baseline, vd_threshold, FixedQuantizer};
pub use bits::Bits;
pub use container::{compress_network, CompressedLayer, CompressedModel, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use csr::{csr_decode, csr_encode, SparseCsrMatrix, SymbolMatrix};
pub use huffman::{huffman_build, HuffmanCodebook};
pub use prune::prune_structure;
pub use quantize::{quantize_gm, QuantizedLayer, QuantizedNetwork};
pub use report::{compression_report, CompressionReport, LayerReport};

/// Index of a codebook entry.
pub type Symbol = u16;

/// Codebook index reserved for the value 0.
pub const ZERO_SYMBOL: Symbol = 0;
