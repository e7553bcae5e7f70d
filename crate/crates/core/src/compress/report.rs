use serde::{Deserialize, Serialize};

use super::container::CompressedModel;
use crate::error::{Error, Result};

/// Bit accounting for one layer. `original_bits` refers to the layer as it
/// was before pruning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub original_shape: [usize; 2],
    pub pruned_shape: [usize; 2],
    pub original_bits: u64,
    pub value_bits: u64,
    pub offset_bits_total: u64,
    pub row_index_bits: u64,
    pub codebook_bits: u64,
    pub bias_bits: u64,
    pub compressed_bits: u64,
    pub nonzero_weights: u64,
    pub stored_symbols: u64,
    pub codebook_size: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub layers: Vec<LayerReport>,
    pub original_bits: u64,
    pub value_bits: u64,
    pub offset_bits_total: u64,
    pub row_index_bits: u64,
    pub codebook_bits: u64,
    pub bias_bits: u64,
    pub compressed_bits: u64,
    pub total_weights: u64,
    pub nonzero_weights: u64,
    /// `|W != 0| / |W|` over the original weight positions.
    pub nonzero_fraction: f64,
    pub compression_ratio: f64,
    pub accuracy_after: Option<f64>,
}

/// Tallies the storage cost of `model` against a dense 32-bit copy of the
/// architecture `original_dims` (input width first).
pub fn compression_report(
    original_dims: &[usize],
    model: &CompressedModel,
    accuracy: Option<f64>,
) -> Result<CompressionReport> {
    if model.layers.is_empty() || original_dims.len() != model.layers.len() + 1 {
        return Err(Error::Shape(format!(
            "{} original dimensions for {} layers",
            original_dims.len(),
            model.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(model.layers.len());
    let last = model.layers.len() - 1;
    for (i, l) in model.layers.iter().enumerate() {
        let (cols, rows) = (original_dims[i], original_dims[i + 1]);
        // hidden widths may only shrink; inputs and outputs are never pruned
        let rows_ok = if i == last { l.rows() == rows } else { l.rows() <= rows };
        let cols_ok = if i == 0 { l.cols() == cols } else { l.cols() <= cols };
        if !(rows_ok && cols_ok) {
            return Err(Error::Shape(format!(
                "layer {i} is {}x{}, which cannot come from an original {rows}x{cols}",
                l.rows(),
                l.cols()
            )));
        }
        let original_bits = 32 * (rows * cols + rows) as u64;
        let value_bits = l.huffman_bits.len() as u64;
        let offset_bits_total = l.csr.offsets.len() as u64 * l.csr.offset_bits as u64;
        let row_index_bits = l.csr.row_ptr.len() as u64 * l.ir_width() as u64;
        let k = l.codebook.len() as u64;
        let codebook_bits = k * 32 + k * 8;
        let bias_bits = 32 * l.bias.len() as u64;
        layers.push(LayerReport {
            original_shape: [rows, cols],
            pruned_shape: [l.rows(), l.cols()],
            original_bits,
            value_bits,
            offset_bits_total,
            row_index_bits,
            codebook_bits,
            bias_bits,
            compressed_bits: value_bits + offset_bits_total + row_index_bits + codebook_bits + bias_bits,
            nonzero_weights: l.nonzeros() as u64,
            stored_symbols: l.csr.values.len() as u64,
            codebook_size: k,
        });
    }
    let sum = |f: fn(&LayerReport) -> u64| layers.iter().map(f).sum::<u64>();
    let original_bits = sum(|l| l.original_bits);
    let compressed_bits = sum(|l| l.compressed_bits);
    let total_weights: u64 = original_dims.windows(2).map(|w| (w[0] * w[1]) as u64).sum();
    let nonzero_weights = sum(|l| l.nonzero_weights);
    Ok(CompressionReport {
        original_bits,
        value_bits: sum(|l| l.value_bits),
        offset_bits_total: sum(|l| l.offset_bits_total),
        row_index_bits: sum(|l| l.row_index_bits),
        codebook_bits: sum(|l| l.codebook_bits),
        bias_bits: sum(|l| l.bias_bits),
        compressed_bits,
        total_weights,
        nonzero_weights,
        nonzero_fraction: nonzero_weights as f64 / total_weights as f64,
        compression_ratio: original_bits as f64 / compressed_bits as f64,
        accuracy_after: accuracy,
        layers,
    })
}

impl CompressionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<6} {:>11} {:>11} {:>12} {:>10} {:>10} {:>10} {:>9} {:>10} {:>12}\n",
            "layer", "shape", "pruned", "original", "values", "offsets", "row_idx", "codebook", "bias", "compressed"
        );
        let shape = |s: [usize; 2]| format!("{}x{}", s[0], s[1]);
        for (i, l) in self.layers.iter().enumerate() {
            s += &format!(
                "{:<6} {:>11} {:>11} {:>12} {:>10} {:>10} {:>10} {:>9} {:>10} {:>12}\n",
                i,
                shape(l.original_shape),
                shape(l.pruned_shape),
                l.original_bits,
                l.value_bits,
                l.offset_bits_total,
                l.row_index_bits,
                l.codebook_bits,
                l.bias_bits,
                l.compressed_bits
            );
        }
        s += &format!(
            "{:<6} {:>11} {:>11} {:>12} {:>10} {:>10} {:>10} {:>9} {:>10} {:>12}\n",
            "total",
            "",
            "",
            self.original_bits,
            self.value_bits,
            self.offset_bits_total,
            self.row_index_bits,
            self.codebook_bits,
            self.bias_bits,
            self.compressed_bits
        );
        s += &format!(
            "nonzero weights   {} / {} ({:.3}%)\ncompression ratio {:.2}\n",
            self.nonzero_weights,
            self.total_weights,
            100.0 * self.nonzero_fraction,
            self.compression_ratio
        );
        if let Some(a) = self.accuracy_after {
            s += &format!("accuracy          {:.4}\n", a);
        }
        s
    }
}
