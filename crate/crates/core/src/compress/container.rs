//! Compressed model container.
//!
//! All integers are little-endian. Bit blocks are packed most significant
//! bit first and zero-padded to a whole byte.
//!
//! ```text
//! "BVNC" | version u8 | layers u32
//! per layer:
//!   rows u32 | cols u32 | offset_bits u8 | ir_width u8 | K u16
//!   codebook f32[K]            entry 0 is 0.0
//!   code lengths u8[K]         0 = symbol absent from the stream
//!   IR block                   bits u32 | (rows + 1) values of ir_width bits
//!   IC' block                  bits u32 | |A| values of offset_bits bits
//!   Huffman block              bits u32 | canonical codewords of A
//!   biases                     count u32 | f32[count]
//! ```
//!
//! `|A|` is the last IR entry.

use std::collections::BTreeMap;
use std::path::Path;


use super::bits::{push_bits, read_bits, width_for, Bits};
use super::csr::{csr_decode, csr_encode, SparseCsrMatrix, SymbolMatrix};
use super::huffman::{frequencies, huffman_build, HuffmanCodebook};
use super::quantize::{QuantizedLayer, QuantizedNetwork};
use super::{Symbol, ZERO_SYMBOL};
use crate::error::{Error, Result};
use crate::io::Reader;

pub const CONTAINER_MAGIC: &[u8; 4] = b"BVNC";
pub const CONTAINER_VERSION: u8 = 1;

/// One layer after CSR packing and entropy coding.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedLayer {
    /// Layer codebook, restricted to symbols the layer uses (0.0 always first).
    pub codebook: Vec<f32>,
    pub csr: SparseCsrMatrix,
    /// `None` when the layer stores no symbols at all.
    pub huffman: Option<HuffmanCodebook>,
    pub huffman_bits: Bits,
    pub bias: Vec<f32>,
}

impl CompressedLayer {
    pub fn rows(&self) -> usize {
        self.csr.rows
    }

    pub fn cols(&self) -> usize {
        self.csr.cols
    }

    /// `ceil(log2(IR_max + 1))`.
    pub fn ir_width(&self) -> u8 {
        width_for(*self.csr.row_ptr.last().expect("rows + 1 entries") as u64)
    }

    /// Code length of every codebook entry, 0 where unused.
    pub fn code_lengths(&self) -> Vec<u8> {
        (0..self.codebook.len())
            .map(|s| {
                self.huffman
                    .as_ref()
                    .and_then(|h| h.lengths().get(&(s as Symbol)).copied())
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Stored symbols that are not the zero symbol.
    pub fn nonzeros(&self) -> usize {
        self.csr.values.iter().filter(|&&s| s != ZERO_SYMBOL).count()
    }

    fn decode(&self) -> Result<QuantizedLayer> {
        let weights = csr_decode(&self.csr)?;
        QuantizedLayer::new(
            self.codebook.iter().map(|&v| v as f64).collect(),
            weights,
            self.bias.iter().map(|&v| v as f64).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedModel {
    pub layers: Vec<CompressedLayer>,
}

fn compress_layer(layer: &QuantizedLayer, offset_bits: u8) -> Result<CompressedLayer> {
    // Keep symbol 0 plus every symbol with a nonzero value that occurs.
    let mut used = vec![false; layer.codebook.len()];
    used[ZERO_SYMBOL as usize] = true;
    for &s in &layer.weights.data {
        if layer.codebook[s as usize] != 0.0 {
            used[s as usize] = true;
        }
    }
    let mut remap = vec![ZERO_SYMBOL; layer.codebook.len()];
    let mut codebook = Vec::new();
    for (s, &u) in used.iter().enumerate() {
        if u {
            remap[s] = codebook.len() as Symbol;
            let v = layer.codebook[s] as f32;
            if v as f64 != layer.codebook[s] {
                return Err(Error::Domain(format!(
                    "codebook value {} is not representable as f32",
                    layer.codebook[s]
                )));
            }
            codebook.push(v);
        }
    }
    let data = layer.weights.data.iter().map(|&s| remap[s as usize]).collect();
    let compact = SymbolMatrix::new(layer.weights.rows, layer.weights.cols, data)?;
    let csr = csr_encode(&compact, offset_bits)?;
    let (huffman, huffman_bits) = if csr.values.is_empty() {
        (None, Bits::new())
    } else {
        let book = huffman_build(&frequencies(&csr.values))?;
        let bits = book.encode(&csr.values)?;
        (Some(book), bits)
    };
    let bias: Vec<f32> = layer.bias.iter().map(|&b| b as f32).collect();
    if bias.iter().zip(&layer.bias).any(|(&a, &b)| a as f64 != b) {
        return Err(Error::Domain("biases must be representable as f32".into()));
    }
    Ok(CompressedLayer {
        codebook,
        csr,
        huffman,
        huffman_bits,
        bias,
    })
}

/// Packs every layer with fixed-width column offsets of `offset_bits` bits.
pub fn compress_network(net: &QuantizedNetwork, offset_bits: u8) -> Result<CompressedModel> {
    let layers = net
        .layers
        .iter()
        .map(|l| compress_layer(l, offset_bits))
        .collect::<Result<_>>()?;
    Ok(CompressedModel { layers })
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Domain(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_block(out: &mut Vec<u8>, bits: &Bits) -> Result<()> {
    put_u32(out, bits.len())?;
    let mut padded = bits.clone();
    padded.set_uninitialized(false);
    out.extend_from_slice(padded.as_raw_slice());
    Ok(())
}

fn read_block(r: &mut Reader<'_>, expected_bits: usize, what: &str) -> Result<Bits> {
    let n = r.u32()? as usize;
    if n != expected_bits {
        return Err(Error::Corrupt(format!("{what} block holds {n} bits, expected {expected_bits}")));
    }
    let bytes = r.take(n.div_ceil(8))?;
    let mut bits = Bits::from_slice(bytes);
    if bits[n..].any() {
        return Err(Error::Corrupt(format!("{what} block has nonzero padding")));
    }
    bits.truncate(n);
    Ok(bits)
}

impl CompressedModel {
    /// Reconstructs the quantized network.
    pub fn decode(&self) -> Result<QuantizedNetwork> {
        QuantizedNetwork::new(self.layers.iter().map(|l| l.decode()).collect::<Result<_>>()?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.push(CONTAINER_VERSION);
        put_u32(&mut out, self.layers.len())?;
        for l in &self.layers {
            put_u32(&mut out, l.rows())?;
            put_u32(&mut out, l.cols())?;
            out.push(l.csr.offset_bits);
            let w_ir = l.ir_width();
            out.push(w_ir);
            out.extend_from_slice(&(l.codebook.len() as u16).to_le_bytes());
            for v in &l.codebook {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend(l.code_lengths());

            let mut ir = Bits::new();
            for &p in &l.csr.row_ptr {
                push_bits(&mut ir, p as u64, w_ir);
            }
            put_block(&mut out, &ir)?;
            let mut ic = Bits::new();
            for &o in &l.csr.offsets {
                push_bits(&mut ic, o as u64, l.csr.offset_bits);
            }
            put_block(&mut out, &ic)?;
            put_block(&mut out, &l.huffman_bits)?;

            put_u32(&mut out, l.bias.len())?;
            for b in &l.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != CONTAINER_MAGIC {
            return Err(Error::Corrupt("not a compressed container (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CONTAINER_VERSION,
            });
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let offset_bits = r.u8()?;
            let w_ir = r.u8()?;
            if w_ir > 32 {
                return Err(Error::Corrupt(format!("row index width {w_ir} exceeds 32")));
            }
            let k = r.u16()? as usize;
            if k == 0 {
                return Err(Error::Corrupt("empty codebook".into()));
            }
            let codebook: Vec<f32> = r
                .take(4 * k)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let lengths = r.take(k)?.to_vec();

            let ir_bits = read_block(&mut r, (rows + 1) * w_ir as usize, "IR")?;
            let mut pos = 0;
            let row_ptr = (0..=rows)
                .map(|_| read_bits(&ir_bits, &mut pos, w_ir).map(|v| v as u32))
                .collect::<Result<Vec<u32>>>()?;
            let stored = *row_ptr.last().expect("rows + 1 entries") as usize;
            if width_for(stored as u64) != w_ir {
                return Err(Error::Corrupt("row index width is not minimal".into()));
            }

            let ic_bits = read_block(&mut r, stored * offset_bits as usize, "IC'")?;
            let mut pos = 0;
            let offsets = (0..stored)
                .map(|_| read_bits(&ic_bits, &mut pos, offset_bits).map(|v| v as u32))
                .collect::<Result<Vec<u32>>>()?;

            let used: BTreeMap<Symbol, u8> = lengths
                .iter()
                .enumerate()
                .filter(|(_, &l)| l > 0)
                .map(|(s, &l)| (s as Symbol, l))
                .collect();
            let huffman = if used.is_empty() {
                None
            } else {
                Some(HuffmanCodebook::from_lengths(used)?)
            };
            let hbits_len = r.u32()? as usize;
            let raw = r.take(hbits_len.div_ceil(8))?;
            let mut huffman_bits = Bits::from_slice(raw);
            if huffman_bits[hbits_len..].any() {
                return Err(Error::Corrupt("Huffman block has nonzero padding".into()));
            }
            huffman_bits.truncate(hbits_len);
            let values = match &huffman {
                Some(h) => h.decode(&huffman_bits, stored)?,
                None if stored == 0 && hbits_len == 0 => Vec::new(),
                None => return Err(Error::Corrupt("symbols stored without a code".into())),
            };

            let nb = r.u32()? as usize;
            if nb != rows {
                return Err(Error::Corrupt(format!("{nb} biases for {rows} rows")));
            }
            let bias = r
                .take(4 * nb)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();

            let csr = SparseCsrMatrix {
                rows,
                cols,
                values,
                row_ptr,
                offsets,
                offset_bits,
            };
            csr.validate()?;
            layers.push(CompressedLayer {
                codebook,
                csr,
                huffman,
                huffman_bits,
                bias,
            });
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} trailing bytes after container", r.remaining())));
        }
        let model = Self { layers };
        model.decode()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}
