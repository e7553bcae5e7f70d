//! Canonical Huffman coding over codebook symbols.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use bitvec::prelude::*;

use super::bits::Bits;
use super::Symbol;
use crate::error::{Error, Result};

/// Longest code the container format can describe (lengths are stored in a byte).
pub const MAX_CODE_LEN: u8 = 64;

/// Canonical prefix code. Codewords are assigned in order of (length, symbol),
/// so the length table alone determines every bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanCodebook {
    lengths: BTreeMap<Symbol, u8>,
    codes: BTreeMap<Symbol, u64>,
    /// Per length: (first code, symbols in canonical order).
    decode_table: Vec<(u64, Vec<Symbol>)>,
}

pub fn huffman_build(frequencies: &BTreeMap<Symbol, u64>) -> Result<HuffmanCodebook> {
    let live: Vec<(Symbol, u64)> = frequencies
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&s, &c)| (s, c))
        .collect();
    if live.is_empty() {
        return Err(Error::Empty("Huffman frequencies have no positive count".into()));
    }
    if live.len() == 1 {
        return HuffmanCodebook::from_lengths(BTreeMap::from([(live[0].0, 1)]));
    }

    // Nodes are keyed by (weight, smallest symbol below) so ties resolve by symbol order.
    let mut parent: Vec<Option<usize>> = vec![None; live.len()];
    let mut heap = BinaryHeap::new();
    for (i, &(s, c)) in live.iter().enumerate() {
        heap.push(Reverse((c, s, i)));
    }
    while heap.len() > 1 {
        let Reverse((c1, s1, a)) = heap.pop().expect("heap has two nodes");
        let Reverse((c2, s2, b)) = heap.pop().expect("heap has two nodes");
        let id = parent.len();
        parent.push(None);
        parent[a] = Some(id);
        parent[b] = Some(id);
        heap.push(Reverse((c1 + c2, s1.min(s2), id)));
    }

    let mut lengths = BTreeMap::new();
    for (i, &(s, _)) in live.iter().enumerate() {
        let mut depth = 0u32;
        let mut node = i;
        while let Some(p) = parent[node] {
            depth += 1;
            node = p;
        }
        if depth > MAX_CODE_LEN as u32 {
            return Err(Error::Domain(format!("Huffman code length {depth} exceeds {MAX_CODE_LEN}")));
        }
        lengths.insert(s, depth as u8);
    }
    HuffmanCodebook::from_lengths(lengths)
}

impl HuffmanCodebook {
    /// Rebuilds the canonical code from a symbol → length table.
    pub fn from_lengths(lengths: BTreeMap<Symbol, u8>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::Empty("Huffman length table is empty".into()));
        }
        if lengths.values().any(|&l| l == 0 || l > MAX_CODE_LEN) {
            return Err(Error::Corrupt(format!("code lengths must be in 1..={MAX_CODE_LEN}")));
        }
        // Kraft sum must not exceed one, measured in units of 2^-max.
        let max_len = *lengths.values().max().expect("nonempty");
        let kraft: u128 = lengths.values().map(|&l| 1u128 << (max_len - l)).sum();
        if kraft > 1u128 << max_len {
            return Err(Error::Corrupt("code lengths violate the Kraft inequality".into()));
        }

        let mut order: Vec<(u8, Symbol)> = lengths.iter().map(|(&s, &l)| (l, s)).collect();
        order.sort_unstable();
        let mut codes = BTreeMap::new();
        let mut decode_table: Vec<(u64, Vec<Symbol>)> = vec![(0, Vec::new()); max_len as usize + 1];
        let mut code: u64 = 0;
        let mut prev_len = order[0].0;
        decode_table[prev_len as usize].0 = 0;
        for (idx, &(len, sym)) in order.iter().enumerate() {
            if idx > 0 {
                code += 1;
                if len > prev_len {
                    code <<= len - prev_len;
                    prev_len = len;
                }
            }
            let slot = &mut decode_table[len as usize];
            if slot.1.is_empty() {
                slot.0 = code;
            }
            slot.1.push(sym);
            codes.insert(sym, code);
        }
        Ok(Self {
            lengths,
            codes,
            decode_table,
        })
    }

    pub fn lengths(&self) -> &BTreeMap<Symbol, u8> {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Codeword for `sym` as (bits, length), most significant bit first.
    pub fn code(&self, sym: Symbol) -> Option<(u64, u8)> {
        Some((*self.codes.get(&sym)?, *self.lengths.get(&sym)?))
    }

    /// Bits needed to encode `symbols`.
    pub fn encoded_len(&self, symbols: &[Symbol]) -> Result<u64> {
        symbols.iter().try_fold(0u64, |acc, &s| {
            let l = self.lengths.get(&s).ok_or(Error::UnknownSymbol(s as u32))?;
            Ok(acc + *l as u64)
        })
    }

    pub fn encode(&self, symbols: &[Symbol]) -> Result<Bits> {
        let mut out = Bits::with_capacity(self.encoded_len(symbols)? as usize);
        for &s in symbols {
            let (code, len) = self.code(s).ok_or(Error::UnknownSymbol(s as u32))?;
            super::bits::push_bits(&mut out, code, len);
        }
        Ok(out)
    }

    /// Decodes exactly `count` symbols; the stream must hold no trailing bits.
    pub fn decode(&self, bits: &BitSlice<u8, Msb0>, count: usize) -> Result<Vec<Symbol>> {
        let mut out = Vec::with_capacity(count);
        let mut pos = 0usize;
        while out.len() < count {
            let mut code: u64 = 0;
            let mut len = 0usize;
            loop {
                if pos >= bits.len() {
                    return Err(Error::Corrupt("Huffman stream truncated".into()));
                }
                code = (code << 1) | bits[pos] as u64;
                pos += 1;
                len += 1;
                if len >= self.decode_table.len() {
                    return Err(Error::Corrupt("bit pattern matches no codeword".into()));
                }
                let (first, syms) = &self.decode_table[len];
                if !syms.is_empty() && code >= *first && code - first < syms.len() as u64 {
                    out.push(syms[(code - first) as usize]);
                    break;
                }
            }
        }
        if pos != bits.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bits after {count} symbols",
                bits.len() - pos
            )));
        }
        Ok(out)
    }
}

/// Symbol counts of a stream.
pub(crate) fn frequencies(symbols: &[Symbol]) -> BTreeMap<Symbol, u64> {
    let mut f = BTreeMap::new();
    for &s in symbols {
        *f.entry(s).or_insert(0) += 1;
    }
    f
}
