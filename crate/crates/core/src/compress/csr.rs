//! CSR with fixed-width relative column offsets.
//!
//! Within a row the first stored entry records its column index and every
//! later entry records the distance to the previous stored entry. A gap that
//! does not fit in `offset_bits` is bridged by storing explicit zero symbols
//! at the largest representable distance.

use super::{Symbol, ZERO_SYMBOL};
use crate::error::{Error, Result};

/// Dense row-major matrix of codebook symbols; [`ZERO_SYMBOL`] is zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Symbol>,
}

impl SymbolMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Symbol>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} symbols, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO_SYMBOL; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Symbol {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Symbol] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|&&s| s != ZERO_SYMBOL).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseCsrMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Stored symbols `A`, including inserted zeros.
    pub values: Vec<Symbol>,
    /// Cumulative stored-entry counts `IR`, `rows + 1` entries starting at 0.
    pub row_ptr: Vec<u32>,
    /// Relative column offsets `IC'`.
    pub offsets: Vec<u32>,
    pub offset_bits: u8,
}

impl SparseCsrMatrix {
    pub fn stored(&self) -> usize {
        self.values.len()
    }

    /// Checks the structural invariants without walking the columns.
    pub fn validate(&self) -> Result<()> {
        if !(1..=31).contains(&self.offset_bits) {
            return Err(Error::Corrupt(format!("offset width {} unsupported", self.offset_bits)));
        }
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr[0] != 0 {
            return Err(Error::Corrupt("row pointer must have rows + 1 entries starting at 0".into()));
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Corrupt("row pointer is not monotone".into()));
        }
        let total = self.row_ptr[self.rows] as usize;
        if self.values.len() != total || self.offsets.len() != total {
            return Err(Error::Corrupt(format!(
                "row pointer ends at {total} but |A| = {} and |IC'| = {}",
                self.values.len(),
                self.offsets.len()
            )));
        }
        let limit = 1u32 << self.offset_bits;
        if self.offsets.iter().any(|&o| o >= limit) {
            return Err(Error::Corrupt(format!("offset exceeds {} bits", self.offset_bits)));
        }
        Ok(())
    }
}

pub fn csr_encode(m: &SymbolMatrix, offset_bits: u8) -> Result<SparseCsrMatrix> {
    if !(1..=31).contains(&offset_bits) {
        return Err(Error::Domain(format!("offset_bits must be in 1..=31, got {offset_bits}")));
    }
    let max_gap = (1usize << offset_bits) - 1;
    let mut values = Vec::new();
    let mut offsets = Vec::new();
    let mut row_ptr = Vec::with_capacity(m.rows + 1);
    row_ptr.push(0u32);
    for r in 0..m.rows {
        let mut prev: Option<usize> = None;
        for (c, &sym) in m.row(r).iter().enumerate() {
            if sym == ZERO_SYMBOL {
                continue;
            }
            loop {
                let gap = prev.map_or(c, |p| c - p);
                if gap <= max_gap {
                    values.push(sym);
                    offsets.push(gap as u32);
                    prev = Some(c);
                    break;
                }
                values.push(ZERO_SYMBOL);
                offsets.push(max_gap as u32);
                prev = Some(prev.map_or(max_gap, |p| p + max_gap));
            }
        }
        row_ptr.push(values.len() as u32);
    }
    Ok(SparseCsrMatrix {
        rows: m.rows,
        cols: m.cols,
        values,
        row_ptr,
        offsets,
        offset_bits,
    })
}

pub fn csr_decode(s: &SparseCsrMatrix) -> Result<SymbolMatrix> {
    s.validate()?;
    let mut m = SymbolMatrix::zeros(s.rows, s.cols);
    for r in 0..s.rows {
        let (start, end) = (s.row_ptr[r] as usize, s.row_ptr[r + 1] as usize);
        let mut prev: Option<usize> = None;
        for k in start..end {
            let off = s.offsets[k] as usize;
            let col = match prev {
                None => off,
                Some(_) if off == 0 => {
                    return Err(Error::Corrupt(format!("zero offset repeats a column in row {r}")));
                }
                Some(p) => p + off,
            };
            if col >= s.cols {
                return Err(Error::Corrupt(format!(
                    "row {r} walks to column {col} of {}",
                    s.cols
                )));
            }
            m.data[r * s.cols + col] = s.values[k];
            prev = Some(col);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_example() {
        let m = SymbolMatrix::new(2, 3, vec![0, 0, 3, 4, 0, 0]).unwrap();
        let s = csr_encode(&m, 3).unwrap();
        assert_eq!(s.values, vec![3, 4]);
        assert_eq!(s.row_ptr, vec![0, 1, 2]);
        assert_eq!(s.offsets, vec![2, 0]);
        assert_eq!(csr_decode(&s).unwrap(), m);
    }

    #[test]
    fn long_gap_inserts_zero() {
        let m = SymbolMatrix::new(1, 10, vec![5, 0, 0, 0, 0, 0, 0, 0, 0, 7]).unwrap();
        let s = csr_encode(&m, 3).unwrap();
        assert_eq!(s.values, vec![5, 0, 7]);
        assert_eq!(s.offsets, vec![0, 7, 2]);
        assert_eq!(s.row_ptr, vec![0, 3]);
        assert_eq!(csr_decode(&s).unwrap(), m);
    }

    #[test]
    fn late_first_entry_is_anchored_at_row_start() {
        let mut data = vec![0; 21];
        data[20] = 9;
        let m = SymbolMatrix::new(1, 21, data).unwrap();
        let s = csr_encode(&m, 3).unwrap();
        // zeros at columns 7 and 14, then the entry 6 further on
        assert_eq!(s.values, vec![0, 0, 9]);
        assert_eq!(s.offsets, vec![7, 7, 6]);
        assert_eq!(csr_decode(&s).unwrap(), m);
    }

    #[test]
    fn all_zero_matrix() {
        let m = SymbolMatrix::zeros(4, 6);
        let s = csr_encode(&m, 5).unwrap();
        assert!(s.values.is_empty() && s.offsets.is_empty());
        assert_eq!(s.row_ptr, vec![0; 5]);
        assert_eq!(csr_decode(&s).unwrap(), m);
    }

    #[test]
    fn corrupt_row_pointer() {
        let m = SymbolMatrix::new(2, 3, vec![0, 0, 3, 4, 0, 0]).unwrap();
        let mut s = csr_encode(&m, 3).unwrap();
        s.row_ptr = vec![0, 2, 1];
        assert!(matches!(csr_decode(&s), Err(Error::Corrupt(_))));
    }

    #[test]
    fn offset_past_last_column() {
        let m = SymbolMatrix::new(1, 4, vec![1, 0, 0, 2]).unwrap();
        let mut s = csr_encode(&m, 3).unwrap();
        s.offsets[1] = 5;
        assert!(matches!(csr_decode(&s), Err(Error::Corrupt(_))));
    }
}
