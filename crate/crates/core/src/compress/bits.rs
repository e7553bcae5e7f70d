use bitvec::prelude::*;

use crate::error::{Error, Result};

/// MSB-first bit buffer.
pub type Bits = BitVec<u8, Msb0>;

pub(crate) fn push_bits(out: &mut Bits, value: u64, width: u8) {
    debug_assert!(width == 64 || value >> width == 0);
    for i in (0..width).rev() {
        out.push((value >> i) & 1 == 1);
    }
}

pub(crate) fn read_bits(bits: &BitSlice<u8, Msb0>, pos: &mut usize, width: u8) -> Result<u64> {
    let end = *pos + width as usize;
    if end > bits.len() {
        return Err(Error::Corrupt("bit block truncated".into()));
    }
    let mut v = 0u64;
    for b in &bits[*pos..end] {
        v = (v << 1) | (*b as u64);
    }
    *pos = end;
    Ok(v)
}

/// Smallest width that can hold `max_value`; 0 for 0.
pub(crate) fn width_for(max_value: u64) -> u8 {
    (64 - max_value.leading_zeros()) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(width_for(0), 0);
        assert_eq!(width_for(1), 1);
        assert_eq!(width_for(2), 2);
        assert_eq!(width_for(255), 8);
        assert_eq!(width_for(256), 9);
    }

    #[test]
    fn push_then_read() {
        let mut b = Bits::new();
        push_bits(&mut b, 5, 3);
        push_bits(&mut b, 0, 2);
        push_bits(&mut b, 1023, 10);
        let mut pos = 0;
        assert_eq!(read_bits(&b, &mut pos, 3).unwrap(), 5);
        assert_eq!(read_bits(&b, &mut pos, 2).unwrap(), 0);
        assert_eq!(read_bits(&b, &mut pos, 10).unwrap(), 1023);
        assert!(read_bits(&b, &mut pos, 1).is_err());
    }
}
