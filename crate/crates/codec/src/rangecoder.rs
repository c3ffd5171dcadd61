//! Byte-oriented range coder (64-bit low, 32-bit range, carry handled
//! through a pending-byte cache). Symbols are coded under 16-bit
//! quantized CDFs from [`crate::pmf::PmfTable`].

use crate::error::{CodecError, Result};
use crate::pmf::{PmfTable, PMF_PRECISION_BITS, PMF_TOTAL};

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Encode one symbol under its table. The symbol must lie inside the
    /// table alphabet; the encoder clamps earlier, so a violation here is
    /// an internal bug surfaced as an error.
    pub fn encode_symbol(&mut self, symbol: i32, table: &PmfTable) -> Result<()> {
        if !table.contains(symbol) {
            return Err(CodecError::Internal(format!(
                "symbol {symbol} outside table alphabet [{}..{}]",
                table.s_min(),
                table.s_min() + table.span() as i32 - 1
            )));
        }
        let idx = table.index_of(symbol);
        let cum = table.cum(idx);
        let freq = table.freq(idx);
        debug_assert!(freq >= 1);

        let r = self.range >> PMF_PRECISION_BITS;
        self.low += r as u64 * cum as u64;
        if cum + freq == PMF_TOTAL {
            self.range -= r * cum;
        } else {
            self.range = r * freq;
        }
        while self.range < TOP {
            self.shift_low();
            self.range <<= 8;
        }
        Ok(())
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            self.out.push(self.cache.wrapping_add(carry));
            for _ in 1..self.cache_size {
                self.out.push(0xFFu8.wrapping_add(carry));
            }
            self.cache = (self.low >> 24) as u8;
            self.cache_size = 0;
        }
        self.cache_size += 1;
        self.low = (self.low << 8) & 0xFFFF_FFFF;
    }

    /// Flush the state; the returned buffer is the complete segment.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        let mut dec = Self {
            code: 0,
            range: u32::MAX,
            input,
            pos: 0,
        };
        for _ in 0..5 {
            let b = dec.next_byte()?;
            dec.code = (dec.code << 8) | b as u32;
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let Some(&b) = self.input.get(self.pos) else {
            return Err(CodecError::Truncated { offset: self.pos });
        };
        self.pos += 1;
        Ok(b)
    }

    pub fn decode_symbol(&mut self, table: &PmfTable) -> Result<i32> {
        let r = self.range >> PMF_PRECISION_BITS;
        let dv = (self.code / r.max(1)).min(PMF_TOTAL - 1);
        let idx = table.index_of_cum(dv);
        let cum = table.cum(idx);
        let freq = table.freq(idx);

        self.code = self.code.wrapping_sub(r.wrapping_mul(cum));
        if cum + freq == PMF_TOTAL {
            self.range -= r * cum;
        } else {
            self.range = r * freq;
        }
        while self.range < TOP {
            let b = self.next_byte()?;
            self.code = (self.code << 8) | b as u32;
            self.range <<= 8;
        }
        Ok(table.symbol_at(idx))
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}
