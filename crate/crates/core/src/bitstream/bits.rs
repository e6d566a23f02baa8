//! MSB-first bit packing and order-0 Exp-Golomb codes.

/// Accumulates bits most-significant first; the final partial byte is
/// zero-padded.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    buf: Vec<u8>,
    acc: u64,
    filled: u32,
    bits_written: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the low `count` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, count: u32) {
        debug_assert!(count <= 64);
        let mut remaining = count;
        while remaining > 0 {
            let take = remaining.min(8);
            remaining -= take;
            let chunk = (value >> remaining) & ((1u64 << take) - 1);
            self.acc = (self.acc << take) | chunk;
            self.filled += take;
            while self.filled >= 8 {
                self.filled -= 8;
                self.buf.push((self.acc >> self.filled) as u8);
            }
            self.acc &= (1u64 << self.filled) - 1;
        }
        self.bits_written += count as u64;
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.write_bits(bit as u64, 1);
    }

    pub fn bits_written(&self) -> u64 {
        self.bits_written
    }

    /// Unsigned order-0 Exp-Golomb.
    pub fn write_ue(&mut self, value: u64) {
        let v = value as u128 + 1;
        let len = 128 - v.leading_zeros();
        let prefix = len - 1;
        // the prefix may exceed 64 bits only for values near u64::MAX
        let mut zeros = prefix;
        while zeros > 0 {
            let take = zeros.min(32);
            self.write_bits(0, take);
            zeros -= take;
        }
        if len > 64 {
            self.write_bits((v >> 64) as u64, len - 64);
            self.write_bits(v as u64, 64);
        } else {
            self.write_bits(v as u64, len);
        }
    }

    /// Signed Exp-Golomb: `s > 0 -> 2s - 1`, `s <= 0 -> -2s`.
    pub fn write_se(&mut self, value: i64) {
        self.write_ue(signed_to_code(value));
    }

    pub fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.buf.push((self.acc << (8 - self.filled)) as u8);
        }
        self.buf
    }
}

pub fn signed_to_code(value: i64) -> u64 {
    if value > 0 {
        (value as u64) * 2 - 1
    } else {
        value.unsigned_abs() * 2
    }
}

pub fn code_to_signed(code: u64) -> i64 {
    if code % 2 == 1 {
        ((code + 1) / 2) as i64
    } else {
        -((code / 2) as i64)
    }
}

/// Length in bits of the signed Exp-Golomb codeword for `value`.
pub fn se_len(value: i64) -> u32 {
    let v = signed_to_code(value) as u128 + 1;
    2 * (128 - v.leading_zeros()) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadError {
    Eof,
    /// Exp-Golomb prefix longer than any codeword the writer can produce.
    Overlong,
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.data.len() as u64 * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool, ReadError> {
        let byte = *self
            .data
            .get((self.pos / 8) as usize)
            .ok_or(ReadError::Eof)?;
        let bit = (byte >> (7 - (self.pos % 8))) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }

    pub fn read_bits(&mut self, count: u32) -> Result<u64, ReadError> {
        debug_assert!(count <= 64);
        if self.remaining() < count as u64 {
            return Err(ReadError::Eof);
        }
        let mut v = 0u64;
        for _ in 0..count {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    /// Unsigned order-0 Exp-Golomb, limited to codewords whose prefix is at
    /// most `max_prefix` zeros.
    pub fn read_ue(&mut self, max_prefix: u32) -> Result<u64, ReadError> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > max_prefix {
                return Err(ReadError::Overlong);
            }
        }
        let tail = self.read_bits(zeros)?;
        Ok(((1u64 << zeros) | tail) - 1)
    }

    pub fn read_se(&mut self, max_prefix: u32) -> Result<i64, ReadError> {
        self.read_ue(max_prefix).map(code_to_signed)
    }
}
