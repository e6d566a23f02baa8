//! `.sdpc` container: fixed big-endian header followed by a bit-packed body.
//!
//! Header (38 bytes, big-endian):
//!
//! | offset | size | field                                    |
//! |-------:|-----:|------------------------------------------|
//! | 0      | 4    | magic `SDPC`                             |
//! | 4      | 1    | format version (1)                       |
//! | 5      | 1    | matrix generator version (1)             |
//! | 6      | 1    | scan order (0 raster, 1 column-major)    |
//! | 7      | 1    | mode policy (0 SDPC, 1 DPCM, 2 none)     |
//! | 8      | 1    | candidate mode mask (bit k = mode k)     |
//! | 9      | 1    | in-block layout (0 row-major)            |
//! | 10     | 2    | block size `B`                           |
//! | 12     | 2    | measurements per block `M_B`             |
//! | 14     | 4    | image width                              |
//! | 18     | 4    | image height                             |
//! | 22     | 8    | matrix seed                              |
//! | 30     | 8    | quantizer step, IEEE-754 binary64        |
//!
//! Body, MSB first, per block in scan order: a 2-bit mode flag (SDPC policy
//! only) followed by `M_B` signed order-0 Exp-Golomb indices. The last byte
//! is zero-padded.

pub mod bits;
pub mod rate;

use crate::codec::{ModePolicy, ModeSet, PredictionMode};
use crate::error::StreamError;
use crate::image_io::{BlockLattice, ScanOrder};
use crate::sensing::GENERATOR_VERSION;

use bits::{BitReader, BitWriter, ReadError};

pub use rate::{entropy, estimate_rate, histogram, RateEstimate, MODE_FLAG_BITS};

pub const MAGIC: [u8; 4] = *b"SDPC";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 38;
/// Indices must satisfy `|s| < 2³¹`.
pub const INDEX_LIMIT: i64 = 1 << 31;
/// Longest Exp-Golomb prefix produced for an in-range index.
const MAX_PREFIX: u32 = 32;
const LAYOUT_ROW_MAJOR: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub block_size: u16,
    pub measurements: u16,
    pub step: f64,
    pub seed: u64,
    pub generator_version: u8,
    pub scan_order: ScanOrder,
    pub mode_policy: ModePolicy,
    /// Modes the encoder was allowed to pick from; empty unless the policy
    /// signals modes.
    pub candidate_modes: ModeSet,
}

impl StreamHeader {
    pub fn lattice(&self) -> Result<BlockLattice, StreamError> {
        BlockLattice::covering(
            self.width as usize,
            self.height as usize,
            self.block_size as usize,
            self.scan_order,
        )
        .map_err(|_| StreamError::InvalidHeader("image or block dimensions"))
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4] = FORMAT_VERSION;
        out[5] = self.generator_version;
        out[6] = self.scan_order.code();
        out[7] = self.mode_policy.code();
        out[8] = self.candidate_modes.bits();
        out[9] = LAYOUT_ROW_MAJOR;
        out[10..12].copy_from_slice(&self.block_size.to_be_bytes());
        out[12..14].copy_from_slice(&self.measurements.to_be_bytes());
        out[14..18].copy_from_slice(&self.width.to_be_bytes());
        out[18..22].copy_from_slice(&self.height.to_be_bytes());
        out[22..30].copy_from_slice(&self.seed.to_be_bytes());
        out[30..38].copy_from_slice(&self.step.to_bits().to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StreamError> {
        if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
            return Err(StreamError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(StreamError::TruncatedHeader);
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(StreamError::UnsupportedVersion(bytes[4]));
        }
        if bytes[5] != GENERATOR_VERSION {
            return Err(StreamError::UnsupportedGenerator(bytes[5]));
        }
        let scan_order =
            ScanOrder::from_code(bytes[6]).ok_or(StreamError::InvalidHeader("scan order"))?;
        let mode_policy =
            ModePolicy::from_code(bytes[7]).ok_or(StreamError::InvalidHeader("mode policy"))?;
        let candidate_modes =
            ModeSet::from_bits(bytes[8]).ok_or(StreamError::InvalidHeader("mode mask"))?;
        if bytes[9] != LAYOUT_ROW_MAJOR {
            return Err(StreamError::InvalidHeader("block layout"));
        }
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_be_bytes(bytes[i..i + 8].try_into().unwrap());
        let header = StreamHeader {
            width: u32_at(14),
            height: u32_at(18),
            block_size: u16_at(10),
            measurements: u16_at(12),
            step: f64::from_bits(u64_at(30)),
            seed: u64_at(22),
            generator_version: bytes[5],
            scan_order,
            mode_policy,
            candidate_modes,
        };
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.generator_version != GENERATOR_VERSION {
            return Err(StreamError::UnsupportedGenerator(self.generator_version));
        }
        if self.block_size < 2 {
            return Err(StreamError::InvalidHeader("block size"));
        }
        let b2 = self.block_size as u32 * self.block_size as u32;
        if self.measurements == 0 || self.measurements as u32 > b2 {
            return Err(StreamError::InvalidHeader("measurement count"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(StreamError::InvalidHeader("image dimensions"));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(StreamError::InvalidHeader("quantizer step"));
        }
        let mask_ok = if self.mode_policy.signals_modes() {
            !self.candidate_modes.is_empty()
        } else {
            self.candidate_modes.is_empty()
        };
        if !mask_ok {
            return Err(StreamError::InvalidHeader("mode mask"));
        }
        Ok(())
    }
}

/// Mode flag (present iff the policy signals modes) and quantizer indices of
/// one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedBlock {
    pub mode: Option<PredictionMode>,
    pub indices: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStream {
    pub header: StreamHeader,
    pub blocks: Vec<CodedBlock>,
}

impl EncodedStream {
    pub fn to_bytes(&self) -> Result<Vec<u8>, StreamError> {
        write_stream(&self.header, &self.blocks)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StreamError> {
        read_stream(bytes)
    }

    /// Body length in bits, excluding header and padding.
    pub fn payload_bits(&self) -> u64 {
        payload_bits(&self.blocks)
    }

    /// All indices in scan order.
    pub fn indices(&self) -> Vec<i64> {
        self.blocks
            .iter()
            .flat_map(|b| b.indices.iter().copied())
            .collect()
    }
}

pub fn payload_bits(blocks: &[CodedBlock]) -> u64 {
    blocks
        .iter()
        .map(|b| {
            let flag = if b.mode.is_some() { MODE_FLAG_BITS } else { 0 } as u64;
            flag + b
                .indices
                .iter()
                .map(|&s| bits::se_len(s) as u64)
                .sum::<u64>()
        })
        .sum()
}

/// Serialize a header and its per-block payload.
pub fn write_stream(header: &StreamHeader, blocks: &[CodedBlock]) -> Result<Vec<u8>, StreamError> {
    header.validate()?;
    let lattice = header.lattice()?;
    if blocks.len() != lattice.len() {
        return Err(StreamError::BlockCount {
            expected: lattice.len(),
            actual: blocks.len(),
        });
    }
    let m = header.measurements as usize;
    let mut w = BitWriter::new();
    for (block, coded) in blocks.iter().enumerate() {
        if coded.mode.is_some() != header.mode_policy.signals_modes() {
            return Err(StreamError::PolicyMismatch { block });
        }
        if coded.indices.len() != m {
            return Err(StreamError::IndexCount {
                block,
                expected: m,
                actual: coded.indices.len(),
            });
        }
        if let Some(mode) = coded.mode {
            w.write_bits(mode.code() as u64, MODE_FLAG_BITS);
        }
        for &s in &coded.indices {
            if s.unsigned_abs() >= INDEX_LIMIT as u64 {
                return Err(StreamError::IndexOverflow { block, value: s });
            }
            w.write_se(s);
        }
    }
    let mut out = header.to_bytes().to_vec();
    out.extend_from_slice(&w.finish());
    Ok(out)
}

/// Parse a complete stream; the exact inverse of [`write_stream`].
pub fn read_stream(bytes: &[u8]) -> Result<EncodedStream, StreamError> {
    let header = StreamHeader::from_bytes(bytes)?;
    let lattice = header.lattice()?;
    let m = header.measurements as usize;
    let mut r = BitReader::new(&bytes[HEADER_LEN..]);
    let mut blocks = Vec::with_capacity(lattice.len());
    for block in 0..lattice.len() {
        let fail = |e: ReadError| match e {
            ReadError::Eof => StreamError::Truncated { block },
            ReadError::Overlong => StreamError::IndexOverflow {
                block,
                value: INDEX_LIMIT,
            },
        };
        let mode = if header.mode_policy.signals_modes() {
            let code = r.read_bits(MODE_FLAG_BITS).map_err(fail)? as u8;
            Some(PredictionMode::from_code(code).expect("2-bit code"))
        } else {
            None
        };
        let mut indices = Vec::with_capacity(m);
        for _ in 0..m {
            let s = r.read_se(MAX_PREFIX).map_err(fail)?;
            if s.unsigned_abs() >= INDEX_LIMIT as u64 {
                return Err(StreamError::IndexOverflow { block, value: s });
            }
            indices.push(s);
        }
        blocks.push(CodedBlock { mode, indices });
    }
    // only zero padding bits may follow, and never a whole extra byte
    let leftover = r.remaining();
    if leftover >= 8 || r.read_bits(leftover as u32).map_or(true, |v| v != 0) {
        return Err(StreamError::TrailingData);
    }
    Ok(EncodedStream { header, blocks })
}
