//! Grayscale image container, PGM/raw I/O and the block lattice.
//!
//! Blocks are always flattened row-major inside the block. The order in
//! which blocks are visited is a [`ScanOrder`].

use std::fmt;

use crate::error::{ImageError, PgmError};

/// 8-bit grayscale image, samples stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        if samples.len() != width * height {
            return Err(ImageError::SampleCount {
                expected: width * height,
                actual: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }
}

/// Parse a binary PGM (`P5`, maxval 255).
pub fn load_pgm(bytes: &[u8]) -> Result<Image, PgmError> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    match bytes.get(..2) {
        Some(b"P5") => cursor.pos = 2,
        Some([b'P', _]) => return Err(PgmError::UnsupportedFormat),
        _ => return Err(PgmError::BadMagic),
    }
    let width = cursor.field("width")?;
    let height = cursor.field("height")?;
    let maxval = cursor.field("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::MalformedHeader("zero image dimension"));
    }
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(PgmError::MalformedHeader("missing raster separator")),
    }
    let expected = width
        .checked_mul(height)
        .ok_or(PgmError::MalformedHeader("image dimensions overflow"))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(PgmError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    Ok(Image::new(width, height, payload[..expected].to_vec()).expect("dimensions checked"))
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn field(&mut self, what: &'static str) -> Result<usize, PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::MalformedHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::MalformedHeader(what))
    }
}

/// Serialize as binary PGM.
pub fn write_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.samples);
    out
}

/// Headerless 8-bit row-major raster with externally supplied dimensions.
pub fn load_raw(bytes: &[u8], width: usize, height: usize) -> Result<Image, ImageError> {
    let expected = width * height;
    if bytes.len() != expected {
        return Err(ImageError::SampleCount {
            expected,
            actual: bytes.len(),
        });
    }
    Image::new(width, height, bytes.to_vec())
}

/// Order in which blocks of the lattice are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ScanOrder {
    /// Left to right, then top to bottom.
    #[default]
    Raster,
    /// Top to bottom, then left to right.
    ColumnMajor,
}

impl ScanOrder {
    pub fn code(self) -> u8 {
        match self {
            ScanOrder::Raster => 0,
            ScanOrder::ColumnMajor => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ScanOrder::Raster),
            1 => Some(ScanOrder::ColumnMajor),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanOrder::Raster => "raster",
            ScanOrder::ColumnMajor => "column",
        }
    }
}

impl fmt::Display for ScanOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-overlapping `B x B` tiling of a (padded) image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLattice {
    pub block_size: usize,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub scan_order: ScanOrder,
}

impl BlockLattice {
    /// Lattice covering a `width x height` image, rounding each dimension up
    /// to a multiple of `block_size`.
    pub fn covering(
        width: usize,
        height: usize,
        block_size: usize,
        scan_order: ScanOrder,
    ) -> Result<Self, ImageError> {
        if block_size < 2 {
            return Err(ImageError::BlockSize(block_size));
        }
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        Ok(Self {
            block_size,
            blocks_x: width.div_ceil(block_size),
            blocks_y: height.div_ceil(block_size),
            scan_order,
        })
    }

    /// Number of blocks `n`.
    pub fn len(&self) -> usize {
        self.blocks_x * self.blocks_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_len(&self) -> usize {
        self.block_size * self.block_size
    }

    pub fn padded_width(&self) -> usize {
        self.blocks_x * self.block_size
    }

    pub fn padded_height(&self) -> usize {
        self.blocks_y * self.block_size
    }

    /// `(row, col)` of the block visited at position `index` of the scan.
    pub fn position(&self, index: usize) -> (usize, usize) {
        match self.scan_order {
            ScanOrder::Raster => (index / self.blocks_x, index % self.blocks_x),
            ScanOrder::ColumnMajor => (index % self.blocks_y, index / self.blocks_y),
        }
    }

    /// Scan position of the block at `(row, col)`.
    pub fn index_of(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.blocks_y && col < self.blocks_x);
        match self.scan_order {
            ScanOrder::Raster => row * self.blocks_x + col,
            ScanOrder::ColumnMajor => col * self.blocks_y + row,
        }
    }
}

/// Real-valued sample grid used during reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Edge-replicated copy of `img` padded to the lattice dimensions.
    pub fn padded_from(img: &Image, lattice: &BlockLattice) -> Self {
        let (pw, ph) = (lattice.padded_width(), lattice.padded_height());
        let mut data = Vec::with_capacity(pw * ph);
        for y in 0..ph {
            let sy = y.min(img.height - 1);
            for x in 0..pw {
                data.push(img.get(x.min(img.width - 1), sy) as f64);
            }
        }
        Self {
            width: pw,
            height: ph,
            data,
        }
    }

    pub fn from_blocks(blocks: &[Vec<f64>], lattice: &BlockLattice) -> Self {
        let mut plane = Plane::zeros(lattice.padded_width(), lattice.padded_height());
        for (index, block) in blocks.iter().enumerate() {
            let (row, col) = lattice.position(index);
            plane.put_block(row, col, lattice.block_size, block);
        }
        plane
    }

    pub fn block(&self, row: usize, col: usize, b: usize, out: &mut [f64]) {
        for (dy, chunk) in out.chunks_exact_mut(b).enumerate() {
            let start = (row * b + dy) * self.width + col * b;
            chunk.copy_from_slice(&self.data[start..start + b]);
        }
    }

    pub fn put_block(&mut self, row: usize, col: usize, b: usize, values: &[f64]) {
        for (dy, chunk) in values.chunks_exact(b).enumerate() {
            let start = (row * b + dy) * self.width + col * b;
            self.data[start..start + b].copy_from_slice(chunk);
        }
    }

    /// All blocks of the lattice, in scan order.
    pub fn to_blocks(&self, lattice: &BlockLattice) -> Vec<Vec<f64>> {
        (0..lattice.len())
            .map(|index| {
                let (row, col) = lattice.position(index);
                let mut block = vec![0.0; lattice.block_len()];
                self.block(row, col, lattice.block_size, &mut block);
                block
            })
            .collect()
    }

    /// Round, clamp to `[0, 255]` and crop to `width x height`.
    pub fn to_image(&self, width: usize, height: usize) -> Result<Image, ImageError> {
        if width > self.width || height > self.height {
            return Err(ImageError::CropOutOfBounds);
        }
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            let row = &self.data[y * self.width..y * self.width + width];
            samples.extend(row.iter().map(|&v| quantize_sample(v)));
        }
        Image::new(width, height, samples)
    }
}

fn quantize_sample(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

/// Split `img` into `B x B` blocks (row-major inside each block), visiting
/// blocks in `order`. Dimensions that are not a multiple of `B` are padded by
/// edge replication.
pub fn to_blocks(
    img: &Image,
    block_size: usize,
    order: ScanOrder,
) -> Result<(BlockLattice, Vec<Vec<f64>>), ImageError> {
    let lattice = BlockLattice::covering(img.width, img.height, block_size, order)?;
    let plane = Plane::padded_from(img, &lattice);
    Ok((lattice, plane.to_blocks(&lattice)))
}

/// Inverse of [`to_blocks`]: reassemble, crop to the original size, round and
/// clamp.
pub fn from_blocks(
    blocks: &[Vec<f64>],
    lattice: &BlockLattice,
    original_width: usize,
    original_height: usize,
) -> Result<Image, ImageError> {
    if blocks.len() != lattice.len() {
        return Err(ImageError::BlockCount {
            expected: lattice.len(),
            actual: blocks.len(),
        });
    }
    if let Some(bad) = blocks.iter().find(|b| b.len() != lattice.block_len()) {
        return Err(ImageError::BlockLength {
            expected: lattice.block_len(),
            actual: bad.len(),
        });
    }
    Plane::from_blocks(blocks, lattice).to_image(original_width, original_height)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::new(w, h, (0..w * h).map(|i| (i * 7 % 256) as u8).collect()).unwrap()
    }

    #[test]
    fn pgm_direct_payload() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let img = load_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.samples(), &[0, 255, 128, 64]);
    }

    #[test]
    fn pgm_comments_and_roundtrip() {
        let mut bytes = b"P5 # produced by hand\n3\n# height next\n1 255 ".to_vec();
        bytes.extend_from_slice(&[9, 10, 11]);
        let img = load_pgm(&bytes).unwrap();
        assert_eq!(img.samples(), &[9, 10, 11]);
        assert_eq!(load_pgm(&write_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn pgm_errors_are_distinct() {
        let mut truncated = b"P5\n2 2\n255\n".to_vec();
        truncated.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(
            load_pgm(&truncated),
            Err(PgmError::TruncatedPayload {
                expected: 4,
                actual: 3
            })
        ));
        assert!(matches!(
            load_pgm(b"P2\n2 2\n255\n0 0 0 0"),
            Err(PgmError::UnsupportedFormat)
        ));
        assert!(matches!(
            load_pgm(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0"),
            Err(PgmError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            load_pgm(b"P5\nx 2\n255\n"),
            Err(PgmError::MalformedHeader(_))
        ));
        assert!(matches!(load_pgm(b"GIF89a"), Err(PgmError::BadMagic)));
    }

    #[test]
    fn raster_block_order() {
        // 4x4 image whose 2x2 blocks are tagged by their quadrant
        let samples = vec![
            1, 1, 2, 2, //
            1, 1, 2, 2, //
            3, 3, 4, 4, //
            3, 3, 4, 4,
        ];
        let img = Image::new(4, 4, samples).unwrap();
        let (lattice, blocks) = to_blocks(&img, 2, ScanOrder::Raster).unwrap();
        assert_eq!(lattice.len(), 4);
        let tags: Vec<f64> = blocks.iter().map(|b| b[0]).collect();
        assert_eq!(tags, vec![1.0, 2.0, 3.0, 4.0]);

        let (_, blocks) = to_blocks(&img, 2, ScanOrder::ColumnMajor).unwrap();
        let tags: Vec<f64> = blocks.iter().map(|b| b[0]).collect();
        assert_eq!(tags, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn single_block_identity() {
        let img = Image::new(2, 2, vec![5, 6, 7, 8]).unwrap();
        let (_, blocks) = to_blocks(&img, 2, ScanOrder::Raster).unwrap();
        assert_eq!(blocks, vec![vec![5.0, 6.0, 7.0, 8.0]]);
    }

    #[test]
    fn edge_replication_and_crop() {
        let img = Image::new(3, 3, vec![1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        let (lattice, blocks) = to_blocks(&img, 2, ScanOrder::Raster).unwrap();
        assert_eq!((lattice.blocks_x, lattice.blocks_y), (2, 2));
        assert_eq!(blocks.len(), 4);
        // top-right block holds column 2 replicated into the padding column
        assert_eq!(blocks[1], vec![3.0, 3.0, 6.0, 6.0]);
        assert_eq!(blocks[3], vec![9.0, 9.0, 9.0, 9.0]);
        assert_eq!(from_blocks(&blocks, &lattice, 3, 3).unwrap(), img);
    }

    #[test]
    fn clamp_rule() {
        let lattice = BlockLattice::covering(2, 1, 2, ScanOrder::Raster).unwrap();
        let blocks = vec![vec![300.0, -4.2, 0.0, 0.0]];
        let img = from_blocks(&blocks, &lattice, 2, 1).unwrap();
        assert_eq!(img.samples(), &[255, 0]);
    }

    #[test]
    fn block_count_mismatch() {
        let lattice = BlockLattice::covering(4, 4, 2, ScanOrder::Raster).unwrap();
        let err = from_blocks(&[vec![0.0; 4]], &lattice, 4, 4).unwrap_err();
        assert!(matches!(
            err,
            ImageError::BlockCount {
                expected: 4,
                actual: 1
            }
        ));
    }

    #[test]
    fn rejects_tiny_block_size() {
        assert!(matches!(
            to_blocks(&ramp(4, 4), 1, ScanOrder::Raster),
            Err(ImageError::BlockSize(1))
        ));
    }

    #[test]
    fn lattice_position_index_inverse() {
        for order in [ScanOrder::Raster, ScanOrder::ColumnMajor] {
            let lattice = BlockLattice::covering(40, 24, 8, order).unwrap();
            for i in 0..lattice.len() {
                let (r, c) = lattice.position(i);
                assert_eq!(lattice.index_of(r, c), i);
            }
        }
    }

    #[test]
    fn raw_loader_checks_length() {
        assert!(load_raw(&[1, 2, 3], 2, 2).is_err());
        assert_eq!(load_raw(&[1, 2, 3, 4], 2, 2).unwrap().get(1, 1), 4);
    }
}
