//! Entropy-based bitrate estimate over pooled quantizer indices.

use std::collections::BTreeMap;

use crate::error::RateError;

/// Bits used to signal a prediction mode per block.
pub const MODE_FLAG_BITS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Empirical Shannon entropy (base 2) of the index histogram.
    pub entropy_bits_per_index: f64,
    /// Entropy times index count.
    pub index_bits: f64,
    /// `2n / pixels` when modes are signaled, else 0.
    pub mode_overhead_bpp: f64,
    /// `index_bits / pixels`.
    pub index_bpp: f64,
    pub total_bpp: f64,
}

/// Histogram of index values, ordered by value.
pub fn histogram(indices: &[i64]) -> BTreeMap<i64, u64> {
    let mut hist = BTreeMap::new();
    for &s in indices {
        *hist.entry(s).or_insert(0) += 1;
    }
    hist
}

/// Shannon entropy (bits) of a histogram.
pub fn entropy(hist: &BTreeMap<i64, u64>) -> f64 {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = hist
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // a single-symbol histogram gives -0.0
    h.max(0.0)
}

/// Estimate the bitrate of a coded image from its pooled indices.
///
/// `image_pixels` is the pixel count the rate is normalized by; for images
/// whose dimensions are multiples of `B` this equals `n·B²`, so the mode
/// overhead is exactly `2/B²`.
pub fn estimate_rate(
    indices: &[i64],
    measurements: usize,
    image_pixels: usize,
    modes_signaled: bool,
) -> Result<RateEstimate, RateError> {
    if indices.is_empty() || measurements == 0 {
        return Err(RateError::Empty);
    }
    if image_pixels == 0 {
        return Err(RateError::NoPixels);
    }
    let blocks = indices.len().div_ceil(measurements);
    let entropy_bits_per_index = entropy(&histogram(indices));
    let index_bits = entropy_bits_per_index * indices.len() as f64;
    let pixels = image_pixels as f64;
    let mode_overhead_bpp = if modes_signaled {
        (MODE_FLAG_BITS as usize * blocks) as f64 / pixels
    } else {
        0.0
    };
    let index_bpp = index_bits / pixels;
    Ok(RateEstimate {
        entropy_bits_per_index,
        index_bits,
        mode_overhead_bpp,
        index_bpp,
        total_bpp: index_bpp + mode_overhead_bpp,
    })
}
