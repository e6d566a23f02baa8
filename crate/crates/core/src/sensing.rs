//! Block measurement operator and per-block acquisition.
//!
//! The operator is an `M x B²` matrix with orthonormal rows, regenerated on
//! both sides of the channel from `(B, M, seed)`. Generator version 1:
//!
//! 1. `ChaCha20Rng::seed_from_u64(seed)` draws `M·B²` standard normals
//!    (`rand_distr::StandardNormal`) in row-major order.
//! 2. Rows are orthonormalized in order by two passes of classical
//!    Gram–Schmidt.
//! 3. Each row is negated if needed so its first nonzero entry is positive.
//!
//! A rank-deficient draw is retried with `seed + 1`, up to
//! [`MAX_REGENERATIONS`] times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::SensingError;
use crate::image_io::BlockLattice;

pub const GENERATOR_VERSION: u8 = 1;
pub const MAX_REGENERATIONS: u32 = 8;

/// Residual norm (relative to the raw row) below which a row is considered
/// linearly dependent on its predecessors.
const DEPENDENCE_TOL: f64 = 1e-10;

/// `M_B = round(S·B²)`, ties rounded up.
pub fn measurement_count(block_size: usize, subrate: f64) -> usize {
    let n = (block_size * block_size) as f64;
    (subrate * n + 0.5).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    block_size: usize,
    rows: usize,
    cols: usize,
    /// Seed requested by the caller (the one carried in stream headers).
    seed: u64,
    /// Seed of the accepted draw; differs from `seed` only after a retry.
    draw_seed: u64,
    data: Vec<f64>,
}

impl SensingMatrix {
    /// Build `Φ_B` for block size `B` at subrate `S`.
    pub fn generate(block_size: usize, subrate: f64, seed: u64) -> Result<Self, SensingError> {
        if !(subrate > 0.0 && subrate <= 1.0) {
            return Err(SensingError::InvalidSubrate(subrate));
        }
        Self::with_rows(block_size, measurement_count(block_size, subrate), seed)
    }

    /// Build `Φ_B` with an explicit measurement count `M_B`.
    pub fn with_rows(block_size: usize, rows: usize, seed: u64) -> Result<Self, SensingError> {
        if block_size < 2 {
            return Err(SensingError::BlockSize(block_size));
        }
        let cols = block_size * block_size;
        if rows == 0 || rows > cols {
            return Err(SensingError::MeasurementCount { rows, cols });
        }
        for attempt in 0..=MAX_REGENERATIONS {
            let draw_seed = seed.wrapping_add(attempt as u64);
            if let Some(data) = orthonormal_gaussian(rows, cols, draw_seed) {
                return Ok(Self {
                    block_size,
                    rows,
                    cols,
                    seed,
                    draw_seed,
                    data,
                });
            }
        }
        Err(SensingError::Degenerate {
            seed,
            attempts: MAX_REGENERATIONS + 1,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// `M_B`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `B²`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draw_seed(&self) -> u64 {
        self.draw_seed
    }

    pub fn subrate(&self) -> f64 {
        self.rows as f64 / self.cols as f64
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// `x = Φ_B y` for one flattened block.
    pub fn measure(&self, block: &[f64]) -> Result<Vec<f64>, SensingError> {
        if block.len() != self.cols {
            return Err(SensingError::DimensionMismatch {
                expected: self.cols,
                actual: block.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        self.measure_into(block, &mut out);
        Ok(out)
    }

    pub fn measure_into(&self, block: &[f64], out: &mut [f64]) {
        debug_assert_eq!(block.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, block);
        }
    }

    /// `y = Φ_Bᵀ x`.
    pub fn back_project(&self, x: &[f64]) -> Result<Vec<f64>, SensingError> {
        if x.len() != self.rows {
            return Err(SensingError::DimensionMismatch {
                expected: self.rows,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        self.back_project_into(x, &mut out);
        Ok(out)
    }

    pub fn back_project_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.back_project_add(x, out);
    }

    /// `out += Φ_Bᵀ x`.
    pub fn back_project_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if xi != 0.0 {
                for (o, &r) in out.iter_mut().zip(row) {
                    *o += xi * r;
                }
            }
        }
    }
}

/// Eight independent accumulators so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn orthonormal_gaussian(rows: usize, cols: usize, seed: u64) -> Option<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();

    for i in 0..rows {
        let (done, rest) = data.split_at_mut(i * cols);
        let row = &mut rest[..cols];
        let raw_norm = dot(row, row).sqrt();
        for _pass in 0..2 {
            for prev in done.chunks_exact(cols) {
                let c = dot(prev, row);
                for (r, &p) in row.iter_mut().zip(prev) {
                    *r -= c * p;
                }
            }
        }
        let norm = dot(row, row).sqrt();
        if !(norm > DEPENDENCE_TOL * raw_norm) {
            return None;
        }
        let sign = match row.iter().find(|v| **v != 0.0) {
            Some(v) if *v < 0.0 => -1.0,
            _ => 1.0,
        };
        let scale = sign / norm;
        row.iter_mut().for_each(|r| *r *= scale);
    }
    Some(data)
}

/// Measurements of every block on a lattice, plus the causally reconstructed
/// measurements produced by the predictive coder.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGrid {
    pub lattice: BlockLattice,
    /// `M_B`.
    pub measurements: usize,
    /// Clean measurements `x⁽ⁱ⁾` in scan order. Empty on the decoder side.
    pub vectors: Vec<Vec<f64>>,
    /// Reconstructed measurements `x̃⁽ⁱ⁾` in scan order, filled as coding
    /// proceeds.
    pub reconstructed: Vec<Vec<f64>>,
}

impl MeasurementGrid {
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }
}

/// Apply `Φ_B` to every block (in scan order).
pub fn measure_image(
    matrix: &SensingMatrix,
    lattice: &BlockLattice,
    blocks: &[Vec<f64>],
) -> Result<MeasurementGrid, SensingError> {
    if blocks.len() != lattice.len() {
        return Err(SensingError::DimensionMismatch {
            expected: lattice.len(),
            actual: blocks.len(),
        });
    }
    if lattice.block_size != matrix.block_size() {
        return Err(SensingError::DimensionMismatch {
            expected: matrix.block_size(),
            actual: lattice.block_size,
        });
    }
    let vectors = blocks
        .par_iter()
        .map(|b| matrix.measure(b))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasurementGrid {
        lattice: *lattice,
        measurements: matrix.rows(),
        vectors,
        reconstructed: Vec::new(),
    })
}
