//! Image recovery from decoded block measurements.
//!
//! A smoothed projected Landweber iteration. Each pass:
//!
//! 1. adaptive Wiener smoothing of the current estimate,
//! 2. a Landweber step per block, `ŷ ← ŷ + Φᵀ(x̃ − Φŷ)`,
//! 3. hard thresholding of the orthonormal `B x B` block-DCT coefficients
//!    at the current threshold `τ`,
//! 4. a second Landweber step,
//! 5. `τ ← ρ·τ`.
//!
//! With orthonormal rows the Landweber step is the orthogonal projection onto
//! `{y : Φy = x̃}`, so every pass ends consistent with the measurements.

use std::f64::consts::PI;

use crate::error::{ImageError, RecoveryError, SensingError};
use crate::image_io::{Image, Plane};
use crate::sensing::{MeasurementGrid, SensingMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryConfig {
    pub max_iters: usize,
    /// Stop once `‖ŷₖ − ŷₖ₋₁‖ / ‖ŷₖ₋₁‖` drops below this.
    pub stop_tol: f64,
    /// Initial threshold `τ₀`.
    pub tau0: f64,
    /// Geometric decay `ρ` applied to `τ` after every pass.
    pub tau_decay: f64,
    /// Side of the square Wiener window; odd, at least 3.
    pub window: usize,
}

impl RecoveryConfig {
    /// Defaults for a stream quantized with step `q`: `τ₀ = 2q + 8`.
    pub fn for_step(step: f64) -> Self {
        Self {
            max_iters: 200,
            stop_tol: 1e-4,
            tau0: 2.0 * step + 8.0,
            tau_decay: 0.95,
            window: 3,
        }
    }

    pub fn validate(&self) -> Result<(), RecoveryError> {
        if self.max_iters == 0 {
            return Err(RecoveryError::InvalidConfig("max_iters must be positive"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(RecoveryError::InvalidConfig("stop_tol must be non-negative"));
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(RecoveryError::InvalidConfig("tau0 must be positive"));
        }
        if !(self.tau_decay > 0.0 && self.tau_decay < 1.0) {
            return Err(RecoveryError::InvalidConfig("tau_decay must lie in (0, 1)"));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(RecoveryError::InvalidConfig("window must be odd and at least 3"));
        }
        Ok(())
    }
}

/// Optional replacements for the step-dependent defaults of
/// [`RecoveryConfig::for_step`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RecoveryOverrides {
    pub max_iters: Option<usize>,
    pub stop_tol: Option<f64>,
    pub tau0: Option<f64>,
    pub tau_decay: Option<f64>,
    pub window: Option<usize>,
}

impl RecoveryOverrides {
    pub fn apply(&self, step: f64) -> RecoveryConfig {
        let base = RecoveryConfig::for_step(step);
        RecoveryConfig {
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            stop_tol: self.stop_tol.unwrap_or(base.stop_tol),
            tau0: self.tau0.unwrap_or(base.tau0),
            tau_decay: self.tau_decay.unwrap_or(base.tau_decay),
            window: self.window.unwrap_or(base.window),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recovery {
    /// Final estimate on the padded lattice, unclamped.
    pub plane: Plane,
    pub iterations: usize,
    pub converged: bool,
}

impl Recovery {
    pub fn to_image(&self, width: usize, height: usize) -> Result<Image, ImageError> {
        self.plane.to_image(width, height)
    }
}

fn check_grid(grid: &MeasurementGrid, matrix: &SensingMatrix) -> Result<(), RecoveryError> {
    if grid.lattice.block_size != matrix.block_size() {
        return Err(SensingError::DimensionMismatch {
            expected: matrix.block_size(),
            actual: grid.lattice.block_size,
        }
        .into());
    }
    if grid.reconstructed.len() != grid.len() {
        return Err(crate::error::CodecError::IncompleteGrid {
            expected: grid.len(),
            actual: grid.reconstructed.len(),
        }
        .into());
    }
    if let Some(bad) = grid.reconstructed.iter().find(|x| x.len() != matrix.rows()) {
        return Err(SensingError::DimensionMismatch {
            expected: matrix.rows(),
            actual: bad.len(),
        }
        .into());
    }
    Ok(())
}

/// Per-block back-projection `ŷ⁽ⁱ⁾ = Φᵀ x̃⁽ⁱ⁾`.
pub fn init_estimate(grid: &MeasurementGrid, matrix: &SensingMatrix) -> Result<Plane, RecoveryError> {
    check_grid(grid, matrix)?;
    let lattice = &grid.lattice;
    let mut plane = Plane::zeros(lattice.padded_width(), lattice.padded_height());
    let mut block = vec![0.0; lattice.block_len()];
    for (index, x) in grid.reconstructed.iter().enumerate() {
        let (row, col) = lattice.position(index);
        matrix.back_project_into(x, &mut block);
        plane.put_block(row, col, lattice.block_size, &block);
    }
    Ok(plane)
}

/// `ŷ⁽ⁱ⁾ ← ŷ⁽ⁱ⁾ + Φᵀ(x̃⁽ⁱ⁾ − Φŷ⁽ⁱ⁾)` for every block.
pub fn landweber_step(plane: &mut Plane, grid: &MeasurementGrid, matrix: &SensingMatrix) {
    let lattice = &grid.lattice;
    let b = lattice.block_size;
    let mut block = vec![0.0; lattice.block_len()];
    let mut residual = vec![0.0; matrix.rows()];
    for (index, x) in grid.reconstructed.iter().enumerate() {
        let (row, col) = lattice.position(index);
        plane.block(row, col, b, &mut block);
        matrix.measure_into(&block, &mut residual);
        for (r, xi) in residual.iter_mut().zip(x) {
            *r = xi - *r;
        }
        matrix.back_project_add(&residual, &mut block);
        plane.put_block(row, col, b, &block);
    }
}

/// `Σᵢ ‖x̃⁽ⁱ⁾ − Φŷ⁽ⁱ⁾‖²`.
pub fn data_misfit(plane: &Plane, grid: &MeasurementGrid, matrix: &SensingMatrix) -> f64 {
    let lattice = &grid.lattice;
    let mut block = vec![0.0; lattice.block_len()];
    let mut measured = vec![0.0; matrix.rows()];
    grid.reconstructed
        .iter()
        .enumerate()
        .map(|(index, x)| {
            let (row, col) = lattice.position(index);
            plane.block(row, col, lattice.block_size, &mut block);
            matrix.measure_into(&block, &mut measured);
            measured.iter().zip(x).map(|(m, x)| (x - m).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Local mean/variance adaptive Wiener filter over a `window x window`
/// neighborhood (edges replicated). The noise power is the mean local
/// variance over the whole plane.
pub fn wiener_filter(plane: &Plane, window: usize) -> Plane {
    let mean = box_mean(plane, window, |v| v);
    let mean_sq = box_mean(plane, window, |v| v * v);
    let var: Vec<f64> = mean
        .iter()
        .zip(&mean_sq)
        .map(|(m, s)| (s - m * m).max(0.0))
        .collect();
    let noise = var.iter().sum::<f64>() / var.len() as f64;
    let data = plane
        .data
        .iter()
        .zip(mean.iter().zip(&var))
        .map(|(&v, (&m, &lv))| {
            let gain = (lv - noise).max(0.0) / lv.max(noise).max(f64::MIN_POSITIVE);
            m + gain * (v - m)
        })
        .collect();
    Plane {
        width: plane.width,
        height: plane.height,
        data,
    }
}

fn box_mean(plane: &Plane, window: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let (w, h) = (plane.width, plane.height);
    let r = window / 2;
    let mut padded = vec![0.0; w + 2 * r];
    let mut horiz = vec![0.0; w * h];
    for (src, dst) in plane.data.chunks_exact(w).zip(horiz.chunks_exact_mut(w)) {
        for (i, p) in padded.iter_mut().enumerate() {
            *p = f(src[i.saturating_sub(r).min(w - 1)]);
        }
        for (x, d) in dst.iter_mut().enumerate() {
            *d = padded[x..x + window].iter().sum();
        }
    }
    let norm = (window * window) as f64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for d in 0..window {
            let sy = (y + d).saturating_sub(r).min(h - 1);
            for (o, &v) in dst.iter_mut().zip(&horiz[sy * w..(sy + 1) * w]) {
                *o += v;
            }
        }
        dst.iter_mut().for_each(|o| *o /= norm);
    }
    out
}

/// Orthonormal DCT-II applied separably to each `B x B` block.
#[derive(Debug, Clone)]
pub struct BlockDct {
    size: usize,
    /// `basis[k * size + n] = c_k cos(π (2n + 1) k / 2B)`.
    basis: Vec<f64>,
    transposed: Vec<f64>,
}

impl BlockDct {
    pub fn new(size: usize) -> Self {
        let n = size as f64;
        let mut basis = vec![0.0; size * size];
        let mut transposed = vec![0.0; size * size];
        for k in 0..size {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for i in 0..size {
                let v = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos();
                basis[k * size + i] = v;
                transposed[i * size + k] = v;
            }
        }
        Self {
            size,
            basis,
            transposed,
        }
    }

    /// `C · X · Cᵀ` on a row-major block.
    pub fn forward(&self, block: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        separable(self.size, &self.basis, &self.transposed, block, out, scratch);
    }

    /// `Cᵀ · X · C`.
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        separable(self.size, &self.transposed, &self.basis, coeffs, out, scratch);
    }
}

/// `out = M · X · Mᵀ`, given `M` and `Mᵀ` row-major.
fn separable(n: usize, m: &[f64], mt: &[f64], input: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    // scratch = M X
    for k in 0..n {
        let dst = &mut scratch[k * n..(k + 1) * n];
        dst.fill(0.0);
        for (&w, src) in m[k * n..(k + 1) * n].iter().zip(input.chunks_exact(n)) {
            axpy(w, src, dst);
        }
    }
    // out = scratch Mᵀ
    for (src, dst) in scratch.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        dst.fill(0.0);
        for (&v, row) in src.iter().zip(mt.chunks_exact(n)) {
            axpy(v, row, dst);
        }
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Zero every block-DCT coefficient with magnitude below `tau`.
pub fn threshold_block_dct(plane: &mut Plane, block_size: usize, dct: &BlockDct, tau: f64) {
    let len = block_size * block_size;
    let (mut block, mut coeffs, mut scratch) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for row in 0..plane.height / block_size {
        for col in 0..plane.width / block_size {
            plane.block(row, col, block_size, &mut block);
            dct.forward(&block, &mut coeffs, &mut scratch);
            coeffs
                .iter_mut()
                .filter(|c| c.abs() < tau)
                .for_each(|c| *c = 0.0);
            dct.inverse(&coeffs, &mut block, &mut scratch);
            plane.put_block(row, col, block_size, &block);
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Recover the padded image plane from decoded measurements.
pub fn recover(
    grid: &MeasurementGrid,
    matrix: &SensingMatrix,
    cfg: &RecoveryConfig,
) -> Result<Recovery, RecoveryError> {
    cfg.validate()?;
    let mut estimate = init_estimate(grid, matrix)?;
    let b = grid.lattice.block_size;
    let dct = BlockDct::new(b);
    let mut tau = cfg.tau0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let previous = estimate.data.clone();
        estimate = wiener_filter(&estimate, cfg.window);
        landweber_step(&mut estimate, grid, matrix);
        threshold_block_dct(&mut estimate, b, &dct, tau);
        landweber_step(&mut estimate, grid, matrix);
        tau *= cfg.tau_decay;

        let change: Vec<f64> = estimate
            .data
            .iter()
            .zip(&previous)
            .map(|(a, b)| a - b)
            .collect();
        let scale = norm(&previous);
        let relative = if scale > 0.0 {
            norm(&change) / scale
        } else {
            norm(&change)
        };
        if relative < cfg.stop_tol {
            converged = true;
            break;
        }
    }
    Ok(Recovery {
        plane: estimate,
        iterations,
        converged,
    })
}

/// Decode a serialized stream all the way to an image.
pub fn decode_image(
    bytes: &[u8],
    overrides: &RecoveryOverrides,
) -> Result<(Image, Recovery), RecoveryError> {
    let (header, grid) = crate::codec::decode_bytes(bytes)?;
    let matrix = SensingMatrix::with_rows(
        header.block_size as usize,
        header.measurements as usize,
        header.seed,
    )?;
    let recovery = recover(&grid, &matrix, &overrides.apply(header.step))?;
    let image = recovery.to_image(header.width as usize, header.height as usize)?;
    Ok((image, recovery))
}

/// Peak signal-to-noise ratio in dB for 8-bit images. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, ImageError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(ImageError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let sse: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.pixel_count() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::{to_blocks, ScanOrder};
    use crate::sensing::measure_image;

    fn clean_grid(img: &Image, b: usize, subrate: f64) -> (MeasurementGrid, SensingMatrix) {
        let matrix = SensingMatrix::generate(b, subrate, 11).unwrap();
        let (lattice, blocks) = to_blocks(img, b, ScanOrder::Raster).unwrap();
        let mut grid = measure_image(&matrix, &lattice, &blocks).unwrap();
        grid.reconstructed = grid.vectors.clone();
        (grid, matrix)
    }

    fn texture(w: usize, h: usize) -> Image {
        let samples = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (128.0 + 60.0 * (x / 5.0).sin() * (y / 7.0).cos() + x) as u8
            })
            .collect();
        Image::new(w, h, samples).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = texture(16, 16);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let base = Image::filled(8, 8, 100).unwrap();
        let shifted = Image::filled(8, 8, 116).unwrap();
        let p = psnr(&base, &shifted).unwrap();
        assert!((p - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-12);
        assert!((p - 24.05).abs() < 0.01);
        assert_eq!(p, psnr(&shifted, &base).unwrap());
        assert!(psnr(&base, &Image::filled(8, 4, 0).unwrap()).is_err());
    }

    #[test]
    fn dct_is_orthonormal() {
        let dct = BlockDct::new(8);
        let block: Vec<f64> = (0..64).map(|i| ((i * 29) % 64) as f64).collect();
        let (mut c, mut back, mut s) = (vec![0.0; 64], vec![0.0; 64], vec![0.0; 64]);
        dct.forward(&block, &mut c, &mut s);
        let e_in: f64 = block.iter().map(|v| v * v).sum();
        let e_out: f64 = c.iter().map(|v| v * v).sum();
        assert!((e_in - e_out).abs() < 1e-8 * e_in);
        dct.inverse(&c, &mut back, &mut s);
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        // constant block has only a DC coefficient
        dct.forward(&[3.0; 64], &mut c, &mut s);
        assert!((c[0] - 24.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_rate_back_projection_is_exact() {
        let img = texture(16, 16);
        let (grid, matrix) = clean_grid(&img, 8, 1.0);
        let plane = init_estimate(&grid, &matrix).unwrap();
        assert_eq!(plane.to_image(16, 16).unwrap(), img);
    }

    #[test]
    fn zero_measurements_give_zero_estimate() {
        let img = Image::filled(8, 8, 0).unwrap();
        let (grid, matrix) = clean_grid(&img, 4, 0.5);
        let plane = init_estimate(&grid, &matrix).unwrap();
        assert!(plane.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn back_projection_is_consistent() {
        let img = texture(16, 16);
        let (grid, matrix) = clean_grid(&img, 8, 0.3);
        let plane = init_estimate(&grid, &matrix).unwrap();
        assert!(data_misfit(&plane, &grid, &matrix) < 1e-16 * 16.0 * 16.0 * 255.0 * 255.0);
    }

    #[test]
    fn landweber_fixed_point() {
        let img = texture(16, 16);
        let (grid, matrix) = clean_grid(&img, 8, 0.5);
        let mut plane = init_estimate(&grid, &matrix).unwrap();
        let before = plane.clone();
        landweber_step(&mut plane, &grid, &matrix);
        for (a, b) in plane.data.iter().zip(&before.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn landweber_never_increases_misfit() {
        let img = texture(24, 16);
        let (grid, matrix) = clean_grid(&img, 8, 0.4);
        let mut plane = Plane::padded_from(&Image::filled(24, 16, 77).unwrap(), &grid.lattice);
        let mut misfit = data_misfit(&plane, &grid, &matrix);
        for _ in 0..3 {
            plane = wiener_filter(&plane, 3);
            let smoothed = data_misfit(&plane, &grid, &matrix);
            landweber_step(&mut plane, &grid, &matrix);
            let after = data_misfit(&plane, &grid, &matrix);
            assert!(after <= smoothed * (1.0 + 1e-12) + 1e-9);
            misfit = misfit.min(after);
        }
        assert!(misfit < 1e-9);
    }

    #[test]
    fn wiener_keeps_constant_planes() {
        let plane = Plane {
            width: 5,
            height: 4,
            data: vec![42.0; 20],
        };
        let out = wiener_filter(&plane, 3);
        assert!(out.data.iter().all(|&v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn recovery_is_deterministic() {
        let img = texture(32, 32);
        let (grid, matrix) = clean_grid(&img, 8, 0.3);
        let cfg = RecoveryConfig {
            max_iters: 15,
            ..RecoveryConfig::for_step(1.0)
        };
        let a = recover(&grid, &matrix, &cfg).unwrap();
        let b = recover(&grid, &matrix, &cfg).unwrap();
        assert_eq!(a.plane, b.plane);
        assert_eq!(a.iterations, 15);
    }

    #[test]
    fn recovery_improves_on_back_projection() {
        let img = texture(64, 64);
        let (grid, matrix) = clean_grid(&img, 8, 0.3);
        let init = init_estimate(&grid, &matrix).unwrap().to_image(64, 64).unwrap();
        let out = recover(&grid, &matrix, &RecoveryConfig::for_step(0.5)).unwrap();
        let rec = out.to_image(64, 64).unwrap();
        assert!(psnr(&img, &rec).unwrap() > psnr(&img, &init).unwrap() + 3.0);
    }

    #[test]
    fn config_validation() {
        let good = RecoveryConfig::for_step(4.0);
        assert_eq!(good.tau0, 16.0);
        assert!(good.validate().is_ok());
        for bad in [
            RecoveryConfig { window: 4, ..good },
            RecoveryConfig { window: 1, ..good },
            RecoveryConfig { tau_decay: 1.0, ..good },
            RecoveryConfig { max_iters: 0, ..good },
            RecoveryConfig { tau0: 0.0, ..good },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let img = texture(16, 16);
        let (mut grid, matrix) = clean_grid(&img, 8, 0.5);
        grid.reconstructed.pop();
        assert!(init_estimate(&grid, &matrix).is_err());
    }
}
