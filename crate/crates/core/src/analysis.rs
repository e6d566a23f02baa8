//! Measurement-domain correlation study and rate-distortion sweeps.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bitstream::{estimate_rate, RateEstimate, MODE_FLAG_BITS};
use crate::codec::{
    build_candidates, encode_with_matrix, select_mode, CodecConfig, ModePolicy, ModeSet,
};
use crate::error::AnalysisError;
use crate::image_io::{to_blocks, Image, ScanOrder};
use crate::reconstruction::{psnr, recover, RecoveryOverrides};
use crate::sensing::{measure_image, measurement_count, MeasurementGrid, SensingMatrix};

/// `uᵀv / (‖u‖‖v‖)`, defined as 0 when either vector is zero.
pub fn correlation(u: &[f64], v: &[f64]) -> Result<f64, AnalysisError> {
    if u.len() != v.len() {
        return Err(AnalysisError::LengthMismatch(u.len(), v.len()));
    }
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub scan_order: ScanOrder,
    /// Correlation with the previous block in scan order.
    pub cc1: Vec<Option<f64>>,
    /// Correlation with the selected directional prediction.
    pub cc2: Vec<Option<f64>>,
    pub acc1: f64,
    pub acc2: f64,
    /// Pairs involving an all-zero vector, reported as correlation 0.
    pub zero_vector_pairs: usize,
    /// Blocks chosen per mode, indexed by mode code.
    pub mode_counts: [usize; 4],
}

impl CorrelationReport {
    pub fn cc1_excluded(&self) -> usize {
        self.cc1.iter().filter(|c| c.is_none()).count()
    }

    pub fn cc2_excluded(&self) -> usize {
        self.cc2.iter().filter(|c| c.is_none()).count()
    }

    /// Share of each mode among blocks that selected one, in percent.
    pub fn mode_percentages(&self) -> [f64; 4] {
        let total: usize = self.mode_counts.iter().sum();
        let mut out = [0.0; 4];
        if total > 0 {
            for (o, &c) in out.iter_mut().zip(&self.mode_counts) {
                *o = 100.0 * c as f64 / total as f64;
            }
        }
        out
    }
}

fn mean_defined(values: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Correlation and mode-usage statistics on unquantized measurements.
///
/// Directional selection runs with the clean measurements standing in for
/// the reconstructed ones, i.e. the limit of a vanishing quantizer step.
pub fn acc_study(
    img: &Image,
    block_size: usize,
    subrate: f64,
    seed: u64,
    scan_order: ScanOrder,
) -> Result<CorrelationReport, AnalysisError> {
    let matrix = SensingMatrix::generate(block_size, subrate, seed)
        .map_err(crate::error::CodecError::from)?;
    let (lattice, blocks) =
        to_blocks(img, block_size, scan_order).map_err(crate::error::CodecError::from)?;
    let mut grid =
        measure_image(&matrix, &lattice, &blocks).map_err(crate::error::CodecError::from)?;
    grid.reconstructed = grid.vectors.clone();

    let n = grid.len();
    let mut cc1 = Vec::with_capacity(n);
    let mut cc2 = Vec::with_capacity(n);
    let mut mode_counts = [0; 4];
    let mut zero_vector_pairs = 0;
    let is_zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);

    for index in 0..n {
        let x = &grid.vectors[index];
        cc1.push(match index.checked_sub(1) {
            Some(prev) => {
                let p = &grid.vectors[prev];
                zero_vector_pairs += usize::from(is_zero(x) || is_zero(p));
                Some(correlation(x, p)?)
            }
            None => None,
        });
        let selection = select_mode(x, &build_candidates(&grid, lattice.position(index)));
        cc2.push(match selection.mode {
            Some(mode) => {
                mode_counts[mode.code() as usize] += 1;
                zero_vector_pairs += usize::from(is_zero(x) || is_zero(&selection.prediction));
                Some(correlation(x, &selection.prediction)?)
            }
            None => None,
        });
    }
    Ok(CorrelationReport {
        scan_order,
        acc1: mean_defined(&cc1),
        acc2: mean_defined(&cc2),
        cc1,
        cc2,
        zero_vector_pairs,
        mode_counts,
    })
}

/// One configuration of a rate-distortion sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub policy: ModePolicy,
    pub step: f64,
    pub subrate: f64,
    pub scan_order: ScanOrder,
}

/// One row of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdPoint {
    pub image: String,
    pub label: String,
    pub scan: String,
    pub q: f64,
    pub subrate: f64,
    /// Entropy estimate including mode flags.
    pub bpp: f64,
    pub bpp_no_modes: f64,
    pub psnr_db: f64,
    pub iters: usize,
    pub converged: bool,
    pub seed: u64,
    /// Size of the serialized `.sdpc` body per pixel.
    #[serde(skip)]
    pub stream_bpp: f64,
}

/// Encode one configuration and return the stream-size and entropy rates
/// without running recovery.
pub fn rate_only(
    img: &Image,
    cfg: &CodecConfig,
    matrix: &SensingMatrix,
) -> Result<RateEstimate, AnalysisError> {
    let (stream, _) = encode_with_matrix(img, cfg, matrix)?;
    Ok(estimate_rate(
        &stream.indices(),
        matrix.rows(),
        img.pixel_count(),
        cfg.mode_policy.signals_modes(),
    )?)
}

struct Encoded {
    point: RdPoint,
    grid: MeasurementGrid,
    rows: usize,
}

fn encode_point(
    image_name: &str,
    img: &Image,
    point: &SweepPoint,
    block_size: usize,
    seed: u64,
    matrix: &SensingMatrix,
) -> Result<Encoded, AnalysisError> {
    let cfg = CodecConfig {
        mode_policy: point.policy,
        block_size,
        subrate: point.subrate,
        step: point.step,
        seed,
        scan_order: point.scan_order,
        candidate_modes: ModeSet::ALL,
    };
    let (stream, _) = encode_with_matrix(img, &cfg, matrix)?;
    let bytes = stream.to_bytes().map_err(crate::error::CodecError::from)?;
    let rate = estimate_rate(
        &stream.indices(),
        matrix.rows(),
        img.pixel_count(),
        point.policy.signals_modes(),
    )?;
    let flag_bits = if point.policy.signals_modes() {
        (MODE_FLAG_BITS as usize * stream.blocks.len()) as f64
    } else {
        0.0
    };
    let index_payload = stream.payload_bits() as f64 - flag_bits;
    if index_payload + 1e-6 < rate.index_bits {
        return Err(AnalysisError::RateBound {
            payload_bits: index_payload,
            entropy_bits: rate.index_bits,
        });
    }

    let (_, grid) = crate::codec::decode_bytes(&bytes)?;
    Ok(Encoded {
        point: RdPoint {
            image: image_name.to_string(),
            label: point.policy.label().to_string(),
            scan: point.scan_order.name().to_string(),
            q: point.step,
            subrate: point.subrate,
            bpp: rate.total_bpp,
            bpp_no_modes: rate.index_bpp,
            psnr_db: f64::NAN,
            iters: 0,
            converged: false,
            seed,
            stream_bpp: (bytes.len() * 8) as f64 / img.pixel_count() as f64,
        },
        grid,
        rows: matrix.rows(),
    })
}

/// Encode, estimate, decode, recover and score every sweep point.
///
/// Points run in parallel; the result is sorted by label, scan, subrate and
/// step so output does not depend on scheduling.
pub fn rd_sweep(
    image_name: &str,
    img: &Image,
    points: &[SweepPoint],
    block_size: usize,
    seed: u64,
    overrides: &RecoveryOverrides,
) -> Result<Vec<RdPoint>, AnalysisError> {
    let mut matrices: BTreeMap<usize, SensingMatrix> = BTreeMap::new();
    for p in points {
        let rows = measurement_count(block_size, p.subrate);
        if let std::collections::btree_map::Entry::Vacant(e) = matrices.entry(rows) {
            e.insert(
                SensingMatrix::generate(block_size, p.subrate, seed)
                    .map_err(crate::error::CodecError::from)?,
            );
        }
    }
    let encoded = points
        .par_iter()
        .map(|p| {
            let matrix = &matrices[&measurement_count(block_size, p.subrate)];
            encode_point(image_name, img, p, block_size, seed, matrix)
        })
        .collect::<Result<Vec<_>, _>>()?;

    // Recovery depends only on the decoded measurements and the step, so
    // points that decode to the same grid (e.g. DPCM and plain SQ at equal
    // q) share one run.
    let source: Vec<usize> = (0..encoded.len())
        .map(|i| {
            let e = &encoded[i];
            (0..i)
                .find(|&j| {
                    let o = &encoded[j];
                    o.rows == e.rows
                        && o.point.q == e.point.q
                        && o.grid.reconstructed == e.grid.reconstructed
                })
                .unwrap_or(i)
        })
        .collect();
    let unique: Vec<usize> = (0..encoded.len()).filter(|&i| source[i] == i).collect();
    let scored = unique
        .par_iter()
        .map(|&i| {
            let e = &encoded[i];
            let recovery = recover(&e.grid, &matrices[&e.rows], &overrides.apply(e.point.q))?;
            let image = recovery
                .to_image(img.width(), img.height())
                .map_err(crate::error::RecoveryError::from)?;
            let psnr_db = psnr(img, &image).map_err(crate::error::RecoveryError::from)?;
            Ok((i, (psnr_db, recovery.iterations, recovery.converged)))
        })
        .collect::<Result<BTreeMap<_, _>, AnalysisError>>()?;
    let mut out: Vec<RdPoint> = encoded
        .into_iter()
        .zip(&source)
        .map(|(e, src)| {
            let (psnr_db, iters, converged) = scored[src];
            RdPoint {
                psnr_db,
                iters,
                converged,
                ..e.point
            }
        })
        .collect();
    sort_points(&mut out);
    Ok(out)
}

pub fn sort_points(points: &mut [RdPoint]) {
    points.sort_by(|a, b| {
        (&a.image, &a.label, &a.scan, a.seed)
            .cmp(&(&b.image, &b.label, &b.scan, b.seed))
            .then(a.subrate.total_cmp(&b.subrate))
            .then(a.q.total_cmp(&b.q))
    });
}

/// CSV with header
/// `image,label,scan,q,subrate,bpp,bpp_no_modes,psnr_db,iters,converged,seed`.
pub fn write_csv<W: Write>(points: &[RdPoint], writer: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Whitespace-separated `bpp psnr` pairs, one block per image/label/scan,
/// blocks separated by blank lines (gnuplot `index` layout).
pub fn write_plot_data<W: Write>(points: &[RdPoint], mut w: W) -> Result<(), AnalysisError> {
    let mut groups: BTreeMap<(&str, &str, &str, u64), Vec<&RdPoint>> = BTreeMap::new();
    for p in points {
        groups
            .entry((&p.image, &p.label, &p.scan, p.seed))
            .or_default()
            .push(p);
    }
    for (i, ((image, label, scan, seed), mut pts)) in groups.into_iter().enumerate() {
        if i > 0 {
            writeln!(w, "\n")?;
        }
        writeln!(w, "# {image} {label} {scan} seed={seed}")?;
        pts.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        for p in pts {
            writeln!(w, "{} {}", p.bpp, p.psnr_db)?;
        }
    }
    Ok(())
}

/// Upper envelope of `(bpp, psnr)` pairs: sorted by rate, keeping only
/// points that beat every cheaper point.
pub fn pareto_front(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut front: Vec<(f64, f64)> = Vec::new();
    for (bpp, q) in sorted {
        if front.last().map_or(true, |&(_, best)| q > best) {
            front.push((bpp, q));
        }
    }
    front
}

/// PSNR at `bpp` by linear interpolation along a front; `None` outside its
/// rate range.
pub fn interpolate_psnr(front: &[(f64, f64)], bpp: f64) -> Option<f64> {
    let first = front.first()?;
    if bpp < first.0 || bpp > front.last()?.0 {
        return None;
    }
    for pair in front.windows(2) {
        let ((r0, p0), (r1, p1)) = (pair[0], pair[1]);
        if bpp <= r1 {
            if r1 == r0 {
                return Some(p1.max(p0));
            }
            return Some(p0 + (p1 - p0) * (bpp - r0) / (r1 - r0));
        }
    }
    Some(first.1)
}

/// Quantizer step giving approximately `target_bpp` for `cfg`, found by
/// bisection on `log2 q` over `[2⁻⁴, 2¹²]` using the entropy estimate only.
pub fn fit_step(
    img: &Image,
    cfg: &CodecConfig,
    matrix: &SensingMatrix,
    target_bpp: f64,
) -> Result<f64, AnalysisError> {
    let rate_at = |log_q: f64| -> Result<f64, AnalysisError> {
        let cfg = CodecConfig {
            step: log_q.exp2(),
            ..*cfg
        };
        Ok(rate_only(img, &cfg, matrix)?.total_bpp)
    };
    let (mut lo, mut hi) = (-4.0f64, 12.0f64);
    if rate_at(lo)? <= target_bpp {
        return Ok(lo.exp2());
    }
    if rate_at(hi)? >= target_bpp {
        return Ok(hi.exp2());
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid)? > target_bpp {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp2())
}

/// Geometric step grid shared by all `policies` such that, for each policy,
/// the estimated rate spans `[min_bpp, max_bpp]`.
pub fn step_grid(
    img: &Image,
    base: &CodecConfig,
    policies: &[ModePolicy],
    min_bpp: f64,
    max_bpp: f64,
    count: usize,
) -> Result<Vec<f64>, AnalysisError> {
    let matrix = SensingMatrix::generate(base.block_size, base.subrate, base.seed)
        .map_err(crate::error::CodecError::from)?;
    let mut smallest = f64::INFINITY;
    let mut largest: f64 = 0.0;
    for &policy in policies {
        let cfg = base.with_policy(policy);
        smallest = smallest.min(fit_step(img, &cfg, &matrix, max_bpp)?);
        largest = largest.max(fit_step(img, &cfg, &matrix, min_bpp)?);
    }
    if count <= 1 || largest <= smallest {
        return Ok(vec![smallest]);
    }
    let ratio = (largest / smallest).ln() / (count - 1) as f64;
    Ok((0..count)
        .map(|i| round_step(smallest * (ratio * i as f64).exp()))
        .collect())
}

/// Three significant digits keep CSV steps readable and reproducible.
fn round_step(q: f64) -> f64 {
    let digits = 2 - q.log10().floor() as i32;
    let scale = 10f64.powi(digits);
    (q * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_examples() {
        let v = [1.0, -2.0, 3.5];
        assert!((correlation(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((correlation(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(correlation(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(correlation(&[0.0, 0.0], &[3.0, 1.0]).unwrap(), 0.0);
        assert!(correlation(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_image_study() {
        let img = Image::filled(64, 64, 120).unwrap();
        let report = acc_study(&img, 16, 0.5, 1, ScanOrder::Raster).unwrap();
        assert!(report.cc1.iter().flatten().all(|&c| (c - 1.0).abs() < 1e-12));
        assert!(report.cc2.iter().flatten().all(|&c| (c - 1.0).abs() < 1e-12));
        assert_eq!(report.cc1_excluded(), 1);
        assert_eq!(report.cc2_excluded(), 1);
        let total: f64 = report.mode_percentages().iter().sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn pareto_and_interpolation() {
        let pts = [(0.5, 30.0), (0.2, 25.0), (0.3, 24.0), (0.4, 29.0), (0.6, 29.5)];
        let front = pareto_front(&pts);
        assert_eq!(front, vec![(0.2, 25.0), (0.4, 29.0), (0.5, 30.0)]);
        assert_eq!(interpolate_psnr(&front, 0.3), Some(27.0));
        assert_eq!(interpolate_psnr(&front, 0.5), Some(30.0));
        assert_eq!(interpolate_psnr(&front, 0.1), None);
        assert_eq!(interpolate_psnr(&front, 0.55), None);
    }

    #[test]
    fn step_rounding() {
        assert_eq!(round_step(12.3456), 12.3);
        assert_eq!(round_step(0.012345), 0.0123);
        assert_eq!(round_step(345.6), 346.0);
    }
}
