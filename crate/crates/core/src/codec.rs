//! Closed-loop predictive coding of block measurements.
//!
//! Every block is predicted from *reconstructed* measurements of its causal
//! neighbors, the residual is quantized with a midtread uniform quantizer,
//! and the dequantized residual is added back to the prediction to form the
//! reconstruction later blocks predict from. The decoder runs the same
//! [`predict`] routine, so both sides stay bit-identical.
//!
//! Neighbor layout for the block at `(row, col)`:
//!
//! ```text
//!   A = (row-1, col-1)   B = (row-1, col)
//!   C = (row,   col-1)   current
//! ```
//!
//! Vertical predicts `B`, Horizontal `C`, DC the mean of `B` and `C`,
//! Diagonal `A`.

use std::collections::BTreeMap;
use std::fmt;

use crate::bitstream::{self, CodedBlock, EncodedStream, StreamHeader};
use crate::error::CodecError;
use crate::image_io::{to_blocks, Image, ScanOrder};
use crate::sensing::{measure_image, MeasurementGrid, SensingMatrix, GENERATOR_VERSION};

/// Directional predictor, identified by its 2-bit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictionMode {
    Vertical = 0,
    Horizontal = 1,
    Dc = 2,
    Diagonal = 3,
}

impl PredictionMode {
    pub const ALL: [PredictionMode; 4] = [
        PredictionMode::Vertical,
        PredictionMode::Horizontal,
        PredictionMode::Dc,
        PredictionMode::Diagonal,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PredictionMode::Vertical => "vertical",
            PredictionMode::Horizontal => "horizontal",
            PredictionMode::Dc => "dc",
            PredictionMode::Diagonal => "diagonal",
        }
    }
}

impl fmt::Display for PredictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subset of the four prediction modes, bit `k` for mode code `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const EMPTY: ModeSet = ModeSet(0);
    pub const ALL: ModeSet = ModeSet(0b1111);

    pub fn only(mode: PredictionMode) -> Self {
        ModeSet(1 << mode.code())
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::ALL.0 == 0).then_some(ModeSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, mode: PredictionMode) -> bool {
        self.0 & (1 << mode.code()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl FromIterator<PredictionMode> for ModeSet {
    fn from_iter<I: IntoIterator<Item = PredictionMode>>(iter: I) -> Self {
        ModeSet(iter.into_iter().fold(0, |acc, m| acc | (1 << m.code())))
    }
}

/// How blocks are predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModePolicy {
    /// Best of the four directional modes, signaled with 2 bits per block.
    SdpcAll4,
    /// Previous block in scan order; no mode bits.
    DpcmPreviousBlock,
    /// Zero prediction (plain scalar quantization); no mode bits.
    NoPrediction,
}

impl ModePolicy {
    pub fn code(self) -> u8 {
        match self {
            ModePolicy::SdpcAll4 => 0,
            ModePolicy::DpcmPreviousBlock => 1,
            ModePolicy::NoPrediction => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModePolicy::SdpcAll4),
            1 => Some(ModePolicy::DpcmPreviousBlock),
            2 => Some(ModePolicy::NoPrediction),
            _ => None,
        }
    }

    pub fn signals_modes(self) -> bool {
        self == ModePolicy::SdpcAll4
    }

    /// Benchmark label.
    pub fn label(self) -> &'static str {
        match self {
            ModePolicy::SdpcAll4 => "SDPC+SQ",
            ModePolicy::DpcmPreviousBlock => "DPCM+SQ",
            ModePolicy::NoPrediction => "SQ",
        }
    }
}

impl fmt::Display for ModePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Midtread uniform scalar quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    step: f64,
}

/// Largest index magnitude `quantize` will produce.
const MAX_INDEX_MAGNITUDE: f64 = (1u64 << 62) as f64;

impl Quantizer {
    pub fn new(step: f64) -> Result<Self, CodecError> {
        if step.is_finite() && step > 0.0 {
            Ok(Self { step })
        } else {
            Err(CodecError::InvalidStep(step))
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `s = round(d / q)`, halves rounded away from zero.
    pub fn quantize(&self, residual: &[f64]) -> Result<Vec<i64>, CodecError> {
        residual
            .iter()
            .enumerate()
            .map(|(component, &d)| {
                if !d.is_finite() {
                    return Err(CodecError::NonFinite { component });
                }
                let s = (d / self.step).round();
                if s.abs() >= MAX_INDEX_MAGNITUDE {
                    return Err(CodecError::IndexOverflow { component });
                }
                Ok(s as i64)
            })
            .collect()
    }

    /// `d̃ = q · s`.
    pub fn dequantize(&self, indices: &[i64]) -> Vec<f64> {
        indices.iter().map(|&s| self.step * s as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mode: PredictionMode,
    pub prediction: Vec<f64>,
}

/// Predictions of the modes whose neighbors exist, in mode-code order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn modes(&self) -> ModeSet {
        self.entries.iter().map(|c| c.mode).collect()
    }

    pub fn get(&self, mode: PredictionMode) -> Option<&Candidate> {
        self.entries.iter().find(|c| c.mode == mode)
    }

    /// Drop the modes outside `allowed`.
    pub fn restrict(mut self, allowed: ModeSet) -> Self {
        self.entries.retain(|c| allowed.contains(c.mode));
        self
    }
}

/// Candidate predictions for the block at `(row, col)`, built only from
/// `grid.reconstructed`.
///
/// Panics if a required neighbor has not been reconstructed yet.
pub fn build_candidates(grid: &MeasurementGrid, (row, col): (usize, usize)) -> CandidateSet {
    let lattice = &grid.lattice;
    let neighbor = |r: usize, c: usize| -> &[f64] {
        let index = lattice.index_of(r, c);
        &grid.reconstructed[index]
    };
    let mut entries = Vec::with_capacity(4);
    let up = (row > 0).then(|| neighbor(row - 1, col));
    let left = (col > 0).then(|| neighbor(row, col - 1));
    if let Some(up) = up {
        entries.push(Candidate {
            mode: PredictionMode::Vertical,
            prediction: up.to_vec(),
        });
    }
    if let Some(left) = left {
        entries.push(Candidate {
            mode: PredictionMode::Horizontal,
            prediction: left.to_vec(),
        });
    }
    if let (Some(up), Some(left)) = (up, left) {
        entries.push(Candidate {
            mode: PredictionMode::Dc,
            prediction: up.iter().zip(left).map(|(b, c)| (b + c) / 2.0).collect(),
        });
        entries.push(Candidate {
            mode: PredictionMode::Diagonal,
            prediction: neighbor(row - 1, col - 1).to_vec(),
        });
    }
    CandidateSet { entries }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub mode: Option<PredictionMode>,
    pub prediction: Vec<f64>,
    pub residual_l1: f64,
}

/// Pick the candidate with the smallest ℓ1 residual; ties go to the lower
/// mode code. An empty set yields the zero prediction and no mode.
pub fn select_mode(x: &[f64], candidates: &CandidateSet) -> Selection {
    let mut best: Option<(&Candidate, f64)> = None;
    for cand in &candidates.entries {
        let cost = l1_distance(x, &cand.prediction);
        let better = match best {
            None => true,
            Some((b, bc)) => cost < bc || (cost == bc && cand.mode < b.mode),
        };
        if better {
            best = Some((cand, cost));
        }
    }
    match best {
        Some((cand, cost)) => Selection {
            mode: Some(cand.mode),
            prediction: cand.prediction.clone(),
            residual_l1: cost,
        },
        None => Selection {
            mode: None,
            prediction: vec![0.0; x.len()],
            residual_l1: x.iter().map(|v| v.abs()).sum(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub mode_policy: ModePolicy,
    pub block_size: usize,
    pub subrate: f64,
    pub step: f64,
    pub seed: u64,
    pub scan_order: ScanOrder,
    /// Modes the SDPC policy may choose from. Ignored by other policies.
    pub candidate_modes: ModeSet,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            mode_policy: ModePolicy::SdpcAll4,
            block_size: 16,
            subrate: 0.5,
            step: 8.0,
            seed: 1,
            scan_order: ScanOrder::Raster,
            candidate_modes: ModeSet::ALL,
        }
    }
}

impl CodecConfig {
    pub fn with_policy(mut self, policy: ModePolicy) -> Self {
        self.mode_policy = policy;
        self
    }

    fn effective_modes(&self) -> ModeSet {
        if self.mode_policy.signals_modes() {
            self.candidate_modes
        } else {
            ModeSet::EMPTY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    /// Selected mode; `None` when no candidate was available.
    pub mode: Option<PredictionMode>,
    /// ‖x − x̂_p‖₁ of the prediction actually used.
    pub residual_l1: f64,
    /// ‖x − x̃_prev‖₁ when the previous block in scan order was itself one
    /// of the candidates.
    pub previous_block_l1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderReport {
    pub blocks: Vec<BlockReport>,
    pub histogram: BTreeMap<i64, u64>,
    /// Clean and in-loop reconstructed measurements.
    pub grid: MeasurementGrid,
}

impl EncoderReport {
    /// Per-mode usage counts, indexed by mode code.
    pub fn mode_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for m in self.blocks.iter().filter_map(|b| b.mode) {
            counts[m.code() as usize] += 1;
        }
        counts
    }
}

/// Prediction the decoder would form for block `index`, given its signaled
/// `flag` (always present for mode-signaling policies).
///
/// Blocks without any candidate fall back to the previous block in scan
/// order, or zero for the very first block; their flag must be code 0.
pub fn predict(
    grid: &MeasurementGrid,
    index: usize,
    policy: ModePolicy,
    allowed: ModeSet,
    flag: Option<PredictionMode>,
) -> Result<Vec<f64>, CodecError> {
    let m = grid.measurements;
    let previous_or_zero = || {
        index
            .checked_sub(1)
            .map(|p| grid.reconstructed[p].clone())
            .unwrap_or_else(|| vec![0.0; m])
    };
    match policy {
        ModePolicy::NoPrediction => Ok(vec![0.0; m]),
        ModePolicy::DpcmPreviousBlock => Ok(previous_or_zero()),
        ModePolicy::SdpcAll4 => {
            let flag = flag.unwrap_or(PredictionMode::Vertical);
            let candidates =
                build_candidates(grid, grid.lattice.position(index)).restrict(allowed);
            if candidates.is_empty() {
                return if flag == PredictionMode::Vertical {
                    Ok(previous_or_zero())
                } else {
                    Err(CodecError::ModeUnavailable {
                        block: index,
                        code: flag.code(),
                    })
                };
            }
            candidates
                .get(flag)
                .map(|c| c.prediction.clone())
                .ok_or(CodecError::ModeUnavailable {
                    block: index,
                    code: flag.code(),
                })
        }
    }
}

fn reconstruct(prediction: &[f64], q: &Quantizer, indices: &[i64]) -> Vec<f64> {
    prediction
        .iter()
        .zip(indices)
        .map(|(p, &s)| p + q.step() * s as f64)
        .collect()
}

/// Header describing `cfg` for an image of the given size.
pub fn stream_header(
    cfg: &CodecConfig,
    width: usize,
    height: usize,
    measurements: usize,
) -> Result<StreamHeader, CodecError> {
    let header = StreamHeader {
        width: u32::try_from(width)
            .map_err(|_| bitstream_err("image width"))?,
        height: u32::try_from(height)
            .map_err(|_| bitstream_err("image height"))?,
        block_size: u16::try_from(cfg.block_size).map_err(|_| bitstream_err("block size"))?,
        measurements: u16::try_from(measurements)
            .map_err(|_| bitstream_err("measurement count"))?,
        step: cfg.step,
        seed: cfg.seed,
        generator_version: GENERATOR_VERSION,
        scan_order: cfg.scan_order,
        mode_policy: cfg.mode_policy,
        candidate_modes: cfg.effective_modes(),
    };
    header.validate()?;
    Ok(header)
}

fn bitstream_err(what: &'static str) -> CodecError {
    CodecError::Stream(crate::error::StreamError::InvalidHeader(what))
}

/// Run the closed coding loop over an already measured grid, filling
/// `grid.reconstructed`.
pub fn encode_grid(
    grid: &mut MeasurementGrid,
    cfg: &CodecConfig,
) -> Result<(Vec<CodedBlock>, Vec<BlockReport>), CodecError> {
    let q = Quantizer::new(cfg.step)?;
    let allowed = cfg.effective_modes();
    let n = grid.len();
    grid.reconstructed = Vec::with_capacity(n);
    let mut coded = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);

    for index in 0..n {
        let x = &grid.vectors[index];
        let (row, col) = grid.lattice.position(index);
        let (mode, flag, prediction, previous_block_l1) = match cfg.mode_policy {
            ModePolicy::SdpcAll4 => {
                let candidates = build_candidates(grid, (row, col)).restrict(allowed);
                let previous_block_l1 = previous_candidate(grid, index, &candidates)
                    .map(|c| l1_distance(x, &c.prediction));
                let selection = select_mode(x, &candidates);
                let flag = selection.mode.unwrap_or(PredictionMode::Vertical);
                let prediction = predict(grid, index, cfg.mode_policy, allowed, Some(flag))?;
                (selection.mode, Some(flag), prediction, previous_block_l1)
            }
            policy => (None, None, predict(grid, index, policy, allowed, None)?, None),
        };
        let residual: Vec<f64> = x.iter().zip(&prediction).map(|(a, p)| a - p).collect();
        let indices = q.quantize(&residual)?;
        let rec = reconstruct(&prediction, &q, &indices);
        reports.push(BlockReport {
            mode,
            residual_l1: residual.iter().map(|d| d.abs()).sum(),
            previous_block_l1,
        });
        grid.reconstructed.push(rec);
        coded.push(CodedBlock {
            mode: flag,
            indices,
        });
    }
    Ok((coded, reports))
}

/// The candidate that coincides with the previous block in scan order, if
/// any.
fn previous_candidate<'a>(
    grid: &MeasurementGrid,
    index: usize,
    candidates: &'a CandidateSet,
) -> Option<&'a Candidate> {
    let prev = index.checked_sub(1)?;
    let (row, col) = grid.lattice.position(index);
    let (prow, pcol) = grid.lattice.position(prev);
    let mode = if prow + 1 == row && pcol == col {
        PredictionMode::Vertical
    } else if prow == row && pcol + 1 == col {
        PredictionMode::Horizontal
    } else {
        return None;
    };
    candidates.get(mode)
}

/// Measure and code `img`.
pub fn encode(img: &Image, cfg: &CodecConfig) -> Result<(EncodedStream, EncoderReport), CodecError> {
    let matrix = SensingMatrix::generate(cfg.block_size, cfg.subrate, cfg.seed)?;
    encode_with_matrix(img, cfg, &matrix)
}

/// As [`encode`], reusing an already generated matrix. The matrix must
/// match `cfg` (block size, subrate and seed) for the stream to decode.
pub fn encode_with_matrix(
    img: &Image,
    cfg: &CodecConfig,
    matrix: &SensingMatrix,
) -> Result<(EncodedStream, EncoderReport), CodecError> {
    let (lattice, blocks) = to_blocks(img, cfg.block_size, cfg.scan_order)?;
    let mut grid = measure_image(matrix, &lattice, &blocks)?;
    let header = stream_header(cfg, img.width(), img.height(), matrix.rows())?;
    let (coded, reports) = encode_grid(&mut grid, cfg)?;
    let stream = EncodedStream {
        header,
        blocks: coded,
    };
    let report = EncoderReport {
        blocks: reports,
        histogram: bitstream::histogram(&stream.indices()),
        grid,
    };
    Ok((stream, report))
}

/// Replay the prediction loop from a parsed stream. The returned grid has
/// no clean measurements, only `reconstructed`.
pub fn decode_measurements(stream: &EncodedStream) -> Result<MeasurementGrid, CodecError> {
    let header = &stream.header;
    header.validate()?;
    let lattice = header.lattice()?;
    let n = lattice.len();
    if stream.blocks.len() != n {
        return Err(crate::error::StreamError::BlockCount {
            expected: n,
            actual: stream.blocks.len(),
        }
        .into());
    }
    let q = Quantizer::new(header.step)?;
    let m = header.measurements as usize;
    let mut grid = MeasurementGrid {
        lattice,
        measurements: m,
        vectors: Vec::new(),
        reconstructed: Vec::with_capacity(n),
    };
    for (index, block) in stream.blocks.iter().enumerate() {
        if block.mode.is_some() != header.mode_policy.signals_modes() {
            return Err(crate::error::StreamError::PolicyMismatch { block: index }.into());
        }
        if block.indices.len() != m {
            return Err(crate::error::StreamError::IndexCount {
                block: index,
                expected: m,
                actual: block.indices.len(),
            }
            .into());
        }
        let prediction = predict(
            &grid,
            index,
            header.mode_policy,
            header.candidate_modes,
            block.mode,
        )?;
        grid.reconstructed
            .push(reconstruct(&prediction, &q, &block.indices));
    }
    Ok(grid)
}

/// Parse and decode a serialized stream.
pub fn decode_bytes(bytes: &[u8]) -> Result<(StreamHeader, MeasurementGrid), CodecError> {
    let stream = EncodedStream::from_bytes(bytes)?;
    let grid = decode_measurements(&stream)?;
    Ok((stream.header, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::BlockLattice;

    fn grid_with(lattice: BlockLattice, reconstructed: Vec<Vec<f64>>) -> MeasurementGrid {
        MeasurementGrid {
            lattice,
            measurements: reconstructed.first().map_or(0, |v| v.len()),
            vectors: reconstructed.clone(),
            reconstructed,
        }
    }

    #[test]
    fn availability_rule() {
        let lattice = BlockLattice::covering(16, 8, 4, ScanOrder::Raster).unwrap();
        let rec: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64; 2]).collect();
        let grid = grid_with(lattice, rec);
        assert!(build_candidates(&grid, (0, 0)).is_empty());
        let top = build_candidates(&grid, (0, 3));
        assert_eq!(top.modes(), ModeSet::only(PredictionMode::Horizontal));
        assert_eq!(top.entries[0].prediction, vec![2.0, 2.0]);
        let left = build_candidates(&grid, (1, 0));
        assert_eq!(left.modes(), ModeSet::only(PredictionMode::Vertical));
        let inner = build_candidates(&grid, (1, 2));
        assert_eq!(inner.modes(), ModeSet::ALL);
        assert_eq!(inner.get(PredictionMode::Vertical).unwrap().prediction, vec![2.0; 2]);
        assert_eq!(inner.get(PredictionMode::Horizontal).unwrap().prediction, vec![5.0; 2]);
        assert_eq!(inner.get(PredictionMode::Dc).unwrap().prediction, vec![3.5; 2]);
        assert_eq!(inner.get(PredictionMode::Diagonal).unwrap().prediction, vec![1.0; 2]);
    }

    #[test]
    fn dc_is_componentwise_mean() {
        let lattice = BlockLattice::covering(4, 4, 2, ScanOrder::Raster).unwrap();
        // blocks: 0=(0,0) 1=(0,1)=B 2=(1,0)=C
        let rec = vec![vec![0.0, 0.0], vec![2.0, 4.0], vec![4.0, 0.0]];
        let grid = grid_with(lattice, rec);
        let set = build_candidates(&grid, (1, 1));
        assert_eq!(set.get(PredictionMode::Dc).unwrap().prediction, vec![3.0, 2.0]);
    }

    #[test]
    fn candidates_ignore_clean_measurements() {
        let lattice = BlockLattice::covering(4, 4, 2, ScanOrder::Raster).unwrap();
        let rec: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0]).collect();
        let mut grid = grid_with(lattice, rec);
        let before = build_candidates(&grid, (1, 1));
        for v in &mut grid.vectors {
            v.iter_mut().for_each(|x| *x = 1e9);
        }
        assert_eq!(build_candidates(&grid, (1, 1)), before);
    }

    fn set(preds: &[(PredictionMode, Vec<f64>)]) -> CandidateSet {
        CandidateSet {
            entries: preds
                .iter()
                .map(|(m, p)| Candidate {
                    mode: *m,
                    prediction: p.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn l1_selection() {
        use PredictionMode::*;
        let candidates = set(&[
            (Vertical, vec![4.0, 1.0]),
            (Horizontal, vec![0.0, 0.0]),
            (Dc, vec![2.0, 0.5]),
            (Diagonal, vec![9.0, 9.0]),
        ]);
        let x = [4.0, 0.0];
        // brute force over the four candidates
        let costs: Vec<f64> = candidates
            .entries
            .iter()
            .map(|c| c.prediction.iter().zip(&x).map(|(p, v)| (p - v).abs()).sum())
            .collect();
        assert_eq!(costs, vec![1.0, 4.0, 2.5, 14.0]);
        let sel = select_mode(&x, &candidates);
        assert_eq!(sel.mode, Some(Vertical));
        assert_eq!(sel.residual_l1, 1.0);

        let exact = select_mode(&[9.0, 9.0], &candidates);
        assert_eq!((exact.mode, exact.residual_l1), (Some(Diagonal), 0.0));
    }

    #[test]
    fn ties_go_to_lower_code() {
        use PredictionMode::*;
        let candidates = set(&[
            (Diagonal, vec![1.0]),
            (Horizontal, vec![-1.0]),
            (Dc, vec![1.0]),
        ]);
        assert_eq!(select_mode(&[0.0], &candidates).mode, Some(Horizontal));
    }

    #[test]
    fn empty_set_gives_zero_prediction() {
        let sel = select_mode(&[3.0, -1.0], &CandidateSet::default());
        assert_eq!(sel.mode, None);
        assert_eq!(sel.prediction, vec![0.0, 0.0]);
        assert_eq!(sel.residual_l1, 4.0);
    }

    #[test]
    fn quantizer_examples() {
        let q = Quantizer::new(10.0).unwrap();
        assert_eq!(q.quantize(&[17.0, -4.0, 5.0]).unwrap(), vec![2, 0, 1]);
        assert_eq!(q.quantize(&[-5.0, -15.0]).unwrap(), vec![-1, -2]);
        assert_eq!(q.quantize(&[0.0; 3]).unwrap(), vec![0; 3]);
        assert_eq!(q.dequantize(&[2, 0, 1]), vec![20.0, 0.0, 10.0]);
        assert_eq!(q.dequantize(&[0, 0]), vec![0.0, 0.0]);
        assert!(matches!(
            q.quantize(&[1.0, f64::NAN]),
            Err(CodecError::NonFinite { component: 1 })
        ));
        assert!(matches!(
            q.quantize(&[f64::MAX]),
            Err(CodecError::IndexOverflow { component: 0 })
        ));
        assert!(Quantizer::new(0.0).is_err());
        assert!(Quantizer::new(f64::INFINITY).is_err());
    }

    #[test]
    fn quantizer_cell_grid_bound() {
        // fine grid over one cell and its neighbors
        let q = Quantizer::new(3.0).unwrap();
        let d: Vec<f64> = (-3000..=3000).map(|k| k as f64 * 1e-3 * 1.5).collect();
        let s = q.quantize(&d).unwrap();
        for (di, r) in d.iter().zip(q.dequantize(&s)) {
            assert!((di - r).abs() <= 1.5);
        }
    }

    #[test]
    fn mode_set_bits() {
        assert_eq!(ModeSet::from_bits(0b1_0000), None);
        let s: ModeSet = [PredictionMode::Dc, PredictionMode::Vertical].into_iter().collect();
        assert_eq!(s.bits(), 0b0101);
        assert!(s.contains(PredictionMode::Dc) && !s.contains(PredictionMode::Diagonal));
    }

    fn gradient(w: usize, h: usize) -> Image {
        let samples = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                ((x * 3 + y * 5 + (x * y) % 17) % 256) as u8
            })
            .collect();
        Image::new(w, h, samples).unwrap()
    }

    #[test]
    fn sq_alone_codes_raw_measurements() {
        let cfg = CodecConfig {
            mode_policy: ModePolicy::NoPrediction,
            block_size: 4,
            subrate: 0.5,
            step: 4.0,
            ..CodecConfig::default()
        };
        let (stream, report) = encode(&gradient(12, 8), &cfg).unwrap();
        let q = Quantizer::new(4.0).unwrap();
        for (block, x) in stream.blocks.iter().zip(&report.grid.vectors) {
            assert_eq!(block.indices, q.quantize(x).unwrap());
            assert_eq!(block.mode, None);
        }
    }

    #[test]
    fn decoder_matches_encoder_loop() {
        for policy in [
            ModePolicy::SdpcAll4,
            ModePolicy::DpcmPreviousBlock,
            ModePolicy::NoPrediction,
        ] {
            for scan in [ScanOrder::Raster, ScanOrder::ColumnMajor] {
                let cfg = CodecConfig {
                    mode_policy: policy,
                    block_size: 4,
                    subrate: 0.25,
                    step: 3.0,
                    scan_order: scan,
                    ..CodecConfig::default()
                };
                let (stream, report) = encode(&gradient(13, 10), &cfg).unwrap();
                let bytes = stream.to_bytes().unwrap();
                let (_, grid) = decode_bytes(&bytes).unwrap();
                assert_eq!(grid.reconstructed, report.grid.reconstructed);
            }
        }
    }

    #[test]
    fn decoder_rejects_unavailable_mode() {
        let cfg = CodecConfig {
            block_size: 4,
            subrate: 0.25,
            ..CodecConfig::default()
        };
        let (mut stream, _) = encode(&gradient(16, 16), &cfg).unwrap();
        // block 1 sits on the top row: only horizontal is available
        stream.blocks[1].mode = Some(PredictionMode::Diagonal);
        assert!(matches!(
            decode_measurements(&stream),
            Err(CodecError::ModeUnavailable { block: 1, code: 3 })
        ));
        stream.blocks[1].mode = Some(PredictionMode::Horizontal);
        stream.blocks[0].mode = Some(PredictionMode::Dc);
        assert!(matches!(
            decode_measurements(&stream),
            Err(CodecError::ModeUnavailable { block: 0, code: 2 })
        ));
    }

    #[test]
    fn restricted_set_falls_back_to_previous_block() {
        let cfg = CodecConfig {
            block_size: 4,
            subrate: 0.5,
            step: 2.0,
            scan_order: ScanOrder::ColumnMajor,
            candidate_modes: ModeSet::only(PredictionMode::Vertical),
            ..CodecConfig::default()
        };
        let dpcm = cfg.with_policy(ModePolicy::DpcmPreviousBlock);
        let img = gradient(16, 12);
        let (a, _) = encode(&img, &cfg).unwrap();
        let (b, _) = encode(&img, &dpcm).unwrap();
        assert_eq!(a.indices(), b.indices());
    }
}
