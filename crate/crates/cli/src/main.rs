use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sdpc::analysis::{self, CorrelationReport, SweepPoint};
use sdpc::bitstream::estimate_rate;
use sdpc::error::SensingError;
use sdpc::image_io::{load_pgm, load_raw, write_pgm};
use sdpc::reconstruction::{decode_image, psnr};
use sdpc::{
    AnalysisError, CodecConfig, CodecError, Image, ImageError, ModePolicy, ModeSet, PgmError,
    RecoveryError, RecoveryOverrides, ScanOrder, StreamError,
};

const USAGE: u8 = 1;
const FORMAT: u8 = 2;
const NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sdpc", version, about = "Directional predictive coding of block CS measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure, predict, quantize and write a .sdpc stream
    Encode(EncodeArgs),
    /// Decode a .sdpc stream and recover a PGM image
    Decode(DecodeArgs),
    /// Measurement-domain correlation and mode-usage statistics
    Analyze(AnalyzeArgs),
    /// Rate-distortion sweep of SQ, DPCM+SQ and SDPC+SQ
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Read headerless 8-bit raw samples of the given size (e.g. 512x512)
    #[arg(long, value_name = "WxH", value_parser = parse_dims)]
    raw: Option<(usize, usize)>,
}

#[derive(Args, Debug, Clone)]
struct SensingArgs {
    /// Block size B
    #[arg(long, short = 'b', default_value_t = 16, value_parser = parse_block_size)]
    block_size: usize,
    /// Subrate S = M_B / B², in (0, 1]
    #[arg(long, short = 's', default_value_t = 0.5, value_parser = parse_subrate)]
    subrate: f64,
    /// Seed of the measurement matrix
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct RecoveryArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    stop_tol: Option<f64>,
    /// Initial hard threshold (default 2q + 8)
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    tau_decay: Option<f64>,
    /// Wiener window (odd, ≥ 3)
    #[arg(long)]
    window: Option<usize>,
}

impl RecoveryArgs {
    fn overrides(&self) -> Result<RecoveryOverrides, Failure> {
        let o = RecoveryOverrides {
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            tau0: self.tau0,
            tau_decay: self.tau_decay,
            window: self.window,
        };
        // validate against an arbitrary step; only tau0's default depends on it
        o.apply(1.0)
            .validate()
            .map_err(|e| Failure::new(USAGE, anyhow!(e)))?;
        Ok(o)
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    input: PathBuf,
    output: PathBuf,
    #[command(flatten)]
    sensing: SensingArgs,
    /// Quantizer step size
    #[arg(long, short = 'q', default_value_t = 8.0, value_parser = parse_step)]
    q: f64,
    #[arg(long, value_enum, default_value_t = Policy::Sdpc)]
    policy: Policy,
    #[arg(long, value_enum, default_value_t = Scan::Raster)]
    scan: Scan,
    #[command(flatten)]
    input_format: InputArgs,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    input: PathBuf,
    output: PathBuf,
    /// Original image; prints PSNR of the reconstruction against it
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    recovery: RecoveryArgs,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    sensing: SensingArgs,
    /// Scan orders to report
    #[arg(long, value_enum, default_value_t = ScanChoice::Both)]
    scan: ScanChoice,
    /// Also write the statistics as CSV ("-" for stdout)
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    input_format: InputArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, short = 'b', default_value_t = 16, value_parser = parse_block_size)]
    block_size: usize,
    /// Subrates to sweep, comma separated
    #[arg(long, short = 's', default_value = "0.5", value_delimiter = ',', value_parser = parse_subrate)]
    subrate: Vec<f64>,
    /// Matrix seeds, comma separated; each seed repeats the whole sweep
    #[arg(long, default_value = "1", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Explicit step sizes, comma separated; default fits a grid to the bpp range
    #[arg(long, short = 'q', value_delimiter = ',', value_parser = parse_step)]
    q: Vec<f64>,
    /// Number of fitted step sizes per (image, subrate, seed)
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u16).range(1..))]
    points: u16,
    #[arg(long, default_value_t = 0.1)]
    min_bpp: f64,
    #[arg(long, default_value_t = 1.0)]
    max_bpp: f64,
    #[arg(long, value_enum, default_value_t = Scan::Raster)]
    scan: Scan,
    /// CSV output path ("-" for stdout)
    #[arg(long, default_value = "-")]
    csv: PathBuf,
    /// Gnuplot-style (bpp, psnr) blocks per label
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    recovery: RecoveryArgs,
    #[command(flatten)]
    input_format: InputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Policy {
    Sdpc,
    Dpcm,
    Sq,
}

impl From<Policy> for ModePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Sdpc => ModePolicy::SdpcAll4,
            Policy::Dpcm => ModePolicy::DpcmPreviousBlock,
            Policy::Sq => ModePolicy::NoPrediction,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Scan {
    Raster,
    Column,
}

impl From<Scan> for ScanOrder {
    fn from(s: Scan) -> Self {
        match s {
            Scan::Raster => ScanOrder::Raster,
            Scan::Column => ScanOrder::ColumnMajor,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ScanChoice {
    Raster,
    Column,
    Both,
}

impl ScanChoice {
    fn orders(self) -> Vec<ScanOrder> {
        match self {
            ScanChoice::Raster => vec![ScanOrder::Raster],
            ScanChoice::Column => vec![ScanOrder::ColumnMajor],
            ScanChoice::Both => vec![ScanOrder::Raster, ScanOrder::ColumnMajor],
        }
    }
}

fn parse_subrate(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("subrate must lie in (0, 1], got {v}"))
    }
}

fn parse_step(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("step must be finite and positive, got {v}"))
    }
}

fn parse_block_size(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if (2..=255).contains(&v) {
        Ok(v)
    } else {
        Err(format!("block size must lie in 2..=255, got {v}"))
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((w, h))
}

/// An error together with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: anyhow::Error) -> Self {
        Self { code, error }
    }
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Exit status for each library error family.
trait ExitClass {
    fn exit_class(&self) -> u8;
}

impl ExitClass for std::io::Error {
    fn exit_class(&self) -> u8 {
        FORMAT
    }
}

impl ExitClass for PgmError {
    fn exit_class(&self) -> u8 {
        FORMAT
    }
}

impl ExitClass for StreamError {
    fn exit_class(&self) -> u8 {
        FORMAT
    }
}

impl ExitClass for ImageError {
    fn exit_class(&self) -> u8 {
        FORMAT
    }
}

impl ExitClass for SensingError {
    fn exit_class(&self) -> u8 {
        NUMERIC
    }
}

impl ExitClass for CodecError {
    fn exit_class(&self) -> u8 {
        match self {
            CodecError::Stream(_) | CodecError::Image(_) | CodecError::ModeUnavailable { .. } => {
                FORMAT
            }
            CodecError::IncompleteGrid { .. } => FORMAT,
            CodecError::Sensing(_)
            | CodecError::InvalidStep(_)
            | CodecError::NonFinite { .. }
            | CodecError::IndexOverflow { .. } => NUMERIC,
        }
    }
}

impl ExitClass for RecoveryError {
    fn exit_class(&self) -> u8 {
        match self {
            RecoveryError::InvalidConfig(_) => USAGE,
            RecoveryError::Sensing(e) => e.exit_class(),
            RecoveryError::Image(e) => e.exit_class(),
            RecoveryError::Codec(e) => e.exit_class(),
        }
    }
}

impl ExitClass for AnalysisError {
    fn exit_class(&self) -> u8 {
        match self {
            AnalysisError::Codec(e) => e.exit_class(),
            AnalysisError::Recovery(e) => e.exit_class(),
            AnalysisError::Csv(_) | AnalysisError::Io(_) => FORMAT,
            AnalysisError::LengthMismatch(..)
            | AnalysisError::RateBound { .. }
            | AnalysisError::Rate(_) => NUMERIC,
        }
    }
}

impl ExitClass for csv::Error {
    fn exit_class(&self) -> u8 {
        FORMAT
    }
}

impl ExitClass for sdpc::error::RateError {
    fn exit_class(&self) -> u8 {
        NUMERIC
    }
}

trait OrFail<T> {
    fn or_fail(self, context: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E> OrFail<T> for Result<T, E>
where
    E: ExitClass + std::error::Error + Send + Sync + 'static,
{
    fn or_fail(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| {
            let code = e.exit_class();
            Failure::new(code, anyhow::Error::new(e).context(context()))
        })
    }
}

fn read_image(path: &Path, raw: Option<(usize, usize)>) -> Result<Image, Failure> {
    let bytes = std::fs::read(path).or_fail(|| format!("reading {}", path.display()))?;
    match raw {
        Some((w, h)) => load_raw(&bytes, w, h).or_fail(|| format!("parsing {}", path.display())),
        None => load_pgm(&bytes).or_fail(|| format!("parsing {}", path.display())),
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory,
/// so a failure never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let ctx = || format!("writing {}", path.display());
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).or_fail(ctx)?;
    tmp.write_all(bytes).or_fail(ctx)?;
    tmp.persist(path).map_err(|e| e.error).or_fail(ctx)?;
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if path == Path::new("-") {
        std::io::stdout()
            .write_all(bytes)
            .or_fail(|| "writing to stdout".into())
    } else {
        write_atomic(path, bytes)
    }
}

fn cmd_encode(args: &EncodeArgs) -> Result<(), Failure> {
    let img = read_image(&args.input, args.input_format.raw)?;
    let cfg = CodecConfig {
        mode_policy: args.policy.into(),
        block_size: args.sensing.block_size,
        subrate: args.sensing.subrate,
        step: args.q,
        seed: args.sensing.seed,
        scan_order: args.scan.into(),
        candidate_modes: ModeSet::ALL,
    };
    let (stream, report) = sdpc::codec::encode(&img, &cfg).or_fail(|| "encoding".into())?;
    let bytes = stream.to_bytes().or_fail(|| "serializing".into())?;
    let rate = estimate_rate(
        &stream.indices(),
        stream.header.measurements as usize,
        img.pixel_count(),
        cfg.mode_policy.signals_modes(),
    )
    .or_fail(|| "estimating rate".into())?;
    write_atomic(&args.output, &bytes)?;

    let pixels = img.pixel_count() as f64;
    println!(
        "{}: {}x{}, B={}, M={}, q={}, {} {}",
        args.input.display(),
        img.width(),
        img.height(),
        cfg.block_size,
        stream.header.measurements,
        cfg.step,
        cfg.mode_policy,
        cfg.scan_order
    );
    println!(
        "estimated bpp: {:.6} (indices {:.6} + modes {:.6})",
        rate.total_bpp, rate.index_bpp, rate.mode_overhead_bpp
    );
    println!(
        "actual bpp:    {:.6} ({} bytes)",
        (bytes.len() * 8) as f64 / pixels,
        bytes.len()
    );
    if cfg.mode_policy.signals_modes() {
        let counts = report.mode_counts();
        println!(
            "modes: V {} H {} DC {} Diag {}",
            counts[0], counts[1], counts[2], counts[3]
        );
    }
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Result<(), Failure> {
    let overrides = args.recovery.overrides()?;
    let reference = args
        .reference
        .as_deref()
        .map(|p| read_image(p, None))
        .transpose()?;
    let bytes = std::fs::read(&args.input).or_fail(|| format!("reading {}", args.input.display()))?;
    let (image, recovery) =
        decode_image(&bytes, &overrides).or_fail(|| format!("decoding {}", args.input.display()))?;
    let quality = reference
        .map(|r| psnr(&r, &image).or_fail(|| "comparing against the reference".into()))
        .transpose()?;
    write_atomic(&args.output, &write_pgm(&image))?;

    println!(
        "{}x{} recovered in {} iterations{}",
        image.width(),
        image.height(),
        recovery.iterations,
        if recovery.converged { "" } else { " (not converged)" }
    );
    if let Some(p) = quality {
        println!("psnr: {p:.4} dB");
    }
    Ok(())
}

fn print_report(name: &str, r: &CorrelationReport) {
    let pct = r.mode_percentages();
    println!(
        "{name:<16} {:<7} {:>8.4} {:>8.4} {:>6}/{:<6} {:>5} | {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>7.2}",
        r.scan_order.name(),
        r.acc1,
        r.acc2,
        r.cc1_excluded(),
        r.cc2_excluded(),
        r.zero_vector_pairs,
        pct[0],
        pct[1],
        pct[2],
        pct[3],
        pct.iter().sum::<f64>()
    );
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    if args.inputs.is_empty() {
        return Err(Failure::new(USAGE, anyhow!("no input images given")));
    }
    let images = args
        .inputs
        .iter()
        .map(|p| read_image(p, args.input_format.raw))
        .collect::<Result<Vec<_>, _>>()?;
    let s = &args.sensing;
    println!("B={}, S={}, seed={}", s.block_size, s.subrate, s.seed);
    println!(
        "{:<16} {:<7} {:>8} {:>8} {:>13} {:>5} | {:>6} {:>6} {:>6} {:>6} {:>7}",
        "image", "scan", "ACC1", "ACC2", "excl CC1/CC2", "zero", "V%", "H%", "DC%", "Diag%", "total"
    );
    let mut csv = csv_writer();
    csv.write_record([
        "image", "scan", "acc1", "acc2", "cc1_excluded", "cc2_excluded", "zero_pairs", "v_pct",
        "h_pct", "dc_pct", "diag_pct",
    ])
    .or_fail(|| "writing CSV".into())?;
    for (path, img) in args.inputs.iter().zip(&images) {
        let name = image_name(path);
        for order in args.scan.orders() {
            let r = analysis::acc_study(img, s.block_size, s.subrate, s.seed, order)
                .or_fail(|| format!("analyzing {}", path.display()))?;
            print_report(&name, &r);
            let pct = r.mode_percentages();
            let mut row = vec![
                name.clone(),
                order.name().to_string(),
                r.acc1.to_string(),
                r.acc2.to_string(),
                r.cc1_excluded().to_string(),
                r.cc2_excluded().to_string(),
                r.zero_vector_pairs.to_string(),
            ];
            row.extend(pct.iter().map(|p| p.to_string()));
            csv.write_record(&row).or_fail(|| "writing CSV".into())?;
        }
    }
    if let Some(path) = &args.csv {
        let bytes = csv
            .into_inner()
            .map_err(|e| Failure::new(FORMAT, anyhow!("{}", e.error())))?;
        write_output(path, &bytes)?;
    }
    Ok(())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn image_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

const POLICIES: [ModePolicy; 3] = [
    ModePolicy::NoPrediction,
    ModePolicy::DpcmPreviousBlock,
    ModePolicy::SdpcAll4,
];

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let overrides = args.recovery.overrides()?;
    if !(args.min_bpp > 0.0 && args.min_bpp < args.max_bpp) {
        return Err(Failure::new(
            USAGE,
            anyhow!("need 0 < --min-bpp < --max-bpp"),
        ));
    }
    let images = args
        .inputs
        .iter()
        .map(|p| read_image(p, args.input_format.raw))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (path, img) in args.inputs.iter().zip(&images) {
        let name = image_name(path);
        for &seed in &args.seeds {
            let mut points = Vec::new();
            for &subrate in &args.subrate {
                let steps = if args.q.is_empty() {
                    let base = CodecConfig {
                        block_size: args.block_size,
                        subrate,
                        seed,
                        scan_order: args.scan.into(),
                        ..CodecConfig::default()
                    };
                    analysis::step_grid(
                        img,
                        &base,
                        &POLICIES,
                        args.min_bpp,
                        args.max_bpp,
                        args.points as usize,
                    )
                    .or_fail(|| format!("fitting step sizes for {name}"))?
                } else {
                    args.q.clone()
                };
                for step in steps {
                    points.extend(POLICIES.map(|policy| SweepPoint {
                        policy,
                        step,
                        subrate,
                        scan_order: args.scan.into(),
                    }));
                }
            }
            let out = analysis::rd_sweep(&name, img, &points, args.block_size, seed, &overrides)
                .or_fail(|| format!("sweeping {name}"))?;
            for p in &out {
                eprintln!(
                    "{name} seed={seed} {:<8} S={:<5} q={:<8} {:.4} bpp {:.2} dB",
                    p.label, p.subrate, p.q, p.bpp, p.psnr_db
                );
            }
            rows.extend(out);
        }
    }
    analysis::sort_points(&mut rows);

    let mut csv = Vec::new();
    analysis::write_csv(&rows, &mut csv).or_fail(|| "writing CSV".into())?;
    let plot = match &args.plot {
        Some(_) => {
            let mut buf = Vec::new();
            analysis::write_plot_data(&rows, &mut buf).or_fail(|| "writing plot data".into())?;
            Some(buf)
        }
        None => None,
    };
    write_output(&args.csv, &csv)?;
    if let (Some(path), Some(buf)) = (&args.plot, plot) {
        write_output(path, &buf)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
