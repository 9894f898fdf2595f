//! Command-line front end: `encode`, `decode`, `eval`, `sweep` and `info`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cssr::codec::{
    self, baseline, evaluate, sweep, write_csv, CodecConfig, CodecError, DecodeOptions, SweepRecord,
};
use cssr::container::{self, payload_accounting, ContainerError, StreamHeader};
use cssr::frame_io::{self, ChromaFormat, FrameIoError};
use cssr::{ScaleFactor, SolverConfig, SolverKind, VideoSequence};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cssr",
    version,
    about = "Scalable video coding with compressively sampled residual layers"
)]
struct Cli {
    /// Worker threads (defaults to CSSR_THREADS, then one per core)
    #[arg(long, global = true, value_name = "T")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a Y4M or raw YUV clip into a .cssr stream
    Encode(EncodeArgs),
    /// Reconstruct a .cssr stream into a Y4M clip
    Decode(DecodeArgs),
    /// Compare a decoded clip against the original and write per-frame PSNR
    Eval(EvalArgs),
    /// Encode and decode over a grid of thresholds, rates and solvers
    Sweep(SweepArgs),
    /// Print the header of a .cssr stream
    Info(InfoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RawFormat {
    #[value(name = "420")]
    Yuv420,
    #[value(name = "400")]
    Mono,
}

impl From<RawFormat> for ChromaFormat {
    fn from(f: RawFormat) -> Self {
        match f {
            RawFormat::Yuv420 => ChromaFormat::Yuv420,
            RawFormat::Mono => ChromaFormat::Mono,
        }
    }
}

#[derive(Args)]
struct LayoutArgs {
    /// Down-sampling factor m
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..))]
    scale: u8,
    /// Residual block size B (blocks are B×B)
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u8).range(1..))]
    block: u8,
    /// Seed for the per-block sensing matrices
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input clip (.y4m, or raw planar YUV with --width/--height)
    #[arg(long)]
    input: PathBuf,
    /// Output stream
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Measurement rate M/N
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
    /// Compressibility threshold: residuals with |v| < CT are dropped
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u16).range(0..=255))]
    ct: u16,
    /// Solver recorded in the stream as the decoder default
    #[arg(long, default_value = "omp")]
    solver: SolverKind,
    /// Frame width of raw input
    #[arg(long, requires = "height")]
    width: Option<usize>,
    /// Frame height of raw input
    #[arg(long, requires = "width")]
    height: Option<usize>,
    /// Chroma layout of raw input
    #[arg(long, value_enum, default_value = "420")]
    format: RawFormat,
}

#[derive(Args)]
struct SolverArgs {
    /// Residual bound for basis pursuit (0 = exact equality)
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Iteration cap for CoSaMP and basis pursuit [default: 50 for cosamp, 4000 for bp]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Absolute CoSaMP residual threshold [default: 1e-6·‖y‖]
    #[arg(long)]
    eta: Option<f64>,
    /// Upper bound on the per-block sparsity used by the greedy solvers
    #[arg(long)]
    k_cap: Option<usize>,
}

impl SolverArgs {
    fn options(&self, kind: SolverKind, strict: bool) -> DecodeOptions {
        let mut solver = SolverConfig::new(kind);
        solver.sigma = self.sigma;
        solver.eta = self.eta;
        if let Some(i) = self.max_iters {
            solver.max_iterations = i;
        }
        DecodeOptions {
            solver,
            k_cap: self.k_cap,
            strict,
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    /// Input stream
    #[arg(long)]
    input: PathBuf,
    /// Output Y4M clip
    #[arg(long)]
    output: PathBuf,
    /// Reconstruction algorithm [default: the solver recorded in the stream]
    #[arg(long)]
    solver: Option<SolverKind>,
    #[command(flatten)]
    tuning: SolverArgs,
    /// Abort with exit code 3 if any block fails to converge
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Original clip
    #[arg(long)]
    original: PathBuf,
    /// Decoded clip
    #[arg(long)]
    decoded: PathBuf,
    /// Output CSV
    #[arg(long)]
    csv: PathBuf,
    /// Stream the decoded clip came from; fills in ct, rate, mean_k and super_bytes
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Solver name written to the solver column
    #[arg(long)]
    solver: Option<SolverKind>,
    /// Down-sampling factor for the baseline when no stream is given
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..))]
    scale: u8,
}

#[derive(Args)]
struct SweepArgs {
    /// Input Y4M clip
    #[arg(long)]
    input: PathBuf,
    /// Output CSV
    #[arg(long)]
    csv: PathBuf,
    /// Thresholds to try
    #[arg(long, value_delimiter = ',', default_value = "5,15,25,35,45,55")]
    ct_list: Vec<u16>,
    /// Measurement rates to try
    #[arg(long, value_delimiter = ',', default_value = "0.3")]
    rate_list: Vec<f64>,
    /// Solvers to try
    #[arg(long, value_delimiter = ',', default_value = "omp,cosamp,bp")]
    solvers: Vec<SolverKind>,
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    tuning: SolverArgs,
}

#[derive(Args)]
struct InfoArgs {
    /// Input stream
    #[arg(long)]
    input: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        let code = match &e {
            CodecError::Config(_) => USAGE,
            CodecError::Solver { .. } => SOLVER,
            _ => DATA,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<FrameIoError> for Failure {
    fn from(e: FrameIoError) -> Self {
        Failure::new(DATA, e.to_string())
    }
}

impl From<ContainerError> for Failure {
    fn from(e: ContainerError) -> Self {
        Failure::new(DATA, e.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn load_clip(path: &Path) -> Result<VideoSequence, Failure> {
    let data = read(path)?;
    frame_io::parse_y4m(&data).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn scale(m: u8) -> ScaleFactor {
    ScaleFactor::new(m as usize).expect("clap rejects zero")
}

fn encode(args: EncodeArgs) -> Result<(), Failure> {
    let data = read(&args.input)?;
    let sequence = match (args.width, args.height) {
        (Some(w), Some(h)) => frame_io::load_raw_yuv(&data[..], w, h, args.format.into())?,
        _ => frame_io::parse_y4m(&data)?,
    };
    let config = CodecConfig {
        scale: scale(args.layout.scale),
        block_size: args.layout.block as usize,
        rate: args.rate,
        ct: args.ct,
        seed: args.layout.seed,
        solver_hint: args.solver,
    };
    let stream = codec::encode(&sequence, &config)?;
    let bytes = container::to_bytes(&stream)?;
    write(&args.output, &bytes)?;
    let acc = payload_accounting(&stream);
    eprintln!(
        "encoded {} frames: base {} bytes, super layer {} bytes ({} measurements for {} residual samples)",
        stream.frames.len(),
        acc.total.base_bytes,
        acc.total.super_bytes,
        acc.total.measurements,
        acc.total.residual_samples
    );
    Ok(())
}

fn decode(args: DecodeArgs) -> Result<(), Failure> {
    let stream = container::deserialize(&read(&args.input)?[..])?;
    let kind = match args.solver {
        Some(k) => k,
        None => SolverKind::from_code(stream.header.solver_hint)
            .ok_or_else(|| Failure::new(DATA, "stream carries an unknown solver hint"))?,
    };
    let options = args.tuning.options(kind, args.strict);
    let decoded = codec::decode(&stream, &options)?;
    for s in &decoded.stats {
        for w in &s.warnings {
            eprintln!("warning: {w}");
        }
    }
    let mut out = Vec::new();
    frame_io::write_y4m(&decoded.sequence, &mut out)?;
    write(&args.output, &out)
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let original = load_clip(&args.original)?;
    let decoded = load_clip(&args.decoded)?;
    let stream = match &args.stream {
        Some(p) => Some(container::deserialize(&read(p)?[..])?),
        None => None,
    };
    let m = stream
        .as_ref()
        .map_or(scale(args.scale), |s| scale(s.header.scale));
    let base = baseline(&original, m)?;
    let metrics = evaluate(&original, &decoded, &base)?;
    let accounting = stream.as_ref().map(payload_accounting);
    let records: Vec<SweepRecord> = metrics
        .iter()
        .map(|fm| {
            let i = fm.frame_index;
            let frame = stream.as_ref().and_then(|s| s.frames.get(i));
            SweepRecord {
                frame: i,
                solver: args.solver,
                ct: stream.as_ref().map(|s| s.header.ct),
                rate: stream.as_ref().map(|s| s.header.rate()),
                psnr: Some(fm.psnr),
                baseline_psnr: Some(fm.baseline_psnr),
                mean_k: frame.map(|f| {
                    f.blocks.iter().map(|b| b.k() as f64).sum::<f64>() / f.blocks.len() as f64
                }),
                super_bytes: accounting
                    .as_ref()
                    .and_then(|a| a.frames.get(i))
                    .map(|a| a.super_bytes),
                iterations: None,
                status: "ok".into(),
            }
        })
        .collect();
    let mut out = Vec::new();
    write_csv(&records, &mut out)?;
    write(&args.csv, &out)
}

fn run_sweep(args: SweepArgs) -> Result<(), Failure> {
    let sequence = load_clip(&args.input)?;
    let base = CodecConfig {
        scale: scale(args.layout.scale),
        block_size: args.layout.block as usize,
        seed: args.layout.seed,
        ..CodecConfig::default()
    };
    let solvers: Vec<DecodeOptions> = args
        .solvers
        .iter()
        .map(|&k| args.tuning.options(k, false))
        .collect();
    let records = sweep(&sequence, &base, &args.ct_list, &args.rate_list, &solvers);
    for r in records.iter().filter(|r| r.status != "ok") {
        eprintln!(
            "warning: frame {} ct {} rate {} {}: {}",
            r.frame,
            r.ct.map_or(String::new(), |c| c.to_string()),
            r.rate.map_or(String::new(), |c| c.to_string()),
            r.solver.map_or("", SolverKind::name),
            r.status
        );
    }
    let mut out = Vec::new();
    write_csv(&records, &mut out)?;
    write(&args.csv, &out)
}

fn info(args: InfoArgs) -> Result<(), Failure> {
    let data = read(&args.input)?;
    let bytes: &[u8; container::HEADER_LEN] = data
        .get(..container::HEADER_LEN)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| {
            Failure::new(
                DATA,
                format!(
                    "truncated header: expected {} bytes, found {}",
                    container::HEADER_LEN,
                    data.len()
                ),
            )
        })?;
    let h = StreamHeader::from_bytes(bytes)?;
    let solver = SolverKind::from_code(h.solver_hint).map_or("unknown", SolverKind::name);
    let mut stdout = io::stdout().lock();
    let text = format!(
        "version: {}\nwidth: {}\nheight: {}\nframes: {}\nscale: {}\nblock: {}\n\
         measurements: {}\nblock_len: {}\nrate: {}\nct: {}\nseed: {}\nsolver: {}\n",
        h.version,
        h.width,
        h.height,
        h.frame_count,
        h.scale,
        h.block_size,
        h.measurements,
        h.block_len,
        codec::format_sig(h.rate(), 6),
        h.ct,
        h.seed,
        solver
    );
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Failure::new(DATA, e.to_string()))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Info(a) => info(a),
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("CSSR_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map(Some).map_err(|_| {
                Failure::new(USAGE, format!("CSSR_THREADS must be a number, got `{v}`"))
            })
        }
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match thread_count(cli.threads)? {
        Some(0) => Err(Failure::new(USAGE, "thread count must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::new(USAGE, e.to_string()))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage, 2 data, 3 strict solver failure.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use cssr::solvers::SolverError;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn solver_errors_map_to_exit_three() {
        let e = CodecError::Solver {
            frame: 0,
            block: 0,
            source: SolverError::Parameter("x".into()),
        };
        assert_eq!(Failure::from(e).code, SOLVER);
        assert_eq!(Failure::from(CodecError::Config("x".into())).code, USAGE);
    }
}
