//! End-to-end encoder, decoder, quality evaluation and parameter sweeps.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::container::{
    payload_accounting, BlockRecord, CompressedFrame, CompressedStream, ContainerError,
    StreamHeader, VERSION,
};
use crate::frame_io::{FrameIoError, VideoFrame, VideoSequence};
use crate::layers::{
    compute_residual, downsample, super_resolve, upsample, LayerError, ResidualFrame, ScaleFactor,
};
use crate::sensing::{
    block_seed, devectorize_block, make_sensing_matrix, measure, vectorize_block, zero_force,
    SensingError,
};
use crate::solvers::{solve, SolverConfig, SolverError, SolverKind};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frame {frame}, block {block}: {source}")]
    Solver {
        frame: usize,
        block: usize,
        #[source]
        source: SolverError,
    },
    #[error("sequences differ: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    FrameIo(#[from] FrameIoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Encoder parameters: the (M/N, CT) operating point plus layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub scale: ScaleFactor,
    pub block_size: usize,
    /// Target M/N; each block gets `round(rate·B²)` measurements.
    pub rate: f64,
    pub ct: u16,
    pub seed: u64,
    /// Solver recorded in the stream as the decoder's default.
    pub solver_hint: SolverKind,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            scale: ScaleFactor::new(2).expect("non-zero"),
            block_size: 32,
            rate: 0.3,
            ct: 15,
            seed: 0,
            solver_hint: SolverKind::Omp,
        }
    }
}

impl CodecConfig {
    pub fn block_len(&self) -> usize {
        self.block_size * self.block_size
    }

    pub fn measurements(&self) -> usize {
        (self.rate * self.block_len() as f64).round() as usize
    }

    /// Checks the parameters on their own, independent of any frame size.
    pub fn validate(&self) -> Result<(), CodecError> {
        let n = self.block_len();
        if self.block_size == 0 || n > u16::MAX as usize {
            return Err(CodecError::Config(format!(
                "block size {} must be in 1..=255",
                self.block_size
            )));
        }
        if self.scale.get() > u8::MAX as usize {
            return Err(CodecError::Config(format!(
                "scale factor {} exceeds 255",
                self.scale.get()
            )));
        }
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(CodecError::Config(format!(
                "rate {} must lie strictly between 0 and 1",
                self.rate
            )));
        }
        let m = self.measurements();
        if m < 1 || m >= n {
            return Err(CodecError::Config(format!(
                "rate {} gives M={m} measurements for N={n}; need 1 <= M < N",
                self.rate
            )));
        }
        if self.ct > 255 {
            return Err(CodecError::Config(format!("CT {} exceeds 255", self.ct)));
        }
        Ok(())
    }

    /// Checks that `width`×`height` frames tile cleanly at this configuration.
    pub fn validate_dimensions(&self, width: usize, height: usize) -> Result<(), CodecError> {
        let (m, b) = (self.scale.get(), self.block_size);
        if width < 2 || height < 2 {
            return Err(CodecError::Config(format!(
                "frames must be at least 2x2, got {width}x{height}"
            )));
        }
        if width > u16::MAX as usize || height > u16::MAX as usize {
            return Err(CodecError::Config(format!(
                "frames larger than 65535 pixels per side are not supported ({width}x{height})"
            )));
        }
        if ![m, b]
            .iter()
            .all(|&d| width.is_multiple_of(d) && height.is_multiple_of(d))
        {
            return Err(CodecError::Config(format!(
                "frame size {width}x{height} must be divisible by the scale factor m={m} \
                 and by the block size B={b}"
            )));
        }
        Ok(())
    }

    fn header(&self, width: usize, height: usize, frame_count: usize) -> StreamHeader {
        StreamHeader {
            version: VERSION,
            width: width as u16,
            height: height as u16,
            frame_count: frame_count as u32,
            scale: self.scale.get() as u8,
            block_size: self.block_size as u16,
            measurements: self.measurements() as u16,
            block_len: self.block_len() as u16,
            ct: self.ct,
            seed: self.seed,
            solver_hint: self.solver_hint.code(),
        }
    }
}

fn block_coords(header: &StreamHeader, index: usize) -> (usize, usize) {
    let across = header.blocks_across();
    (index / across, index % across)
}

fn encode_frame(
    frame: &VideoFrame,
    frame_index: usize,
    header: &StreamHeader,
    config: &CodecConfig,
) -> Result<CompressedFrame, CodecError> {
    let base = downsample(frame, config.scale)?;
    let up = upsample(&base, config.scale);
    let residual = compute_residual(frame, &up)?;
    let b = config.block_size;
    let blocks = (0..header.blocks_per_frame())
        .into_par_iter()
        .map(|index| {
            let coords = block_coords(header, index);
            let v = vectorize_block(&residual, coords, b)?;
            let (sparse, _) = zero_force(&v, config.ct);
            if sparse.k() == 0 {
                return Ok(BlockRecord::Skip);
            }
            let seed = block_seed(config.seed, frame_index as u64, index as u64);
            let a = make_sensing_matrix(config.measurements(), config.block_len(), seed)?;
            let m = measure(&a, &sparse, coords)?;
            Ok(BlockRecord::Measured {
                k: m.k_hint as u16,
                y: m.y.iter().map(|&v| v as f32).collect(),
            })
        })
        .collect::<Result<Vec<_>, CodecError>>()?;
    Ok(CompressedFrame {
        base: base.into_luma(),
        blocks,
    })
}

/// Splits each frame into base and compressively sampled residual layers.
pub fn encode(
    sequence: &VideoSequence,
    config: &CodecConfig,
) -> Result<CompressedStream, CodecError> {
    config.validate()?;
    config.validate_dimensions(sequence.width(), sequence.height())?;
    let header = config.header(sequence.width(), sequence.height(), sequence.len());
    let frames = sequence
        .frames()
        .par_iter()
        .enumerate()
        .map(|(j, frame)| encode_frame(frame, j, &header, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CompressedStream { header, frames })
}

/// Decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOptions {
    /// Solver kind and tolerances; its `k` is replaced per block.
    pub solver: SolverConfig,
    /// Upper bound on the per-block sparsity handed to the greedy solvers.
    pub k_cap: Option<usize>,
    /// Fail the whole decode on a solver error instead of zero-filling.
    pub strict: bool,
}

impl DecodeOptions {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            solver: SolverConfig::new(kind),
            k_cap: None,
            strict: false,
        }
    }

    /// Sparsity budget actually used for a block with hint `k` and `m` rows.
    ///
    /// OMP needs k ≤ M for its least-squares steps; CoSaMP's merged support
    /// of up to 3k columns must stay overdetermined, so k ≤ M/3.
    pub fn effective_k(&self, k: usize, m: usize) -> usize {
        let k = self.k_cap.map_or(k, |cap| k.min(cap));
        let limit = match self.solver.kind {
            SolverKind::Omp => m,
            SolverKind::CoSaMP => (m / 3).max(1),
            SolverKind::BasisPursuit => usize::MAX,
        };
        k.clamp(1, limit)
    }
}

/// Per-frame decoder statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    pub frame_index: usize,
    /// Mean transmitted sparsity over all blocks (skipped blocks count as 0).
    pub mean_k: f64,
    pub skipped_blocks: usize,
    pub iterations: usize,
    /// Blocks zero-filled after a solver failure.
    pub failed_blocks: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub sequence: VideoSequence,
    /// Up-sampled base layer, i.e. the output without the super layer.
    pub base_upsampled: VideoSequence,
    pub stats: Vec<FrameStats>,
}

struct BlockOutcome {
    values: Vec<i16>,
    iterations: usize,
    failure: Option<SolverError>,
}

fn decode_block(
    header: &StreamHeader,
    options: &DecodeOptions,
    frame_index: usize,
    block_index: usize,
    record: &BlockRecord,
) -> Result<BlockOutcome, CodecError> {
    let n = header.block_len as usize;
    let (k, y) = match record {
        BlockRecord::Skip => {
            return Ok(BlockOutcome {
                values: vec![0; n],
                iterations: 0,
                failure: None,
            })
        }
        BlockRecord::Measured { k, y } => (*k as usize, y),
    };
    let m = header.measurements as usize;
    let seed = block_seed(header.seed, frame_index as u64, block_index as u64);
    let a = make_sensing_matrix(m, n, seed)?;
    let y: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut config = options.solver.clone();
    config.k = options.effective_k(k, m);
    match solve(&config, &a, &y) {
        Ok(result) => Ok(BlockOutcome {
            values: result
                .s_hat
                .iter()
                .map(|v| v.round().clamp(-255.0, 255.0) as i16)
                .collect(),
            iterations: result.iterations,
            failure: None,
        }),
        Err(source) if options.strict => Err(CodecError::Solver {
            frame: frame_index,
            block: block_index,
            source,
        }),
        Err(source) => {
            let iterations = match &source {
                SolverError::Convergence { iterations, .. } => *iterations,
                SolverError::Parameter(_) => 0,
            };
            Ok(BlockOutcome {
                values: vec![0; n],
                iterations,
                failure: Some(source),
            })
        }
    }
}

fn decode_frame(
    header: &StreamHeader,
    options: &DecodeOptions,
    frame_index: usize,
    frame: &CompressedFrame,
) -> Result<(VideoFrame, VideoFrame, FrameStats), CodecError> {
    let scale = ScaleFactor::new(header.scale as usize)?;
    let base = VideoFrame::new(
        header.base_width(),
        header.base_height(),
        frame.base.clone(),
    )?;
    let up = upsample(&base, scale);
    let outcomes = frame
        .blocks
        .par_iter()
        .enumerate()
        .map(|(b, rec)| decode_block(header, options, frame_index, b, rec))
        .collect::<Result<Vec<_>, _>>()?;

    let size = header.block_size as usize;
    let mut residual = ResidualFrame::zeros(header.width as usize, header.height as usize);
    let mut stats = FrameStats {
        frame_index,
        mean_k: frame.blocks.iter().map(|b| b.k() as f64).sum::<f64>()
            / frame.blocks.len().max(1) as f64,
        skipped_blocks: frame.blocks.iter().filter(|b| b.is_skip()).count(),
        iterations: 0,
        failed_blocks: 0,
        warnings: Vec::new(),
    };
    for (index, outcome) in outcomes.into_iter().enumerate() {
        devectorize_block(
            &outcome.values,
            &mut residual,
            block_coords(header, index),
            size,
        )?;
        stats.iterations += outcome.iterations;
        if let Some(err) = outcome.failure {
            stats.failed_blocks += 1;
            stats.warnings.push(format!(
                "frame {frame_index}, block {index}: {err}; zero-filled"
            ));
        }
    }
    let out = super_resolve(&up, &residual)?;
    Ok((out, up, stats))
}

/// Reconstructs every frame as up-sampled base plus recovered residual.
pub fn decode(stream: &CompressedStream, options: &DecodeOptions) -> Result<Decoded, CodecError> {
    stream.validate()?;
    if stream.frames.is_empty() {
        return Err(CodecError::Config("stream contains no frames".into()));
    }
    options
        .solver
        .clone()
        .with_k(1)
        .validate(stream.header.measurements as usize)
        .map_err(|e| CodecError::Config(e.to_string()))?;
    let decoded = stream
        .frames
        .par_iter()
        .enumerate()
        .map(|(j, f)| decode_frame(&stream.header, options, j, f))
        .collect::<Result<Vec<_>, _>>()?;
    let mut frames = Vec::with_capacity(decoded.len());
    let mut ups = Vec::with_capacity(decoded.len());
    let mut stats = Vec::with_capacity(decoded.len());
    for (f, u, s) in decoded {
        frames.push(f);
        ups.push(u);
        stats.push(s);
    }
    let rate = VideoSequence::DEFAULT_FRAME_RATE;
    Ok(Decoded {
        sequence: VideoSequence::new(frames, rate)?,
        base_upsampled: VideoSequence::new(ups, rate)?,
        stats,
    })
}

/// Up-sample-only reconstruction of `sequence` at scale `m`.
pub fn baseline(sequence: &VideoSequence, m: ScaleFactor) -> Result<VideoSequence, CodecError> {
    let frames = sequence
        .frames()
        .iter()
        .map(|f| Ok(upsample(&downsample(f, m)?, m)))
        .collect::<Result<Vec<_>, CodecError>>()?;
    Ok(VideoSequence::new(frames, sequence.frame_rate())?)
}

/// Peak signal-to-noise ratio of 8-bit luma, with identical frames flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Infinite,
}

impl Psnr {
    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }

    /// Value in dB, with identical frames mapped to `f64::INFINITY`.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => f.write_str(&format_sig(*v, 6)),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn mse(a: &VideoFrame, b: &VideoFrame) -> Result<f64, CodecError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(CodecError::Mismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sum: u64 = a
        .luma()
        .iter()
        .zip(b.luma())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.luma().len() as f64)
}

pub fn psnr(a: &VideoFrame, b: &VideoFrame) -> Result<Psnr, CodecError> {
    let e = mse(a, b)?;
    Ok(if e == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Db(10.0 * (255.0f64 * 255.0 / e).log10())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub psnr: Psnr,
    /// PSNR of the up-sample-only reconstruction.
    pub baseline_psnr: Psnr,
    pub mean_block_sparsity: f64,
    pub decode_iterations_total: usize,
}

impl FrameMetrics {
    pub fn with_stats(mut self, stats: &FrameStats) -> Self {
        self.mean_block_sparsity = stats.mean_k;
        self.decode_iterations_total = stats.iterations;
        self
    }
}

/// Per-frame PSNR of `decoded` and of `base_upsampled` against `original`.
pub fn evaluate(
    original: &VideoSequence,
    decoded: &VideoSequence,
    base_upsampled: &VideoSequence,
) -> Result<Vec<FrameMetrics>, CodecError> {
    if original.len() != decoded.len() || original.len() != base_upsampled.len() {
        return Err(CodecError::Mismatch(format!(
            "frame counts {} / {} / {}",
            original.len(),
            decoded.len(),
            base_upsampled.len()
        )));
    }
    original
        .frames()
        .iter()
        .zip(decoded.frames())
        .zip(base_upsampled.frames())
        .enumerate()
        .map(|(i, ((o, d), b))| {
            Ok(FrameMetrics {
                frame_index: i,
                psnr: psnr(o, d)?,
                baseline_psnr: psnr(o, b)?,
                mean_block_sparsity: 0.0,
                decode_iterations_total: 0,
            })
        })
        .collect()
}

/// Formats `v` with `digits` significant digits, trailing zeros removed.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits.saturating_sub(1), v);
        let (mantissa, e) = s.split_once('e').expect("exponent present");
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        return format!("{mantissa}e{e}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One CSV row: a frame decoded at one (CT, rate, solver) point.
///
/// Fields left as `None` are written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub frame: usize,
    pub solver: Option<SolverKind>,
    pub ct: Option<u16>,
    pub rate: Option<f64>,
    pub psnr: Option<Psnr>,
    pub baseline_psnr: Option<Psnr>,
    pub mean_k: Option<f64>,
    pub super_bytes: Option<usize>,
    pub iterations: Option<usize>,
    pub status: String,
}

pub const CSV_HEADER: [&str; 9] = [
    "frame",
    "solver",
    "ct",
    "rate",
    "psnr_db",
    "baseline_psnr_db",
    "mean_k",
    "super_bytes",
    "status",
];

/// Encodes at every (CT, rate) pair and decodes with every solver.
///
/// Records are ordered by CT, then rate, then solver, then frame. A failing
/// cell yields one error row per frame and the sweep carries on.
pub fn sweep(
    sequence: &VideoSequence,
    base: &CodecConfig,
    ct_values: &[u16],
    rate_values: &[f64],
    solvers: &[DecodeOptions],
) -> Vec<SweepRecord> {
    let mut records = Vec::new();
    for &ct in ct_values {
        for &rate in rate_values {
            let config = CodecConfig {
                ct,
                rate,
                ..base.clone()
            };
            let encoded = encode(sequence, &config);
            for options in solvers {
                let kind = options.solver.kind;
                let row = |frame| SweepRecord {
                    frame,
                    solver: Some(kind),
                    ct: Some(ct),
                    rate: Some(rate),
                    psnr: None,
                    baseline_psnr: None,
                    mean_k: None,
                    super_bytes: None,
                    iterations: None,
                    status: String::new(),
                };
                let outcome = encoded
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|stream| {
                        let decoded = decode(stream, options).map_err(|e| e.to_string())?;
                        let metrics =
                            evaluate(sequence, &decoded.sequence, &decoded.base_upsampled)
                                .map_err(|e| e.to_string())?;
                        Ok((payload_accounting(stream), decoded.stats, metrics))
                    });
                match outcome {
                    Ok((accounting, stats, metrics)) => {
                        for ((m, s), acc) in metrics.iter().zip(&stats).zip(&accounting.frames) {
                            let mut r = row(m.frame_index);
                            r.psnr = Some(m.psnr);
                            r.baseline_psnr = Some(m.baseline_psnr);
                            r.mean_k = Some(s.mean_k);
                            r.super_bytes = Some(acc.super_bytes);
                            r.iterations = Some(s.iterations);
                            r.status = if s.failed_blocks == 0 {
                                "ok".into()
                            } else {
                                format!("degraded:{}", s.failed_blocks)
                            };
                            records.push(r);
                        }
                    }
                    Err(message) => {
                        for frame in 0..sequence.len() {
                            let mut r = row(frame);
                            r.status = format!("error: {message}");
                            records.push(r);
                        }
                    }
                }
            }
        }
    }
    records
}

fn opt_field<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Writes sweep records as CSV with the standard header row.
pub fn write_csv<W: Write>(records: &[SweepRecord], sink: W) -> Result<(), CodecError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.frame.to_string(),
            opt_field(r.solver, |s| s.name().to_string()),
            opt_field(r.ct, |c| c.to_string()),
            opt_field(r.rate, |r| format_sig(r, 6)),
            opt_field(r.psnr, |p| p.to_string()),
            opt_field(r.baseline_psnr, |p| p.to_string()),
            opt_field(r.mean_k, |k| format_sig(k, 6)),
            opt_field(r.super_bytes, |b| b.to_string()),
            r.status.clone(),
        ])?;
    }
    w.flush().map_err(|e| CodecError::Csv(e.into()))?;
    Ok(())
}
