//! CSSR bitstream: a fixed 32-byte header followed, per frame, by the base
//! raster and one record per residual block.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CSSR"
//!      4     2  version
//!      6     2  width
//!      8     2  height
//!     10     4  frame_count
//!     14     1  m (scale factor)
//!     15     2  B (block size)
//!     17     2  M (measurements per block)
//!     19     2  N (= B²)
//!     21     2  CT
//!     23     8  seed
//!     31     1  solver hint (0 omp, 1 cosamp, 2 bp)
//! ```
//!
//! Each frame is `(width/m)·(height/m)` base bytes, then
//! `(width/B)·(height/B)` block records in row-major block order:
//! `skip: u8, k: u16` followed by `M` f32 measurements when `skip == 0`.
//! All integers and floats are little-endian.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CSSR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a CSSR stream: {0}")]
    Format(String),
    #[error("corrupt header field `{field}`: {reason}")]
    CorruptHeader { field: &'static str, reason: String },
    #[error("truncated stream: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("stream does not match its header: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u16,
    pub width: u16,
    pub height: u16,
    pub frame_count: u32,
    pub scale: u8,
    pub block_size: u16,
    /// Rows of each block's sensing matrix.
    pub measurements: u16,
    /// Length of each vectorised block.
    pub block_len: u16,
    pub ct: u16,
    pub seed: u64,
    pub solver_hint: u8,
}

fn corrupt(field: &'static str, reason: impl Into<String>) -> ContainerError {
    ContainerError::CorruptHeader {
        field,
        reason: reason.into(),
    }
}

impl StreamHeader {
    pub fn validate(&self) -> Result<(), ContainerError> {
        if self.version != VERSION {
            return Err(corrupt(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        if self.width < 2 {
            return Err(corrupt("width", format!("{} is below 2", self.width)));
        }
        if self.height < 2 {
            return Err(corrupt("height", format!("{} is below 2", self.height)));
        }
        if self.scale == 0 {
            return Err(corrupt("m", "scale factor is zero"));
        }
        let m = self.scale as u16;
        if !self.width.is_multiple_of(m) {
            return Err(corrupt(
                "width",
                format!("{} not divisible by m={m}", self.width),
            ));
        }
        if !self.height.is_multiple_of(m) {
            return Err(corrupt(
                "height",
                format!("{} not divisible by m={m}", self.height),
            ));
        }
        let b = self.block_size;
        if b == 0 {
            return Err(corrupt("B", "block size is zero"));
        }
        if !self.width.is_multiple_of(b) {
            return Err(corrupt(
                "width",
                format!("{} not divisible by B={b}", self.width),
            ));
        }
        if !self.height.is_multiple_of(b) {
            return Err(corrupt(
                "height",
                format!("{} not divisible by B={b}", self.height),
            ));
        }
        if b as u32 * b as u32 != self.block_len as u32 {
            return Err(corrupt(
                "N",
                format!("N={} but B²={}", self.block_len, b as u32 * b as u32),
            ));
        }
        if self.measurements == 0 || self.measurements >= self.block_len {
            return Err(corrupt(
                "M",
                format!(
                    "need 0 < M < N, got M={} N={}",
                    self.measurements, self.block_len
                ),
            ));
        }
        if self.ct > 255 {
            return Err(corrupt("CT", format!("{} exceeds 255", self.ct)));
        }
        if self.solver_hint > 2 {
            return Err(corrupt(
                "solver_hint",
                format!("unknown solver code {}", self.solver_hint),
            ));
        }
        Ok(())
    }

    pub fn base_width(&self) -> usize {
        (self.width / self.scale as u16) as usize
    }

    pub fn base_height(&self) -> usize {
        (self.height / self.scale as u16) as usize
    }

    pub fn base_len(&self) -> usize {
        self.base_width() * self.base_height()
    }

    pub fn blocks_across(&self) -> usize {
        (self.width / self.block_size) as usize
    }

    pub fn blocks_down(&self) -> usize {
        (self.height / self.block_size) as usize
    }

    pub fn blocks_per_frame(&self) -> usize {
        self.blocks_across() * self.blocks_down()
    }

    pub fn rate(&self) -> f64 {
        self.measurements as f64 / self.block_len as f64
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..8].copy_from_slice(&self.width.to_le_bytes());
        out[8..10].copy_from_slice(&self.height.to_le_bytes());
        out[10..14].copy_from_slice(&self.frame_count.to_le_bytes());
        out[14] = self.scale;
        out[15..17].copy_from_slice(&self.block_size.to_le_bytes());
        out[17..19].copy_from_slice(&self.measurements.to_le_bytes());
        out[19..21].copy_from_slice(&self.block_len.to_le_bytes());
        out[21..23].copy_from_slice(&self.ct.to_le_bytes());
        out[23..31].copy_from_slice(&self.seed.to_le_bytes());
        out[31] = self.solver_hint;
        out
    }

    /// Decodes and validates a header.
    pub fn from_bytes(bytes: &[u8; HEADER_LEN]) -> Result<Self, ContainerError> {
        if bytes[0..4] != MAGIC {
            return Err(ContainerError::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let header = Self {
            version: u16_at(4),
            width: u16_at(6),
            height: u16_at(8),
            frame_count: u32::from_le_bytes(bytes[10..14].try_into().unwrap()),
            scale: bytes[14],
            block_size: u16_at(15),
            measurements: u16_at(17),
            block_len: u16_at(19),
            ct: u16_at(21),
            seed: u64::from_le_bytes(bytes[23..31].try_into().unwrap()),
            solver_hint: bytes[31],
        };
        header.validate()?;
        Ok(header)
    }
}

/// One residual block: either skipped (nothing survived the threshold) or
/// carrying its sparsity hint and measurements.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockRecord {
    Skip,
    Measured { k: u16, y: Vec<f32> },
}

impl BlockRecord {
    pub fn k(&self) -> u16 {
        match self {
            BlockRecord::Skip => 0,
            BlockRecord::Measured { k, .. } => *k,
        }
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, BlockRecord::Skip)
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            BlockRecord::Skip => 3,
            BlockRecord::Measured { y, .. } => 3 + 4 * y.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFrame {
    /// Row-major base raster, `(width/m)·(height/m)` samples.
    pub base: Vec<u8>,
    pub blocks: Vec<BlockRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedStream {
    pub header: StreamHeader,
    pub frames: Vec<CompressedFrame>,
}

impl CompressedStream {
    /// Checks the payload against the header.
    pub fn validate(&self) -> Result<(), ContainerError> {
        let h = &self.header;
        h.validate()?;
        if self.frames.len() != h.frame_count as usize {
            return Err(ContainerError::Inconsistent(format!(
                "header declares {} frames, stream holds {}",
                h.frame_count,
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.base.len() != h.base_len() {
                return Err(ContainerError::Inconsistent(format!(
                    "frame {i}: base raster has {} samples, expected {}",
                    f.base.len(),
                    h.base_len()
                )));
            }
            if f.blocks.len() != h.blocks_per_frame() {
                return Err(ContainerError::Inconsistent(format!(
                    "frame {i}: {} block records, expected {}",
                    f.blocks.len(),
                    h.blocks_per_frame()
                )));
            }
            for (b, rec) in f.blocks.iter().enumerate() {
                if let BlockRecord::Measured { k, y } = rec {
                    if y.len() != h.measurements as usize {
                        return Err(ContainerError::Inconsistent(format!(
                            "frame {i} block {b}: {} measurements, expected {}",
                            y.len(),
                            h.measurements
                        )));
                    }
                    if *k == 0 || *k > h.block_len {
                        return Err(ContainerError::Inconsistent(format!(
                            "frame {i} block {b}: sparsity {k} outside 1..={}",
                            h.block_len
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Writes `stream` in the CSSR layout.
pub fn serialize<W: Write>(stream: &CompressedStream, mut sink: W) -> Result<(), ContainerError> {
    stream.validate()?;
    sink.write_all(&stream.header.to_bytes())?;
    let mut buf = Vec::new();
    for frame in &stream.frames {
        buf.clear();
        buf.extend_from_slice(&frame.base);
        for rec in &frame.blocks {
            match rec {
                BlockRecord::Skip => {
                    buf.push(1);
                    buf.extend_from_slice(&0u16.to_le_bytes());
                }
                BlockRecord::Measured { k, y } => {
                    buf.push(0);
                    buf.extend_from_slice(&k.to_le_bytes());
                    for v in y {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn to_bytes(stream: &CompressedStream) -> Result<Vec<u8>, ContainerError> {
    let mut out = Vec::new();
    serialize(stream, &mut out)?;
    Ok(out)
}

/// Reader that tracks how many bytes have been consumed.
struct Cursor<R> {
    inner: R,
    consumed: u64,
}

impl<R: Read> Cursor<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), ContainerError> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => {
                    return Err(ContainerError::Truncated {
                        expected: self.consumed + buf.len() as u64,
                        actual: self.consumed + got as u64,
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.consumed += buf.len() as u64;
        Ok(())
    }
}

/// Reads a CSSR stream. The header is fully validated before any payload
/// byte is requested from `source`.
pub fn deserialize<R: Read>(source: R) -> Result<CompressedStream, ContainerError> {
    let mut cur = Cursor {
        inner: source,
        consumed: 0,
    };
    let mut head = [0u8; HEADER_LEN];
    cur.fill(&mut head)?;
    let header = StreamHeader::from_bytes(&head)?;

    let m = header.measurements as usize;
    let mut frames = Vec::new();
    let mut rec_head = [0u8; 3];
    let mut payload = vec![0u8; 4 * m];
    for frame_index in 0..header.frame_count as usize {
        let mut base = vec![0u8; header.base_len()];
        cur.fill(&mut base)?;
        let mut blocks = Vec::with_capacity(header.blocks_per_frame());
        for block_index in 0..header.blocks_per_frame() {
            cur.fill(&mut rec_head)?;
            let k = u16::from_le_bytes([rec_head[1], rec_head[2]]);
            match rec_head[0] {
                1 if k == 0 => blocks.push(BlockRecord::Skip),
                1 => {
                    return Err(ContainerError::CorruptPayload(format!(
                        "frame {frame_index} block {block_index}: skipped block with k={k}"
                    )))
                }
                0 if k == 0 || k > header.block_len => {
                    return Err(ContainerError::CorruptPayload(format!(
                        "frame {frame_index} block {block_index}: sparsity {k} outside 1..={}",
                        header.block_len
                    )))
                }
                0 => {
                    cur.fill(&mut payload)?;
                    let y = payload
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    blocks.push(BlockRecord::Measured { k, y });
                }
                flag => {
                    return Err(ContainerError::CorruptPayload(format!(
                        "frame {frame_index} block {block_index}: skip flag {flag}"
                    )))
                }
            }
        }
        frames.push(CompressedFrame { base, blocks });
    }
    Ok(CompressedStream { header, frames })
}

/// Byte and measurement counts of one frame's layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerAccounting {
    pub base_bytes: usize,
    pub super_bytes: usize,
    /// Measurements transmitted for the residual.
    pub measurements: usize,
    /// Samples of the full-resolution residual.
    pub residual_samples: usize,
}

impl LayerAccounting {
    /// Measurements per residual sample (the effective M/N).
    pub fn ratio(&self) -> f64 {
        if self.residual_samples == 0 {
            0.0
        } else {
            self.measurements as f64 / self.residual_samples as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayloadAccounting {
    pub frames: Vec<LayerAccounting>,
    pub total: LayerAccounting,
}

impl PayloadAccounting {
    pub fn ratio_vs_full_residual(&self) -> f64 {
        self.total.ratio()
    }

    /// Fraction of bandwidth saved relative to sending one uncompressed
    /// residual frame per group of `gop` frames.
    pub fn saving_vs_gop_residual(&self, gop: usize) -> f64 {
        let frames = self.frames.len();
        if frames == 0 || gop == 0 {
            return 0.0;
        }
        let per_frame = self.total.residual_samples as f64 / frames as f64;
        let reference = per_frame * frames as f64 / gop as f64;
        1.0 - self.total.measurements as f64 / reference
    }
}

pub fn payload_accounting(stream: &CompressedStream) -> PayloadAccounting {
    let h = &stream.header;
    let residual_samples = h.width as usize * h.height as usize;
    let frames: Vec<LayerAccounting> = stream
        .frames
        .iter()
        .map(|f| LayerAccounting {
            base_bytes: f.base.len(),
            super_bytes: f.blocks.iter().map(BlockRecord::encoded_len).sum(),
            measurements: f
                .blocks
                .iter()
                .map(|b| match b {
                    BlockRecord::Skip => 0,
                    BlockRecord::Measured { y, .. } => y.len(),
                })
                .sum(),
            residual_samples,
        })
        .collect();
    let total = frames.iter().fold(
        LayerAccounting {
            base_bytes: 0,
            super_bytes: 0,
            measurements: 0,
            residual_samples: 0,
        },
        |acc, f| LayerAccounting {
            base_bytes: acc.base_bytes + f.base_bytes,
            super_bytes: acc.super_bytes + f.super_bytes,
            measurements: acc.measurements + f.measurements,
            residual_samples: acc.residual_samples + f.residual_samples,
        },
    );
    PayloadAccounting { frames, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(frame_count: u32) -> StreamHeader {
        StreamHeader {
            version: VERSION,
            width: 16,
            height: 8,
            frame_count,
            scale: 2,
            block_size: 4,
            measurements: 5,
            block_len: 16,
            ct: 15,
            seed: 0xDEAD_BEEF,
            solver_hint: 0,
        }
    }

    #[test]
    fn header_only_stream_is_32_bytes() {
        // 4+2+2+2+4+1+2+2+2+2+8+1
        let field_sizes = [4, 2, 2, 2, 4, 1, 2, 2, 2, 2, 8, 1];
        assert_eq!(field_sizes.iter().sum::<usize>(), HEADER_LEN);
        let s = CompressedStream {
            header: header(0),
            frames: vec![],
        };
        let bytes = to_bytes(&s).unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[0..4], b"CSSR");
        assert_eq!(&bytes[23..31], &0xDEAD_BEEFu64.to_le_bytes());
        assert_eq!(deserialize(&bytes[..]).unwrap(), s);
    }

    #[test]
    fn all_skip_frame_uses_three_bytes_per_block() {
        let h = header(1);
        let s = CompressedStream {
            header: h,
            frames: vec![CompressedFrame {
                base: vec![9; h.base_len()],
                blocks: vec![BlockRecord::Skip; h.blocks_per_frame()],
            }],
        };
        let bytes = to_bytes(&s).unwrap();
        assert_eq!(bytes.len(), 32 + 32 + 3 * 8);
        assert_eq!(&bytes[64..67], &[1, 0, 0]);
        let acc = payload_accounting(&s);
        assert_eq!(acc.ratio_vs_full_residual(), 0.0);
        assert_eq!(acc.total.super_bytes, 24);
    }

    #[test]
    fn rejects_bad_magic_and_rates() {
        let mut bytes = to_bytes(&CompressedStream {
            header: header(0),
            frames: vec![],
        })
        .unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            deserialize(&bad[..]),
            Err(ContainerError::Format(_))
        ));
        bytes[17..19].copy_from_slice(&16u16.to_le_bytes());
        match deserialize(&bytes[..]) {
            Err(ContainerError::CorruptHeader { field, .. }) => assert_eq!(field, "M"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_counts() {
        let h = header(1);
        let s = CompressedStream {
            header: h,
            frames: vec![CompressedFrame {
                base: vec![1; h.base_len()],
                blocks: (0..h.blocks_per_frame())
                    .map(|i| BlockRecord::Measured {
                        k: 2,
                        y: vec![i as f32; 5],
                    })
                    .collect(),
            }],
        };
        let bytes = to_bytes(&s).unwrap();
        assert_eq!(bytes.len(), 32 + 32 + 8 * 23);
        match deserialize(&bytes[..bytes.len() - 1]) {
            Err(ContainerError::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, bytes.len() as u64 - 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            deserialize(&bytes[..10]),
            Err(ContainerError::Truncated {
                expected: 32,
                actual: 10
            })
        ));
    }

    #[test]
    fn serialize_refuses_inconsistent_streams() {
        let h = header(2);
        let s = CompressedStream {
            header: h,
            frames: vec![],
        };
        assert!(matches!(to_bytes(&s), Err(ContainerError::Inconsistent(_))));
    }

    #[test]
    fn gop_saving_matches_rate_arithmetic() {
        // 5 frames at M/N = 0.1 against one full residual per 5-frame group.
        let h = StreamHeader {
            width: 20,
            height: 20,
            frame_count: 5,
            scale: 2,
            block_size: 10,
            measurements: 10,
            block_len: 100,
            ..header(5)
        };
        let frame = CompressedFrame {
            base: vec![0; h.base_len()],
            blocks: vec![
                BlockRecord::Measured {
                    k: 3,
                    y: vec![0.5; 10]
                };
                4
            ],
        };
        let s = CompressedStream {
            header: h,
            frames: vec![frame; 5],
        };
        let acc = payload_accounting(&s);
        assert_eq!(acc.ratio_vs_full_residual(), 0.1);
        assert_eq!(
            acc.total.measurements * 2,
            h.width as usize * h.height as usize
        );
        assert!((acc.saving_vs_gop_residual(5) - 0.5).abs() < 1e-12);
    }
}
