//! Raw video input and output.
//!
//! Frames are handled as 8-bit luma planes only. Chroma planes present in the
//! source are read past and dropped; Y4M output is always written as `Cmono`.

use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("truncated payload in frame {frame}: expected {expected} bytes, found {found}")]
    Truncated {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported colour space `{0}` (only 4:2:0 and 4:0:0 are accepted)")]
    UnsupportedColorspace(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Chroma layout of a planar source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChromaFormat {
    Yuv420,
    Mono,
}

impl ChromaFormat {
    /// Total bytes of one planar frame in this layout.
    pub fn frame_bytes(self, width: usize, height: usize) -> usize {
        let luma = width * height;
        match self {
            ChromaFormat::Mono => luma,
            ChromaFormat::Yuv420 => luma + 2 * width.div_ceil(2) * height.div_ceil(2),
        }
    }
}

/// A single 8-bit luma raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoFrame {
    width: usize,
    height: usize,
    luma: Vec<u8>,
}

impl VideoFrame {
    pub fn new(width: usize, height: usize, luma: Vec<u8>) -> Result<Self, FrameIoError> {
        if width == 0 || height == 0 {
            return Err(FrameIoError::InvalidFrame(format!(
                "dimensions must be non-zero, got {width}x{height}"
            )));
        }
        if luma.len() != width * height {
            return Err(FrameIoError::InvalidFrame(format!(
                "luma length {} does not match {width}x{height}",
                luma.len()
            )));
        }
        Ok(Self {
            width,
            height,
            luma,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            luma: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0);
        let mut luma = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                luma.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            luma,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn luma(&self) -> &[u8] {
        &self.luma
    }

    pub fn into_luma(self) -> Vec<u8> {
        self.luma
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.luma[y * self.width + x]
    }
}

/// An ordered, non-empty list of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<VideoFrame>,
    frame_rate: (u32, u32),
}

impl VideoSequence {
    pub const DEFAULT_FRAME_RATE: (u32, u32) = (25, 1);

    pub fn new(frames: Vec<VideoFrame>, frame_rate: (u32, u32)) -> Result<Self, FrameIoError> {
        let first = frames
            .first()
            .ok_or_else(|| FrameIoError::InvalidFrame("sequence has no frames".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width != w || f.height != h)
        {
            return Err(FrameIoError::InvalidFrame(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                f.width, f.height
            )));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[VideoFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<VideoFrame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn frame_rate(&self) -> (u32, u32) {
        self.frame_rate
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> FrameIoError {
    FrameIoError::Parse {
        offset,
        message: message.into(),
    }
}

/// Finds the next `\n` at or after `start`, returning its index.
fn line_end(data: &[u8], start: usize) -> Option<usize> {
    data[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| start + p)
}

fn parse_ratio(token: &str) -> Option<(u32, u32)> {
    let (n, d) = token.split_once(':')?;
    Some((n.parse().ok()?, d.parse().ok()?))
}

/// Reads a YUV4MPEG2 stream and returns its luma planes.
pub fn load_y4m<R: Read>(mut source: R) -> Result<VideoSequence, FrameIoError> {
    let mut data = Vec::new();
    source.read_to_end(&mut data)?;
    parse_y4m(&data)
}

pub fn parse_y4m(data: &[u8]) -> Result<VideoSequence, FrameIoError> {
    const MAGIC: &[u8] = b"YUV4MPEG2";
    if data.is_empty() {
        return Err(parse_err(0, "empty stream"));
    }
    if !data.starts_with(MAGIC) {
        return Err(parse_err(0, "missing YUV4MPEG2 signature"));
    }
    let header_end =
        line_end(data, 0).ok_or_else(|| parse_err(data.len(), "unterminated stream header"))?;
    let header = std::str::from_utf8(&data[MAGIC.len()..header_end])
        .ok()
        .filter(|h| h.is_ascii())
        .ok_or_else(|| parse_err(MAGIC.len(), "stream header is not ASCII"))?;

    let mut width = None;
    let mut height = None;
    let mut frame_rate = VideoSequence::DEFAULT_FRAME_RATE;
    let mut format = ChromaFormat::Yuv420;
    let mut offset = MAGIC.len();
    for token in header.split(' ') {
        let token_offset = offset;
        offset += token.len() + 1;
        if token.is_empty() {
            continue;
        }
        let (tag, value) = token.split_at(1);
        match tag {
            "W" => {
                width = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| parse_err(token_offset, format!("bad width `{value}`")))?,
                )
            }
            "H" => {
                height = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| parse_err(token_offset, format!("bad height `{value}`")))?,
                )
            }
            "F" => {
                frame_rate = parse_ratio(value)
                    .ok_or_else(|| parse_err(token_offset, format!("bad frame rate `{value}`")))?
            }
            "C" => {
                format = match value {
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => ChromaFormat::Yuv420,
                    "mono" | "400" => ChromaFormat::Mono,
                    other => return Err(FrameIoError::UnsupportedColorspace(other.to_string())),
                }
            }
            // Interlacing, aspect ratio and extensions carry nothing we use.
            "I" | "A" | "X" => {}
            _ => {
                return Err(parse_err(
                    token_offset,
                    format!("unknown header token `{token}`"),
                ))
            }
        }
    }
    let width = width.ok_or_else(|| parse_err(header_end, "header has no width"))?;
    let height = height.ok_or_else(|| parse_err(header_end, "header has no height"))?;
    if width == 0 || height == 0 {
        return Err(parse_err(header_end, "frame dimensions must be non-zero"));
    }

    let luma_bytes = width * height;
    let frame_bytes = format.frame_bytes(width, height);
    let mut frames = Vec::new();
    let mut pos = header_end + 1;
    while pos < data.len() {
        let marker_end = line_end(data, pos).ok_or_else(|| {
            parse_err(
                pos,
                format!("unterminated FRAME marker for frame {}", frames.len()),
            )
        })?;
        let marker = &data[pos..marker_end];
        if !(marker == b"FRAME" || marker.starts_with(b"FRAME ")) {
            return Err(parse_err(pos, "expected FRAME marker"));
        }
        let payload = marker_end + 1;
        let available = data.len() - payload;
        if available < frame_bytes {
            return Err(FrameIoError::Truncated {
                frame: frames.len(),
                expected: frame_bytes,
                found: available,
            });
        }
        frames.push(VideoFrame {
            width,
            height,
            luma: data[payload..payload + luma_bytes].to_vec(),
        });
        pos = payload + frame_bytes;
    }
    if frames.is_empty() {
        return Err(parse_err(pos, "stream contains no frames"));
    }
    VideoSequence::new(frames, frame_rate)
}

/// Slices a headerless planar stream into frames, keeping luma only.
pub fn load_raw_yuv<R: Read>(
    mut source: R,
    width: usize,
    height: usize,
    format: ChromaFormat,
) -> Result<VideoSequence, FrameIoError> {
    if width == 0 || height == 0 {
        return Err(FrameIoError::InvalidFrame(format!(
            "dimensions must be non-zero, got {width}x{height}"
        )));
    }
    let mut data = Vec::new();
    source.read_to_end(&mut data)?;
    let frame_bytes = format.frame_bytes(width, height);
    let whole = data.len() / frame_bytes;
    let remainder = data.len() % frame_bytes;
    if remainder != 0 {
        return Err(FrameIoError::Truncated {
            frame: whole,
            expected: frame_bytes,
            found: remainder,
        });
    }
    if whole == 0 {
        return Err(FrameIoError::Truncated {
            frame: 0,
            expected: frame_bytes,
            found: 0,
        });
    }
    let frames = data
        .chunks_exact(frame_bytes)
        .map(|chunk| VideoFrame {
            width,
            height,
            luma: chunk[..width * height].to_vec(),
        })
        .collect();
    VideoSequence::new(frames, VideoSequence::DEFAULT_FRAME_RATE)
}

/// Writes the sequence as a monochrome (4:0:0) Y4M stream.
pub fn write_y4m<W: Write>(sequence: &VideoSequence, mut sink: W) -> Result<(), FrameIoError> {
    let (num, den) = sequence.frame_rate();
    writeln!(
        sink,
        "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 Cmono",
        sequence.width(),
        sequence.height(),
        num,
        den
    )?;
    for frame in sequence.frames() {
        sink.write_all(b"FRAME\n")?;
        sink.write_all(&frame.luma)?;
    }
    sink.flush()?;
    Ok(())
}
