//! Independent oracles and fixtures for the acceptance suite.
//!
//! Nothing here calls into the codec's own solvers or validators; each
//! helper recomputes its answer from first principles so the suite can
//! check the library against it.

use std::io::{self, Read};

use cssr::container::{BlockRecord, CompressedFrame, CompressedStream, StreamHeader, VERSION};
use cssr::sensing::splitmix64;
use cssr::{SensingMatrix, VideoFrame, VideoSequence};

pub use cssr::container::HEADER_LEN;

/// Small counter-based generator for test data.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(1);
        splitmix64(self.0)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `k` distinct indices from `0..n`.
    pub fn support(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ‖estimate − truth‖₂ / ‖truth‖₂.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let diff: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(truth).max(f64::MIN_POSITIVE)
}

/// Sparsest exact solution of `y = A s` among supports of size 0, 1 and 2,
/// found by enumeration. `None` if no such support fits.
pub fn l0_oracle(a: &SensingMatrix, y: &[f64]) -> Option<Vec<f64>> {
    let n = a.cols();
    let tol = 1e-9 * norm(y).max(1.0);
    if norm(y) <= tol {
        return Some(vec![0.0; n]);
    }
    let col = |j: usize| a.column(j);
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, z)| x * z).sum::<f64>();
    let residual = |coef: &[(usize, f64)]| {
        let mut r = y.to_vec();
        for &(j, c) in coef {
            for (ri, aj) in r.iter_mut().zip(col(j)) {
                *ri -= c * aj;
            }
        }
        norm(&r)
    };
    let dense = |coef: &[(usize, f64)]| {
        let mut s = vec![0.0; n];
        for &(j, c) in coef {
            s[j] = c;
        }
        s
    };
    for j in 0..n {
        let c = dot(col(j), y) / dot(col(j), col(j));
        if residual(&[(j, c)]) <= tol {
            return Some(dense(&[(j, c)]));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let (aii, ajj, aij) = (
                dot(col(i), col(i)),
                dot(col(j), col(j)),
                dot(col(i), col(j)),
            );
            let det = aii * ajj - aij * aij;
            if det.abs() <= 1e-12 * aii * ajj {
                continue;
            }
            let (bi, bj) = (dot(col(i), y), dot(col(j), y));
            let ci = (ajj * bi - aij * bj) / det;
            let cj = (aii * bj - aij * bi) / det;
            if residual(&[(i, ci), (j, cj)]) <= tol {
                return Some(dense(&[(i, ci), (j, cj)]));
            }
        }
    }
    None
}

/// Flat background with one to three isolated bright points per 32×32 block.
pub fn spike_clip(width: usize, height: usize, frames: usize, seed: u64) -> VideoSequence {
    let mut rng = Rng::new(seed);
    let frames = (0..frames)
        .map(|_| {
            let mut luma = vec![96u8; width * height];
            for by in (0..height).step_by(32) {
                for bx in (0..width).step_by(32) {
                    for _ in 0..1 + rng.below(3) {
                        let x = bx + 4 + rng.below(24);
                        let y = by + 4 + rng.below(24);
                        luma[y * width + x] = 136 + rng.below(100) as u8;
                    }
                }
            }
            VideoFrame::new(width, height, luma).expect("dimensions match")
        })
        .collect();
    VideoSequence::new(frames, (25, 1)).expect("frames share dimensions")
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A well-formed stream with random layout and arbitrary payload bits.
pub fn random_stream(rng: &mut Rng) -> CompressedStream {
    let m = 1 + rng.below(3);
    let b = [2usize, 4, 6][rng.below(3)];
    let unit = m * b / gcd(m, b);
    let width = unit * (1 + rng.below(4));
    let height = unit * (1 + rng.below(4));
    let n = b * b;
    let measurements = 1 + rng.below(n - 1);
    let frames = rng.below(4);
    let header = StreamHeader {
        version: VERSION,
        width: width as u16,
        height: height as u16,
        frame_count: frames as u32,
        scale: m as u8,
        block_size: b as u16,
        measurements: measurements as u16,
        block_len: n as u16,
        ct: rng.below(256) as u16,
        seed: rng.next_u64(),
        solver_hint: rng.below(3) as u8,
    };
    let frames = (0..frames)
        .map(|_| CompressedFrame {
            base: (0..header.base_len())
                .map(|_| rng.below(256) as u8)
                .collect(),
            blocks: (0..header.blocks_per_frame())
                .map(|_| {
                    if rng.below(3) == 0 {
                        BlockRecord::Skip
                    } else {
                        BlockRecord::Measured {
                            k: 1 + rng.below(n) as u16,
                            y: (0..measurements)
                                .map(|_| f32::from_bits(rng.next_u64() as u32))
                                .collect(),
                        }
                    }
                })
                .collect(),
        })
        .collect();
    CompressedStream { header, frames }
}

/// Header validity, read straight off the byte layout.
pub fn header_is_valid(h: &[u8; HEADER_LEN]) -> bool {
    let u16_at = |o: usize| u16::from_le_bytes([h[o], h[o + 1]]) as u32;
    let (version, w, ht) = (u16_at(4), u16_at(6), u16_at(8));
    let (m, b, big_m, n, ct) = (h[14] as u32, u16_at(15), u16_at(17), u16_at(19), u16_at(21));
    &h[0..4] == b"CSSR"
        && version == 1
        && w >= 2
        && ht >= 2
        && m >= 1
        && b >= 1
        && w % m == 0
        && ht % m == 0
        && w % b == 0
        && ht % b == 0
        && n == b * b
        && big_m >= 1
        && big_m < n
        && ct <= 255
        && h[31] <= 2
}

/// Reader over a byte slice that records how many bytes were handed out.
pub struct Counting<'a> {
    data: &'a [u8],
    pub consumed: usize,
}

impl<'a> Counting<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, consumed: 0 }
    }
}

impl Read for Counting<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = buf.len().min(self.data.len() - self.consumed);
        buf[..n].copy_from_slice(&self.data[self.consumed..self.consumed + n]);
        self.consumed += n;
        Ok(n)
    }
}
