//! Threshold sparsification and Gaussian compressive measurement of residual
//! blocks.
//!
//! Residuals are taken to be sparse in the pixel domain, so the sparsifying
//! basis is the identity and the sensing matrix is applied to the
//! zero-forced block directly.
//!
//! # Matrix generation
//!
//! Entries are drawn column by column (column 0 rows 0..M, then column 1, ...)
//! from a ChaCha20 stream keyed with four SplitMix64 outputs of the seed.
//! Each pair of 64-bit words becomes two standard normals by Box–Muller,
//! using the top 53 bits of each word as a uniform in (0, 1]. Transcendental
//! functions come from `libm`, so the sequence is identical on every
//! platform. Entries are scaled by `1/sqrt(M)`.

use nalgebra::DMatrix;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::layers::ResidualFrame;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SensingError {
    #[error("invalid sensing dimensions: need 0 < M < N, got M={rows}, N={cols}")]
    Dimensions { rows: usize, cols: usize },
    #[error("vector of length {found} does not match {expected} columns")]
    Length { expected: usize, found: usize },
    #[error("block ({row}, {col}) of size {size} lies outside a {width}x{height} frame")]
    BlockOutOfBounds {
        row: usize,
        col: usize,
        size: usize,
        width: usize,
        height: usize,
    },
}

/// SplitMix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the sensing matrix for one block of one frame.
///
/// `splitmix64(splitmix64(splitmix64(stream_seed) ^ frame) ^ block)`, where
/// `block` is the row-major block index within the frame.
pub fn block_seed(stream_seed: u64, frame_index: u64, block_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(stream_seed) ^ frame_index) ^ block_index)
}

fn rng_for(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        let word = splitmix64(state);
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

#[inline]
fn unit_open_closed(word: u64) -> f64 {
    ((word >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Dense M×N Gaussian measurement operator with N(0, 1/M) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    seed: u64,
    matrix: DMatrix<f64>,
}

pub fn make_sensing_matrix(
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<SensingMatrix, SensingError> {
    if rows == 0 || rows >= cols {
        return Err(SensingError::Dimensions { rows, cols });
    }
    let mut rng = rng_for(seed);
    let scale = 1.0 / (rows as f64).sqrt();
    let total = rows * cols;
    let mut data = Vec::with_capacity(total + 1);
    while data.len() < total {
        let u1 = unit_open_closed(rng.next_u64());
        let u2 = unit_open_closed(rng.next_u64());
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        data.push(radius * libm::cos(angle) * scale);
        data.push(radius * libm::sin(angle) * scale);
    }
    data.truncate(total);
    Ok(SensingMatrix {
        seed,
        matrix: DMatrix::from_vec(rows, cols, data),
    })
}

impl SensingMatrix {
    /// Wraps an explicit matrix; used for hand-built test problems.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self, SensingError> {
        let (rows, cols) = matrix.shape();
        if rows == 0 || cols == 0 {
            return Err(SensingError::Dimensions { rows, cols });
        }
        Ok(Self { seed: 0, matrix })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn compression_rate(&self) -> f64 {
        self.rows() as f64 / self.cols() as f64
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Column `j` as a contiguous slice.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.rows();
        &self.matrix.as_slice()[j * m..(j + 1) * m]
    }

    /// `A x` for dense `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols());
        let mut y = vec![0.0; self.rows()];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.column(j), &mut y);
            }
        }
        y
    }

    /// `Aᵀ r`.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.rows());
        (0..self.cols()).map(|j| dot(self.column(j), r)).collect()
    }
}

/// Dot product with four interleaved accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Binary keep-mask produced by thresholding: bit i is set iff |v_i| ≥ CT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroForcingMask {
    bits: Vec<bool>,
}

impl ZeroForcingMask {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// A length-N block with its nonzero support recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlockVector {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl SparseBlockVector {
    pub fn from_dense(values: Vec<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { values, support }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Measurement vector of one residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMeasurement {
    pub y: Vec<f64>,
    /// (row, col) of the tile in block units.
    pub block_index: (usize, usize),
    pub k_hint: usize,
}

/// Zeroes every entry with |v| < `ct`.
pub fn zero_force(block: &[i16], ct: u16) -> (SparseBlockVector, ZeroForcingMask) {
    let bits: Vec<bool> = block.iter().map(|&v| v.unsigned_abs() >= ct).collect();
    let values = block
        .iter()
        .zip(&bits)
        .map(|(&v, &keep)| if keep { v as f64 } else { 0.0 })
        .collect();
    (
        SparseBlockVector::from_dense(values),
        ZeroForcingMask { bits },
    )
}

/// Nonzero count of the block after zero-forcing at `ct`.
pub fn estimate_sparsity(block: &[i16], ct: u16) -> usize {
    block
        .iter()
        .filter(|&&v| v != 0 && v.unsigned_abs() >= ct)
        .count()
}

/// `y = A s`, accumulated over the support in column order.
pub fn measure(
    a: &SensingMatrix,
    s: &SparseBlockVector,
    block_index: (usize, usize),
) -> Result<BlockMeasurement, SensingError> {
    if s.len() != a.cols() {
        return Err(SensingError::Length {
            expected: a.cols(),
            found: s.len(),
        });
    }
    let mut y = vec![0.0; a.rows()];
    for &j in &s.support {
        axpy(s.values[j], a.column(j), &mut y);
    }
    Ok(BlockMeasurement {
        y,
        block_index,
        k_hint: s.k(),
    })
}

/// Measurement count for a k-sparse block of length `n`:
/// `clamp(max(floor, round(multiplier·k)), 1, n-1)`.
pub fn suggest_measurements(k: usize, n: usize, multiplier: f64, floor: usize) -> usize {
    let scaled = (multiplier * k as f64).round() as usize;
    scaled.max(floor).clamp(1, n.saturating_sub(1).max(1))
}

fn check_block(
    frame: &ResidualFrame,
    (row, col): (usize, usize),
    size: usize,
) -> Result<(), SensingError> {
    let inside =
        size > 0 && (col + 1) * size <= frame.width() && (row + 1) * size <= frame.height();
    if !inside {
        return Err(SensingError::BlockOutOfBounds {
            row,
            col,
            size,
            width: frame.width(),
            height: frame.height(),
        });
    }
    Ok(())
}

/// Column-major scan of the `size`×`size` tile at `block_index`.
pub fn vectorize_block(
    frame: &ResidualFrame,
    block_index: (usize, usize),
    size: usize,
) -> Result<Vec<i16>, SensingError> {
    check_block(frame, block_index, size)?;
    let (x0, y0) = (block_index.1 * size, block_index.0 * size);
    let mut out = Vec::with_capacity(size * size);
    for x in x0..x0 + size {
        for y in y0..y0 + size {
            out.push(frame.get(x, y));
        }
    }
    Ok(out)
}

/// Writes a column-major tile back into `frame`.
pub fn devectorize_block(
    values: &[i16],
    frame: &mut ResidualFrame,
    block_index: (usize, usize),
    size: usize,
) -> Result<(), SensingError> {
    check_block(frame, block_index, size)?;
    if values.len() != size * size {
        return Err(SensingError::Length {
            expected: size * size,
            found: values.len(),
        });
    }
    let (x0, y0) = (block_index.1 * size, block_index.0 * size);
    for (i, &v) in values.iter().enumerate() {
        frame.set(x0 + i / size, y0 + i % size, v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_core::RngCore;

    fn lcg_values(seed: u64, n: usize, span: i16) -> Vec<i16> {
        let mut rng = rng_for(seed);
        (0..n)
            .map(|_| (rng.next_u32() % (2 * span as u32 + 1)) as i16 - span)
            .collect()
    }

    #[test]
    fn matrix_is_deterministic() {
        let a = make_sensing_matrix(8, 32, 7).unwrap();
        let b = make_sensing_matrix(8, 32, 7).unwrap();
        assert_eq!(a, b);
        let c = make_sensing_matrix(8, 32, 1).unwrap();
        let d = make_sensing_matrix(8, 32, 2).unwrap();
        assert_ne!(c.matrix(), d.matrix());
    }

    #[test]
    fn matrix_rejects_non_compressive_shapes() {
        assert!(make_sensing_matrix(32, 32, 0).is_err());
        assert!(make_sensing_matrix(0, 32, 0).is_err());
    }

    #[test]
    fn operating_point_rate() {
        let a = make_sensing_matrix(307, 1024, 3).unwrap();
        assert!((a.compression_rate() - 0.2998).abs() < 1e-4);
        assert!((a.compression_rate() - 0.3).abs() < 5e-4);
    }

    #[test]
    fn columns_have_unit_expected_norm() {
        let a = make_sensing_matrix(256, 1024, 11).unwrap();
        let mean_sq: f64 = (0..a.cols())
            .map(|j| dot(a.column(j), a.column(j)))
            .sum::<f64>()
            / a.cols() as f64;
        // Sample mean of 1024 chi-square(256)/256 draws; sd ≈ 0.0028.
        assert!((mean_sq - 1.0).abs() < 0.015, "{mean_sq}");
        let mean: f64 = a.matrix().iter().sum::<f64>() / (256.0 * 1024.0);
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn zero_force_operating_point() {
        let (s, mask) = zero_force(&[3, 20, -7, 40, -16], 15);
        assert_eq!(s.values(), &[0.0, 20.0, 0.0, 40.0, -16.0]);
        assert_eq!(s.k(), 3);
        assert_eq!(s.support(), &[1, 3, 4]);
        assert_eq!(mask.bits(), &[false, true, false, true, true]);
        assert_eq!(estimate_sparsity(&[3, 20, -7, 40, -16], 15), 3);
    }

    #[test]
    fn zero_force_extremes() {
        let block = [0, 5, -255, 0, 1];
        let (s, mask) = zero_force(&block, 0);
        assert_eq!(s.values(), &[0.0, 5.0, -255.0, 0.0, 1.0]);
        assert_eq!(s.support(), &[1, 2, 4]);
        assert_eq!(mask.kept(), 5);
        let (s, _) = zero_force(&block, 256);
        assert_eq!(s.k(), 0);
        assert_eq!(estimate_sparsity(&[0; 16], 0), 0);
    }

    #[test]
    fn sparsity_matches_direct_count() {
        let block = lcg_values(5, 1024, 255);
        for ct in [0u16, 1, 15, 100, 255, 256] {
            let mut count = 0;
            for &v in &block {
                if v != 0 && (v as i32).abs() >= ct as i32 {
                    count += 1;
                }
            }
            assert_eq!(estimate_sparsity(&block, ct), count);
            assert_eq!(zero_force(&block, ct).0.k(), count);
        }
    }

    #[test]
    fn measure_linearity_basics() {
        let a = make_sensing_matrix(16, 64, 9).unwrap();
        let zero = SparseBlockVector::from_dense(vec![0.0; 64]);
        assert!(measure(&a, &zero, (0, 0))
            .unwrap()
            .y
            .iter()
            .all(|&v| v == 0.0));
        let mut e = vec![0.0; 64];
        e[17] = 1.0;
        let y = measure(&a, &SparseBlockVector::from_dense(e), (0, 0))
            .unwrap()
            .y;
        assert_eq!(y.as_slice(), a.column(17));
        assert!(measure(&a, &SparseBlockVector::from_dense(vec![0.0; 63]), (0, 0)).is_err());
    }

    #[test]
    fn measure_matches_naive_matvec() {
        let a = make_sensing_matrix(16, 64, 21).unwrap();
        let mut s = vec![0.0; 64];
        s[3] = 12.0;
        s[40] = -7.5;
        s[63] = 101.0;
        let got = measure(&a, &SparseBlockVector::from_dense(s.clone()), (1, 2)).unwrap();
        assert_eq!(got.block_index, (1, 2));
        assert_eq!(got.k_hint, 3);
        for i in 0..16 {
            let mut acc = 0.0;
            for (j, sj) in s.iter().enumerate() {
                acc += a.matrix()[(i, j)] * sj;
            }
            assert!((got.y[i] - acc).abs() <= 1e-12, "row {i}");
        }
    }

    #[test]
    fn measurement_counts() {
        assert_eq!(suggest_measurements(8, 1024, 4.0, 4), 32);
        assert_eq!(suggest_measurements(0, 1024, 4.0, 4), 4);
        assert_eq!(suggest_measurements(1024, 1024, 4.0, 4), 1023);
        assert_eq!(suggest_measurements(10, 1024, 3.0, 1), 30);
    }

    #[test]
    fn column_major_tiles() {
        let frame = ResidualFrame::from_values(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(
            vectorize_block(&frame, (0, 0), 2).unwrap(),
            vec![1, 3, 2, 4]
        );
        assert!(matches!(
            vectorize_block(&frame, (0, 1), 2),
            Err(SensingError::BlockOutOfBounds { .. })
        ));
        // block covering the whole frame is the plain column-major v(:)
        let frame = ResidualFrame::from_values(3, 3, (0..9).collect()).unwrap();
        assert_eq!(
            vectorize_block(&frame, (0, 0), 3).unwrap(),
            vec![0, 3, 6, 1, 4, 7, 2, 5, 8]
        );
    }

    #[test]
    fn tile_round_trip() {
        let vals = lcg_values(77, 8 * 12, 255);
        let frame = ResidualFrame::from_values(8, 12, vals).unwrap();
        let mut rebuilt = ResidualFrame::zeros(8, 12);
        for row in 0..3 {
            for col in 0..2 {
                let v = vectorize_block(&frame, (row, col), 4).unwrap();
                devectorize_block(&v, &mut rebuilt, (row, col), 4).unwrap();
            }
        }
        assert_eq!(rebuilt, frame);
    }

    fn arb_block() -> impl Strategy<Value = Vec<i16>> {
        proptest::collection::vec(-255i16..=255, 1..200)
    }

    proptest! {
        #[test]
        fn zero_force_is_idempotent(block in arb_block(), ct in 0u16..300) {
            let (once, _) = zero_force(&block, ct);
            let again_in: Vec<i16> = once.values().iter().map(|&v| v as i16).collect();
            let (twice, _) = zero_force(&again_in, ct);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn sparsity_monotone_in_threshold(block in arb_block(), a in 0u16..300, b in 0u16..300) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(estimate_sparsity(&block, lo) >= estimate_sparsity(&block, hi));
        }

        #[test]
        fn measure_is_linear(
            seed in any::<u64>(),
            s1 in proptest::collection::vec(-255i16..=255, 48),
            s2 in proptest::collection::vec(-255i16..=255, 48),
            ca in -3.0f64..3.0,
            cb in -3.0f64..3.0,
        ) {
            let a = make_sensing_matrix(12, 48, seed).unwrap();
            let v1: Vec<f64> = s1.iter().map(|&v| v as f64).collect();
            let v2: Vec<f64> = s2.iter().map(|&v| v as f64).collect();
            let mix: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| ca * x + cb * y).collect();
            let y1 = measure(&a, &SparseBlockVector::from_dense(v1), (0, 0)).unwrap().y;
            let y2 = measure(&a, &SparseBlockVector::from_dense(v2), (0, 0)).unwrap().y;
            let ym = measure(&a, &SparseBlockVector::from_dense(mix), (0, 0)).unwrap().y;
            for i in 0..12 {
                prop_assert!((ym[i] - (ca * y1[i] + cb * y2[i])).abs() <= 1e-9 * (1.0 + ym[i].abs()));
            }
        }
    }
}
