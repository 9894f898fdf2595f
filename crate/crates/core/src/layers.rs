//! Spatial layer decomposition.
//!
//! The base layer is the frame box-filtered down by `m`; the super layer is
//! the signed difference between the original and the bilinear up-sampled
//! base. Both filters are evaluated in integer arithmetic so every platform
//! produces the same samples.

use thiserror::Error;

use crate::frame_io::VideoFrame;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayerError {
    #[error("{width}x{height} frame is not divisible by scale factor {m}")]
    NotDivisible {
        width: usize,
        height: usize,
        m: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    Mismatch(usize, usize, usize, usize),
    #[error("scale factor must be at least 1")]
    ZeroScale,
}

/// Spatial resampling rate between base and full resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleFactor(usize);

impl ScaleFactor {
    pub fn new(m: usize) -> Result<Self, LayerError> {
        if m == 0 {
            return Err(LayerError::ZeroScale);
        }
        Ok(Self(m))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Signed super-layer raster, row-major, values in [-255, 255].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualFrame {
    width: usize,
    height: usize,
    values: Vec<i16>,
}

impl ResidualFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<i16>) -> Option<Self> {
        (values.len() == width * height && values.iter().all(|v| (-255..=255).contains(v)))
            .then_some(Self {
                width,
                height,
                values,
            })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i16 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: i16) {
        debug_assert!((-255..=255).contains(&v));
        self.values[y * self.width + x] = v;
    }
}

/// Integer division rounding half away from zero. `den` must be positive.
#[inline]
fn div_round(num: i64, den: i64) -> i64 {
    if num >= 0 {
        (num + den / 2) / den
    } else {
        -((-num + den / 2) / den)
    }
}

/// m×m box mean filter followed by decimation.
pub fn downsample(frame: &VideoFrame, m: ScaleFactor) -> Result<VideoFrame, LayerError> {
    let m = m.get();
    let (w, h) = (frame.width(), frame.height());
    if w % m != 0 || h % m != 0 {
        return Err(LayerError::NotDivisible {
            width: w,
            height: h,
            m,
        });
    }
    if m == 1 {
        return Ok(frame.clone());
    }
    let area = (m * m) as i64;
    let out = VideoFrame::from_fn(w / m, h / m, |bx, by| {
        let mut sum = 0i64;
        for y in by * m..(by + 1) * m {
            for x in bx * m..(bx + 1) * m {
                sum += frame.get(x, y) as i64;
            }
        }
        div_round(sum, area) as u8
    });
    Ok(out)
}

/// Source tap pair and weight for one output coordinate, in units of 1/(2m).
///
/// Output sample `o` sits at source position `(o + 0.5)/m - 0.5`, clamped to
/// the valid range. The returned weight applies to the second tap.
#[inline]
fn taps(o: usize, m: usize, len: usize) -> (usize, usize, i64) {
    let unit = 2 * m as i64;
    let pos = (2 * o as i64 + 1 - m as i64).clamp(0, unit * (len as i64 - 1));
    let i0 = (pos / unit) as usize;
    let frac = pos % unit;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, frac)
}

/// Bilinear interpolation with half-pixel alignment and edge clamping.
pub fn upsample(frame: &VideoFrame, m: ScaleFactor) -> VideoFrame {
    let m = m.get();
    if m == 1 {
        return frame.clone();
    }
    let (w, h) = (frame.width(), frame.height());
    let unit = 2 * m as i64;
    let xtaps: Vec<_> = (0..w * m).map(|x| taps(x, m, w)).collect();
    let ytaps: Vec<_> = (0..h * m).map(|y| taps(y, m, h)).collect();
    VideoFrame::from_fn(w * m, h * m, |x, y| {
        let (x0, x1, fx) = xtaps[x];
        let (y0, y1, fy) = ytaps[y];
        let p = |xx, yy| frame.get(xx, yy) as i64;
        let top = p(x0, y0) * (unit - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (unit - fx) + p(x1, y1) * fx;
        let v = div_round(top * (unit - fy) + bottom * fy, unit * unit);
        v.clamp(0, 255) as u8
    })
}

fn check_same(a: (usize, usize), b: (usize, usize)) -> Result<(), LayerError> {
    if a != b {
        return Err(LayerError::Mismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

/// Per-pixel `original - upsampled`, unclamped.
pub fn compute_residual(
    original: &VideoFrame,
    upsampled: &VideoFrame,
) -> Result<ResidualFrame, LayerError> {
    check_same(
        (original.width(), original.height()),
        (upsampled.width(), upsampled.height()),
    )?;
    let values = original
        .luma()
        .iter()
        .zip(upsampled.luma())
        .map(|(&o, &u)| o as i16 - u as i16)
        .collect();
    Ok(ResidualFrame {
        width: original.width(),
        height: original.height(),
        values,
    })
}

/// Adds a residual to the up-sampled base, clamping to the 8-bit range.
pub fn super_resolve(
    base_upsampled: &VideoFrame,
    residual: &ResidualFrame,
) -> Result<VideoFrame, LayerError> {
    check_same(
        (base_upsampled.width(), base_upsampled.height()),
        (residual.width, residual.height),
    )?;
    let luma = base_upsampled
        .luma()
        .iter()
        .zip(&residual.values)
        .map(|(&b, &r)| (b as i16 + r).clamp(0, 255) as u8)
        .collect();
    Ok(VideoFrame::new(residual.width, residual.height, luma).expect("dimensions checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(v: usize) -> ScaleFactor {
        ScaleFactor::new(v).unwrap()
    }

    /// Straightforward floating-point bilinear evaluation used as an oracle.
    fn bilinear_value(src: &VideoFrame, m: usize, x: usize, y: usize) -> f64 {
        let coord = |o: usize, len: usize| {
            let s = ((o as f64 + 0.5) / m as f64 - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = s.floor() as usize;
            (i0, (i0 + 1).min(len - 1), s - i0 as f64)
        };
        let (x0, x1, fx) = coord(x, src.width());
        let (y0, y1, fy) = coord(y, src.height());
        let p = |xx, yy| src.get(xx, yy) as f64;
        (1.0 - fy) * ((1.0 - fx) * p(x0, y0) + fx * p(x1, y0))
            + fy * ((1.0 - fx) * p(x0, y1) + fx * p(x1, y1))
    }

    /// Checks an integer sample against the real-valued oracle. Values within
    /// float noise of a .5 tie accept either neighbour.
    fn agrees(sample: u8, exact: f64) -> bool {
        let s = sample as f64;
        if ((exact - exact.floor()) - 0.5).abs() < 1e-6 {
            (s - exact).abs() <= 0.5 + 1e-6
        } else {
            s == exact.round()
        }
    }

    #[test]
    fn downsample_block_means() {
        let f = VideoFrame::new(
            4,
            4,
            vec![
                0, 0, 100, 100, 0, 0, 100, 100, 200, 200, 50, 50, 200, 200, 50, 50,
            ],
        )
        .unwrap();
        let d = downsample(&f, m(2)).unwrap();
        assert_eq!(d.luma(), &[0, 100, 200, 50]);
    }

    #[test]
    fn downsample_rounds_half_away() {
        // mean 0.5 rounds to 1; mean 1.25 rounds to 1
        let f = VideoFrame::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(downsample(&f, m(2)).unwrap().luma(), &[1]);
        let f = VideoFrame::new(2, 2, vec![1, 1, 1, 2]).unwrap();
        assert_eq!(downsample(&f, m(2)).unwrap().luma(), &[1]);
    }

    #[test]
    fn constants_are_fixed_points() {
        let f = VideoFrame::filled(8, 6, 77);
        assert_eq!(downsample(&f, m(2)).unwrap(), VideoFrame::filled(4, 3, 77));
        assert_eq!(upsample(&f, m(2)), VideoFrame::filled(16, 12, 77));
        assert_eq!(upsample(&f, m(3)), VideoFrame::filled(24, 18, 77));
    }

    #[test]
    fn unit_scale_is_identity() {
        let f = VideoFrame::from_fn(5, 3, |x, y| (x * 40 + y * 7) as u8);
        assert_eq!(downsample(&f, m(1)).unwrap(), f);
        assert_eq!(upsample(&f, m(1)), f);
    }

    #[test]
    fn non_divisible_rejected() {
        let f = VideoFrame::filled(5, 4, 0);
        assert!(matches!(
            downsample(&f, m(2)),
            Err(LayerError::NotDivisible { .. })
        ));
        assert_eq!(ScaleFactor::new(0), Err(LayerError::ZeroScale));
    }

    #[test]
    fn upsample_matches_scalar_oracle_2x2() {
        let f = VideoFrame::new(2, 2, vec![0, 100, 200, 50]).unwrap();
        let up = upsample(&f, m(2));
        for y in 0..4 {
            for x in 0..4 {
                let exact = bilinear_value(&f, 2, x, y);
                assert_eq!(up.get(x, y) as f64, exact.round(), "({x},{y})");
            }
        }
        // Frozen from the oracle: corners replicate, inner taps blend 3:1.
        assert_eq!(
            up.luma(),
            &[0, 25, 75, 100, 50, 59, 78, 88, 150, 128, 84, 63, 200, 163, 88, 50]
        );
    }

    #[test]
    fn residual_extremes() {
        let hi = VideoFrame::filled(4, 4, 255);
        let lo = VideoFrame::filled(4, 4, 0);
        assert!(compute_residual(&hi, &lo)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 255));
        assert!(compute_residual(&lo, &hi)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == -255));
        assert!(compute_residual(&hi, &hi)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0));
        assert!(matches!(
            compute_residual(&hi, &VideoFrame::filled(2, 4, 0)),
            Err(LayerError::Mismatch(..))
        ));
    }

    #[test]
    fn super_resolve_clamps_and_passes_zero() {
        let base = VideoFrame::filled(4, 4, 200);
        let r = ResidualFrame::from_values(4, 4, vec![100; 16]).unwrap();
        assert_eq!(
            super_resolve(&base, &r).unwrap(),
            VideoFrame::filled(4, 4, 255)
        );
        let z = ResidualFrame::zeros(4, 4);
        assert_eq!(super_resolve(&base, &z).unwrap(), base);
        assert!(super_resolve(&base, &ResidualFrame::zeros(4, 2)).is_err());
    }

    fn arb_frame() -> impl Strategy<Value = (VideoFrame, usize)> {
        (1usize..=4, 1usize..=6, 1usize..=6).prop_flat_map(|(m, bw, bh)| {
            proptest::collection::vec(any::<u8>(), bw * m * bh * m)
                .prop_map(move |luma| (VideoFrame::new(bw * m, bh * m, luma).unwrap(), m))
        })
    }

    proptest! {
        #[test]
        fn layer_round_trip_is_lossless((frame, scale) in arb_frame()) {
            let s = m(scale);
            let up = upsample(&downsample(&frame, s).unwrap(), s);
            let res = compute_residual(&frame, &up).unwrap();
            prop_assert!(res.values().iter().all(|v| (-255..=255).contains(v)));
            prop_assert_eq!(super_resolve(&up, &res).unwrap(), frame);
        }

        #[test]
        fn upsample_agrees_with_oracle((frame, scale) in arb_frame()) {
            let up = upsample(&frame, m(scale));
            for y in 0..up.height() {
                for x in 0..up.width() {
                    let exact = bilinear_value(&frame, scale, x, y);
                    prop_assert!(agrees(up.get(x, y), exact), "({}, {}): {} vs {}", x, y, up.get(x, y), exact);
                }
            }
        }
    }
}
