//! Deterministic synthetic scenes.
//!
//! `surveillance_clip` renders a smooth, slowly drifting background with a
//! few hard-edged objects moving across it and faint sensor noise. Smooth
//! regions survive down/up-sampling almost unchanged, so the residual is
//! concentrated on object edges, which is the structure the codec targets.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::frame_io::{VideoFrame, VideoSequence};

struct Object {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    dx: f64,
    dy: f64,
    contrast: f64,
    round: bool,
}

impl Object {
    fn covers(&self, t: f64, px: f64, py: f64) -> bool {
        let cx = self.x + self.dx * t;
        let cy = self.y + self.dy * t;
        if self.round {
            let nx = (px - cx) / (self.w / 2.0);
            let ny = (py - cy) / (self.h / 2.0);
            nx * nx + ny * ny <= 1.0
        } else {
            (px - cx).abs() <= self.w / 2.0 && (py - cy).abs() <= self.h / 2.0
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// A moving scene of `frames` frames at `width`×`height`.
pub fn surveillance_clip(width: usize, height: usize, frames: usize, seed: u64) -> VideoSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wf, hf) = (width as f64, height as f64);
    let count = ((width * height) as f64 / 2000.0).ceil().max(2.0) as usize;
    let mut objects: Vec<Object> = (0..count)
        .map(|i| Object {
            x: uniform(&mut rng) * wf,
            y: uniform(&mut rng) * hf,
            w: 6.0 + uniform(&mut rng) * wf * 0.15,
            h: 6.0 + uniform(&mut rng) * hf * 0.15,
            dx: (uniform(&mut rng) - 0.5) * 3.0,
            dy: (uniform(&mut rng) - 0.5) * 3.0,
            contrast: (25.0 + uniform(&mut rng) * 60.0) * if i % 3 == 0 { -1.0 } else { 1.0 },
            round: i % 2 == 1,
        })
        .collect();
    // small bright lights leave the few residuals that survive high thresholds
    objects.extend((0..count.div_ceil(3)).map(|_| Object {
        x: uniform(&mut rng) * wf,
        y: uniform(&mut rng) * hf,
        w: 2.0 + uniform(&mut rng) * 2.0,
        h: 2.0 + uniform(&mut rng) * 2.0,
        dx: (uniform(&mut rng) - 0.5) * 2.0,
        dy: (uniform(&mut rng) - 0.5) * 2.0,
        contrast: 90.0 + uniform(&mut rng) * 50.0,
        round: false,
    }));
    let phase = uniform(&mut rng) * std::f64::consts::TAU;

    let seq = (0..frames)
        .map(|f| {
            let t = f as f64;
            VideoFrame::from_fn(width, height, |x, y| {
                let (px, py) = (x as f64, y as f64);
                let mut v = 110.0
                    + 45.0 * (px / 29.0 + phase + 0.04 * t).sin()
                    + 30.0 * (py / 21.0 - 0.03 * t).cos()
                    + 0.15 * px;
                for o in &objects {
                    if o.covers(t, px, py) {
                        v += o.contrast;
                    }
                }
                v += (uniform(&mut rng) - 0.5) * 4.0;
                v.round().clamp(0.0, 255.0) as u8
            })
        })
        .collect();
    VideoSequence::new(seq, VideoSequence::DEFAULT_FRAME_RATE).expect("frames share dimensions")
}

/// `frames` copies of the first frame of `surveillance_clip`.
pub fn static_clip(width: usize, height: usize, frames: usize, seed: u64) -> VideoSequence {
    let first = surveillance_clip(width, height, 1, seed)
        .into_frames()
        .remove(0);
    VideoSequence::new(vec![first; frames], VideoSequence::DEFAULT_FRAME_RATE)
        .expect("frames share dimensions")
}
