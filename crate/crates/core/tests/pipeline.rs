use cssr::clip::surveillance_clip;
use cssr::codec::{decode, encode, evaluate, sweep, CodecConfig, DecodeOptions};
use cssr::container::{deserialize, to_bytes};
use cssr::frame_io::{parse_y4m, write_y4m};
use cssr::SolverKind;

const SOLVERS: [SolverKind; 3] = [
    SolverKind::Omp,
    SolverKind::CoSaMP,
    SolverKind::BasisPursuit,
];

#[test]
fn decoded_frames_never_fall_below_baseline() {
    let clip = surveillance_clip(64, 64, 2, 7);
    for ct in [5, 15, 25, 35] {
        for rate in [0.3, 0.5] {
            let stream = encode(
                &clip,
                &CodecConfig {
                    ct,
                    rate,
                    ..Default::default()
                },
            )
            .unwrap();
            for kind in SOLVERS {
                let out = decode(&stream, &DecodeOptions::new(kind)).unwrap();
                for m in evaluate(&clip, &out.sequence, &out.base_upsampled).unwrap() {
                    assert!(
                        m.psnr.db() >= m.baseline_psnr.db(),
                        "{kind} ct={ct} rate={rate} frame {}: {} < {}",
                        m.frame_index,
                        m.psnr,
                        m.baseline_psnr
                    );
                }
            }
        }
    }
}

#[test]
fn mean_sparsity_does_not_grow_with_threshold() {
    let clip = surveillance_clip(128, 64, 2, 3);
    let records = sweep(
        &clip,
        &CodecConfig::default(),
        &[5, 15, 25, 35, 45, 55],
        &[0.3],
        &[DecodeOptions::new(SolverKind::Omp)],
    );
    assert_eq!(records.len(), 6 * 2);
    for frame in 0..2 {
        let ks: Vec<f64> = records
            .iter()
            .filter(|r| r.frame == frame)
            .map(|r| r.mean_k.unwrap())
            .collect();
        assert!(ks.windows(2).all(|w| w[1] <= w[0]), "{ks:?}");
        assert!(ks[0] > ks[5]);
    }
}

#[test]
fn sweep_is_deterministic() {
    let clip = surveillance_clip(64, 32, 2, 1);
    let grid = || {
        sweep(
            &clip,
            &CodecConfig {
                seed: 12,
                ..Default::default()
            },
            &[15, 35],
            &[0.2, 0.4],
            &[DecodeOptions::new(SolverKind::CoSaMP)],
        )
    };
    assert_eq!(grid(), grid());
}

#[test]
fn stream_and_clip_survive_serialization() {
    let clip = surveillance_clip(96, 64, 3, 21);
    let stream = encode(
        &clip,
        &CodecConfig {
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    let bytes = to_bytes(&stream).unwrap();
    let back = deserialize(&bytes[..]).unwrap();
    assert_eq!(back, stream);

    let options = DecodeOptions::new(SolverKind::Omp);
    let a = decode(&stream, &options).unwrap();
    let b = decode(&back, &options).unwrap();
    assert_eq!(a.sequence, b.sequence);

    let mut y4m = Vec::new();
    write_y4m(&a.sequence, &mut y4m).unwrap();
    assert_eq!(parse_y4m(&y4m).unwrap(), a.sequence);
}

#[test]
fn different_seeds_give_different_measurements() {
    let clip = surveillance_clip(64, 64, 1, 2);
    let a = encode(
        &clip,
        &CodecConfig {
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let b = encode(
        &clip,
        &CodecConfig {
            seed: 2,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a.frames[0].base, b.frames[0].base);
    assert_ne!(a.frames[0].blocks, b.frames[0].blocks);
    let ks = |s: &cssr::CompressedStream| -> Vec<u16> {
        s.frames[0].blocks.iter().map(|b| b.k()).collect()
    };
    assert_eq!(ks(&a), ks(&b));
}
