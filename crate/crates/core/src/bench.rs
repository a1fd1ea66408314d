//! Single-core throughput measurement for the online tube builder.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{BBox, DetectionFrame, ScoredBox};
use crate::online::{OnlineLinker, OnlineParams};

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub frames: usize,
    pub classes: usize,
    pub dets_per_class: usize,
    pub total: Duration,
    pub ms_per_frame: f64,
}

/// Builds a synthetic stream of `frames` frames carrying `dets_per_class`
/// slowly drifting detections for each of `classes` classes, then times
/// `OnlineLinker::step` over it on the calling thread. Stream construction
/// is excluded from the measurement.
pub fn online_throughput(
    classes: usize,
    dets_per_class: usize,
    frames: usize,
    seed: u64,
) -> BenchResult {
    let (w, h) = (1280.0, 720.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // persistent tracks so the association stage does real work
    let mut tracks: Vec<(usize, BBox, f64, f64)> = Vec::new();
    for c in 1..=classes {
        for _ in 0..dets_per_class {
            let x = rng.gen_range(0.0..w - 60.0);
            let y = rng.gen_range(0.0..h - 60.0);
            let vx = rng.gen_range(-1.5..1.5);
            let vy = rng.gen_range(-1.5..1.5);
            tracks.push((
                c,
                BBox {
                    x_min: x,
                    y_min: y,
                    x_max: x + 50.0,
                    y_max: y + 50.0,
                },
                vx,
                vy,
            ));
        }
    }

    let stream: Vec<DetectionFrame> = (0..frames)
        .map(|t| {
            let detections = tracks
                .iter_mut()
                .map(|(c, bx, vx, vy)| {
                    *bx = bx.shifted(*vx, *vy).clamp(w, h);
                    let mut scores = vec![0.0; classes + 1];
                    scores[*c] = rng.gen_range(0.5..1.0);
                    ScoredBox::new(*bx, scores)
                })
                .collect();
            DetectionFrame {
                video: "bench".into(),
                t,
                width: w as u32,
                height: h as u32,
                detections,
            }
        })
        .collect();

    let mut linker = OnlineLinker::new("bench", classes, OnlineParams::default());
    let start = Instant::now();
    for f in &stream {
        linker.step(f.t, f).expect("consecutive frames");
    }
    let total = start.elapsed();
    linker.finish();
    std::hint::black_box(linker.tubes());

    BenchResult {
        frames,
        classes,
        dets_per_class,
        total,
        ms_per_frame: total.as_secs_f64() * 1000.0 / frames as f64,
    }
}
