//! Deterministic synthetic scenario generator.
//!
//! Ground-truth tubes with configurable motion plus noisy detection,
//! micro-tube and prediction streams, exercising the same record shapes as
//! the real ingestion path. Randomness comes from ChaCha8 seeded with the
//! scenario seed; video `v` draws its ground truth from stream `2v` and its
//! detections from stream `2v + 1`, so per-video generation is order-free
//! and replayable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GtTube;
use crate::forecast::{MicroTube, MicroTubeFrame, PredictionSet};
use crate::geometry::{BBox, DetectionFrame, ScoredBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MotionModel {
    Static,
    ConstantVelocity { vx: f64, vy: f64 },
    RandomWalk { sigma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub videos: usize,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub classes: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    pub motion: MotionModel,
    pub size_min: f64,
    pub size_max: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            videos: 10,
            frames: 31,
            width: 320,
            height: 240,
            classes: 3,
            instances_min: 1,
            instances_max: 3,
            motion: MotionModel::Static,
            size_min: 24.0,
            size_max: 64.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.videos < 1 || self.frames < 1 || self.classes < 1 || self.instances_min < 1 {
            return Err(Error::InvalidParam(
                "videos, frames, classes and instances must be >= 1".into(),
            ));
        }
        if self.instances_max < self.instances_min {
            return Err(Error::InvalidParam(
                "instances_max must be >= instances_min".into(),
            ));
        }
        if self.size_min <= 0.0 || self.size_max < self.size_min {
            return Err(Error::InvalidParam("invalid box size range".into()));
        }
        if self.size_max > self.width.min(self.height) as f64 {
            return Err(Error::InvalidParam(
                "box size range does not fit the image".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Per-coordinate gaussian jitter in pixels.
    pub sigma_box: f64,
    /// Score noise: true detections score `clip(1 - |N(0, sigma)|, 0.05, 1)`.
    pub sigma_score: f64,
    /// Probability of dropping a true detection.
    pub p_miss: f64,
    /// Expected false positives per frame (Poisson rate).
    pub fp_rate: f64,
    pub fp_score_min: f64,
    pub fp_score_max: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_box: 0.0,
            sigma_score: 0.0,
            p_miss: 0.0,
            fp_rate: 0.0,
            fp_score_min: 0.05,
            fp_score_max: 0.3,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_miss) {
            return Err(Error::InvalidParam("p_miss must be in [0, 1]".into()));
        }
        if self.sigma_box < 0.0 || self.sigma_score < 0.0 || self.fp_rate < 0.0 {
            return Err(Error::InvalidParam("noise sigmas must be >= 0".into()));
        }
        if self.fp_score_min > self.fp_score_max {
            return Err(Error::InvalidParam("fp score bounds inverted".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub video: String,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    /// Ground-truth video label: the lowest class id present.
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub videos: Vec<VideoMeta>,
    pub gts: Vec<GtTube>,
}

pub fn video_id(v: usize) -> String {
    format!("v{v:04}")
}

/// Floors to a 1/256-pixel grid. Dyadic coordinates keep constant-velocity
/// motion and interpolation arithmetic exact in f64.
fn quantize(v: f64) -> f64 {
    (v * 256.0).floor() / 256.0
}

fn gt_rng(seed: u64, video: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * video as u64);
    rng
}

fn det_rng(seed: u64, video: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * video as u64 + 1);
    rng
}

/// Generates ground-truth tubes. Instances span the whole video and may
/// co-occur; each video's label is the lowest class id among its instances.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let (w, h) = (config.width as f64, config.height as f64);
    let mut gts = Vec::new();
    let mut videos = Vec::new();

    for v in 0..config.videos {
        let mut rng = gt_rng(config.seed, v);
        let id = video_id(v);
        let count = rng.gen_range(config.instances_min..=config.instances_max);
        let mut label = usize::MAX;
        for _ in 0..count {
            let class = rng.gen_range(1..=config.classes);
            label = label.min(class);
            let bw = quantize(rng.gen_range(config.size_min..=config.size_max));
            let bh = quantize(rng.gen_range(config.size_min..=config.size_max));
            let x0 = quantize(rng.gen_range(0.0..=(w - bw)));
            let y0 = quantize(rng.gen_range(0.0..=(h - bh)));
            let mut bx = BBox {
                x_min: x0,
                y_min: y0,
                x_max: x0 + bw,
                y_max: y0 + bh,
            };
            let mut boxes = Vec::with_capacity(config.frames);
            boxes.push(bx);
            for _ in 1..config.frames {
                let (dx, dy) = match config.motion {
                    MotionModel::Static => (0.0, 0.0),
                    MotionModel::ConstantVelocity { vx, vy } => (vx, vy),
                    MotionModel::RandomWalk { sigma } => {
                        if sigma > 0.0 {
                            let n = Normal::new(0.0, sigma).expect("sigma validated");
                            (n.sample(&mut rng), n.sample(&mut rng))
                        } else {
                            (0.0, 0.0)
                        }
                    }
                };
                bx = bx.shifted(dx, dy).clamp(w, h);
                boxes.push(bx);
            }
            gts.push(GtTube {
                video: id.clone(),
                class,
                start: 0,
                end: config.frames - 1,
                boxes,
            });
        }
        videos.push(VideoMeta {
            video: id,
            frames: config.frames,
            width: config.width,
            height: config.height,
            label,
        });
    }
    Ok(Scenario {
        config: config.clone(),
        videos,
        gts,
    })
}

struct NoiseSampler<'a> {
    noise: &'a NoiseModel,
    w: f64,
    h: f64,
    size_min: f64,
    size_max: f64,
    classes: usize,
}

impl NoiseSampler<'_> {
    fn miss(&self, rng: &mut ChaCha8Rng) -> bool {
        self.noise.p_miss > 0.0 && rng.gen::<f64>() < self.noise.p_miss
    }

    fn jitter(&self, bx: &BBox, rng: &mut ChaCha8Rng) -> BBox {
        if self.noise.sigma_box == 0.0 {
            return *bx;
        }
        let n = Normal::new(0.0, self.noise.sigma_box).expect("sigma validated");
        BBox {
            x_min: bx.x_min + n.sample(rng),
            y_min: bx.y_min + n.sample(rng),
            x_max: bx.x_max + n.sample(rng),
            y_max: bx.y_max + n.sample(rng),
        }
        .repaired()
        .clamp(self.w, self.h)
    }

    fn true_score(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.noise.sigma_score == 0.0 {
            return 1.0;
        }
        let n = Normal::new(0.0, self.noise.sigma_score).expect("sigma validated");
        (1.0 - n.sample(rng).abs()).clamp(0.05, 1.0)
    }

    fn score_vec(&self, class: usize, score: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.classes + 1];
        v[class] = score;
        v
    }

    fn fp_count(&self, rng: &mut ChaCha8Rng) -> usize {
        if self.noise.fp_rate <= 0.0 {
            return 0;
        }
        let p = Poisson::new(self.noise.fp_rate).expect("rate validated");
        p.sample(rng) as usize
    }

    fn fp_box(&self, rng: &mut ChaCha8Rng) -> (BBox, usize, f64) {
        let bw = rng.gen_range(self.size_min..=self.size_max);
        let bh = rng.gen_range(self.size_min..=self.size_max);
        let x0 = rng.gen_range(0.0..=(self.w - bw));
        let y0 = rng.gen_range(0.0..=(self.h - bh));
        let class = rng.gen_range(1..=self.classes);
        let score = rng.gen_range(self.noise.fp_score_min..=self.noise.fp_score_max);
        (
            BBox {
                x_min: x0,
                y_min: y0,
                x_max: x0 + bw,
                y_max: y0 + bh,
            },
            class,
            score,
        )
    }
}

impl BBox {
    /// Restores coordinate ordering after independent jitter.
    fn repaired(self) -> BBox {
        BBox {
            x_min: self.x_min.min(self.x_max),
            y_min: self.y_min.min(self.y_max),
            x_max: self.x_min.max(self.x_max),
            y_max: self.y_min.max(self.y_max),
        }
    }
}

/// Per-frame detection stream, ordered by video then frame.
pub fn render_frames(scenario: &Scenario, noise: &NoiseModel) -> Result<Vec<DetectionFrame>> {
    noise.validate()?;
    let cfg = &scenario.config;
    let sampler = NoiseSampler {
        noise,
        w: cfg.width as f64,
        h: cfg.height as f64,
        size_min: cfg.size_min,
        size_max: cfg.size_max,
        classes: cfg.classes,
    };
    let mut out = Vec::with_capacity(cfg.videos * cfg.frames);
    for (v, meta) in scenario.videos.iter().enumerate() {
        let mut rng = det_rng(cfg.seed, v);
        let tubes: Vec<&GtTube> = scenario.gts.iter().filter(|g| g.video == meta.video).collect();
        for t in 0..meta.frames {
            let mut dets = Vec::new();
            for gt in &tubes {
                if sampler.miss(&mut rng) {
                    continue;
                }
                let bx = sampler.jitter(&gt.boxes[t], &mut rng);
                let score = sampler.true_score(&mut rng);
                dets.push(ScoredBox::new(bx, sampler.score_vec(gt.class, score)));
            }
            for _ in 0..sampler.fp_count(&mut rng) {
                let (bx, class, score) = sampler.fp_box(&mut rng);
                dets.push(ScoredBox::new(bx, sampler.score_vec(class, score)));
            }
            out.push(DetectionFrame {
                video: meta.video.clone(),
                t,
                width: meta.width,
                height: meta.height,
                detections: dets,
            });
        }
    }
    Ok(out)
}

/// Prediction attachment parameters for the micro-tube stream.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PredictionSpec {
    pub delta_p: usize,
    pub delta_f: usize,
    pub n_future: usize,
}

/// Micro-tube stream at stride `delta`: sets start at t = 0, delta, 2*delta,
/// ... while the paired frame stays inside the video. With `predictions`
/// set, each true micro-tube carries jittered ground-truth past/future boxes
/// (frames past the video end hold the last frame's box).
pub fn render_microtubes(
    scenario: &Scenario,
    noise: &NoiseModel,
    delta: usize,
    predictions: Option<PredictionSpec>,
) -> Result<Vec<MicroTubeFrame>> {
    if delta < 1 {
        return Err(Error::BadStride(delta));
    }
    noise.validate()?;
    let cfg = &scenario.config;
    let sampler = NoiseSampler {
        noise,
        w: cfg.width as f64,
        h: cfg.height as f64,
        size_min: cfg.size_min,
        size_max: cfg.size_max,
        classes: cfg.classes,
    };
    let mut out = Vec::new();
    for (v, meta) in scenario.videos.iter().enumerate() {
        let mut rng = det_rng(cfg.seed, v);
        let tubes: Vec<&GtTube> = scenario.gts.iter().filter(|g| g.video == meta.video).collect();
        let mut t = 0;
        while t + delta <= meta.frames - 1 {
            let mut mts = Vec::new();
            for gt in &tubes {
                if sampler.miss(&mut rng) {
                    continue;
                }
                let first = sampler.jitter(&gt.boxes[t], &mut rng);
                let second = sampler.jitter(&gt.boxes[t + delta], &mut rng);
                let score = sampler.true_score(&mut rng);
                let prediction = predictions.map(|spec| {
                    let past = if spec.delta_p > 0 && t >= spec.delta_p {
                        Some(sampler.jitter(&gt.boxes[t - spec.delta_p], &mut rng))
                    } else {
                        None
                    };
                    let future = (1..=spec.n_future)
                        .map(|h| {
                            let f = (t + spec.delta_f * h).min(meta.frames - 1);
                            sampler.jitter(&gt.boxes[f], &mut rng)
                        })
                        .collect();
                    PredictionSet {
                        anchor_t: t,
                        delta_p: spec.delta_p,
                        delta_f: spec.delta_f,
                        past,
                        future,
                    }
                });
                mts.push(MicroTube {
                    first,
                    second,
                    scores: sampler.score_vec(gt.class, score),
                    prediction,
                });
            }
            for _ in 0..sampler.fp_count(&mut rng) {
                let (bx, class, score) = sampler.fp_box(&mut rng);
                mts.push(MicroTube {
                    first: bx,
                    second: bx,
                    scores: sampler.score_vec(class, score),
                    prediction: None,
                });
            }
            out.push(MicroTubeFrame {
                video: meta.video.clone(),
                t,
                delta,
                tubes: mts,
            });
            t += delta;
        }
    }
    Ok(out)
}

/// Slices ground-truth tubes into micro-tubes at stride `delta`, for
/// transition estimation.
pub fn gt_microtubes(gts: &[GtTube], delta: usize) -> Result<Vec<crate::anchors::GtMicroTube>> {
    if delta < 1 {
        return Err(Error::BadStride(delta));
    }
    let mut out = Vec::new();
    for gt in gts {
        let mut t = gt.start;
        while t + delta <= gt.end {
            out.push(crate::anchors::GtMicroTube {
                class: gt.class,
                t,
                delta,
                first: gt.boxes[t - gt.start],
                second: gt.boxes[t + delta - gt.start],
            });
            t += delta;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a.gts, b.gts);
        let fa = render_frames(&a, &NoiseModel::default()).unwrap();
        let fb = render_frames(&b, &NoiseModel::default()).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_scenario(&ScenarioConfig::default()).unwrap();
        let b = generate_scenario(&ScenarioConfig {
            seed: 1,
            ..ScenarioConfig::default()
        })
        .unwrap();
        assert_ne!(a.gts, b.gts);
    }

    #[test]
    fn static_motion_constant_boxes() {
        let cfg = ScenarioConfig {
            motion: MotionModel::Static,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        for gt in &s.gts {
            assert!(gt.boxes.iter().all(|b| *b == gt.boxes[0]));
        }
    }

    #[test]
    fn constant_velocity_until_clamped() {
        let cfg = ScenarioConfig {
            motion: MotionModel::ConstantVelocity { vx: 2.0, vy: 0.0 },
            frames: 10,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        for gt in &s.gts {
            for w in gt.boxes.windows(2) {
                let dx = w[1].x_min - w[0].x_min;
                // exactly 2 until the box reaches the right edge
                assert!(dx == 2.0 || w[1].x_max == cfg.width as f64);
            }
        }
    }

    #[test]
    fn zero_noise_detections_equal_gt() {
        let cfg = ScenarioConfig::default();
        let s = generate_scenario(&cfg).unwrap();
        let frames = render_frames(&s, &NoiseModel::default()).unwrap();
        for f in &frames {
            let live: Vec<&GtTube> = s.gts.iter().filter(|g| g.video == f.video).collect();
            assert_eq!(f.detections.len(), live.len());
            for (d, gt) in f.detections.iter().zip(&live) {
                assert_eq!(d.bbox, gt.boxes[f.t]);
                assert_eq!(d.class_score(gt.class), 1.0);
            }
        }
    }

    #[test]
    fn all_missing_leaves_only_false_positives() {
        let cfg = ScenarioConfig::default();
        let s = generate_scenario(&cfg).unwrap();
        let noise = NoiseModel {
            p_miss: 1.0,
            fp_rate: 0.5,
            ..NoiseModel::default()
        };
        let frames = render_frames(&s, &noise).unwrap();
        let total: usize = frames.iter().map(|f| f.detections.len()).sum();
        for f in &frames {
            for d in &f.detections {
                let c = (1..=cfg.classes).find(|&c| d.class_score(c) > 0.0).unwrap();
                assert!(d.class_score(c) <= noise.fp_score_max);
            }
        }
        assert!(total > 0);
    }

    #[test]
    fn zero_noise_predictions_equal_gt_future() {
        let cfg = ScenarioConfig::default();
        let s = generate_scenario(&cfg).unwrap();
        let spec = PredictionSpec {
            delta_p: 1,
            delta_f: 2,
            n_future: 3,
        };
        let stream = render_microtubes(&s, &NoiseModel::default(), 3, Some(spec)).unwrap();
        for rec in &stream {
            let live: Vec<&GtTube> = s.gts.iter().filter(|g| g.video == rec.video).collect();
            for (mt, gt) in rec.tubes.iter().zip(&live) {
                assert_eq!(mt.first, gt.boxes[rec.t]);
                assert_eq!(mt.second, gt.boxes[rec.t + rec.delta]);
                let pred = mt.prediction.as_ref().unwrap();
                for (i, bx) in pred.future.iter().enumerate() {
                    let f = (rec.t + spec.delta_f * (i + 1)).min(cfg.frames - 1);
                    assert_eq!(*bx, gt.boxes[f]);
                }
            }
        }
    }

    #[test]
    fn microtube_stream_covers_video() {
        let cfg = ScenarioConfig {
            frames: 31,
            videos: 2,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        for delta in [1usize, 3, 5] {
            let stream = render_microtubes(&s, &NoiseModel::default(), delta, None).unwrap();
            let last = stream.iter().filter(|r| r.video == "v0000").last().unwrap();
            assert_eq!(last.t + delta, 30);
        }
    }

    #[test]
    fn infeasible_size_rejected() {
        let cfg = ScenarioConfig {
            size_max: 1000.0,
            ..ScenarioConfig::default()
        };
        assert!(generate_scenario(&cfg).is_err());
    }
}
