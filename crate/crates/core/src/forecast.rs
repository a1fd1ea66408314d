//! Future-tube assembly from per-micro-tube prediction boxes.
//!
//! A detected tube carries the prediction sets of its member micro-tubes.
//! The unobserved remainder of the video is filled by, in order of
//! precedence, detections, the most recent prediction, older predictions,
//! interpolation between prediction instants, and constant-velocity
//! extrapolation beyond the last prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{interpolate_pair, BBox};
use crate::offline::ActionTube;

/// Prediction boxes attached to one micro-tube anchored at time `anchor_t`:
/// an optional past box at `anchor_t - delta_p` and `n` future boxes at
/// `anchor_t + delta_f * {1..n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub anchor_t: usize,
    pub delta_p: usize,
    pub delta_f: usize,
    pub past: Option<BBox>,
    pub future: Vec<BBox>,
}

impl PredictionSet {
    /// Absolute frame of the h-th future box (h is 1-based).
    pub fn future_frame(&self, h: usize) -> usize {
        self.anchor_t + self.delta_f * h
    }
}

/// A pair of linked boxes `delta` frames apart with class scores, optionally
/// carrying prediction boxes. The atomic unit of multi-frame detection.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroTube {
    pub first: BBox,
    pub second: BBox,
    pub scores: Vec<f64>,
    pub prediction: Option<PredictionSet>,
}

impl MicroTube {
    pub fn class_score(&self, c: usize) -> f64 {
        self.scores.get(c).copied().unwrap_or(0.0)
    }
}

/// All micro-tubes whose first boxes sit on frame `t` of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroTubeFrame {
    pub video: String,
    pub t: usize,
    pub delta: usize,
    pub tubes: Vec<MicroTube>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizonParams {
    /// Frames of tube tail used to estimate the extrapolation velocity.
    pub velocity_window: usize,
    /// Video length T (frames are 0..T-1).
    pub video_len: usize,
    pub width: f64,
    pub height: f64,
}

impl HorizonParams {
    pub fn new(video_len: usize, width: f64, height: f64) -> Self {
        HorizonParams {
            velocity_window: 5,
            video_len,
            width,
            height,
        }
    }
}

/// Constant-velocity extrapolation of a tube tail.
///
/// The per-coordinate velocity is the mean per-frame delta over the last
/// `min(velocity_window, len - 1)` steps; box `h` is the last box advanced by
/// `h` velocities and clamped to the image. A tail with fewer than two boxes
/// falls back to holding the last box; an empty tail yields nothing.
pub fn extrapolate(tail: &[BBox], horizon: usize, params: &HorizonParams) -> Vec<BBox> {
    let Some(last) = tail.last() else {
        return Vec::new();
    };
    let (w, h) = (params.width, params.height);
    if tail.len() < 2 {
        return vec![last.clamp(w, h); horizon];
    }
    let steps = params.velocity_window.max(1).min(tail.len() - 1);
    let first = &tail[tail.len() - 1 - steps];
    let inv = 1.0 / steps as f64;
    let v = [
        (last.x_min - first.x_min) * inv,
        (last.y_min - first.y_min) * inv,
        (last.x_max - first.x_max) * inv,
        (last.y_max - first.y_max) * inv,
    ];
    (1..=horizon)
        .map(|k| {
            let k = k as f64;
            BBox {
                x_min: last.x_min + k * v[0],
                y_min: last.y_min + k * v[1],
                x_max: last.x_max + k * v[2],
                y_max: last.y_max + k * v[3],
            }
            .clamp(w, h)
        })
        .collect()
}

/// Assembles the future box sequence of a detected tube for frames
/// `tube.end + 1 ..= video_len - 1`.
///
/// Only predictions anchored at or before `t_now` participate (causality).
/// Per future frame the box source is the prediction with the largest anchor
/// time, ties broken by the smaller lookahead index; frames between chosen
/// prediction instants are linearly interpolated, frames beyond the last
/// instant extrapolated. `t_now` must not precede the tube's end.
pub fn assemble_future(
    tube: &ActionTube,
    preds: &[PredictionSet],
    t_now: usize,
    params: &HorizonParams,
) -> Result<Vec<BBox>> {
    if tube.boxes.is_empty() {
        return Err(Error::EmptyInput("tube"));
    }
    if t_now < tube.end {
        return Err(Error::InvalidParam(format!(
            "t_now {} precedes detected end {}",
            t_now, tube.end
        )));
    }
    let t_end = params.video_len.saturating_sub(1);
    if tube.end >= t_end {
        return Ok(Vec::new());
    }

    // frame -> (anchor, lookahead, box), keeping the highest-precedence source
    let mut chosen: std::collections::BTreeMap<usize, (usize, usize, BBox)> =
        std::collections::BTreeMap::new();
    for ps in preds {
        if ps.anchor_t > t_now {
            continue;
        }
        for (i, bx) in ps.future.iter().enumerate() {
            let h = i + 1;
            let f = ps.future_frame(h);
            if f <= tube.end || f > t_end {
                continue;
            }
            let replace = match chosen.get(&f) {
                None => true,
                Some(&(a, l, _)) => ps.anchor_t > a || (ps.anchor_t == a && h < l),
            };
            if replace {
                chosen.insert(f, (ps.anchor_t, h, *bx));
            }
        }
    }

    let mut out: Vec<BBox> = Vec::with_capacity(t_end - tube.end);
    let mut left_t = tube.end;
    let mut left_box = *tube.boxes.last().unwrap();
    for (&f, &(_, _, bx)) in &chosen {
        let seg = interpolate_pair(&left_box, &bx, f - left_t)?;
        out.extend_from_slice(&seg[1..]);
        left_t = f;
        left_box = bx;
    }

    if left_t < t_end {
        let mut tail: Vec<BBox> = tube.boxes.clone();
        tail.extend_from_slice(&out);
        let keep = (params.velocity_window + 1).min(tail.len());
        let tail = &tail[tail.len() - keep..];
        out.extend(extrapolate(tail, t_end - left_t, params));
    }

    let (w, h) = (params.width, params.height);
    for bx in &mut out {
        *bx = bx.clamp(w, h);
    }
    Ok(out)
}

/// Concatenates a detected tube with its future segment. The future must
/// begin exactly one frame after the detected end; future boxes inherit the
/// tube's global score.
pub fn complete_tube(detected: &ActionTube, future_start: usize, future: &[BBox]) -> Result<ActionTube> {
    if future.is_empty() {
        return Ok(detected.clone());
    }
    if future_start != detected.end + 1 {
        return Err(Error::FutureGap {
            expected: detected.end + 1,
            got: future_start,
        });
    }
    let mut tube = detected.clone();
    tube.end = detected.end + future.len();
    tube.boxes.extend_from_slice(future);
    tube.scores.extend(std::iter::repeat(detected.score).take(future.len()));
    Ok(tube)
}
