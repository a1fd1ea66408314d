//! Boxes, overlaps, interpolation, clamping and per-class NMS.
//!
//! Coordinates are continuous pixels with the origin at the top-left.
//! Areas use the open-set convention `max(0, x_max - x_min) * max(0, y_max - y_min)`,
//! so degenerate (zero-area) boxes are legal and overlap nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(c: [f64; 4]) -> Self {
        BBox {
            x_min: c[0],
            y_min: c[1],
            x_max: c[2],
            y_max: c[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    /// Builds a box, checking the ordering and finiteness invariants.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Intersection area with `other`.
    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Intersection over union. Returns 0 when the union has zero area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clips the box to `[0, w] x [0, h]`. Idempotent.
    pub fn clamp(&self, w: f64, h: f64) -> BBox {
        BBox {
            x_min: self.x_min.clamp(0.0, w),
            y_min: self.y_min.clamp(0.0, h),
            x_max: self.x_max.clamp(0.0, w),
            y_max: self.y_max.clamp(0.0, h),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Translates by (dx, dy).
    pub fn shifted(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

/// Coordinate-wise linear interpolation between two boxes `delta` frames apart.
///
/// Returns `delta + 1` boxes; the endpoints are the inputs bit-for-bit.
pub fn interpolate_pair(first: &BBox, last: &BBox, delta: usize) -> Result<Vec<BBox>> {
    if delta < 1 {
        return Err(Error::BadStride(delta));
    }
    let mut out = Vec::with_capacity(delta + 1);
    out.push(*first);
    for i in 1..delta {
        let f = i as f64 / delta as f64;
        out.push(BBox {
            x_min: first.x_min + (last.x_min - first.x_min) * f,
            y_min: first.y_min + (last.y_min - first.y_min) * f,
            x_max: first.x_max + (last.x_max - first.x_max) * f,
            y_max: first.y_max + (last.y_max - first.y_max) * f,
        });
    }
    out.push(*last);
    Ok(out)
}

/// Linear interpolation of a scalar alongside [`interpolate_pair`].
pub fn interpolate_scalar(first: f64, last: f64, delta: usize, i: usize) -> f64 {
    if i == 0 {
        first
    } else if i >= delta {
        last
    } else {
        first + (last - first) * (i as f64 / delta as f64)
    }
}

/// Greedy per-class non-maximum suppression.
///
/// Candidates are visited in order of descending score (ties broken by lower
/// input index); a candidate is suppressed iff its IoU with an already-kept
/// box exceeds `threshold`. Returns the kept input indices, best first.
pub fn nms_indices(boxes: &[(BBox, f64)], threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b].1
            .partial_cmp(&boxes[a].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.iter().all(|&k| boxes[k].0.iou(&boxes[i].0) <= threshold) {
            kept.push(i);
        }
    }
    kept
}

/// [`nms_indices`], returning the surviving `(box, score)` pairs.
pub fn nms_per_class(boxes: &[(BBox, f64)], threshold: f64) -> Vec<(BBox, f64)> {
    nms_indices(boxes, threshold)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

/// One detection with its `C + 1` class scores (index 0 is background).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub scores: Vec<f64>,
}

impl ScoredBox {
    pub fn new(bbox: BBox, scores: Vec<f64>) -> Self {
        ScoredBox { bbox, scores }
    }

    /// Number of action classes (excludes background).
    pub fn num_classes(&self) -> usize {
        self.scores.len().saturating_sub(1)
    }

    /// Score of action class `c` (1-based; 0 is background).
    pub fn class_score(&self, c: usize) -> f64 {
        self.scores.get(c).copied().unwrap_or(0.0)
    }
}

/// All scored detections of one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub video: String,
    pub t: usize,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<ScoredBox>,
}

impl DetectionFrame {
    /// Clamps every detection box to the frame bounds, preserving order.
    pub fn clamped(mut self) -> Self {
        let (w, h) = (self.width as f64, self.height as f64);
        for d in &mut self.detections {
            d.bbox = d.bbox.clamp(w, h);
        }
        self
    }
}
