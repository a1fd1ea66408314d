//! Merging appearance-stream and flow-stream detections into one per-frame set.

use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, DetectionFrame, ScoredBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    Boost,
    Union,
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    pub strategy: FusionStrategy,
    /// IoU threshold for boost matching.
    pub tau: f64,
    /// Online boost variant: L1-normalise fused score vectors.
    pub l1_normalize: bool,
    /// Matching threshold for mean fusion.
    pub mean_match_iou: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            strategy: FusionStrategy::Boost,
            tau: 0.3,
            l1_normalize: false,
            mean_match_iou: 0.5,
        }
    }
}

/// Boost fusion: each appearance box's class scores are augmented by its
/// best-overlapping flow box, `s* = s_c + s_c(flow) * IoU`, when that overlap
/// reaches `tau`. Flow boxes that matched no appearance box are appended
/// unchanged. Background (index 0) is never augmented.
pub fn boost_fuse(
    appearance: &[ScoredBox],
    flow: &[ScoredBox],
    params: &FusionParams,
) -> Vec<ScoredBox> {
    let mut out = Vec::with_capacity(appearance.len() + flow.len());
    let mut flow_matched = vec![false; flow.len()];

    for a in appearance {
        let mut best: Option<(usize, f64)> = None;
        for (j, f) in flow.iter().enumerate() {
            let iou = a.bbox.iou(&f.bbox);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        let mut fused = a.clone();
        if let Some((j, iou)) = best {
            if iou >= params.tau {
                flow_matched[j] = true;
                for c in 1..fused.scores.len() {
                    fused.scores[c] += flow[j].class_score(c) * iou;
                }
            }
        }
        if params.l1_normalize {
            l1_normalize(&mut fused.scores);
        }
        out.push(fused);
    }

    for (j, f) in flow.iter().enumerate() {
        if !flow_matched[j] {
            let mut kept = f.clone();
            if params.l1_normalize {
                l1_normalize(&mut kept.scores);
            }
            out.push(kept);
        }
    }
    out
}

fn l1_normalize(scores: &mut [f64]) {
    let sum: f64 = scores.iter().sum();
    if sum > 0.0 {
        for s in scores.iter_mut() {
            *s /= sum;
        }
    }
}

/// Union fusion: multiset concatenation, appearance first.
pub fn union_fuse(appearance: &[ScoredBox], flow: &[ScoredBox]) -> Vec<ScoredBox> {
    let mut out = Vec::with_capacity(appearance.len() + flow.len());
    out.extend_from_slice(appearance);
    out.extend_from_slice(flow);
    out
}

/// Mean fusion: greedy one-to-one matching by descending pair IoU among pairs
/// at or above `mean_match_iou`; matched pairs average coordinates and score
/// vectors, unmatched boxes pass through.
///
/// Output order: matched pairs in match order, then unmatched appearance
/// boxes, then unmatched flow boxes, each in input order.
pub fn mean_fuse(
    appearance: &[ScoredBox],
    flow: &[ScoredBox],
    params: &FusionParams,
) -> Vec<ScoredBox> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, a) in appearance.iter().enumerate() {
        for (j, f) in flow.iter().enumerate() {
            let iou = a.bbox.iou(&f.bbox);
            if iou >= params.mean_match_iou {
                pairs.push((i, j, iou));
            }
        }
    }
    pairs.sort_by(|l, r| {
        r.2.partial_cmp(&l.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(l.0.cmp(&r.0))
            .then(l.1.cmp(&r.1))
    });

    let mut a_used = vec![false; appearance.len()];
    let mut f_used = vec![false; flow.len()];
    let mut out = Vec::new();
    for (i, j, _) in pairs {
        if a_used[i] || f_used[j] {
            continue;
        }
        a_used[i] = true;
        f_used[j] = true;
        let (a, f) = (&appearance[i], &flow[j]);
        let bbox = BBox {
            x_min: (a.bbox.x_min + f.bbox.x_min) / 2.0,
            y_min: (a.bbox.y_min + f.bbox.y_min) / 2.0,
            x_max: (a.bbox.x_max + f.bbox.x_max) / 2.0,
            y_max: (a.bbox.y_max + f.bbox.y_max) / 2.0,
        };
        let scores = a
            .scores
            .iter()
            .zip(&f.scores)
            .map(|(x, y)| (x + y) / 2.0)
            .collect();
        out.push(ScoredBox::new(bbox, scores));
    }
    out.extend(
        appearance
            .iter()
            .enumerate()
            .filter(|(i, _)| !a_used[*i])
            .map(|(_, a)| a.clone()),
    );
    out.extend(
        flow.iter()
            .enumerate()
            .filter(|(j, _)| !f_used[*j])
            .map(|(_, f)| f.clone()),
    );
    out
}

/// Fuses two frames of the same video/time with the configured strategy.
pub fn fuse_frame(
    appearance: &DetectionFrame,
    flow: &DetectionFrame,
    params: &FusionParams,
) -> DetectionFrame {
    let detections = match params.strategy {
        FusionStrategy::Boost => boost_fuse(&appearance.detections, &flow.detections, params),
        FusionStrategy::Union => union_fuse(&appearance.detections, &flow.detections),
        FusionStrategy::Mean => mean_fuse(&appearance.detections, &flow.detections, params),
    };
    DetectionFrame {
        video: appearance.video.clone(),
        t: appearance.t,
        width: appearance.width,
        height: appearance.height,
        detections,
    }
}
