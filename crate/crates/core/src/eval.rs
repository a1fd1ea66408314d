//! Tube detection metrics: ST-IoU, per-class AP, video-mAP, avg-mAP,
//! completion/prediction mAP and early-label accuracy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::offline::ActionTube;

/// A ground-truth tube: contiguous per-frame boxes with a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTube {
    pub video: String,
    pub class: usize,
    pub start: usize,
    pub end: usize,
    pub boxes: Vec<BBox>,
}

impl GtTube {
    /// Temporal extent in frames (`start <= end` by construction).
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Default ST-IoU threshold.
    pub delta: f64,
    /// Thresholds for avg-mAP.
    pub delta_sweep: Vec<f64>,
    /// Video observation fractions for the online metrics.
    pub fractions: Vec<f64>,
    /// Average S-IoU over the gt duration instead of the temporal
    /// intersection (penalises missed frames twice).
    pub siou_over_gt_duration: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delta: 0.5,
            delta_sweep: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            siou_over_gt_duration: false,
        }
    }
}

fn span_overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo > hi {
        0
    } else {
        hi - lo + 1
    }
}

/// Spatiotemporal IoU: the temporal IoU of the two frame spans multiplied by
/// the mean spatial IoU over their temporal intersection.
pub fn st_iou(det: &ActionTube, gt: &GtTube, cfg: &EvalConfig) -> f64 {
    let inter = span_overlap((det.start, det.end), (gt.start, gt.end));
    if inter == 0 {
        return 0.0;
    }
    let union = det.len() + gt.len() - inter;
    let t_iou = inter as f64 / union as f64;

    let lo = det.start.max(gt.start);
    let mut sum = 0.0;
    for f in lo..lo + inter {
        let d = &det.boxes[f - det.start];
        let g = &gt.boxes[f - gt.start];
        sum += d.iou(g);
    }
    let denom = if cfg.siou_over_gt_duration {
        gt.len()
    } else {
        inter
    };
    let s_iou = sum / denom as f64;
    t_iou * s_iou
}

/// Average precision for one class.
///
/// Detections are visited by descending score (ties by video id, then input
/// order); each is greedily matched to the still-unmatched ground truth with
/// the highest ST-IoU in its video and counts as a true positive iff that
/// overlap reaches `delta`. AP is the all-point interpolated area under the
/// precision-recall curve.
pub fn class_ap(dets: &[&ActionTube], gts: &[&GtTube], delta: f64, cfg: &EvalConfig) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| dets[a].video.cmp(&dets[b].video))
            .then(a.cmp(&b))
    });

    let mut gt_matched = vec![false; gts.len()];
    let mut tp = Vec::with_capacity(dets.len());
    for &d in &order {
        let det = dets[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g] || gt.video != det.video {
                continue;
            }
            let ov = st_iou(det, gt, cfg);
            if best.map_or(true, |(_, b)| ov > b) {
                best = Some((g, ov));
            }
        }
        match best {
            Some((g, ov)) if ov >= delta => {
                gt_matched[g] = true;
                tp.push(true);
            }
            _ => tp.push(false),
        }
    }

    average_precision(&tp, gts.len())
}

/// All-point interpolated AP from an ordered TP/FP sequence.
fn average_precision(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || tp.is_empty() {
        return 0.0;
    }
    let mut precisions = Vec::with_capacity(tp.len());
    let mut recalls = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &is_tp) in tp.iter().enumerate() {
        if is_tp {
            hits += 1;
        }
        precisions.push(hits as f64 / (k + 1) as f64);
        recalls.push(hits as f64 / n_gt as f64);
    }
    // monotone precision envelope
    for k in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[k] = precisions[k].max(precisions[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..tp.len() {
        ap += (recalls[k] - prev_recall) * precisions[k];
        prev_recall = recalls[k];
    }
    ap
}

/// Mean AP over the classes present in the ground truth, plus the per-class
/// table. Errors when there is no ground truth at all.
pub fn video_map(
    dets: &[ActionTube],
    gts: &[GtTube],
    delta: f64,
    cfg: &EvalConfig,
) -> Result<(f64, Vec<(usize, f64)>)> {
    if gts.is_empty() {
        return Err(Error::EmptyInput("ground-truth tubes"));
    }
    let classes: BTreeSet<usize> = gts.iter().map(|g| g.class).collect();
    let mut per_class = Vec::with_capacity(classes.len());
    for c in classes {
        let class_dets: Vec<&ActionTube> = dets.iter().filter(|d| d.class == c).collect();
        let class_gts: Vec<&GtTube> = gts.iter().filter(|g| g.class == c).collect();
        per_class.push((c, class_ap(&class_dets, &class_gts, delta, cfg)));
    }
    let map = per_class.iter().map(|(_, ap)| ap).sum::<f64>() / per_class.len() as f64;
    Ok((map, per_class))
}

/// Mean of video-mAP over the threshold sweep.
pub fn avg_map(dets: &[ActionTube], gts: &[GtTube], cfg: &EvalConfig) -> Result<f64> {
    let mut sum = 0.0;
    for &d in &cfg.delta_sweep {
        sum += video_map(dets, gts, d, cfg)?.0;
    }
    Ok(sum / cfg.delta_sweep.len() as f64)
}

/// Number of frames observed at fraction `f` of a `t_len`-frame video
/// (at least one, at most all).
pub fn observed_frames(fraction: f64, t_len: usize) -> usize {
    ((fraction * t_len as f64 + 1e-9).floor() as usize).clamp(1, t_len)
}

/// Completion-mAP: completed tubes (observed prefix plus predicted future)
/// scored against the full ground-truth tubes.
pub fn completion_map(
    completed: &[ActionTube],
    gts: &[GtTube],
    delta: f64,
    cfg: &EvalConfig,
) -> Result<f64> {
    Ok(video_map(completed, gts, delta, cfg)?.0)
}

fn truncate_tube(t: &ActionTube, from: usize) -> Option<ActionTube> {
    if t.end < from {
        return None;
    }
    let start = t.start.max(from);
    let off = start - t.start;
    Some(ActionTube {
        video: t.video.clone(),
        class: t.class,
        start,
        end: t.end,
        boxes: t.boxes[off..].to_vec(),
        scores: t.scores[off..].to_vec(),
        score: t.score,
    })
}

fn truncate_gt(t: &GtTube, from: usize) -> Option<GtTube> {
    if t.end < from {
        return None;
    }
    let start = t.start.max(from);
    let off = start - t.start;
    Some(GtTube {
        video: t.video.clone(),
        class: t.class,
        start,
        end: t.end,
        boxes: t.boxes[off..].to_vec(),
    })
}

/// Prediction-mAP: only the future segments (at or past each video's
/// observation boundary) of detections and ground truth are compared.
/// Videos with no ground-truth future at this fraction drop out entirely.
pub fn prediction_map(
    completed: &[ActionTube],
    gts: &[GtTube],
    fraction: f64,
    video_len: &HashMap<String, usize>,
    delta: f64,
    cfg: &EvalConfig,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let boundary = |video: &str| -> Option<usize> {
        video_len.get(video).map(|&t| observed_frames(fraction, t))
    };
    let mut future_gts = Vec::new();
    let mut kept_videos = BTreeSet::new();
    for gt in gts {
        let Some(b) = boundary(&gt.video) else {
            continue;
        };
        if let Some(seg) = truncate_gt(gt, b) {
            kept_videos.insert(gt.video.clone());
            future_gts.push(seg);
        }
    }
    let mut future_dets = Vec::new();
    for det in completed {
        if !kept_videos.contains(&det.video) {
            continue;
        }
        let Some(b) = boundary(&det.video) else {
            continue;
        };
        if let Some(seg) = truncate_tube(det, b) {
            future_dets.push(seg);
        }
    }
    video_map(&future_dets, &future_gts, delta, cfg)
}

/// Accuracy of per-video label predictions at each observation fraction.
/// A missing or `None` prediction counts as incorrect.
pub fn early_accuracy(
    predictions: &BTreeMap<String, Vec<Option<usize>>>,
    gt_labels: &BTreeMap<String, usize>,
    n_fractions: usize,
) -> Vec<f64> {
    let n_videos = gt_labels.len().max(1);
    (0..n_fractions)
        .map(|k| {
            let correct = gt_labels
                .iter()
                .filter(|(video, &label)| {
                    predictions
                        .get(*video)
                        .and_then(|p| p.get(k).copied().flatten())
                        == Some(label)
                })
                .count();
            correct as f64 / n_videos as f64
        })
        .collect()
}
