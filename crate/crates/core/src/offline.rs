//! Two-pass offline tube construction.
//!
//! Pass one links per-frame detections of one class into video-spanning
//! action paths by maximising a unary + pairwise-IoU energy with the Viterbi
//! algorithm, removing each path's detections before extracting the next.
//! Pass two trims every path to its action-duration tubes with a two-state
//! Potts-model dynamic programme. The same Potts kernel also powers the
//! frame-level temporal detector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathParams {
    /// Weight of the pairwise overlap potential.
    pub lambda_o: f64,
    /// Maximum number of paths extracted per class.
    pub max_paths: usize,
    /// Extraction stops once the best path's mean unary drops below this.
    pub min_mean_score: f64,
}

impl Default for PathParams {
    fn default() -> Self {
        PathParams {
            lambda_o: 1.0,
            max_paths: 20,
            min_mean_score: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrimParams {
    /// Weight of the Potts pairwise term.
    pub lambda_l: f64,
    /// Class-specific label-switch penalty.
    pub alpha_c: f64,
    /// Tube score pool: mean of the top `min(top_k, len)` unary scores.
    pub top_k: usize,
}

impl Default for TrimParams {
    fn default() -> Self {
        TrimParams {
            lambda_l: 1.0,
            alpha_c: 1.0,
            top_k: 10,
        }
    }
}

/// A video-spanning box sequence for one class, before temporal trimming.
///
/// Frames with no remaining detection hold a ghost box (a copy of the
/// neighbouring chosen box) with unary score 0; `ghost[t]` marks them.
/// `energy` counts only real-detection terms (unaries of real boxes and
/// pairwise overlaps between consecutive real boxes), which keeps extraction
/// order non-increasing: ghost transitions carry their fixed credit inside
/// the DP but earn nothing in the reported energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPath {
    pub video: String,
    pub class: usize,
    pub boxes: Vec<BBox>,
    pub scores: Vec<f64>,
    pub ghost: Vec<bool>,
    pub energy: f64,
}

/// A class-labelled, temporally contiguous tube with per-box scores and a
/// global score. `start..=end` are absolute frame indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTube {
    pub video: String,
    pub class: usize,
    pub start: usize,
    pub end: usize,
    pub boxes: Vec<BBox>,
    pub scores: Vec<f64>,
    pub score: f64,
}

impl ActionTube {
    /// Temporal extent in frames (tubes are never empty: `start <= end`).
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Builds class-specific action paths by repeated Viterbi maximisation of
///
/// `E(p) = sum_t s(b_t) + lambda_o * sum_t IoU(b_t, b_{t-1})`
///
/// over all box sequences, removing each extracted path's detections before
/// seeking the next. Extraction stops when more than half the frames have no
/// remaining detections, `max_paths` is reached, or the best path's mean
/// unary falls below `min_mean_score`. Output is ordered by decreasing
/// energy.
pub fn build_paths(
    video: &str,
    class: usize,
    frames: &[Vec<(BBox, f64)>],
    params: &PathParams,
) -> Result<Vec<ActionPath>> {
    let t_len = frames.len();
    if t_len == 0 {
        return Err(Error::EmptyVideo);
    }
    let mut remaining: Vec<Vec<usize>> = frames.iter().map(|f| (0..f.len()).collect()).collect();
    let mut paths: Vec<ActionPath> = Vec::new();

    while paths.len() < params.max_paths {
        let empty = remaining.iter().filter(|r| r.is_empty()).count();
        if empty * 2 > t_len {
            break;
        }
        let Some(path) = best_path(video, class, frames, &remaining, params) else {
            break;
        };
        let mean_unary = path.0.scores.iter().sum::<f64>() / t_len as f64;
        if mean_unary < params.min_mean_score {
            break;
        }
        for (t, det) in path.1.iter().enumerate() {
            if let Some(idx) = det {
                remaining[t].retain(|&r| r != *idx);
            }
        }
        paths.push(path.0);
    }

    // With ghost terms excluded from the reported energy, removal can only
    // shrink what later paths can earn, so extraction order is already
    // non-increasing; the stable sort enforces the contract regardless.
    paths.sort_by(|a, b| b.energy.partial_cmp(&a.energy).unwrap_or(std::cmp::Ordering::Equal));
    Ok(paths)
}

/// One Viterbi pass over the remaining detections. Returns the path and, per
/// frame, the index of the consumed detection (`None` on ghost frames).
fn best_path(
    video: &str,
    class: usize,
    frames: &[Vec<(BBox, f64)>],
    remaining: &[Vec<usize>],
    params: &PathParams,
) -> Option<(ActionPath, Vec<Option<usize>>)> {
    let t_len = frames.len();
    let first = remaining.iter().position(|r| !r.is_empty())?;

    // Per-frame state descriptors. Ghost frames mirror the previous frame's
    // states: same boxes, unary 0, pairwise IoU 1 to their predecessor.
    let mut state_box: Vec<Vec<BBox>> = Vec::with_capacity(t_len - first);
    let mut state_det: Vec<Vec<Option<usize>>> = Vec::with_capacity(t_len - first);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len - first);

    // Leading ghost frames replicate the first chosen box; each of the
    // `first` leading transitions contributes lambda_o * 1.
    let leading_bonus = params.lambda_o * first as f64;
    let mut cost: Vec<f64> = remaining[first]
        .iter()
        .map(|&i| leading_bonus + frames[first][i].1)
        .collect();
    state_box.push(remaining[first].iter().map(|&i| frames[first][i].0).collect());
    state_det.push(remaining[first].iter().map(|&i| Some(i)).collect());
    back.push(Vec::new());

    for t in first + 1..t_len {
        let prev_boxes = state_box.last().unwrap().clone();
        if remaining[t].is_empty() {
            for c in cost.iter_mut() {
                *c += params.lambda_o; // ghost: unary 0, IoU 1
            }
            back.push((0..prev_boxes.len()).collect());
            state_box.push(prev_boxes);
            state_det.push(vec![None; state_box.last().unwrap().len()]);
        } else {
            let mut new_cost = Vec::with_capacity(remaining[t].len());
            let mut bp = Vec::with_capacity(remaining[t].len());
            let mut boxes = Vec::with_capacity(remaining[t].len());
            let mut dets = Vec::with_capacity(remaining[t].len());
            for &j in &remaining[t] {
                let (bj, uj) = frames[t][j];
                let mut best_i = 0usize;
                let mut best_v = f64::NEG_INFINITY;
                for (i, pb) in prev_boxes.iter().enumerate() {
                    let v = cost[i] + params.lambda_o * pb.iou(&bj);
                    if v > best_v {
                        best_v = v;
                        best_i = i;
                    }
                }
                new_cost.push(best_v + uj);
                bp.push(best_i);
                boxes.push(bj);
                dets.push(Some(j));
            }
            cost = new_cost;
            back.push(bp);
            state_box.push(boxes);
            state_det.push(dets);
        }
    }

    let mut best = 0usize;
    for (i, c) in cost.iter().enumerate() {
        if *c > cost[best] {
            best = i;
        }
    }

    // Backtrack (frames first..t_len), then fill leading ghosts.
    let steps = t_len - first;
    let mut chosen = vec![0usize; steps];
    chosen[steps - 1] = best;
    for s in (1..steps).rev() {
        chosen[s - 1] = back[s][chosen[s]];
    }

    let mut boxes = Vec::with_capacity(t_len);
    let mut scores = Vec::with_capacity(t_len);
    let mut ghost = Vec::with_capacity(t_len);
    let mut dets: Vec<Option<usize>> = Vec::with_capacity(t_len);
    let first_box = state_box[0][chosen[0]];
    for _ in 0..first {
        boxes.push(first_box);
        scores.push(0.0);
        ghost.push(true);
        dets.push(None);
    }
    for s in 0..steps {
        let j = chosen[s];
        let det = state_det[s][j];
        boxes.push(state_box[s][j]);
        ghost.push(det.is_none());
        scores.push(match det {
            Some(idx) => frames[first + s][idx].1,
            None => 0.0,
        });
        dets.push(det);
    }

    // reported energy: real terms only, in forward accumulation order
    let mut energy = 0.0 + scores[first];
    for t in first + 1..t_len {
        if ghost[t - 1] || ghost[t] {
            if !ghost[t] {
                energy += scores[t];
            }
            continue;
        }
        energy = (energy + params.lambda_o * boxes[t - 1].iou(&boxes[t])) + scores[t];
    }

    Some((
        ActionPath {
            video: video.to_string(),
            class,
            boxes,
            scores,
            ghost,
            energy,
        },
        dets,
    ))
}

pub(crate) const BACKGROUND: usize = 0;
pub(crate) const ACTION: usize = 1;

/// One forward step of the two-state Potts DP shared by the offline trimmer
/// and the online fixed-lag labeller. State 0 is background (unary `1 - s`),
/// state 1 the action label (unary `s`). Ties prefer the lower state index.
pub(crate) fn potts_step(
    cost: [f64; 2],
    score: f64,
    lambda: f64,
    alpha: f64,
) -> ([f64; 2], [usize; 2]) {
    let switch = lambda * alpha;
    let mut out = [0.0f64; 2];
    let mut bp = [0usize; 2];
    for j in [BACKGROUND, ACTION] {
        let stay = cost[j];
        let jump = cost[1 - j] - switch;
        let (best_v, best_i) = if jump > stay { (jump, 1 - j) } else { (stay, j) };
        // tie: prefer the lower predecessor index
        let (best_v, best_i) = if jump == stay && 1 - j < j {
            (jump, 1 - j)
        } else {
            (best_v, best_i)
        };
        let unary = if j == ACTION { score } else { 1.0 - score };
        out[j] = best_v + unary;
        bp[j] = best_i;
    }
    (out, bp)
}

pub(crate) fn potts_init(score: f64) -> [f64; 2] {
    [1.0 - score, score]
}

/// Exact argmax binary labelling of `E(L) = sum_t u(l_t) - lambda * sum_t
/// psi(l_t, l_{t-1})` with the Potts potential `psi = 0` on equal labels and
/// `alpha` otherwise. `true` marks the action label.
pub fn potts_binary_labels(scores: &[f64], lambda: f64, alpha: f64) -> Vec<bool> {
    if scores.is_empty() {
        return Vec::new();
    }
    let mut cost = potts_init(scores[0]);
    let mut bps: Vec<[usize; 2]> = Vec::with_capacity(scores.len() - 1);
    for &s in &scores[1..] {
        let (c, bp) = potts_step(cost, s, lambda, alpha);
        cost = c;
        bps.push(bp);
    }
    let mut state = if cost[ACTION] > cost[BACKGROUND] {
        ACTION
    } else {
        BACKGROUND
    };
    let mut labels = vec![false; scores.len()];
    labels[scores.len() - 1] = state == ACTION;
    for t in (0..bps.len()).rev() {
        state = bps[t][state];
        labels[t] = state == ACTION;
    }
    labels
}

/// Mean of the top `min(k, len)` values (k clamped to at least 1).
fn top_k_mean(scores: &[f64], k: usize) -> f64 {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let k = k.max(1).min(sorted.len());
    sorted[..k].iter().sum::<f64>() / k as f64
}

/// Trims a video-spanning path into action tubes: the optimal Potts labelling
/// is computed over the path's unary scores, and every maximal run of the
/// action label becomes a tube scored by the mean of its top-k unaries.
pub fn viterbi_trim(path: &ActionPath, params: &TrimParams) -> Vec<ActionTube> {
    let labels = potts_binary_labels(&path.scores, params.lambda_l, params.alpha_c);
    label_runs(&labels)
        .into_iter()
        .map(|(start, end)| {
            let boxes = path.boxes[start..=end].to_vec();
            let scores = path.scores[start..=end].to_vec();
            let score = top_k_mean(&scores, params.top_k);
            ActionTube {
                video: path.video.clone(),
                class: path.class,
                start,
                end,
                boxes,
                scores,
                score,
            }
        })
        .collect()
}

/// Maximal runs of `true`, as inclusive `(start, end)` index pairs.
pub(crate) fn label_runs(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, labels.len() - 1));
    }
    runs
}

/// A frame-level temporal detection: a contiguous positive run for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProposal {
    pub class: usize,
    pub start: usize,
    pub end: usize,
    /// Mean of the constituting frame scores.
    pub score: f64,
}

/// Frame-level temporal action detection: for each candidate class the same
/// binary Potts DP runs on that class's frame score sequence, and each
/// positive run is emitted with the mean of its frame scores.
pub fn temporal_detect(
    frame_scores: &[Vec<f64>],
    candidates: &[usize],
    lambda: f64,
    alpha: f64,
) -> Result<Vec<TemporalProposal>> {
    if frame_scores.is_empty() {
        return Err(Error::EmptyVideo);
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate class list"));
    }
    let mut out = Vec::new();
    for &c in candidates {
        let seq: Vec<f64> = frame_scores
            .iter()
            .map(|v| v.get(c).copied().unwrap_or(0.0))
            .collect();
        let labels = potts_binary_labels(&seq, lambda, alpha);
        for (start, end) in label_runs(&labels) {
            let score = seq[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
            out.push(TemporalProposal {
                class: c,
                start,
                end,
                score,
            });
        }
    }
    Ok(out)
}

/// Convenience driver: per-class path building plus trimming over one video's
/// fused detection frames. `classes` is the number of action classes C.
pub fn build_tubes_offline(
    video: &str,
    frames: &[crate::geometry::DetectionFrame],
    classes: usize,
    path_params: &PathParams,
    trim_params: &TrimParams,
) -> Result<Vec<ActionTube>> {
    let mut tubes = Vec::new();
    for c in 1..=classes {
        let per_frame: Vec<Vec<(BBox, f64)>> = frames
            .iter()
            .map(|f| {
                f.detections
                    .iter()
                    .map(|d| (d.bbox, d.class_score(c)))
                    .collect()
            })
            .collect();
        for path in build_paths(video, c, &per_frame, path_params)? {
            tubes.extend(viterbi_trim(&path, trim_params));
        }
    }
    Ok(tubes)
}
