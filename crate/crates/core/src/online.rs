//! Incremental, frame-by-frame construction of per-class action tubes.
//!
//! Each new frame is reduced to the top-n per-class detections by NMS; live
//! tubes, visited best-mean first, greedily claim the highest-scoring box
//! whose IoU with their last box clears the gate; unclaimed boxes spawn new
//! tubes; tubes missing too many consecutive frames are terminated at their
//! last match. Every tube maintains a bounded-lookback (fixed-lag) Potts
//! labelling so labels older than the lookback are committed online. The same
//! machinery also links micro-tube streams, associating on the shared frame
//! and filling intermediate frames by interpolation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{MicroTube, PredictionSet};
use crate::geometry::{interpolate_pair, interpolate_scalar, nms_indices, BBox, DetectionFrame};
use crate::offline::{label_runs, potts_init, potts_step, ActionTube, ACTION, BACKGROUND};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineParams {
    /// IoU gate between a tube's last box and a candidate detection.
    pub iou_gate: f64,
    /// Boxes kept per class per frame after NMS.
    pub top_n: usize,
    /// Consecutive misses allowed before a tube is terminated.
    pub max_misses: usize,
    /// Fixed-lag labelling lookback depth (m).
    pub lookback: usize,
    pub nms_threshold: f64,
    /// Per-class confidence cut applied before NMS.
    pub min_box_score: f64,
    /// Potts weight for the online labelling.
    pub label_lambda: f64,
    /// Potts switch penalty for the online labelling.
    pub label_alpha: f64,
}

impl Default for OnlineParams {
    fn default() -> Self {
        OnlineParams {
            iou_gate: 0.1,
            top_n: 10,
            max_misses: 5,
            lookback: 5,
            nms_threshold: 0.45,
            min_box_score: 0.01,
            label_lambda: 1.0,
            label_alpha: 1.0,
        }
    }
}

impl OnlineParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.iou_gate) {
            return Err(Error::InvalidParam("iou_gate must be in [0, 1]".into()));
        }
        if !in_unit(self.nms_threshold) {
            return Err(Error::InvalidParam("nms_threshold must be in [0, 1]".into()));
        }
        if self.top_n < 1 || self.max_misses < 1 || self.lookback < 1 {
            return Err(Error::InvalidParam(
                "top_n, max_misses and lookback must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed-lag two-state Potts labeller.
///
/// Pushes one unary score per box. Labels older than `lookback` steps are
/// committed from the stored minimum-cost back-pointers; the tail may still
/// change until [`FixedLagTrellis::finalize`]. With `lookback >= len` the
/// finalised labelling is exactly the full Viterbi optimum.
#[derive(Debug, Clone)]
pub struct FixedLagTrellis {
    lookback: usize,
    lambda: f64,
    alpha: f64,
    len: usize,
    cost: [f64; 2],
    window: VecDeque<[usize; 2]>,
    committed: Vec<bool>,
}

impl FixedLagTrellis {
    pub fn new(lookback: usize, lambda: f64, alpha: f64) -> Self {
        FixedLagTrellis {
            lookback: lookback.max(1),
            lambda,
            alpha,
            len: 0,
            cost: [0.0; 2],
            window: VecDeque::new(),
            committed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn best_state(&self) -> usize {
        if self.cost[ACTION] > self.cost[BACKGROUND] {
            ACTION
        } else {
            BACKGROUND
        }
    }

    pub fn push(&mut self, score: f64) {
        if self.len == 0 {
            self.cost = potts_init(score);
        } else {
            let (cost, bp) = potts_step(self.cost, score, self.lambda, self.alpha);
            self.cost = cost;
            self.window.push_back(bp);
            if self.window.len() == self.lookback {
                // Commit the label `lookback` steps back by walking the
                // whole window from the current best end state.
                let mut state = self.best_state();
                for bp in self.window.iter().rev() {
                    state = bp[state];
                }
                self.committed.push(state == ACTION);
                self.window.pop_front();
            }
        }
        self.len += 1;
    }

    /// Labels already committed (positions `0..committed().len()`).
    pub fn committed(&self) -> &[bool] {
        &self.committed
    }

    /// Full labelling: committed prefix plus the back-tracked tail.
    pub fn finalize(&self) -> Vec<bool> {
        if self.len == 0 {
            return Vec::new();
        }
        let mut tail = vec![false; self.window.len() + 1];
        let mut state = self.best_state();
        tail[self.window.len()] = state == ACTION;
        for (i, bp) in self.window.iter().enumerate().rev() {
            state = bp[state];
            tail[i] = state == ACTION;
        }
        let mut labels = self.committed.clone();
        labels.extend_from_slice(&tail);
        debug_assert_eq!(labels.len(), self.len);
        labels
    }
}

/// A tube under construction: boxes and class scores accumulated so far, a
/// running mean, miss bookkeeping and the labelling trellis.
#[derive(Debug, Clone)]
pub struct LiveTube {
    pub class: usize,
    pub start: usize,
    pub boxes: Vec<BBox>,
    pub scores: Vec<f64>,
    sum_score: f64,
    pub last_matched: usize,
    pub misses: usize,
    trellis: FixedLagTrellis,
    pub predictions: Vec<PredictionSet>,
    spawn_order: u64,
}

impl LiveTube {
    fn spawn(class: usize, t: usize, bbox: BBox, score: f64, params: &OnlineParams, order: u64) -> Self {
        let mut trellis =
            FixedLagTrellis::new(params.lookback, params.label_lambda, params.label_alpha);
        trellis.push(score);
        LiveTube {
            class,
            start: t,
            boxes: vec![bbox],
            scores: vec![score],
            sum_score: score,
            last_matched: t,
            misses: 0,
            trellis,
            predictions: Vec::new(),
            spawn_order: order,
        }
    }

    pub fn mean_score(&self) -> f64 {
        self.sum_score / self.scores.len() as f64
    }

    pub fn end_frame(&self) -> usize {
        self.start + self.boxes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn labelling(&self) -> Vec<bool> {
        self.trellis.finalize()
    }

    /// Extends the tube to `frame` with `bbox`/`score`, interpolating any gap
    /// so member frames stay contiguous.
    fn append_span(&mut self, frame: usize, bbox: BBox, score: f64) {
        let gap = frame - self.end_frame();
        debug_assert!(gap >= 1);
        let last_box = *self.boxes.last().unwrap();
        let last_score = *self.scores.last().unwrap();
        let seg = interpolate_pair(&last_box, &bbox, gap).expect("gap >= 1");
        for (i, bx) in seg.into_iter().enumerate().skip(1) {
            let s = interpolate_scalar(last_score, score, gap, i);
            self.boxes.push(bx);
            self.scores.push(s);
            self.sum_score += s;
            self.trellis.push(s);
        }
        self.last_matched = frame;
        self.misses = 0;
    }

    /// Shared-frame conflict in micro-tube linking: the incoming first box
    /// replaces the older coordinates; the score already consumed stays.
    fn replace_last_box(&mut self, bbox: BBox) {
        *self.boxes.last_mut().unwrap() = bbox;
    }

    /// Trims the label-c runs of the finalised labelling into tubes; runs
    /// shorter than `min_len` frames are dropped.
    fn emit(&self, video: &str, min_len: usize) -> Vec<ActionTube> {
        let labels = self.labelling();
        label_runs(&labels)
            .into_iter()
            .filter(|(s, e)| e - s + 1 >= min_len)
            .map(|(s, e)| {
                let scores = self.scores[s..=e].to_vec();
                let score = scores.iter().sum::<f64>() / scores.len() as f64;
                ActionTube {
                    video: video.to_string(),
                    class: self.class,
                    start: self.start + s,
                    end: self.start + e,
                    boxes: self.boxes[s..=e].to_vec(),
                    scores,
                    score,
                }
            })
            .collect()
    }

    /// The untrimmed tube with its mean score.
    fn as_track(&self, video: &str) -> ActionTube {
        ActionTube {
            video: video.to_string(),
            class: self.class,
            start: self.start,
            end: self.end_frame(),
            boxes: self.boxes.clone(),
            scores: self.scores.clone(),
            score: self.mean_score(),
        }
    }
}

/// Minimum length (frames) for a tube to survive termination or emission.
const MIN_TUBE_LEN: usize = 2;

#[derive(Debug, Clone, Default)]
struct ClassState {
    active: Vec<LiveTube>,
    finished: Vec<LiveTube>,
}

/// An untrimmed detected tube together with the prediction sets its member
/// micro-tubes carried.
#[derive(Debug, Clone)]
pub struct TrackedTube {
    pub tube: ActionTube,
    pub predictions: Vec<PredictionSet>,
}

/// Single-video online linker state. `step` consumes per-frame detections;
/// `link_micro` consumes micro-tube sets at a fixed stride. One linker is
/// single-writer; distinct videos run independently.
#[derive(Debug, Clone)]
pub struct OnlineLinker {
    params: OnlineParams,
    classes: usize,
    video: String,
    t: Option<usize>,
    micro: Option<(usize, usize)>, // (delta, last set start)
    per_class: Vec<ClassState>,    // indexed by class id, slot 0 unused
    spawn_counter: u64,
}

impl OnlineLinker {
    pub fn new(video: &str, classes: usize, params: OnlineParams) -> Self {
        OnlineLinker {
            params,
            classes,
            video: video.to_string(),
            t: None,
            micro: None,
            per_class: vec![ClassState::default(); classes + 1],
            spawn_counter: 0,
        }
    }

    pub fn params(&self) -> &OnlineParams {
        &self.params
    }

    /// Surviving per-class candidates: confidence cut, NMS, top-n.
    fn survivors(&self, boxes: &[(BBox, f64)]) -> Vec<(BBox, f64)> {
        let scored: Vec<(BBox, f64)> = boxes
            .iter()
            .copied()
            .filter(|(_, s)| *s >= self.params.min_box_score)
            .collect();
        let mut kept: Vec<(BBox, f64)> = nms_indices(&scored, self.params.nms_threshold)
            .into_iter()
            .map(|i| scored[i])
            .collect();
        kept.truncate(self.params.top_n);
        kept
    }

    /// Advances one frame. `t` must be 0 on the first call and increment by
    /// one afterwards.
    pub fn step(&mut self, t: usize, frame: &DetectionFrame) -> Result<()> {
        if self.micro.is_some() {
            return Err(Error::InvalidParam(
                "cannot mix frame and micro-tube input".into(),
            ));
        }
        let expected = self.t.map_or(0, |prev| prev + 1);
        if t != expected {
            return Err(Error::NonMonotonicFrame { expected, got: t });
        }
        self.t = Some(t);

        for c in 1..=self.classes {
            let boxes: Vec<(BBox, f64)> = frame
                .detections
                .iter()
                .map(|d| (d.bbox, d.class_score(c)))
                .collect();
            let survivors = self.survivors(&boxes);
            self.associate(c, t, &survivors);
        }
        Ok(())
    }

    /// Links a set of micro-tubes whose first boxes sit on frame `t`.
    /// Calls must arrive at `t0, t0 + delta, t0 + 2*delta, ...`.
    pub fn link_micro(&mut self, t: usize, delta: usize, mts: &[MicroTube]) -> Result<()> {
        if delta < 1 {
            return Err(Error::BadStride(delta));
        }
        match self.micro {
            None => {
                if self.t.is_some() {
                    return Err(Error::InvalidParam(
                        "cannot mix frame and micro-tube input".into(),
                    ));
                }
            }
            Some((d, last)) => {
                if d != delta {
                    return Err(Error::StrideMismatch {
                        expected: d,
                        got: delta,
                    });
                }
                if t != last + delta {
                    return Err(Error::StrideMismatch {
                        expected: last + delta,
                        got: t,
                    });
                }
            }
        }
        self.micro = Some((delta, t));
        self.t = Some(t + delta);

        for c in 1..=self.classes {
            let boxes: Vec<(BBox, f64)> = mts
                .iter()
                .map(|m| (m.first, m.class_score(c)))
                .collect();
            let scored: Vec<(usize, BBox, f64)> = boxes
                .iter()
                .enumerate()
                .filter(|(_, (_, s))| *s >= self.params.min_box_score)
                .map(|(i, (b, s))| (i, *b, *s))
                .collect();
            let pairs: Vec<(BBox, f64)> = scored.iter().map(|&(_, b, s)| (b, s)).collect();
            let mut kept: Vec<usize> = nms_indices(&pairs, self.params.nms_threshold);
            kept.truncate(self.params.top_n);

            // survivors carry the original micro-tube index for prediction
            // attachment and the second-box extension
            let survivors: Vec<(BBox, f64)> = kept.iter().map(|&k| pairs[k]).collect();
            let sources: Vec<usize> = kept.iter().map(|&k| scored[k].0).collect();
            self.associate_micro(c, t, delta, mts, &survivors, &sources);
        }
        Ok(())
    }

    /// Greedy gate-sort-claim over one class for frame mode.
    fn associate(&mut self, class: usize, t: usize, survivors: &[(BBox, f64)]) {
        let params = self.params.clone();
        let mut claimed = vec![false; survivors.len()];
        let state = &mut self.per_class[class];

        let mut order: Vec<usize> = (0..state.active.len()).collect();
        order.sort_by(|&a, &b| {
            let (ma, mb) = (state.active[a].mean_score(), state.active[b].mean_score());
            mb.partial_cmp(&ma)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(state.active[a].spawn_order.cmp(&state.active[b].spawn_order))
        });

        for &i in &order {
            let tube = &mut state.active[i];
            let last = *tube.boxes.last().unwrap();
            let mut best: Option<usize> = None;
            for (j, (bx, sc)) in survivors.iter().enumerate() {
                if claimed[j] {
                    continue;
                }
                if last.iou(bx) > params.iou_gate {
                    let better = match best {
                        None => true,
                        Some(b) => *sc > survivors[b].1,
                    };
                    if better {
                        best = Some(j);
                    }
                }
            }
            match best {
                Some(j) => {
                    claimed[j] = true;
                    let (bx, sc) = survivors[j];
                    tube.append_span(t, bx, sc);
                }
                None => tube.misses += 1,
            }
        }

        Self::retire(state, params.max_misses);
        for (j, &(bx, sc)) in survivors.iter().enumerate() {
            if !claimed[j] {
                state
                    .active
                    .push(LiveTube::spawn(class, t, bx, sc, &params, self.spawn_counter));
                self.spawn_counter += 1;
            }
        }
        Self::evict(state, params.top_n);
    }

    /// Greedy gate-sort-claim over one class for micro-tube mode: the
    /// association runs on the shared frame `t` between each tube's last box
    /// and the incoming first boxes; matched tubes extend to `t + delta`.
    fn associate_micro(
        &mut self,
        class: usize,
        t: usize,
        delta: usize,
        mts: &[MicroTube],
        survivors: &[(BBox, f64)],
        sources: &[usize],
    ) {
        let params = self.params.clone();
        let mut claimed = vec![false; survivors.len()];
        let state = &mut self.per_class[class];

        let mut order: Vec<usize> = (0..state.active.len()).collect();
        order.sort_by(|&a, &b| {
            let (ma, mb) = (state.active[a].mean_score(), state.active[b].mean_score());
            mb.partial_cmp(&ma)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(state.active[a].spawn_order.cmp(&state.active[b].spawn_order))
        });

        for &i in &order {
            let tube = &mut state.active[i];
            let last = *tube.boxes.last().unwrap();
            let mut best: Option<usize> = None;
            for (j, (bx, sc)) in survivors.iter().enumerate() {
                if claimed[j] {
                    continue;
                }
                if last.iou(bx) > params.iou_gate {
                    let better = match best {
                        None => true,
                        Some(b) => *sc > survivors[b].1,
                    };
                    if better {
                        best = Some(j);
                    }
                }
            }
            match best {
                Some(j) => {
                    claimed[j] = true;
                    let mt = &mts[sources[j]];
                    let sc = survivors[j].1;
                    if tube.end_frame() == t {
                        tube.replace_last_box(mt.first);
                    } else {
                        tube.append_span(t, mt.first, sc);
                    }
                    tube.append_span(t + delta, mt.second, sc);
                    if let Some(pred) = &mt.prediction {
                        tube.predictions.push(pred.clone());
                    }
                }
                None => tube.misses += 1,
            }
        }

        Self::retire(state, params.max_misses);
        for (j, &(_, sc)) in survivors.iter().enumerate() {
            if !claimed[j] {
                let mt = &mts[sources[j]];
                let mut tube =
                    LiveTube::spawn(class, t, mt.first, sc, &params, self.spawn_counter);
                self.spawn_counter += 1;
                tube.append_span(t + delta, mt.second, sc);
                if let Some(pred) = &mt.prediction {
                    tube.predictions.push(pred.clone());
                }
                state.active.push(tube);
            }
        }
        Self::evict(state, params.top_n);
    }

    /// Terminates tubes that have exceeded the allowed consecutive misses.
    /// A terminated tube ends at its last matched frame; tubes shorter than
    /// [`MIN_TUBE_LEN`] are dropped.
    fn retire(state: &mut ClassState, max_misses: usize) {
        let mut i = 0;
        while i < state.active.len() {
            if state.active[i].misses > max_misses {
                let tube = state.active.remove(i);
                if tube.len() >= MIN_TUBE_LEN {
                    state.finished.push(tube);
                }
            } else {
                i += 1;
            }
        }
    }

    /// Memory bound on adversarial streams: once actives exceed 4n, the
    /// lowest-mean tubes are evicted (finalised) until n remain.
    fn evict(state: &mut ClassState, top_n: usize) {
        if state.active.len() <= 4 * top_n {
            return;
        }
        state.active.sort_by(|a, b| {
            b.mean_score()
                .partial_cmp(&a.mean_score())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.spawn_order.cmp(&b.spawn_order))
        });
        for tube in state.active.split_off(top_n) {
            if tube.len() >= MIN_TUBE_LEN {
                state.finished.push(tube);
            }
        }
    }

    /// Early video-label prediction: the class of the highest-mean-score tube
    /// (active or finished); ties resolve to the lowest class id. `None`
    /// until a tube exists.
    pub fn predict_label(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for c in 1..=self.classes {
            let state = &self.per_class[c];
            for tube in state.active.iter().chain(&state.finished) {
                let mean = tube.mean_score();
                let better = match best {
                    None => true,
                    Some((_, bm)) => mean > bm,
                };
                if better {
                    best = Some((c, mean));
                }
            }
        }
        best.map(|(c, _)| c)
    }

    /// Terminates every remaining active tube (end of stream).
    pub fn finish(&mut self) {
        for state in self.per_class.iter_mut() {
            for tube in state.active.drain(..) {
                if tube.len() >= MIN_TUBE_LEN {
                    state.finished.push(tube);
                }
            }
        }
    }

    /// Temporally trimmed tubes from all finished live tubes, ordered by
    /// class then spawn order. Call [`OnlineLinker::finish`] first to include
    /// still-active tubes.
    pub fn tubes(&self) -> Vec<ActionTube> {
        let mut out = Vec::new();
        for c in 1..=self.classes {
            let mut finished: Vec<&LiveTube> = self.per_class[c].finished.iter().collect();
            finished.sort_by_key(|t| t.spawn_order);
            for tube in finished {
                out.extend(tube.emit(&self.video, MIN_TUBE_LEN));
            }
        }
        out
    }

    /// Untrimmed tube snapshots with attached predictions, over finished and
    /// active tubes, ordered by class then spawn order. Single-frame tubes
    /// are skipped.
    pub fn tracks(&self) -> Vec<TrackedTube> {
        let mut out = Vec::new();
        for c in 1..=self.classes {
            let state = &self.per_class[c];
            let mut all: Vec<&LiveTube> = state.finished.iter().chain(&state.active).collect();
            all.sort_by_key(|t| t.spawn_order);
            for tube in all {
                if tube.len() >= MIN_TUBE_LEN {
                    out.push(TrackedTube {
                        tube: tube.as_track(&self.video),
                        predictions: tube.predictions.clone(),
                    });
                }
            }
        }
        out
    }

    /// Active + finished live tubes of one class (inspection/testing).
    pub fn live_tubes(&self, class: usize) -> (&[LiveTube], &[LiveTube]) {
        let s = &self.per_class[class];
        (&s.active, &s.finished)
    }
}
