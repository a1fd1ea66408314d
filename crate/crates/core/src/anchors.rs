//! Anchor-grid pyramid, ground-truth micro-tube matching and heuristic
//! transition-matrix estimation.
//!
//! The pyramid mirrors the six-level detector layout: square grids of side
//! {38, 19, 10, 5, 3, 1} carrying {4, 6, 6, 6, 4, 4} anchors per cell, 8732
//! anchors in total. A transition matrix per level counts, over a corpus of
//! ground-truth micro-tubes, which cell pair (i at t, j at t + delta) the
//! best-matching anchor pair occupies; rows are then normalised.

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const GRID_SIDES: [usize; 6] = [38, 19, 10, 5, 3, 1];
pub const ANCHORS_PER_CELL: [usize; 6] = [4, 6, 6, 6, 4, 4];
pub const TOTAL_ANCHORS: usize = 8732;

/// One pyramid level: cell-centred anchors, `per_cell` per cell, cells
/// row-major. Anchor index = `cell * per_cell + slot`.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    pub level: usize,
    pub side: usize,
    pub per_cell: usize,
    pub anchors: Vec<BBox>,
}

impl AnchorGrid {
    pub fn cells(&self) -> usize {
        self.side * self.side
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchor(&self, cell: usize, slot: usize) -> &BBox {
        &self.anchors[cell * self.per_cell + slot]
    }

    pub fn cell_of(&self, anchor_idx: usize) -> usize {
        anchor_idx / self.per_cell
    }
}

#[derive(Debug, Clone)]
pub struct AnchorPyramid {
    pub grids: Vec<AnchorGrid>,
}

impl AnchorPyramid {
    pub fn total_anchors(&self) -> usize {
        self.grids.iter().map(|g| g.len()).sum()
    }
}

/// Level scale as a fraction of `min(w, h)`: 0.1 at the finest level rising
/// linearly to 0.9 at the coarsest.
fn level_scale(level: usize) -> f64 {
    0.1 + 0.8 * (level as f64 - 1.0) / 5.0
}

/// Cell-centred anchor pyramid for an image of `w x h` pixels.
///
/// Per cell: scale `s_p` at ratios {1, 2, 1/2} plus an extra ratio-1 anchor
/// at the geometric mean of `s_p` and `s_{p+1}`; six-anchor levels add
/// ratios {3, 1/3}. Anchors are not clipped to the image.
pub fn generate_grids(w: f64, h: f64) -> AnchorPyramid {
    let base = w.min(h);
    let grids = GRID_SIDES
        .iter()
        .zip(ANCHORS_PER_CELL.iter())
        .enumerate()
        .map(|(idx, (&side, &per_cell))| {
            let level = idx + 1;
            let s = level_scale(level);
            let s_next = level_scale(level + 1);
            let s_prime = (s * s_next).sqrt();
            let mut shapes: Vec<(f64, f64)> = vec![(s, 1.0), (s_prime, 1.0), (s, 2.0), (s, 0.5)];
            if per_cell == 6 {
                shapes.push((s, 3.0));
                shapes.push((s, 1.0 / 3.0));
            }
            debug_assert_eq!(shapes.len(), per_cell);

            let mut anchors = Vec::with_capacity(side * side * per_cell);
            for row in 0..side {
                for col in 0..side {
                    let cx = (col as f64 + 0.5) * w / side as f64;
                    let cy = (row as f64 + 0.5) * h / side as f64;
                    for &(scale, ratio) in &shapes {
                        let bw = scale * base * ratio.sqrt();
                        let bh = scale * base / ratio.sqrt();
                        anchors.push(BBox {
                            x_min: cx - bw / 2.0,
                            y_min: cy - bh / 2.0,
                            x_max: cx + bw / 2.0,
                            y_max: cy + bh / 2.0,
                        });
                    }
                }
            }
            AnchorGrid {
                level,
                side,
                per_cell,
                anchors,
            }
        })
        .collect();
    AnchorPyramid { grids }
}

/// A pair of temporally linked ground-truth boxes `delta` frames apart.
#[derive(Debug, Clone, PartialEq)]
pub struct GtMicroTube {
    pub class: usize,
    pub t: usize,
    pub delta: usize,
    pub first: BBox,
    pub second: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorMatch {
    pub level: usize,
    pub cell_first: usize,
    pub cell_second: usize,
    pub slot: usize,
    /// Mean of the two per-frame IoUs.
    pub overlap: f64,
}

/// Best anchor pair for a ground-truth micro-tube: per level and aspect-ratio
/// slot, the cells maximising each frame's IoU independently; the pair score
/// is the mean of the two IoUs, maximised across levels and slots. Ties
/// resolve to the lower level, slot and cell indices.
pub fn match_gt(gt: &GtMicroTube, pyramid: &AnchorPyramid) -> AnchorMatch {
    let mut best: Option<AnchorMatch> = None;
    for grid in &pyramid.grids {
        for slot in 0..grid.per_cell {
            let (mut bi, mut bi_iou) = (0usize, f64::NEG_INFINITY);
            let (mut bj, mut bj_iou) = (0usize, f64::NEG_INFINITY);
            for cell in 0..grid.cells() {
                let a = grid.anchor(cell, slot);
                let iou_first = gt.first.iou(a);
                if iou_first > bi_iou {
                    bi_iou = iou_first;
                    bi = cell;
                }
                let iou_second = gt.second.iou(a);
                if iou_second > bj_iou {
                    bj_iou = iou_second;
                    bj = cell;
                }
            }
            let overlap = (bi_iou + bj_iou) / 2.0;
            if best.map_or(true, |b| overlap > b.overlap) {
                best = Some(AnchorMatch {
                    level: grid.level,
                    cell_first: bi,
                    cell_second: bj,
                    slot,
                    overlap,
                });
            }
        }
    }
    best.expect("pyramid has at least one grid")
}

/// Per-level cell-to-cell transition probabilities. Entry `(i, j)` is the
/// probability of moving from cell `i` at `t` to cell `j` at `t + delta`;
/// rows of visited cells sum to 1, never-visited rows are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub level: usize,
    pub side: usize,
    pub delta: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn zero(level: usize, side: usize, delta: usize) -> Self {
        TransitionMatrix {
            level,
            side,
            delta,
            data: vec![0.0; side * side * side * side],
        }
    }

    pub fn cells(&self) -> usize {
        self.side * self.side
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cells() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cells();
        self.data[i * c + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cells();
        self.data[i * c + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cells();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Divides every nonzero row by its sum.
    pub fn normalize_rows(&mut self) {
        let c = self.cells();
        for i in 0..c {
            let sum = self.row_sum(i);
            if sum > 0.0 {
                for j in 0..c {
                    self.data[i * c + j] /= sum;
                }
            }
        }
    }

    /// All `(i, j, p)` entries with `p > 0`, row-major.
    pub fn nonzero(&self) -> Vec<(usize, usize, f64)> {
        let c = self.cells();
        let mut out = Vec::new();
        for i in 0..c {
            for j in 0..c {
                let p = self.get(i, j);
                if p > 0.0 {
                    out.push((i, j, p));
                }
            }
        }
        out
    }
}

/// Raw best-match cell-pair counts over a ground-truth micro-tube corpus
/// (one increment per micro-tube). All micro-tubes must share one stride.
pub fn count_transitions(
    gts: &[GtMicroTube],
    pyramid: &AnchorPyramid,
) -> Result<Vec<TransitionMatrix>> {
    let Some(first) = gts.first() else {
        return Err(Error::EmptyInput("ground-truth micro-tube list"));
    };
    let delta = first.delta;
    if gts.iter().any(|g| g.delta != delta) {
        return Err(Error::InvalidParam(
            "mixed strides in ground-truth micro-tube corpus".into(),
        ));
    }
    let mut mats: Vec<TransitionMatrix> = pyramid
        .grids
        .iter()
        .map(|g| TransitionMatrix::zero(g.level, g.side, delta))
        .collect();
    for gt in gts {
        let m = match_gt(gt, pyramid);
        mats[m.level - 1].add(m.cell_first, m.cell_second, 1.0);
    }
    Ok(mats)
}

/// [`count_transitions`] followed by row normalisation.
pub fn estimate_transitions(
    gts: &[GtMicroTube],
    pyramid: &AnchorPyramid,
) -> Result<Vec<TransitionMatrix>> {
    let mut mats = count_transitions(gts, pyramid)?;
    for m in &mut mats {
        m.normalize_rows();
    }
    Ok(mats)
}

/// Identity transition matrices (the anchor-cuboid special case).
pub fn identity_transitions(pyramid: &AnchorPyramid) -> Vec<TransitionMatrix> {
    pyramid
        .grids
        .iter()
        .map(|g| {
            let mut m = TransitionMatrix::zero(g.level, g.side, 1);
            for i in 0..m.cells() {
                m.set(i, i, 1.0);
            }
            m
        })
        .collect()
}

/// Cell pairs with transition probability at or above `theta`, row-major.
pub fn threshold_transitions(a: &TransitionMatrix, theta: f64) -> Vec<(usize, usize)> {
    let c = a.cells();
    let mut out = Vec::new();
    for i in 0..c {
        for j in 0..c {
            if a.get(i, j) >= theta {
                out.push((i, j));
            }
        }
    }
    out
}

/// Binary sampling mask: 1 where the probability reaches `theta`.
pub fn threshold_mask(a: &TransitionMatrix, theta: f64) -> TransitionMatrix {
    let mut m = TransitionMatrix::zero(a.level, a.side, a.delta);
    for (i, j) in threshold_transitions(a, theta) {
        m.set(i, j, 1.0);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    /// Set every diagonal entry to 1 (adds all anchor cuboids).
    Diagonal,
    /// Set each cell's transitions to itself and its <= 8 grid neighbours.
    Neighbors,
    /// Replicate every observed (row, col) cell offset at all grid positions
    /// where it lands inside the grid.
    RelativeOffsets,
}

/// Test-time augmentation of a binary sampling mask. Positive entries count
/// as observed transitions; the output is a mask, not re-normalised.
pub fn augment(a: &TransitionMatrix, mode: AugmentMode) -> TransitionMatrix {
    let mut out = a.clone();
    let side = a.side as isize;
    let cells = a.cells();
    match mode {
        AugmentMode::Diagonal => {
            for i in 0..cells {
                out.set(i, i, 1.0);
            }
        }
        AugmentMode::Neighbors => {
            for i in 0..cells {
                let (r, c) = ((i as isize) / side, (i as isize) % side);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (nr, nc) = (r + dr, c + dc);
                        if (0..side).contains(&nr) && (0..side).contains(&nc) {
                            out.set(i, (nr * side + nc) as usize, 1.0);
                        }
                    }
                }
            }
        }
        AugmentMode::RelativeOffsets => {
            let mut offsets: Vec<(isize, isize)> = Vec::new();
            for (i, j, _) in a.nonzero() {
                let off = (
                    j as isize / side - i as isize / side,
                    j as isize % side - i as isize % side,
                );
                if !offsets.contains(&off) {
                    offsets.push(off);
                }
            }
            for i in 0..cells {
                let (r, c) = ((i as isize) / side, (i as isize) % side);
                for &(dr, dc) in &offsets {
                    let (nr, nc) = (r + dr, c + dc);
                    if (0..side).contains(&nr) && (0..side).contains(&nc) {
                        out.set(i, (nr * side + nc) as usize, 1.0);
                    }
                }
            }
        }
    }
    out
}

/// `a * b` with the total row mass lost into zero rows of `b` reported.
pub fn multiply(a: &TransitionMatrix, b: &TransitionMatrix) -> (TransitionMatrix, f64) {
    assert_eq!(a.side, b.side, "level shapes must agree");
    let c = a.cells();
    let mut out = TransitionMatrix::zero(a.level, a.side, a.delta + b.delta);
    for i in 0..c {
        for k in 0..c {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for j in 0..c {
                let v = b.get(k, j);
                if v != 0.0 {
                    out.add(i, j, aik * v);
                }
            }
        }
    }
    let dropped: f64 = (0..c).map(|i| (a.row_sum(i) - out.row_sum(i)).max(0.0)).sum();
    (out, dropped)
}

/// Markov composition `A^steps`; zero rows stay zero and any probability mass
/// entering them is dropped and reported.
pub fn compose(a: &TransitionMatrix, steps: usize) -> Result<(TransitionMatrix, f64)> {
    if steps < 1 {
        return Err(Error::BadSteps);
    }
    let mut out = a.clone();
    for _ in 1..steps {
        let (next, _) = multiply(&out, a);
        out = next;
    }
    let c = a.cells();
    let dropped: f64 = (0..c).map(|i| (a.row_sum(i) - out.row_sum(i)).max(0.0)).sum();
    Ok((out, dropped))
}
