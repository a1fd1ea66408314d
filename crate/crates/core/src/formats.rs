//! Line-delimited record formats and their readers/writers.
//!
//! One JSON record per line:
//! - detections: `{"video", "t", "w", "h", "dets": [{"box": [x1,y1,x2,y2], "scores": [...]}]}`
//! - micro-tubes: `{"video", "t", "delta", "mts": [{"b1", "b2", "scores", "pred"}]}`
//!   where `pred` is `{"past": box|null, "df": int, "future": [box...]}` or null
//! - tubes: `{"video", "class", "score", "start", "end", "boxes": [box...]}`
//! - gt: tubes without `score`
//! - transitions: `{"level", "i", "j", "p"}` sparse triplets
//!
//! Readers reject schema violations with the offending line number; they
//! never coerce. Out-of-image boxes are clamped on ingest, inverted ones are
//! errors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::{TransitionMatrix, GRID_SIDES};
use crate::error::{Error, Result};
use crate::eval::GtTube;
use crate::forecast::{MicroTube, MicroTubeFrame, PredictionSet};
use crate::geometry::{BBox, DetectionFrame, ScoredBox};
use crate::offline::ActionTube;

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn check_box(bx: &BBox, path: &Path, line: usize) -> Result<()> {
    if !bx.is_valid() {
        return Err(format_err(
            path,
            line,
            format!(
                "invalid box [{}, {}, {}, {}]",
                bx.x_min, bx.y_min, bx.x_max, bx.y_max
            ),
        ));
    }
    Ok(())
}

fn check_scores(scores: &[f64], expect_len: &mut Option<usize>, path: &Path, line: usize) -> Result<()> {
    if scores.len() < 2 {
        return Err(format_err(path, line, "scores must hold background plus at least one class"));
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(format_err(path, line, "scores must be finite and non-negative"));
    }
    match expect_len {
        Some(n) if *n != scores.len() => Err(format_err(
            path,
            line,
            format!("inconsistent score vector length: {} vs {}", scores.len(), n),
        )),
        Some(_) => Ok(()),
        None => {
            *expect_len = Some(scores.len());
            Ok(())
        }
    }
}

/// Tracks video-block contiguity and per-video frame monotonicity.
struct StreamOrder {
    current: Option<(String, usize)>,
    seen: std::collections::HashSet<String>,
}

impl StreamOrder {
    fn new() -> Self {
        StreamOrder {
            current: None,
            seen: std::collections::HashSet::new(),
        }
    }

    fn observe(&mut self, video: &str, t: usize, path: &Path, line: usize) -> Result<()> {
        match &self.current {
            Some((v, last_t)) if v == video => {
                if t <= *last_t {
                    return Err(format_err(
                        path,
                        line,
                        format!("non-monotone frame index {t} after {last_t} in video {video}"),
                    ));
                }
                self.current = Some((video.to_string(), t));
            }
            _ => {
                if self.seen.contains(video) {
                    return Err(format_err(
                        path,
                        line,
                        format!("video {video} reappears after its block ended"),
                    ));
                }
                self.seen.insert(video.to_string());
                self.current = Some((video.to_string(), t));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetRecord {
    video: String,
    t: usize,
    w: u32,
    h: u32,
    dets: Vec<ScoredBox>,
}

/// Streaming detection reader: one validated frame per line, boxes clamped
/// to the frame on ingest. Memory stays bounded per frame (or per video
/// block via [`DetectionStream::next_video_block`]).
pub struct DetectionStream {
    lines: std::io::Lines<BufReader<File>>,
    path: std::path::PathBuf,
    line_no: usize,
    order: StreamOrder,
    score_len: Option<usize>,
    peeked: Option<DetectionFrame>,
}

impl DetectionStream {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(DetectionStream {
            lines: BufReader::new(File::open(path)?).lines(),
            path: path.to_path_buf(),
            line_no: 0,
            order: StreamOrder::new(),
            score_len: None,
            peeked: None,
        })
    }

    fn read_raw(&mut self) -> Result<Option<DetectionFrame>> {
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DetRecord = serde_json::from_str(&line)
                .map_err(|e| format_err(&self.path, self.line_no, e.to_string()))?;
            if rec.w == 0 || rec.h == 0 {
                return Err(format_err(
                    &self.path,
                    self.line_no,
                    "frame dimensions must be positive",
                ));
            }
            self.order.observe(&rec.video, rec.t, &self.path, self.line_no)?;
            for d in &rec.dets {
                check_box(&d.bbox, &self.path, self.line_no)?;
                check_scores(&d.scores, &mut self.score_len, &self.path, self.line_no)?;
            }
            return Ok(Some(
                DetectionFrame {
                    video: rec.video,
                    t: rec.t,
                    width: rec.w,
                    height: rec.h,
                    detections: rec.dets,
                }
                .clamped(),
            ));
        }
    }

    pub fn next_frame(&mut self) -> Result<Option<DetectionFrame>> {
        if let Some(f) = self.peeked.take() {
            return Ok(Some(f));
        }
        self.read_raw()
    }

    /// All frames of the next video, in one block.
    pub fn next_video_block(&mut self) -> Result<Option<(String, Vec<DetectionFrame>)>> {
        let Some(first) = self.next_frame()? else {
            return Ok(None);
        };
        let video = first.video.clone();
        let mut block = vec![first];
        loop {
            match self.next_frame()? {
                Some(f) if f.video == video => block.push(f),
                Some(f) => {
                    self.peeked = Some(f);
                    break;
                }
                None => break,
            }
        }
        Ok(Some((video, block)))
    }
}

/// Reads a whole detection stream into memory (grouped by video, ordered by
/// frame); the streaming API is [`DetectionStream`].
pub fn read_detections(path: &Path) -> Result<Vec<DetectionFrame>> {
    let mut stream = DetectionStream::open(path)?;
    let mut out = Vec::new();
    while let Some(f) = stream.next_frame()? {
        out.push(f);
    }
    Ok(out)
}

/// Incremental detection writer.
pub struct DetectionWriter {
    out: BufWriter<File>,
}

impl DetectionWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(DetectionWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, frames: &[DetectionFrame]) -> Result<()> {
        for f in frames {
            let rec = DetRecord {
                video: f.video.clone(),
                t: f.t,
                w: f.width,
                h: f.height,
                dets: f.detections.clone(),
            };
            serde_json::to_writer(&mut self.out, &rec).map_err(std::io::Error::from)?;
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_detections(path: &Path, frames: &[DetectionFrame]) -> Result<()> {
    let mut w = DetectionWriter::create(path)?;
    w.write(frames)?;
    w.finish()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredRecord {
    past: Option<BBox>,
    df: usize,
    future: Vec<BBox>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MtRecord {
    b1: BBox,
    b2: BBox,
    scores: Vec<f64>,
    pred: Option<PredRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MicroRecord {
    video: String,
    t: usize,
    delta: usize,
    mts: Vec<MtRecord>,
}

/// Streaming micro-tube reader. The past box's lookback step is not part of
/// the format; past boxes are carried opaquely (`delta_p = 0`).
pub struct MicroTubeStream {
    lines: std::io::Lines<BufReader<File>>,
    path: std::path::PathBuf,
    line_no: usize,
    order: StreamOrder,
    score_len: Option<usize>,
    peeked: Option<MicroTubeFrame>,
}

impl MicroTubeStream {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(MicroTubeStream {
            lines: BufReader::new(File::open(path)?).lines(),
            path: path.to_path_buf(),
            line_no: 0,
            order: StreamOrder::new(),
            score_len: None,
            peeked: None,
        })
    }

    fn read_raw(&mut self) -> Result<Option<MicroTubeFrame>> {
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: MicroRecord = serde_json::from_str(&line)
                .map_err(|e| format_err(&self.path, self.line_no, e.to_string()))?;
            if rec.delta < 1 {
                return Err(format_err(&self.path, self.line_no, "delta must be >= 1"));
            }
            self.order.observe(&rec.video, rec.t, &self.path, self.line_no)?;
            let mut tubes = Vec::with_capacity(rec.mts.len());
            for m in rec.mts {
                check_box(&m.b1, &self.path, self.line_no)?;
                check_box(&m.b2, &self.path, self.line_no)?;
                check_scores(&m.scores, &mut self.score_len, &self.path, self.line_no)?;
                let prediction = match m.pred {
                    None => None,
                    Some(p) => {
                        if p.df < 1 {
                            return Err(format_err(&self.path, self.line_no, "pred.df must be >= 1"));
                        }
                        for bx in p.past.iter().chain(p.future.iter()) {
                            check_box(bx, &self.path, self.line_no)?;
                        }
                        Some(PredictionSet {
                            anchor_t: rec.t,
                            delta_p: 0,
                            delta_f: p.df,
                            past: p.past,
                            future: p.future,
                        })
                    }
                };
                tubes.push(MicroTube {
                    first: m.b1,
                    second: m.b2,
                    scores: m.scores,
                    prediction,
                });
            }
            return Ok(Some(MicroTubeFrame {
                video: rec.video,
                t: rec.t,
                delta: rec.delta,
                tubes,
            }));
        }
    }

    pub fn next_set(&mut self) -> Result<Option<MicroTubeFrame>> {
        if let Some(s) = self.peeked.take() {
            return Ok(Some(s));
        }
        self.read_raw()
    }

    /// All micro-tube sets of the next video, in one block.
    pub fn next_video_block(&mut self) -> Result<Option<(String, Vec<MicroTubeFrame>)>> {
        let Some(first) = self.next_set()? else {
            return Ok(None);
        };
        let video = first.video.clone();
        let mut block = vec![first];
        loop {
            match self.next_set()? {
                Some(s) if s.video == video => block.push(s),
                Some(s) => {
                    self.peeked = Some(s);
                    break;
                }
                None => break,
            }
        }
        Ok(Some((video, block)))
    }
}

/// Reads a whole micro-tube stream into memory; the streaming API is
/// [`MicroTubeStream`].
pub fn read_microtubes(path: &Path) -> Result<Vec<MicroTubeFrame>> {
    let mut stream = MicroTubeStream::open(path)?;
    let mut out = Vec::new();
    while let Some(s) = stream.next_set()? {
        out.push(s);
    }
    Ok(out)
}

pub fn write_microtubes(path: &Path, frames: &[MicroTubeFrame]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for f in frames {
        let rec = MicroRecord {
            video: f.video.clone(),
            t: f.t,
            delta: f.delta,
            mts: f
                .tubes
                .iter()
                .map(|m| MtRecord {
                    b1: m.first,
                    b2: m.second,
                    scores: m.scores.clone(),
                    pred: m.prediction.as_ref().map(|p| PredRecord {
                        past: p.past,
                        df: p.delta_f,
                        future: p.future.clone(),
                    }),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TubeRecord {
    video: String,
    class: usize,
    score: f64,
    start: usize,
    end: usize,
    boxes: Vec<BBox>,
}

/// Incremental tube writer.
pub struct TubeWriter {
    out: BufWriter<File>,
}

impl TubeWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(TubeWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, tubes: &[ActionTube]) -> Result<()> {
        for t in tubes {
            let rec = TubeRecord {
                video: t.video.clone(),
                class: t.class,
                score: t.score,
                start: t.start,
                end: t.end,
                boxes: t.boxes.clone(),
            };
            serde_json::to_writer(&mut self.out, &rec).map_err(std::io::Error::from)?;
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_tubes(path: &Path, tubes: &[ActionTube]) -> Result<()> {
    let mut w = TubeWriter::create(path)?;
    w.write(tubes)?;
    w.finish()
}

pub fn read_tubes(path: &Path) -> Result<Vec<ActionTube>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TubeRecord =
            serde_json::from_str(&line).map_err(|e| format_err(path, line_no, e.to_string()))?;
        validate_tube_shape(rec.class, rec.start, rec.end, &rec.boxes, None, path, line_no)?;
        let n = rec.boxes.len();
        out.push(ActionTube {
            video: rec.video,
            class: rec.class,
            start: rec.start,
            end: rec.end,
            boxes: rec.boxes,
            scores: vec![rec.score; n],
            score: rec.score,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtRecord {
    video: String,
    class: usize,
    start: usize,
    end: usize,
    boxes: Vec<BBox>,
}

fn validate_tube_shape(
    class: usize,
    start: usize,
    end: usize,
    boxes: &[BBox],
    classes: Option<usize>,
    path: &Path,
    line_no: usize,
) -> Result<()> {
    if class < 1 {
        return Err(format_err(path, line_no, "class ids start at 1"));
    }
    if let Some(c) = classes {
        if class > c {
            return Err(format_err(
                path,
                line_no,
                format!("class {class} exceeds configured class count {c}"),
            ));
        }
    }
    if end < start {
        return Err(format_err(path, line_no, "end frame precedes start frame"));
    }
    if boxes.len() != end - start + 1 {
        return Err(format_err(
            path,
            line_no,
            format!("expected {} boxes, got {}", end - start + 1, boxes.len()),
        ));
    }
    for bx in boxes {
        check_box(bx, path, line_no)?;
    }
    Ok(())
}

/// Reads ground-truth tubes, optionally validating class ids against a
/// configured class count.
pub fn read_gt(path: &Path, classes: Option<usize>) -> Result<Vec<GtTube>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GtRecord =
            serde_json::from_str(&line).map_err(|e| format_err(path, line_no, e.to_string()))?;
        validate_tube_shape(rec.class, rec.start, rec.end, &rec.boxes, classes, path, line_no)?;
        out.push(GtTube {
            video: rec.video,
            class: rec.class,
            start: rec.start,
            end: rec.end,
            boxes: rec.boxes,
        });
    }
    Ok(out)
}

pub fn write_gt(path: &Path, gts: &[GtTube]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for g in gts {
        let rec = GtRecord {
            video: g.video.clone(),
            class: g.class,
            start: g.start,
            end: g.end,
            boxes: g.boxes.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransRecord {
    level: usize,
    i: usize,
    j: usize,
    p: f64,
}

/// Writes transition matrices as sparse triplets ordered by level, row,
/// column.
pub fn write_transitions(path: &Path, mats: &[TransitionMatrix]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for m in mats {
        for (i, j, p) in m.nonzero() {
            let rec = TransRecord {
                level: m.level,
                i,
                j,
                p,
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reconstructs the per-level matrices from sparse triplets. The grid side
/// per level is fixed by the pyramid layout; the estimation stride is not
/// part of the format.
pub fn read_transitions(path: &Path) -> Result<Vec<TransitionMatrix>> {
    let file = BufReader::new(File::open(path)?);
    let mut mats: Vec<TransitionMatrix> = GRID_SIDES
        .iter()
        .enumerate()
        .map(|(idx, &side)| TransitionMatrix::zero(idx + 1, side, 1))
        .collect();
    for (idx, line) in file.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransRecord =
            serde_json::from_str(&line).map_err(|e| format_err(path, line_no, e.to_string()))?;
        if rec.level < 1 || rec.level > mats.len() {
            return Err(format_err(path, line_no, format!("unknown level {}", rec.level)));
        }
        let m = &mut mats[rec.level - 1];
        if rec.i >= m.cells() || rec.j >= m.cells() {
            return Err(format_err(
                path,
                line_no,
                format!("cell index out of range for level {}", rec.level),
            ));
        }
        if !rec.p.is_finite() || rec.p < 0.0 {
            return Err(format_err(path, line_no, "probability must be finite and >= 0"));
        }
        m.set(rec.i, rec.j, rec.p);
    }
    Ok(mats)
}
