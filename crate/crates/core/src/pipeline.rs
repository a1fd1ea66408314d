//! Per-video drivers tying the modules into end-to-end flows: online
//! linking, early-label checkpointing and future-tube completion.

use std::collections::HashMap;

use crate::error::Result;
use crate::eval::observed_frames;
use crate::forecast::{assemble_future, complete_tube, HorizonParams, MicroTubeFrame};
use crate::geometry::DetectionFrame;
use crate::offline::ActionTube;
use crate::online::{OnlineLinker, OnlineParams};

/// Splits an ordered stream into per-video runs (the readers guarantee
/// contiguous video blocks).
pub fn group_by_video<T, F: Fn(&T) -> &str>(items: Vec<T>, video_of: F) -> Vec<(String, Vec<T>)> {
    let mut out: Vec<(String, Vec<T>)> = Vec::new();
    for item in items {
        let v = video_of(&item).to_string();
        match out.last_mut() {
            Some((cur, run)) if *cur == v => run.push(item),
            _ => out.push((v, vec![item])),
        }
    }
    out
}

/// Runs the frame-mode linker over one video. Frames must be 0-based and
/// consecutive.
pub fn link_frames(
    video: &str,
    frames: &[DetectionFrame],
    classes: usize,
    params: &OnlineParams,
) -> Result<OnlineLinker> {
    let mut linker = OnlineLinker::new(video, classes, params.clone());
    for f in frames {
        linker.step(f.t, f)?;
    }
    Ok(linker)
}

/// Runs the micro-tube linker over one video's sets.
pub fn link_micro(
    video: &str,
    sets: &[MicroTubeFrame],
    classes: usize,
    params: &OnlineParams,
) -> Result<OnlineLinker> {
    let mut linker = OnlineLinker::new(video, classes, params.clone());
    for s in sets {
        linker.link_micro(s.t, s.delta, &s.tubes)?;
    }
    Ok(linker)
}

/// Finished, temporally trimmed tubes of one frame-mode video.
pub fn build_online_video(
    video: &str,
    frames: &[DetectionFrame],
    classes: usize,
    params: &OnlineParams,
) -> Result<Vec<ActionTube>> {
    let mut linker = link_frames(video, frames, classes, params)?;
    linker.finish();
    Ok(linker.tubes())
}

/// Finished, temporally trimmed tubes of one micro-tube-mode video.
pub fn build_micro_video(
    video: &str,
    sets: &[MicroTubeFrame],
    classes: usize,
    params: &OnlineParams,
) -> Result<Vec<ActionTube>> {
    let mut linker = link_micro(video, sets, classes, params)?;
    linker.finish();
    Ok(linker.tubes())
}

/// Early-label predictions for one frame-mode video at each observation
/// fraction: the label of the highest-mean-score tube once `floor(f * T)`
/// frames have been consumed.
pub fn early_labels_frames(
    video: &str,
    frames: &[DetectionFrame],
    classes: usize,
    params: &OnlineParams,
    fractions: &[f64],
) -> Result<Vec<Option<usize>>> {
    let t_len = frames.len();
    let checkpoints: Vec<usize> = fractions.iter().map(|&f| observed_frames(f, t_len)).collect();
    let mut linker = OnlineLinker::new(video, classes, params.clone());
    let mut out = vec![None; fractions.len()];
    for (i, f) in frames.iter().enumerate() {
        linker.step(f.t, f)?;
        for (k, &n_obs) in checkpoints.iter().enumerate() {
            if n_obs == i + 1 {
                out[k] = linker.predict_label();
            }
        }
    }
    Ok(out)
}

/// Early-label predictions over a micro-tube stream. A set participates in a
/// checkpoint once its first frame lies inside the observed prefix, so the
/// stride never starves early checkpoints.
pub fn early_labels_micro(
    video: &str,
    sets: &[MicroTubeFrame],
    t_len: usize,
    classes: usize,
    params: &OnlineParams,
    fractions: &[f64],
) -> Result<Vec<Option<usize>>> {
    let checkpoints: Vec<usize> = fractions.iter().map(|&f| observed_frames(f, t_len)).collect();
    let mut linker = OnlineLinker::new(video, classes, params.clone());
    let mut out = vec![None; fractions.len()];
    let mut consumed = 0usize;
    let mut sorted: Vec<(usize, usize)> = checkpoints.iter().copied().enumerate()
        .map(|(k, n)| (n, k))
        .collect();
    sorted.sort();
    for (n_obs, k) in sorted {
        while consumed < sets.len() && sets[consumed].t < n_obs {
            let s = &sets[consumed];
            linker.link_micro(s.t, s.delta, &s.tubes)?;
            consumed += 1;
        }
        out[k] = linker.predict_label();
    }
    Ok(out)
}

/// Video length implied by a full micro-tube stream: the last covered frame
/// plus one.
pub fn micro_video_len(sets: &[MicroTubeFrame]) -> usize {
    sets.iter().map(|s| s.t + s.delta + 1).max().unwrap_or(0)
}

/// Completes one video's tubes at an observation fraction: links the fully
/// observed micro-tube prefix, then extends every track to the video end
/// with its attached predictions (most-recent-anchor precedence,
/// interpolation between instants, extrapolation beyond).
pub fn complete_video(
    video: &str,
    sets: &[MicroTubeFrame],
    classes: usize,
    params: &OnlineParams,
    velocity_window: usize,
    fraction: f64,
    width: f64,
    height: f64,
) -> Result<Vec<ActionTube>> {
    let t_len = micro_video_len(sets);
    if t_len == 0 {
        return Ok(Vec::new());
    }
    let n_obs = observed_frames(fraction, t_len);
    let mut linker = OnlineLinker::new(video, classes, params.clone());
    for s in sets {
        if s.t + s.delta <= n_obs - 1 {
            linker.link_micro(s.t, s.delta, &s.tubes)?;
        }
    }
    let horizon = HorizonParams {
        velocity_window,
        video_len: t_len,
        width,
        height,
    };
    let t_now = n_obs - 1;
    let mut out = Vec::new();
    for track in linker.tracks() {
        let future = assemble_future(&track.tube, &track.predictions, t_now, &horizon)?;
        out.push(complete_tube(&track.tube, track.tube.end + 1, &future)?);
    }
    Ok(out)
}

/// Per-video lengths of a grouped frame stream.
pub fn frame_video_lengths(groups: &[(String, Vec<DetectionFrame>)]) -> HashMap<String, usize> {
    groups
        .iter()
        .map(|(v, frames)| (v.clone(), frames.len()))
        .collect()
}

/// Per-video lengths of a grouped micro-tube stream.
pub fn micro_video_lengths(groups: &[(String, Vec<MicroTubeFrame>)]) -> HashMap<String, usize> {
    groups
        .iter()
        .map(|(v, sets)| (v.clone(), micro_video_len(sets)))
        .collect()
}
