//! Subcommand implementations.
//!
//! Stream-consuming commands read one video block at a time (look-ahead of
//! one chunk per worker), process chunks on the rayon pool and write results
//! in input order, so memory stays bounded per video and output bytes are
//! independent of `--threads`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use tubekit::config::RunConfig;
use tubekit::eval::{avg_map, early_accuracy, prediction_map, video_map, EvalConfig, GtTube};
use tubekit::formats::{
    self, DetectionStream, DetectionWriter, MicroTubeStream, TubeWriter,
};
use tubekit::forecast::MicroTubeFrame;
use tubekit::fusion::{fuse_frame, FusionStrategy};
use tubekit::geometry::DetectionFrame;
use tubekit::offline::{build_tubes_offline, ActionTube};
use tubekit::pipeline::{
    build_micro_video, build_online_video, complete_video, early_labels_frames,
};
use tubekit::sim::{generate_scenario, render_frames, render_microtubes, PredictionSpec};

use crate::args::*;

/// Pulls video blocks from `source`, runs `work` over chunks of one block
/// per worker in parallel, and feeds results to `sink` in input order.
fn for_each_block<B, R>(
    mut source: impl FnMut() -> Result<Option<(String, B)>>,
    work: impl Fn(&str, &B) -> Result<R> + Sync,
    mut sink: impl FnMut(R) -> Result<()>,
) -> Result<usize>
where
    B: Send + Sync,
    R: Send,
{
    let chunk_size = rayon::current_num_threads().max(1);
    let mut videos = 0usize;
    loop {
        let mut chunk: Vec<(String, B)> = Vec::with_capacity(chunk_size);
        while chunk.len() < chunk_size {
            match source()? {
                Some(block) => chunk.push(block),
                None => break,
            }
        }
        if chunk.is_empty() {
            return Ok(videos);
        }
        videos += chunk.len();
        let results: Vec<R> = chunk
            .par_iter()
            .map(|(video, block)| work(video, block))
            .collect::<Result<Vec<R>>>()?;
        for r in results {
            sink(r)?;
        }
    }
}

/// Action class count for one video block: the explicit flag, else the score
/// vector length of the block's first detection. Blocks with no detections
/// produce no tubes, so zero is fine there.
fn block_classes_frames(frames: &[DetectionFrame], flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| {
        frames
            .iter()
            .flat_map(|f| f.detections.first())
            .map(|d| d.num_classes())
            .next()
            .unwrap_or(0)
    })
}

fn block_classes_micro(sets: &[MicroTubeFrame], flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| {
        sets.iter()
            .flat_map(|s| s.tubes.first())
            .map(|m| m.scores.len().saturating_sub(1))
            .next()
            .unwrap_or(0)
    })
}

/// Ground-truth video label: the lowest class id present in the video.
fn gt_labels(gts: &[GtTube]) -> BTreeMap<String, usize> {
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    for gt in gts {
        labels
            .entry(gt.video.clone())
            .and_modify(|l| *l = (*l).min(gt.class))
            .or_insert(gt.class);
    }
    labels
}

/// Video length inferred from the ground truth: last annotated frame + 1.
fn gt_video_lengths(gts: &[GtTube]) -> std::collections::HashMap<String, usize> {
    let mut lens = std::collections::HashMap::new();
    for gt in gts {
        let e = lens.entry(gt.video.clone()).or_insert(0usize);
        *e = (*e).max(gt.end + 1);
    }
    lens
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<()> {
    let mut scenario_cfg = cfg.scenario.clone();
    scenario_cfg.seed = args.seed;
    if let Some(v) = args.videos {
        scenario_cfg.videos = v;
    }
    if let Some(f) = args.frames {
        scenario_cfg.frames = f;
    }
    if let Some(c) = args.classes {
        scenario_cfg.classes = c;
    }
    let scenario = generate_scenario(&scenario_cfg)?;
    formats::write_gt(&args.out_gt, &scenario.gts)?;

    let records = match args.mode {
        StreamMode::Frames => {
            let frames = render_frames(&scenario, &cfg.noise)?;
            let n = frames.len();
            formats::write_detections(&args.out_stream, &frames)?;
            n
        }
        StreamMode::Microtubes => {
            let sets = render_microtubes(&scenario, &cfg.noise, args.delta, None)?;
            let n = sets.len();
            formats::write_microtubes(&args.out_stream, &sets)?;
            n
        }
        StreamMode::MicrotubesWithPredictions => {
            let spec = PredictionSpec {
                delta_p: args.delta_p,
                delta_f: args.delta_f,
                n_future: args.n_future,
            };
            let sets = render_microtubes(&scenario, &cfg.noise, args.delta, Some(spec))?;
            let n = sets.len();
            formats::write_microtubes(&args.out_stream, &sets)?;
            n
        }
    };
    println!(
        "simulate seed={} videos={} frames={} classes={} gts={} records={}",
        args.seed,
        scenario_cfg.videos,
        scenario_cfg.frames,
        scenario_cfg.classes,
        scenario.gts.len(),
        records
    );
    Ok(())
}

pub fn fuse(cfg: &RunConfig, args: &FuseArgs) -> Result<()> {
    let mut params = cfg.fusion.clone();
    if let Some(s) = args.strategy {
        params.strategy = match s {
            StrategyArg::Boost => FusionStrategy::Boost,
            StrategyArg::Union => FusionStrategy::Union,
            StrategyArg::Mean => FusionStrategy::Mean,
        };
    }
    let mut a_stream = DetectionStream::open(&args.appearance)?;
    let mut f_stream = DetectionStream::open(&args.flow)?;
    let mut writer = DetectionWriter::create(&args.out)?;
    let mut frames_out = 0usize;
    loop {
        match (a_stream.next_video_block()?, f_stream.next_video_block()?) {
            (None, None) => break,
            (Some((va, a_frames)), Some((vf, f_frames))) if va == vf => {
                let mut flow_by_t: BTreeMap<usize, DetectionFrame> =
                    f_frames.into_iter().map(|f| (f.t, f)).collect();
                let mut fused = Vec::with_capacity(a_frames.len());
                for a in &a_frames {
                    let flow = flow_by_t.remove(&a.t).unwrap_or_else(|| DetectionFrame {
                        video: a.video.clone(),
                        t: a.t,
                        width: a.width,
                        height: a.height,
                        detections: Vec::new(),
                    });
                    fused.push(fuse_frame(a, &flow, &params));
                }
                if let Some((t, _)) = flow_by_t.into_iter().next() {
                    bail!("flow frame (video {va}, t {t}) is missing from the appearance stream");
                }
                frames_out += fused.len();
                writer.write(&fused)?;
            }
            (a, f) => {
                let name = |b: &Option<(String, Vec<DetectionFrame>)>| {
                    b.as_ref().map(|(v, _)| v.clone()).unwrap_or_else(|| "<end>".into())
                };
                bail!(
                    "appearance/flow streams disagree on video order: {} vs {} \
                     (flow videos missing from the appearance stream?)",
                    name(&a),
                    name(&f)
                );
            }
        }
    }
    writer.finish()?;
    println!("fuse strategy={:?} frames={}", params.strategy, frames_out);
    Ok(())
}

pub fn build_offline(cfg: &RunConfig, args: &BuildArgs) -> Result<()> {
    let mut trim = cfg.trim.clone();
    if let Some(a) = args.alpha {
        trim.alpha_c = a;
    }
    let mut stream = DetectionStream::open(&args.input)?;
    let mut writer = TubeWriter::create(&args.out)?;
    let mut n_tubes = 0usize;
    let videos = for_each_block(
        || Ok(stream.next_video_block()?),
        |video, frames: &Vec<DetectionFrame>| {
            let classes = block_classes_frames(frames, args.classes);
            build_tubes_offline(video, frames, classes, &cfg.paths, &trim)
                .map_err(anyhow::Error::from)
        },
        |tubes: Vec<ActionTube>| {
            n_tubes += tubes.len();
            writer.write(&tubes)?;
            Ok(())
        },
    )?;
    writer.finish()?;
    println!("build-offline videos={videos} tubes={n_tubes}");
    Ok(())
}

pub fn build_online(cfg: &RunConfig, args: &BuildArgs) -> Result<()> {
    let mut params = cfg.online.clone();
    if let Some(a) = args.alpha {
        params.label_alpha = a;
    }
    let mut stream = DetectionStream::open(&args.input)?;
    let mut writer = TubeWriter::create(&args.out)?;
    let mut n_tubes = 0usize;
    let videos = for_each_block(
        || Ok(stream.next_video_block()?),
        |video, frames: &Vec<DetectionFrame>| {
            let classes = block_classes_frames(frames, args.classes);
            build_online_video(video, frames, classes, &params).map_err(anyhow::Error::from)
        },
        |tubes: Vec<ActionTube>| {
            n_tubes += tubes.len();
            writer.write(&tubes)?;
            Ok(())
        },
    )?;
    writer.finish()?;
    println!("build-online videos={videos} tubes={n_tubes}");
    Ok(())
}

pub fn link_micro(cfg: &RunConfig, args: &BuildArgs) -> Result<()> {
    let mut params = cfg.online.clone();
    if let Some(a) = args.alpha {
        params.label_alpha = a;
    }
    let mut stream = MicroTubeStream::open(&args.input)?;
    let mut writer = TubeWriter::create(&args.out)?;
    let mut n_tubes = 0usize;
    let videos = for_each_block(
        || Ok(stream.next_video_block()?),
        |video, sets: &Vec<MicroTubeFrame>| {
            let classes = block_classes_micro(sets, args.classes);
            build_micro_video(video, sets, classes, &params).map_err(anyhow::Error::from)
        },
        |tubes: Vec<ActionTube>| {
            n_tubes += tubes.len();
            writer.write(&tubes)?;
            Ok(())
        },
    )?;
    writer.finish()?;
    println!("link-micro videos={videos} tubes={n_tubes}");
    Ok(())
}

pub fn estimate_trans(args: &EstimateTransArgs) -> Result<()> {
    let gts = formats::read_gt(&args.gt, None)?;
    let micro = tubekit::sim::gt_microtubes(&gts, args.delta)?;
    let pyramid = tubekit::anchors::generate_grids(args.width, args.height);
    let mats = tubekit::anchors::estimate_transitions(&micro, &pyramid)?;
    formats::write_transitions(&args.out, &mats)?;
    let entries: usize = mats.iter().map(|m| m.nonzero().len()).sum();
    let sampled: usize = mats
        .iter()
        .map(|m| tubekit::anchors::threshold_transitions(m, 0.1).len())
        .sum();
    println!(
        "estimate-trans delta={} microtubes={} entries={} sampled_at_0.1={}",
        args.delta,
        micro.len(),
        entries,
        sampled
    );
    Ok(())
}

pub fn compose_trans(args: &ComposeTransArgs) -> Result<()> {
    let mats = formats::read_transitions(&args.trans)?;
    let mut out = Vec::with_capacity(mats.len());
    let mut dropped_total = 0.0;
    for m in &mats {
        let (c, dropped) = tubekit::anchors::compose(m, args.steps)?;
        dropped_total += dropped;
        out.push(c);
    }
    formats::write_transitions(&args.out, &out)?;
    println!("compose-trans steps={} dropped_mass={dropped_total}", args.steps);
    Ok(())
}

pub fn predict_future(cfg: &RunConfig, args: &PredictFutureArgs) -> Result<()> {
    if !(args.fraction > 0.0 && args.fraction <= 1.0) {
        bail!("--fraction must be in (0, 1]");
    }
    let mut stream = MicroTubeStream::open(&args.input)?;
    let mut writer = TubeWriter::create(&args.out)?;
    let mut n_tubes = 0usize;
    let videos = for_each_block(
        || Ok(stream.next_video_block()?),
        |video, sets: &Vec<MicroTubeFrame>| {
            let classes = block_classes_micro(sets, args.classes);
            complete_video(
                video,
                sets,
                classes,
                &cfg.online,
                cfg.horizon.velocity_window,
                args.fraction,
                args.width,
                args.height,
            )
            .map_err(anyhow::Error::from)
        },
        |tubes: Vec<ActionTube>| {
            n_tubes += tubes.len();
            writer.write(&tubes)?;
            Ok(())
        },
    )?;
    writer.finish()?;
    println!(
        "predict-future fraction={} videos={videos} tubes={n_tubes}",
        args.fraction
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let eval_cfg: &EvalConfig = &cfg.eval;
    let gts = formats::read_gt(&args.gt, None)?;
    let delta = args.delta.unwrap_or(eval_cfg.delta);

    match args.metric {
        Metric::Map => {
            let tubes = read_required_tubes(args)?;
            let (map, per_class) = video_map(&tubes, &gts, delta, eval_cfg)?;
            let rows: Vec<String> = per_class
                .iter()
                .map(|(c, ap)| format!("{c},{ap}"))
                .collect();
            write_csv(&args.out_csv, "class,ap", &rows)?;
            println!("metric=map delta={delta} value={map}");
        }
        Metric::AvgMap => {
            let tubes = read_required_tubes(args)?;
            let mut rows = Vec::new();
            for &d in &eval_cfg.delta_sweep {
                let (m, _) = video_map(&tubes, &gts, d, eval_cfg)?;
                rows.push(format!("{d},{m}"));
            }
            let value = avg_map(&tubes, &gts, eval_cfg)?;
            write_csv(&args.out_csv, "delta,map", &rows)?;
            println!("metric=avg_map value={value}");
        }
        Metric::Cmap => {
            let tubes = read_required_tubes(args)?;
            let (map, per_class) = video_map(&tubes, &gts, delta, eval_cfg)?;
            let rows: Vec<String> = per_class
                .iter()
                .map(|(c, ap)| format!("{c},{ap}"))
                .collect();
            write_csv(&args.out_csv, "class,ap", &rows)?;
            let fraction = args.fraction.map(|f| f.to_string()).unwrap_or_else(|| "1".into());
            println!("metric=cmap fraction={fraction} delta={delta} value={map}");
        }
        Metric::Pmap => {
            let tubes = read_required_tubes(args)?;
            let fraction = args
                .fraction
                .context("--fraction is required for pmap")?;
            let lens = gt_video_lengths(&gts);
            let (map, per_class) = prediction_map(&tubes, &gts, fraction, &lens, delta, eval_cfg)?;
            let rows: Vec<String> = per_class
                .iter()
                .map(|(c, ap)| format!("{c},{ap}"))
                .collect();
            write_csv(&args.out_csv, "class,ap", &rows)?;
            println!("metric=pmap fraction={fraction} delta={delta} value={map}");
        }
        Metric::Early => {
            let dets = args
                .dets
                .as_ref()
                .context("--dets is required for early")?;
            let mut stream = DetectionStream::open(dets)?;
            let mut preds: BTreeMap<String, Vec<Option<usize>>> = BTreeMap::new();
            for_each_block(
                || Ok(stream.next_video_block()?),
                |video, frames: &Vec<DetectionFrame>| {
                    let classes = block_classes_frames(frames, None);
                    early_labels_frames(video, frames, classes, &cfg.online, &eval_cfg.fractions)
                        .map(|l| (video.to_string(), l))
                        .map_err(anyhow::Error::from)
                },
                |(video, labels)| {
                    preds.insert(video, labels);
                    Ok(())
                },
            )?;
            let acc = early_accuracy(&preds, &gt_labels(&gts), eval_cfg.fractions.len());
            let rows: Vec<String> = eval_cfg
                .fractions
                .iter()
                .zip(&acc)
                .map(|(f, a)| format!("{f},{a}"))
                .collect();
            write_csv(&args.out_csv, "fraction,accuracy", &rows)?;
            let mean = acc.iter().sum::<f64>() / acc.len().max(1) as f64;
            println!(
                "metric=early first={} last={} mean={mean}",
                acc.first().copied().unwrap_or(0.0),
                acc.last().copied().unwrap_or(0.0)
            );
        }
    }
    Ok(())
}

fn read_required_tubes(args: &EvalArgs) -> Result<Vec<ActionTube>> {
    let path = args
        .tubes
        .as_ref()
        .context("--tubes is required for this metric")?;
    Ok(formats::read_tubes(path)?)
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let r = tubekit::bench::online_throughput(
        args.classes,
        args.dets_per_class,
        args.frames,
        args.seed,
    );
    println!(
        "metric=bench ms_per_frame={} frames={} classes={} dets_per_class={}",
        r.ms_per_frame, r.frames, r.classes, r.dets_per_class
    );
    Ok(())
}
