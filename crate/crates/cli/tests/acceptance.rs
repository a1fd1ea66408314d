//! Acceptance suite: one test per criterion, each printing a pass line
//! (visible with `--nocapture`). Run with
//! `cargo test -p tubekit-cli --test acceptance`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tubekit::anchors::{
    compose, estimate_transitions, generate_grids, identity_transitions, threshold_transitions,
    GtMicroTube,
};
use tubekit::eval::{
    class_ap, completion_map, early_accuracy, prediction_map, video_map, EvalConfig, GtTube,
};
use tubekit::geometry::BBox;
use tubekit::offline::{build_paths, potts_binary_labels, ActionPath, ActionTube, PathParams, TrimParams, viterbi_trim};
use tubekit::online::{FixedLagTrellis, OnlineParams};
use tubekit::pipeline::{
    build_micro_video, build_online_video, complete_video, early_labels_frames,
    early_labels_micro, group_by_video, micro_video_lengths,
};
use tubekit::sim::{
    generate_scenario, render_frames, render_microtubes, MotionModel, NoiseModel, PredictionSpec,
    ScenarioConfig,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x = rng.gen_range(0.0..80.0);
    let y = rng.gen_range(0.0..80.0);
    let w = rng.gen_range(5.0..30.0);
    let h = rng.gen_range(5.0..30.0);
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// Brute-force best path: identical accumulation order and tie-break
/// (reverse-lexicographic on box indices) as the Viterbi implementation.
fn brute_best_path(frames: &[Vec<(BBox, f64)>], lambda: f64) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut idx = vec![0usize; frames.len()];
    loop {
        let mut e = 0.0 + frames[0][idx[0]].1;
        for t in 1..frames.len() {
            let prev = frames[t - 1][idx[t - 1]].0;
            let cur = frames[t][idx[t]].0;
            e = (e + lambda * prev.iou(&cur)) + frames[t][idx[t]].1;
        }
        let better = match &best {
            None => true,
            Some((bi, be)) => {
                e > *be
                    || (e == *be
                        && idx.iter().rev().cmp(bi.iter().rev()) == std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some((idx.clone(), e));
        }
        let mut k = frames.len();
        loop {
            if k == 0 {
                return best.unwrap();
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < frames[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[test]
fn criterion_01_dp_oracle_equivalence() {
    let start = Instant::now();
    let mut r = rng(101);
    let params = PathParams::default();
    for case in 0..200 {
        let t_len = r.gen_range(1..=6);
        let frames: Vec<Vec<(BBox, f64)>> = (0..t_len)
            .map(|_| {
                (0..r.gen_range(1..=4))
                    .map(|_| (random_box(&mut r), r.gen_range(0.0..1.0)))
                    .collect()
            })
            .collect();
        let paths = build_paths("v", 1, &frames, &params).unwrap();
        let (want_idx, want_e) = brute_best_path(&frames, params.lambda_o);
        assert!(
            (paths[0].energy - want_e).abs() < 1e-9,
            "case {case}: energy {} vs {}",
            paths[0].energy,
            want_e
        );
        let want_boxes: Vec<BBox> = want_idx
            .iter()
            .zip(&frames)
            .map(|(&i, f)| f[i].0)
            .collect();
        assert_eq!(paths[0].boxes, want_boxes, "case {case}: argmax sequence");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("[PASS] criterion 1: first-path DP equals exhaustive enumeration on 200 instances ({elapsed:?})");
}

/// Brute force over all 2^T labellings with the DP's accumulation order and
/// tie-break (reverse-lexicographic, background preferred).
fn brute_labels(scores: &[f64], lambda: f64, alpha: f64) -> Vec<bool> {
    let t_len = scores.len();
    let energy = |mask: u32| {
        let lab = |t: usize| mask >> t & 1 == 1;
        let mut e = 0.0 + if lab(0) { scores[0] } else { 1.0 - scores[0] };
        for t in 1..t_len {
            let psi = if lab(t) == lab(t - 1) { 0.0 } else { alpha };
            let u = if lab(t) { scores[t] } else { 1.0 - scores[t] };
            e = (e - lambda * psi) + u;
        }
        e
    };
    let mut best_mask = 0u32;
    let mut best_e = f64::NEG_INFINITY;
    for mask in 0..(1u32 << t_len) {
        let e = energy(mask);
        let better = e > best_e || {
            e == best_e && {
                let mut better = false;
                for t in (0..t_len).rev() {
                    let a = mask >> t & 1;
                    let b = best_mask >> t & 1;
                    if a != b {
                        better = a < b;
                        break;
                    }
                }
                better
            }
        };
        if better {
            best_mask = mask;
            best_e = e;
        }
    }
    (0..t_len).map(|t| best_mask >> t & 1 == 1).collect()
}

#[test]
fn criterion_02_trimming_oracle_equivalence() {
    let start = Instant::now();
    let mut r = rng(102);
    for case in 0..200 {
        // cover the top of the size range without letting 200 x 2^16 blow up
        let t_len = if case % 4 == 0 { 16 } else { r.gen_range(1..=16) };
        let scores: Vec<f64> = (0..t_len).map(|_| r.gen_range(0.0..1.0)).collect();
        let alpha = [0.0, 1.0, 3.0][case % 3];
        let path = ActionPath {
            video: "v".into(),
            class: 1,
            boxes: vec![BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(); t_len],
            scores: scores.clone(),
            ghost: vec![false; t_len],
            energy: 0.0,
        };
        let params = TrimParams {
            alpha_c: alpha,
            ..TrimParams::default()
        };
        let got: Vec<bool> = {
            let mut labels = vec![false; t_len];
            for tube in viterbi_trim(&path, &params) {
                for f in tube.start..=tube.end {
                    labels[f] = true;
                }
            }
            labels
        };
        let want = brute_labels(&scores, params.lambda_l, alpha);
        assert_eq!(got, want, "case {case} (T={t_len}, alpha={alpha})");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("[PASS] criterion 2: trimming equals 2^T brute force on 200 sequences ({elapsed:?})");
}

#[test]
fn criterion_03_online_equals_offline_labelling() {
    let mut r = rng(103);
    // unbounded lookback reproduces the offline labelling exactly
    for _ in 0..100 {
        let t_len = r.gen_range(1..=24);
        let scores: Vec<f64> = (0..t_len).map(|_| r.gen_range(0.0..1.0)).collect();
        let mut trellis = FixedLagTrellis::new(t_len, 1.0, 1.0);
        for &s in &scores {
            trellis.push(s);
        }
        assert_eq!(trellis.finalize(), potts_binary_labels(&scores, 1.0, 1.0));
    }

    // m = 5: committed labels match the full Viterbi on instances whose
    // optimal back-path is unique over the last 5 steps (verified by
    // re-running the forward DP and checking every decision is strict)
    let m = 5usize;
    let (lambda, alpha) = (1.0, 1.0);
    let mut qualifying = 0;
    for _ in 0..100 {
        // strong-margin run structure makes unique optima overwhelmingly likely
        let mut scores = Vec::new();
        while scores.len() < 18 {
            let high = r.gen_bool(0.5);
            let run = r.gen_range(6..=9);
            for _ in 0..run {
                scores.push(if high {
                    r.gen_range(0.85..0.95)
                } else {
                    r.gen_range(0.05..0.15)
                });
            }
        }
        if !back_path_unique(&scores, lambda, alpha, m) {
            continue;
        }
        qualifying += 1;
        let mut trellis = FixedLagTrellis::new(m, lambda, alpha);
        for &s in &scores {
            trellis.push(s);
        }
        let full = potts_binary_labels(&scores, lambda, alpha);
        let committed = trellis.committed();
        assert_eq!(&full[..committed.len()], committed);
    }
    assert!(qualifying >= 80, "only {qualifying} of 100 instances qualified");
    println!("[PASS] criterion 3: online labelling = offline (m >= T exact; m = 5 committed agree on {qualifying} unique-back-path instances)");
}

/// True iff, for every step r, the argmax state at r is strict and walking m
/// back-pointers from it involves only strict decisions.
fn back_path_unique(scores: &[f64], lambda: f64, alpha: f64, m: usize) -> bool {
    let t_len = scores.len();
    let mut cost = vec![[0.0f64; 2]; t_len];
    let mut bp = vec![[0usize; 2]; t_len];
    let mut strict = vec![[true; 2]; t_len];
    cost[0] = [1.0 - scores[0], scores[0]];
    for t in 1..t_len {
        for j in 0..2 {
            let stay = cost[t - 1][j];
            let jump = cost[t - 1][1 - j] - lambda * alpha;
            let (v, i, s) = if jump > stay {
                (jump, 1 - j, true)
            } else if stay > jump {
                (stay, j, true)
            } else {
                (stay, j.min(1 - j), false)
            };
            let unary = if j == 1 { scores[t] } else { 1.0 - scores[t] };
            cost[t][j] = v + unary;
            bp[t][j] = i;
            strict[t][j] = s;
        }
    }
    for r in 0..t_len {
        if cost[r][0] == cost[r][1] {
            return false;
        }
        let mut state = if cost[r][1] > cost[r][0] { 1 } else { 0 };
        for back in 0..m.min(r) {
            if !strict[r - back][state] {
                return false;
            }
            state = bp[r - back][state];
        }
    }
    true
}

fn acceptance_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        videos: 20,
        frames: 31,
        classes: 3,
        instances_min: 2,
        instances_max: 4,
        ..ScenarioConfig::default()
    }
}

#[test]
fn criterion_04_noiseless_roundtrip() {
    let start = Instant::now();
    let cfg = acceptance_scenario(104);
    let scenario = generate_scenario(&cfg).unwrap();
    let eval_cfg = EvalConfig::default();
    let gt_labels: BTreeMap<String, usize> = scenario
        .videos
        .iter()
        .map(|v| (v.video.clone(), v.label))
        .collect();
    let params = OnlineParams::default();

    // frame path
    let frames = render_frames(&scenario, &NoiseModel::default()).unwrap();
    let groups = group_by_video(frames, |f| &f.video);
    let mut tubes = Vec::new();
    let mut preds = BTreeMap::new();
    for (video, vframes) in &groups {
        tubes.extend(build_online_video(video, vframes, cfg.classes, &params).unwrap());
        preds.insert(
            video.clone(),
            early_labels_frames(video, vframes, cfg.classes, &params, &eval_cfg.fractions)
                .unwrap(),
        );
    }
    let (map, _) = video_map(&tubes, &scenario.gts, 0.9, &eval_cfg).unwrap();
    let acc = early_accuracy(&preds, &gt_labels, eval_cfg.fractions.len());
    assert_eq!(map, 1.0, "frame path video-mAP");
    assert_eq!(acc[0], 1.0, "frame path early accuracy at 10%");

    // micro-tube path at all strides
    for delta in [1usize, 3, 5] {
        let stream = render_microtubes(&scenario, &NoiseModel::default(), delta, None).unwrap();
        let groups = group_by_video(stream, |s| &s.video);
        let mut tubes = Vec::new();
        let mut preds = BTreeMap::new();
        for (video, sets) in &groups {
            tubes.extend(build_micro_video(video, sets, cfg.classes, &params).unwrap());
            preds.insert(
                video.clone(),
                early_labels_micro(
                    video,
                    sets,
                    cfg.frames,
                    cfg.classes,
                    &params,
                    &eval_cfg.fractions,
                )
                .unwrap(),
            );
        }
        let (map, _) = video_map(&tubes, &scenario.gts, 0.9, &eval_cfg).unwrap();
        let acc = early_accuracy(&preds, &gt_labels, eval_cfg.fractions.len());
        assert_eq!(map, 1.0, "delta {delta} video-mAP");
        assert_eq!(acc[0], 1.0, "delta {delta} early accuracy at 10%");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("[PASS] criterion 4: noiseless round trip perfect on frame and micro-tube paths ({elapsed:?})");
}

#[test]
fn criterion_05_transition_matrix_properties() {
    let pyramid = generate_grids(320.0, 240.0);

    // static corpus: one-hot diagonal rows summing to 1
    let cfg = ScenarioConfig {
        seed: 105,
        videos: 10,
        frames: 16,
        classes: 3,
        motion: MotionModel::Static,
        ..ScenarioConfig::default()
    };
    let scenario = generate_scenario(&cfg).unwrap();
    let gts = tubekit::sim::gt_microtubes(&scenario.gts, 4).unwrap();
    let mats = estimate_transitions(&gts, &pyramid).unwrap();
    let mut visited = 0;
    for m in &mats {
        for i in 0..m.cells() {
            let sum = m.row_sum(i);
            if sum > 0.0 {
                visited += 1;
                assert!((sum - 1.0).abs() < 1e-9, "row sum {sum}");
                assert_eq!(m.get(i, i), 1.0, "static row not one-hot diagonal");
            }
        }
    }
    assert!(visited > 0);

    // constant-shift corpus on the 5x5 level: mass concentrates one cell right
    let grid = pyramid.grids.iter().find(|g| g.side == 5).unwrap();
    let cell_w = 320.0 / 5.0;
    let mut shift_gts = Vec::new();
    for cell in 0..grid.cells() {
        if cell % 5 == 4 {
            continue; // no right neighbour
        }
        let first = *grid.anchor(cell, 0);
        shift_gts.push(GtMicroTube {
            class: 1,
            t: 0,
            delta: 4,
            first,
            second: first.shifted(cell_w, 0.0),
        });
    }
    let mats = estimate_transitions(&shift_gts, &pyramid).unwrap();
    let m5 = mats.iter().find(|m| m.side == 5).unwrap();
    let mut shifted_rows = 0;
    for i in 0..m5.cells() {
        if m5.row_sum(i) > 0.0 {
            shifted_rows += 1;
            assert_eq!(m5.get(i, i + 1), 1.0, "row {i} mass not on shifted cell");
        }
    }
    assert_eq!(shifted_rows, 20);

    // compose(A, 2) equals the explicit two-hop sum
    let cfg = ScenarioConfig {
        seed: 106,
        videos: 10,
        frames: 16,
        classes: 3,
        motion: MotionModel::RandomWalk { sigma: 6.0 },
        ..ScenarioConfig::default()
    };
    let scenario = generate_scenario(&cfg).unwrap();
    let gts = tubekit::sim::gt_microtubes(&scenario.gts, 4).unwrap();
    let mats = estimate_transitions(&gts, &pyramid).unwrap();
    for m in &mats {
        let (two, _) = compose(m, 2).unwrap();
        for i in 0..m.cells() {
            if m.row_sum(i) == 0.0 {
                continue;
            }
            for j in 0..m.cells() {
                let want: f64 = (0..m.cells()).map(|k| m.get(i, k) * m.get(k, j)).sum();
                assert!((two.get(i, j) - want).abs() < 1e-9);
            }
        }
    }

    // identity + threshold reproduces the anchor-cuboid proposal set
    for m in identity_transitions(&pyramid) {
        let pairs = threshold_transitions(&m, 0.1);
        let want: Vec<(usize, usize)> = (0..m.cells()).map(|i| (i, i)).collect();
        assert_eq!(pairs, want);
    }

    println!("[PASS] criterion 5: transition matrices satisfy row-sum, one-hot, shift, composition and identity properties");
}

#[test]
fn criterion_06_anchor_census() {
    let pyramid = generate_grids(300.0, 300.0);
    let counts: Vec<usize> = pyramid.grids.iter().map(|g| g.len()).collect();
    assert_eq!(counts, vec![5776, 2166, 600, 150, 36, 4]);
    assert_eq!(pyramid.total_anchors(), 8732);
    println!("[PASS] criterion 6: anchor census {counts:?} sums to 8732");
}

#[test]
fn criterion_07_future_prediction_fidelity() {
    let eval_cfg = EvalConfig::default();
    let spec = PredictionSpec {
        delta_p: 1,
        delta_f: 2,
        n_future: 8,
    };
    let params = OnlineParams::default();

    // static motion, oracle predictions, f = 0.5
    let cfg = ScenarioConfig {
        seed: 107,
        videos: 10,
        frames: 31,
        classes: 3,
        motion: MotionModel::Static,
        ..ScenarioConfig::default()
    };
    let scenario = generate_scenario(&cfg).unwrap();
    let stream = render_microtubes(&scenario, &NoiseModel::default(), 2, Some(spec)).unwrap();
    let groups = group_by_video(stream, |s| &s.video);
    let lens = micro_video_lengths(&groups);
    let mut completed = Vec::new();
    for (video, sets) in &groups {
        completed.extend(
            complete_video(
                video,
                sets,
                cfg.classes,
                &params,
                5,
                0.5,
                cfg.width as f64,
                cfg.height as f64,
            )
            .unwrap(),
        );
    }
    let c = completion_map(&completed, &scenario.gts, 0.9, &eval_cfg).unwrap();
    let (p, _) = prediction_map(&completed, &scenario.gts, 0.5, &lens, 0.9, &eval_cfg).unwrap();
    assert_eq!(c, 1.0, "c-mAP");
    assert_eq!(p, 1.0, "p-mAP");

    // paired comparison under constant velocity: hold-last-box must lose
    let cfg = ScenarioConfig {
        seed: 107, // same seed: paired
        videos: 10,
        frames: 31,
        classes: 3,
        width: 640,
        height: 480,
        motion: MotionModel::ConstantVelocity { vx: 3.0, vy: 1.0 },
        ..ScenarioConfig::default()
    };
    let scenario = generate_scenario(&cfg).unwrap();
    let oracle = render_microtubes(&scenario, &NoiseModel::default(), 2, Some(spec)).unwrap();
    let held: Vec<_> = oracle
        .iter()
        .cloned()
        .map(|mut set| {
            for mt in &mut set.tubes {
                if let Some(pred) = &mut mt.prediction {
                    for bx in &mut pred.future {
                        *bx = mt.second;
                    }
                }
            }
            set
        })
        .collect();
    let p_of = |stream: Vec<tubekit::forecast::MicroTubeFrame>| {
        let groups = group_by_video(stream, |s| &s.video);
        let lens = micro_video_lengths(&groups);
        let mut completed = Vec::new();
        for (video, sets) in &groups {
            completed.extend(
                complete_video(
                    video,
                    sets,
                    cfg.classes,
                    &params,
                    5,
                    0.5,
                    cfg.width as f64,
                    cfg.height as f64,
                )
                .unwrap(),
            );
        }
        prediction_map(&completed, &scenario.gts, 0.5, &lens, 0.9, &eval_cfg)
            .unwrap()
            .0
    };
    let p_oracle = p_of(oracle);
    let p_held = p_of(held);
    assert!(
        p_held < p_oracle,
        "held {p_held} not strictly below oracle {p_oracle}"
    );
    println!("[PASS] criterion 7: c-mAP = p-mAP = 1.0 with oracle predictions; hold-last-box p-mAP {p_held:.3} < oracle {p_oracle:.3}");
}

#[test]
fn criterion_08_metric_fixtures() {
    let eval_cfg = EvalConfig::default();

    // hand-computed fixture: FP above TP with one gt -> AP exactly 0.5
    let mk_tube = |start: usize, end: usize, score: f64| ActionTube {
        video: "v".into(),
        class: 1,
        start,
        end,
        boxes: vec![BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(); end - start + 1],
        scores: vec![score; end - start + 1],
        score,
    };
    let fp = mk_tube(20, 29, 0.9);
    let tp = mk_tube(0, 9, 0.5);
    let gt = GtTube {
        video: "v".into(),
        class: 1,
        start: 0,
        end: 9,
        boxes: vec![BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(); 10],
    };
    let ap = class_ap(&[&fp, &tp], &[&gt], 0.5, &eval_cfg);
    assert_eq!(ap, 0.5);

    // video-mAP non-increasing in delta on 50 random noisy scenarios
    for seed in 0..50u64 {
        let cfg = ScenarioConfig {
            seed: 1000 + seed,
            videos: 3,
            frames: 20,
            classes: 2,
            motion: MotionModel::RandomWalk { sigma: 2.0 },
            ..ScenarioConfig::default()
        };
        let scenario = generate_scenario(&cfg).unwrap();
        let noise = NoiseModel {
            sigma_box: 3.0,
            sigma_score: 0.2,
            p_miss: 0.1,
            fp_rate: 0.5,
            ..NoiseModel::default()
        };
        let frames = render_frames(&scenario, &noise).unwrap();
        let groups = group_by_video(frames, |f| &f.video);
        let mut tubes = Vec::new();
        for (video, vframes) in &groups {
            tubes.extend(
                build_online_video(video, vframes, cfg.classes, &OnlineParams::default()).unwrap(),
            );
        }
        let mut prev = f64::INFINITY;
        for &d in &eval_cfg.delta_sweep {
            let (map, _) = video_map(&tubes, &scenario.gts, d, &eval_cfg).unwrap();
            assert!(map <= prev + 1e-12, "seed {seed}: {map} > {prev} at {d}");
            prev = map;
        }
    }
    println!("[PASS] criterion 8: AP fixture = 0.5 exactly; mAP non-increasing in delta on 50 noisy scenarios");
}

#[test]
fn criterion_09_bench_throughput() {
    let exe = env!("CARGO_BIN_EXE_tubekit");
    let out = std::process::Command::new(exe)
        .args(["bench", "--classes", "24", "--dets-per-class", "10", "--frames", "2000"])
        .output()
        .expect("bench runs");
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let ms: f64 = stdout
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("ms_per_frame="))
        .expect("summary line")
        .parse()
        .expect("parseable");
    // target 5 ms/frame; CI tolerance 10 ms
    assert!(ms <= 10.0, "amortized {ms} ms/frame exceeds the 10 ms CI tolerance");
    let verdict = if ms <= 5.0 { "within" } else { "above" };
    println!("[PASS] criterion 9: online step amortized {ms:.3} ms/frame ({verdict} the 5 ms target, <= 10 ms tolerance)");
}

#[test]
fn criterion_10_determinism_across_threads() {
    let exe = env!("CARGO_BIN_EXE_tubekit");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str, threads: usize| {
        dir.path()
            .join(format!("{name}.t{threads}"))
            .display()
            .to_string()
    };
    let run = |args: &[&str]| {
        let out = std::process::Command::new(exe)
            .args(args)
            .output()
            .expect("command runs");
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let same = |name: &str| {
        let a = std::fs::read(p(name, 1)).unwrap();
        let b = std::fs::read(p(name, 4)).unwrap();
        assert!(!a.is_empty(), "{name} produced no bytes");
        assert_eq!(a, b, "{name} differs across --threads");
    };

    for threads in [1usize, 4] {
        let t = threads.to_string();
        run(&["--threads", &t, "simulate", "--seed", "9", "--videos", "6", "--frames", "31",
              "--classes", "3", "--out-gt", &p("gt", threads), "--out-stream", &p("dets", threads)]);
        run(&["--threads", &t, "simulate", "--seed", "9", "--mode", "microtubes-with-predictions",
              "--delta", "2", "--videos", "6", "--frames", "31", "--classes", "3",
              "--out-gt", &p("gt2", threads), "--out-stream", &p("mts", threads)]);
        run(&["--threads", &t, "fuse", "--appearance", &p("dets", threads), "--flow",
              &p("dets", threads), "--strategy", "boost", "--out", &p("fused", threads)]);
        run(&["--threads", &t, "build-online", "--input", &p("dets", threads), "--out",
              &p("tubes", threads)]);
        run(&["--threads", &t, "build-offline", "--input", &p("dets", threads), "--out",
              &p("offtubes", threads)]);
        run(&["--threads", &t, "link-micro", "--input", &p("mts", threads), "--out",
              &p("mtubes", threads)]);
        run(&["--threads", &t, "estimate-trans", "--gt", &p("gt", threads), "--delta", "4",
              "--width", "320", "--height", "240", "--out", &p("trans", threads)]);
        run(&["--threads", &t, "compose-trans", "--trans", &p("trans", threads), "--steps", "2",
              "--out", &p("trans2", threads)]);
        run(&["--threads", &t, "predict-future", "--input", &p("mts", threads), "--fraction",
              "0.5", "--width", "320", "--height", "240", "--out", &p("completed", threads)]);
        run(&["--threads", &t, "eval", "map", "--gt", &p("gt", threads), "--tubes",
              &p("tubes", threads), "--out-csv", &p("map_csv", threads)]);
        run(&["--threads", &t, "eval", "early", "--gt", &p("gt", threads), "--dets",
              &p("dets", threads), "--out-csv", &p("early_csv", threads)]);
    }
    for name in [
        "gt", "dets", "gt2", "mts", "fused", "tubes", "offtubes", "mtubes", "trans", "trans2",
        "completed", "map_csv", "early_csv",
    ] {
        same(name);
    }
    println!("[PASS] criterion 10: all command outputs byte-identical across --threads values");
}
