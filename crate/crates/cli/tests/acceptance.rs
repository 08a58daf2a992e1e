//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::HashMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use hbpt::eval::{evaluate, EvalReport};
use hbpt::pipeline::{read_blobs, read_events, BLOBS_FILE, EVENTS_FILE, METRICS_FILE};
use hbpt::{run_pipeline, run_synth, Metrics, PipelineConfig};
use hbpt_core::activity::{good_features, lk_flow, EventKind, FlowParams, Image};
use hbpt_core::blob::{blob_density, fit_blob, GaussianBlob, PartLabel, EPS_REG};
use hbpt_core::imageio::Frame;
use hbpt_core::maskops::{close, connected_components, convex_hull, cross, Connectivity, StructuringElement};
use hbpt_core::scene::{detect_foreground, learn_scene, DEFAULT_TAU, DEFAULT_VAR_FLOOR};
use hbpt_core::synthgen::{generate_scenario, read_truth, Scenario, ScenarioName, TRUTH_FILE};
use hbpt_core::tracker::{mean_shift, WeightImage};
use hbpt_core::{Mask, Point, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Run {
    cfg: PipelineConfig,
    metrics: Metrics,
    report: EvalReport,
    events: Vec<hbpt_core::activity::ActivityEvent>,
}

fn run_scenario(root: &Path, name: ScenarioName, tag: &str) -> anyhow::Result<Run> {
    let dir = root.join(format!("{name}_{tag}"));
    let mut cfg = run_synth(&Scenario::new(name, SEED), &dir)?;
    cfg.output = dir.join("out");
    let metrics = run_pipeline(&cfg)?;
    let truth = read_truth(&dir.join(TRUTH_FILE))?;
    let records = read_blobs(&cfg.output.join(BLOBS_FILE))?;
    let events = read_events(&cfg.output.join(EVENTS_FILE))?;
    let report = evaluate(&truth, &records, &events);
    Ok(Run { cfg, metrics, report, events })
}

fn throughput(walker: &Run) -> Outcome {
    let m = &walker.metrics;
    let text = std::fs::read_to_string(walker.cfg.output.join(METRICS_FILE)).map_err(|e| e.to_string())?;
    let on_disk: Metrics = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let recomputed = m.frames as f64 / (m.wall_ms / 1e3);
    let consistent = (on_disk.fps - recomputed).abs() <= 0.01 * recomputed;
    check(
        m.fps >= 10.0 && consistent && m.frames == 300,
        format!("{:.1} fps over {} frames (metrics.json fps consistent: {consistent})", m.fps, m.frames),
    )
}

fn background_learning() -> Outcome {
    let seq = generate_scenario(&Scenario::new(ScenarioName::Background, SEED).with_frames(130)).map_err(|e| e.to_string())?;
    let model = learn_scene(&seq.frames[..30], DEFAULT_VAR_FLOOR).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for f in &seq.frames[30..] {
        let fg = detect_foreground(&model, f, DEFAULT_TAU).map_err(|e| e.to_string())?;
        worst = worst.max(fg.count() as f64 / (f.width * f.height) as f64);
    }
    check(worst < 0.01, format!("worst held-out frame flags {:.4}% of pixels", 100.0 * worst))
}

fn tracking_accuracy(walker: &Run) -> Outcome {
    let r = &walker.report;
    let parts: Vec<String> = r.parts.iter().map(|(l, s)| format!("{l} {:.3}", s.fraction)).collect();
    check(
        r.centroid_rms_px <= 2.0 && r.torso_inside_fraction >= 0.95 && r.worst_part_fraction() >= 0.9 && r.missed == 0,
        format!(
            "centroid rms {:.3} px, torso inside {:.3}, parts [{}], missed {}",
            r.centroid_rms_px,
            r.torso_inside_fraction,
            parts.join(", "),
            r.missed
        ),
    )
}

fn occlusion(run: &Run) -> Outcome {
    let r = &run.report;
    let lags: Vec<String> = r.arm_transitions.iter().map(|t| format!("{}@{}: {:?}", if t.visible { "show" } else { "hide" }, t.frame, t.lag)).collect();
    let lags_ok = r.arm_transitions.len() == 2 && r.arm_transitions.iter().all(|t| t.lag.is_some_and(|l| l.abs() <= 2));
    check(
        r.arm_presence_agreement >= 0.95 && lags_ok,
        format!("armR presence agreement {:.3}, transitions [{}]", r.arm_presence_agreement, lags.join(", ")),
    )
}

fn hull_oracle(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() == 1 {
        return pts;
    }
    let between = |p: Point, q: Point, r: Point| r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y);
    let mut next = HashMap::new();
    for &p in &pts {
        for &q in &pts {
            if p != q && pts.iter().all(|&r| {
                let c = cross(p, q, r);
                c > 0 || (c == 0 && between(p, q, r))
            }) {
                next.insert(p, q);
            }
        }
    }
    let start = *pts.iter().min_by_key(|p| (p.y, p.x)).unwrap();
    let mut hull = vec![start];
    let mut cur = next[&start];
    while cur != start {
        hull.push(cur);
        cur = next[&cur];
    }
    hull
}

fn flood_labels(mask: &Mask) -> Vec<u32> {
    let (w, h) = (mask.width as i32, mask.height as i32);
    let mut labels = vec![0u32; (w * h) as usize];
    let mut next = 0;
    for sy in 0..h {
        for sx in 0..w {
            if !mask.get_checked(sx, sy) || labels[(sy * w + sx) as usize] != 0 {
                continue;
            }
            next += 1;
            labels[(sy * w + sx) as usize] = next;
            let mut stack = vec![(sx, sy)];
            while let Some((x, y)) = stack.pop() {
                for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                    let (nx, ny) = (x + dx, y + dy);
                    if mask.get_checked(nx, ny) && labels[(ny * w + nx) as usize] == 0 {
                        labels[(ny * w + nx) as usize] = next;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    labels
}

/// True when the two labelings induce the same partition.
fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let (mut fwd, mut back) = (HashMap::new(), HashMap::new());
    a.iter().zip(b).all(|(&x, &y)| (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

fn texture(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f32> {
    let waves: Vec<(f32, f32, f32, f32)> = (0..6)
        .map(|_| (rng.random_range(-0.35..0.35), rng.random_range(-0.35..0.35), rng.random_range(0.0..6.28), rng.random_range(0.1..0.2)))
        .collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f32, (i / w) as f32);
            255.0 * (0.5 + waves.iter().map(|&(a, b, p, amp)| amp * (a * x + b * y + p).sin()).sum::<f32>())
        })
        .collect()
}

fn ssd_search(a: &Image, b: &Image, p: (i64, i64), half: i64, range: i64) -> (i64, i64) {
    let mut best = (f64::MAX, (0, 0));
    for sy in -range..=range {
        for sx in -range..=range {
            let mut s = 0.0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let d = a.at(p.0 + dx, p.1 + dy) as f64 - b.at(p.0 + dx + sx, p.1 + dy + sy) as f64;
                    s += d * d;
                }
            }
            if s < best.0 {
                best = (s, (sx, sy));
            }
        }
    }
    best.1
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();

    let mut hull_bad = 0;
    for i in 0..200 {
        let n = rng.random_range(1..=50);
        let span = if i % 2 == 0 { 12 } else { 200 };
        let pts: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(0..span), rng.random_range(0..span))).collect();
        if convex_hull(&pts).ok() != Some(hull_oracle(&pts)) {
            hull_bad += 1;
        }
    }
    if hull_bad > 0 {
        failures.push(format!("hull {hull_bad}/200"));
    }

    let mut cc_bad = 0;
    for _ in 0..500 {
        let (w, h) = (rng.random_range(1..60), rng.random_range(1..45));
        let p = rng.random_range(0.05..0.7);
        let m = Mask::from_fn(w, h, |_, _| rng.random_bool(p));
        let cc = connected_components(&m, Connectivity::Eight);
        if !same_partition(&cc.labels, &flood_labels(&m)) {
            cc_bad += 1;
        }
    }
    if cc_bad > 0 {
        failures.push(format!("components {cc_bad}/500"));
    }

    let frame = Frame::from_rgb(0, 320, 240, (0..320 * 240).map(|i| [(i % 251) as u8, (i * 7 % 253) as u8, (i * 13 % 255) as u8]).collect())
        .map_err(|e| e.to_string())?;
    let mut blob_bad = 0;
    for _ in 0..300 {
        let n = rng.random_range(2..400);
        let (cx, cy) = (rng.random_range(20..300), rng.random_range(20..220));
        let (sx, sy) = (rng.random_range(1..20), rng.random_range(1..20));
        let mut pts: Vec<Point> = (0..n).map(|_| Point::new(cx + rng.random_range(-sx..=sx), cy + rng.random_range(-sy..=sy))).collect();
        pts.sort();
        pts.dedup();
        let b = fit_blob(&pts, &frame, PartLabel::Torso).map_err(|e| e.to_string())?;
        let n = pts.len() as f64;
        let (mut mx, mut my) = (0.0, 0.0);
        for p in &pts {
            mx += p.x as f64;
            my += p.y as f64;
        }
        let (mx, my) = (mx / n, my / n);
        let (mut kxx, mut kyy, mut kxy) = (0.0, 0.0, 0.0);
        for p in &pts {
            let (dx, dy) = (p.x as f64 - mx, p.y as f64 - my);
            kxx += dx * dx;
            kyy += dy * dy;
            kxy += dx * dy;
        }
        let k = [[kxx / n, kxy / n], [kxy / n, kyy / n]];
        let tr = k[0][0] + k[1][1];
        let det = k[0][0] * k[1][1] - k[0][1] * k[0][1];
        let lmin = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
        let close_enough = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
        let mu_ok = close_enough(b.mu[0], mx) && close_enough(b.mu[1], my);
        let k_ok = lmin < EPS_REG + 1e-6 || (0..2).all(|r| (0..2).all(|c| close_enough(b.k[r][c], k[r][c])));
        if !(mu_ok && k_ok) {
            blob_bad += 1;
        }
    }
    if blob_bad > 0 {
        failures.push(format!("blob moments {blob_bad}/300"));
    }

    let (w, h) = (96, 96);
    let params = FlowParams::default();
    let mut worst = 0.0f64;
    let mut lk_bad = 0;
    for _ in 0..50 {
        let tex = texture(&mut rng, w, h);
        let (dx, dy): (i32, i32) = (rng.random_range(-5..=5), rng.random_range(-5..=5));
        let shifted: Vec<f32> = (0..w * h)
            .map(|i| {
                let x = ((i % w) as i32 - dx).clamp(0, w as i32 - 1) as usize;
                let y = ((i / w) as i32 - dy).clamp(0, h as i32 - 1) as usize;
                tex[y * w + x]
            })
            .collect();
        let a = Image { width: w, height: h, data: tex };
        let b = Image { width: w, height: h, data: shifted };
        let region = Rect::new(rng.random_range(24..56), rng.random_range(24..56), 16, 16);
        let Some(&(px, py)) = good_features(&a, region, 1, 15, params.min_eig, 1.0).first() else {
            lk_bad += 1;
            continue;
        };
        let p = (px as i64, py as i64);
        let (sx, sy) = ssd_search(&a, &b, p, 7, 8);
        let ((qx, qy), alive) = lk_flow(&a, &b, &[(px as f64, py as f64)], &params)[0];
        let err = (qx - px as f64 - sx as f64).abs().max((qy - py as f64 - sy as f64).abs());
        worst = worst.max(err);
        if !alive || err > 0.25 {
            lk_bad += 1;
        }
    }
    if lk_bad > 0 {
        failures.push(format!("lk {lk_bad}/50"));
    }
    let detail = format!("hull 200, components 500, blob moments 300, lk 50 (worst lk error {worst:.3} px)");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; mismatches: {}", failures.join(", ")))
    }
}

fn numerical_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst_integral = 0.0f64;
    for _ in 0..20 {
        let (l1, l2): (f64, f64) = (rng.random_range(2.0..60.0), rng.random_range(2.0..60.0));
        let (s, c) = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI).sin_cos();
        let off = (l1 - l2) * s * c;
        let k = [[l1 * c * c + l2 * s * s, off], [off, l1 * s * s + l2 * c * c]];
        let b = GaussianBlob { label: PartLabel::Head, mu: [0.3, -0.2], k, color: [0.0; 3], area: 1 };
        let (ex, ey) = ((6.0 * k[0][0].sqrt()).ceil() as i32, (6.0 * k[1][1].sqrt()).ceil() as i32);
        let mut total = 0.0;
        for y in -ey..=ey {
            for x in -ex..=ex {
                total += blob_density(&b, (x as f64, y as f64));
            }
        }
        worst_integral = worst_integral.max((total - 1.0).abs());
    }

    let mut ms_bad = 0;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(20..80usize), rng.random_range(20..80usize));
        let mut data: Vec<f32> = (0..w * h).map(|_| if rng.random_bool(0.3) { rng.random() } else { 0.0 }).collect();
        for _ in 0..3 {
            let (bx, by) = (rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
            for (i, d) in data.iter_mut().enumerate() {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                *d += 3.0 * (-((x - bx).powi(2) + (y - by).powi(2)) / 30.0).exp() as f32;
            }
        }
        let img = WeightImage { width: w, height: h, data };
        let win = Rect::new(rng.random_range(0..w as i32 - 5), rng.random_range(0..h as i32 - 5), rng.random_range(3..15), rng.random_range(3..15));
        let r = mean_shift(&img, win, 20, 1.0);
        if r.trace.windows(2).any(|p| p[1] < p[0]) {
            ms_bad += 1;
        }
    }

    let se = StructuringElement::default();
    let mut close_bad = 0;
    for _ in 0..200 {
        let p = rng.random_range(0.05..0.8);
        let m = Mask::from_fn(48, 36, |_, _| rng.random_bool(p));
        let c = close(&m, se);
        if close(&c, se) != c {
            close_bad += 1;
        }
    }
    check(
        worst_integral < 1e-2 && ms_bad == 0 && close_bad == 0,
        format!(
            "density worst |integral - 1| {worst_integral:.2e} over 20, mean-shift decreases {ms_bad}/200, closing not idempotent {close_bad}/200"
        ),
    )
}

fn activity_events(runs: &[(ScenarioName, &Run)]) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, run) in runs {
        let r = &run.report;
        match name {
            ScenarioName::ApproachBox | ScenarioName::OpenBox | ScenarioName::CarryBox | ScenarioName::NullWalk => {
                let scripted_ok = r.events_ok() && (*name != ScenarioName::NullWalk || run.events.is_empty());
                ok &= scripted_ok;
                let m: Vec<String> = r.events.iter().map(|m| format!("{:?} {}->{:?}", m.kind, m.scripted, m.detected)).collect();
                notes.push(format!("{name} [{}] spurious {}", m.join(" "), r.spurious_events.len()));
            }
            _ => {}
        }
        // state gate over every scenario
        let first_approach = run.events.iter().filter(|e| e.kind == EventKind::Approach).map(|e| e.frame_index).min();
        let gated = run
            .events
            .iter()
            .filter(|e| e.kind != EventKind::Approach)
            .all(|e| first_approach.is_some_and(|a| a <= e.frame_index));
        if !gated {
            ok = false;
            notes.push(format!("{name} fired Open/Carry without a prior Approach"));
        }
    }
    check(ok, notes.join("; "))
}

fn determinism(root: &Path) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in [ScenarioName::Walker, ScenarioName::CarryBox] {
        let dir = root.join(format!("{name}_det"));
        let cfg = run_synth(&Scenario::new(name, SEED), &dir).map_err(|e| e.to_string())?;
        let mut outs = Vec::new();
        for k in 0..2 {
            let c = PipelineConfig { output: dir.join(format!("run{k}")), ..cfg.clone() };
            run_pipeline(&c).map_err(|e| e.to_string())?;
            let blobs = std::fs::read(c.output.join(BLOBS_FILE)).map_err(|e| e.to_string())?;
            let events = std::fs::read(c.output.join(EVENTS_FILE)).map_err(|e| e.to_string())?;
            outs.push((blobs, events));
        }
        let same = outs[0] == outs[1];
        ok &= same;
        notes.push(format!("{name} {}", if same { "identical" } else { "DIFFERENT" }));
    }
    check(ok, notes.join(", "))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();

    let names = [
        ScenarioName::Walker,
        ScenarioName::OccludedArm,
        ScenarioName::ApproachBox,
        ScenarioName::OpenBox,
        ScenarioName::CarryBox,
        ScenarioName::NullWalk,
        ScenarioName::Starfish,
        ScenarioName::Background,
    ];
    let mut runs = Vec::new();
    for name in names {
        match run_scenario(root, name, "acc") {
            Ok(r) => runs.push((name, r)),
            Err(e) => {
                println!("acceptance: scenario {name} could not run: {e:#}");
                return ExitCode::FAILURE;
            }
        }
    }
    let get = |n: ScenarioName| &runs.iter().find(|(m, _)| *m == n).unwrap().1;
    let refs: Vec<(ScenarioName, &Run)> = runs.iter().map(|(n, r)| (*n, r)).collect();

    let results: Vec<(&str, Outcome)> = vec![
        ("1 throughput", throughput(get(ScenarioName::Walker))),
        ("2 background learning", background_learning()),
        ("3 tracking accuracy", tracking_accuracy(get(ScenarioName::Walker))),
        ("4 occlusion contract", occlusion(get(ScenarioName::OccludedArm))),
        ("5 oracle equivalence", oracle_equivalence()),
        ("6 numerical checks", numerical_checks()),
        ("7 activity events", activity_events(&refs)),
        ("8 determinism", determinism(root)),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(d) => println!("criterion {name}: PASS ({d})"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({d})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
