//! Acceptance suite: one PASS/FAIL line per criterion, each under its time budget.
//! Exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ffm_core::complexity::{self, builtin, compare, summarize, LayerSpec, ParamConvention};
use ffm_core::eval::{average_precision, match_detections, ApMode, GroundTruth, Label, Scored};
use ffm_core::ffm::RestoreRule;
use ffm_core::losses::{loss_gradient, BoxPair};
use ffm_core::micro_nn::{conv2d_counted, ghost_counted, se_counted, ConvKernelSet, FeatureMap, GhostModule, SEWeights};
use ffm_core::schedule::{emit_schedule, lr_at, ScheduleConfig};
use ffm_core::sim::{self, compare_pipelines, derive_head, derive_leg, PipelineSettings, SceneConfig};
use ffm_core::{BBox, Detection, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn restore_round_trip() -> Check {
    let mut r = rng(1);
    let (head, leg) = (RestoreRule::head(), RestoreRule::leg());
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let body = BBox::new(
            r.random_range(-2000.0..2000.0),
            r.random_range(-2000.0..2000.0),
            r.random_range(0.5..1000.0),
            r.random_range(0.5..1000.0),
        )
        .unwrap();
        let back = [
            head.apply(&derive_head(&body).unwrap()).unwrap(),
            leg.apply(&derive_leg(&body).unwrap()).unwrap(),
        ];
        for b in back {
            for (x, y) in [(b.cx(), body.cx()), (b.cy(), body.cy()), (b.w(), body.w()), (b.h(), body.h())] {
                worst = worst.max((x - y).abs());
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("10000 bodies, max deviation {worst:e}"))
}

fn ghost_ratio_and_macs() -> Check {
    let (exact, approx) = complexity::speedup_ratio(&LayerSpec::ghost(64, 64, 3, 1, 20, 20, 2, 3)).map_err(|e| e.to_string())?;
    let target = 128.0 / 65.0;
    ensure((exact - target).abs() <= 1e-12 && (approx - target).abs() <= 1e-12, || {
        format!("exact {exact}, approx {approx}, expected {target}")
    })?;

    let mut r = rng(2);
    for _ in 0..100 {
        let s = r.random_range(1..6usize);
        let n = r.random_range(1..8usize);
        let spec = LayerSpec::ghost(r.random_range(1..1024), s * r.random_range(1..128), n, r.random_range(1..3), 40, 40, s, n);
        let (exact, approx) = complexity::speedup_ratio(&spec).map_err(|e| e.to_string())?;
        ensure(exact == approx, || format!("{spec:?}: exact {exact} != approx {approx}"))?;
    }

    let mut checked = 0;
    for _ in 0..100 {
        let (c1, c2, n) = (r.random_range(1..6usize), r.random_range(1..6usize), r.random_range(1..6usize));
        let (stride, pad) = (r.random_range(1..3usize), r.random_range(0..3usize));
        let (h, w) = (r.random_range(6..14usize), r.random_range(6..14usize));
        let x = FeatureMap::random(h, w, c1, &mut r).unwrap();
        let k = ConvKernelSet::random(c2, c1, n, &mut r).unwrap();
        let observed = conv2d_counted(&x, &k, stride, pad).unwrap().macs;
        let analytical = complexity::conv_flops(&LayerSpec::conv(c1, c2, n, stride, h, w).with_pad(pad)).unwrap();
        ensure(observed == analytical, || format!("conv {c1}->{c2} k{n}: {observed} != {analytical}"))?;

        let (s, m, l) = (r.random_range(1..4usize), r.random_range(1..4usize), 2 * r.random_range(0..3usize) + 1);
        let g = GhostModule::random(c1, s * m, n, s, l, &mut r).unwrap();
        let observed = ghost_counted(&x, &g, stride, n / 2).unwrap().macs;
        let analytical = complexity::ghost_flops(&LayerSpec::ghost(c1, s * m, n, stride, h, w, s, l).with_pad(n / 2)).unwrap();
        ensure(observed == analytical, || format!("ghost {c1}->{} s{s}: {observed} != {analytical}", s * m))?;

        let (hidden, red) = (r.random_range(1..5usize), r.random_range(1..5usize));
        let xs = FeatureMap::random(h, w, hidden * red, &mut r).unwrap();
        let sw = SEWeights::random(hidden * red, red, &mut r).unwrap();
        let observed = se_counted(&xs, &sw).unwrap().macs;
        let analytical = complexity::se_flops(&LayerSpec::se(hidden * red, red, h, w)).unwrap();
        ensure(observed == analytical, || format!("se c{} r{red}: {observed} != {analytical}", hidden * red))?;
        checked += 3;
    }
    Ok(format!("ratio {exact:.6} = 128/65; 100 l = n specs exact; {checked} layers MAC-identical"))
}

fn model_totals() -> Check {
    let base = summarize(&builtin("yolov5s-baseline").unwrap(), ParamConvention::BatchNorm).map_err(|e| e.to_string())?;
    let ghost = summarize(&builtin("yolov5s-ghost-neck").unwrap(), ParamConvention::BatchNorm).map_err(|e| e.to_string())?;
    let published = 7_012_822.0;
    let rel = (base.total_params as f64 - published).abs() / published;
    ensure(rel <= 0.02, || format!("baseline params {} off by {:.2}%", base.total_params, 100.0 * rel))?;
    let d = compare(&base, &ghost);
    let (p, f) = (100.0 * d.param_reduction, 100.0 * d.flops_reduction);
    ensure((p - 28.8).abs() <= 2.0, || format!("param reduction {p:.2}%"))?;
    ensure((f - 19.6).abs() <= 2.0, || format!("FLOPs reduction {f:.2}%"))?;
    Ok(format!(
        "baseline {} params ({:+.3}%), ghost-neck -{p:.2}% params, -{f:.2}% FLOPs",
        base.total_params,
        100.0 * (base.total_params as f64 - published) / published
    ))
}

/// FFM AP minus baseline AP measured on the first run of this scenario
/// (1.000 vs 0.955), pinned just below as a regression floor.
const OCCLUSION_MARGIN_FLOOR: f64 = 0.04;

fn occlusion_robustness() -> Check {
    let cfg = SceneConfig { n_scenes: 50, n_pedestrians: 4, occlusion_rate: 0.4, noise_eta: 0.02, seed: 0, ..Default::default() };
    let scenes = sim::generate_batch(Execution::default(), &cfg).map_err(|e| e.to_string())?;
    let total: usize = scenes.iter().map(|s| s.pedestrians.len()).sum();
    ensure(total == 200, || format!("{total} pedestrians"))?;
    let c = compare_pipelines(Execution::default(), &scenes, &PipelineSettings::standard()).map_err(|e| e.to_string())?;
    let (ffm, base) = (c.ffm.mean_ap.unwrap(), c.baseline.mean_ap.unwrap());
    ensure(ffm > base, || format!("FFM AP {ffm:.4} does not exceed baseline {base:.4}"))?;
    ensure(ffm - base >= OCCLUSION_MARGIN_FLOOR, || {
        format!("margin {:.4} below pinned floor {OCCLUSION_MARGIN_FLOOR}", ffm - base)
    })?;
    Ok(format!("FFM AP {ffm:.4} > baseline AP {base:.4} (margin {:.4}, floor {OCCLUSION_MARGIN_FLOOR})", ffm - base))
}

fn noise_free_sanity() -> Check {
    let cfg = SceneConfig { n_scenes: 50, occlusion_rate: 0.0, noise_eta: 0.0, seed: 0, ..Default::default() };
    let scenes = sim::generate_batch(Execution::default(), &cfg).map_err(|e| e.to_string())?;
    let c = compare_pipelines(Execution::default(), &scenes, &PipelineSettings::standard()).map_err(|e| e.to_string())?;
    let gts: Vec<&GroundTruth> = scenes.iter().flat_map(|s| &s.body_gts).collect();
    ensure(c.ffm_detections.len() == gts.len(), || format!("{} fused vs {} GT", c.ffm_detections.len(), gts.len()))?;
    let mut unmatched: Vec<&GroundTruth> = gts.clone();
    let mut worst: f64 = 0.0;
    for d in &c.ffm_detections {
        let pos = unmatched.iter().position(|g| {
            g.image_id == d.image_id && g.bbox.corners().iter().zip(d.bbox.corners()).all(|(a, b)| (a - b).abs() <= 1e-9)
        });
        match pos {
            Some(i) => {
                let g = unmatched.swap_remove(i);
                for (a, b) in g.bbox.corners().iter().zip(d.bbox.corners()) {
                    worst = worst.max((a - b).abs());
                }
            }
            None => return Err(format!("fused box {:?} in {} matches no GT", d.bbox.corners(), d.image_id)),
        }
    }
    let ap = c.ffm.mean_ap.unwrap();
    ensure(ap == 1.0, || format!("mean AP {ap}"))?;
    Ok(format!("{} fused boxes equal body GT (max corner deviation {worst:e}), mean AP {ap}", gts.len()))
}

/// Smallest distance between any predicted edge and any target edge on the
/// same axis; the loss has a kink wherever two of them coincide.
fn min_edge_gap(a: &BBox, b: &BBox) -> f64 {
    let xs = |r: &BBox| [r.x1(), r.x2()];
    let ys = |r: &BBox| [r.y1(), r.y2()];
    let mut gap = f64::INFINITY;
    for (pa, pb) in [(xs(a), xs(b)), (ys(a), ys(b))] {
        for u in pa {
            for v in pb {
                gap = gap.min((u - v).abs());
            }
        }
    }
    gap
}

fn wiou_gradient_check() -> Check {
    let mut r = rng(6);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 1000 {
        let mk = |r: &mut ChaCha8Rng| {
            BBox::new(r.random_range(0.0..60.0), r.random_range(0.0..60.0), r.random_range(2.0..50.0), r.random_range(2.0..50.0)).unwrap()
        };
        let (pred, gt) = (mk(&mut r), mk(&mut r));
        if pred.intersection_area(&gt) <= 0.0 || min_edge_gap(&pred, &gt) < 1e-4 {
            continue;
        }
        let p = BoxPair::new(pred, gt);
        let analytic = loss_gradient(&p).map_err(|e| e.to_string())?;
        let e = pred.enclosing(&gt);
        let d = e.w() * e.w() + e.h() * e.h();
        let loss = |v: [f64; 4]| {
            let b = BBox::new(v[0], v[1], v[2], v[3]).unwrap();
            let dist = (b.cx() - gt.cx()).powi(2) + (b.cy() - gt.cy()).powi(2);
            (dist / d).exp() * (1.0 - b.iou(&gt))
        };
        let base = [pred.cx(), pred.cy(), pred.w(), pred.h()];
        let mut fd = [0.0; 4];
        for k in 0..4 {
            let (mut hi, mut lo) = (base, base);
            hi[k] += step;
            lo[k] -= step;
            fd[k] = (loss(hi) - loss(lo)) / (2.0 * step);
        }
        let num = (0..4).map(|k| (analytic[k] - fd[k]).abs()).fold(0.0, f64::max);
        let den = fd.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let rel = if den == 0.0 { num } else { num / den };
        ensure(rel <= 1e-4, || format!("pair {pairs}: relative error {rel:e}, analytic {analytic:?}, fd {fd:?}"))?;
        worst = worst.max(rel);
        pairs += 1;
    }
    Ok(format!("1000 overlapping pairs, worst relative error {worst:e}"))
}

fn brute_force_ap(labels: &[Scored], n_gt: usize) -> f64 {
    let kept: Vec<&Scored> = labels.iter().filter(|s| s.label != Label::Ignored).collect();
    let mut thresholds: Vec<f64> = kept.iter().map(|s| s.conf).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pr: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let above: Vec<&&Scored> = kept.iter().filter(|s| s.conf >= t).collect();
            let tp = above.iter().filter(|s| s.label == Label::Tp).count();
            (tp as f64 / n_gt as f64, tp as f64 / above.len() as f64)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for &(rec, _) in &pr {
        let interp = pr.iter().filter(|(r2, _)| *r2 >= rec).map(|(_, p)| *p).fold(0.0, f64::max);
        ap += (rec - prev) * interp;
        prev = rec;
    }
    ap
}

fn ap_oracle() -> Check {
    let mut r = rng(7);
    let mut instances = 0;
    while instances < 500 {
        let mk = |r: &mut ChaCha8Rng| {
            let (x, y) = (r.random_range(0..6) as f64, r.random_range(0..6) as f64);
            BBox::from_corners(x, y, x + r.random_range(1..4) as f64, y + r.random_range(1..4) as f64).unwrap()
        };
        let n_gt = r.random_range(1..8);
        let gts: Vec<GroundTruth> = (0..n_gt)
            .map(|_| {
                let ignore = r.random_bool(0.15);
                GroundTruth { ignore, ..GroundTruth::new("img", "person", mk(&mut r)) }
            })
            .collect();
        let n_det = r.random_range(0..=20);
        let dets: Vec<Detection> = (0..n_det)
            .map(|_| Detection::new("img", "person", mk(&mut r), 0.1 + r.random_range(0..5) as f64 / 5.0).unwrap())
            .collect();
        let counted = gts.iter().filter(|g| !g.ignore).count();
        if counted == 0 {
            continue;
        }
        let labels = match_detections(&dets, &gts, 0.5);
        let scored: Vec<Scored> = dets.iter().zip(&labels).map(|(d, &label)| Scored { conf: d.conf, label }).collect();
        let fast = average_precision(&scored, counted, ApMode::AllPoint).map_err(|e| e.to_string())?;
        let slow = brute_force_ap(&scored, counted);
        ensure(fast == slow, || format!("instance {instances}: envelope {fast} != brute force {slow}"))?;
        instances += 1;
    }
    let fixture = [Scored { conf: 0.9, label: Label::Fp }, Scored { conf: 0.8, label: Label::Tp }];
    let ap = average_precision(&fixture, 1, ApMode::AllPoint).map_err(|e| e.to_string())?;
    ensure(ap == 0.5, || format!("fixture AP {ap}"))?;
    Ok("500 instances identical to brute force; fixture AP = 0.5".into())
}

fn lr_schedule() -> Check {
    let cfg = ScheduleConfig::default();
    let at3 = lr_at(&cfg, 3).map_err(|e| e.to_string())?;
    ensure(at3 == 0.01, || format!("epoch 3: {at3}"))?;
    let rows = emit_schedule(&cfg).map_err(|e| e.to_string())?;
    ensure(rows.len() == 50, || format!("{} rows", rows.len()))?;
    let last = rows[49].1;
    ensure(last == cfg.lr_final(), || format!("final {last} != {}", cfg.lr_final()))?;
    ensure(rows[..=3].windows(2).all(|w| w[1].1 > w[0].1), || "warmup not strictly increasing".into())?;
    ensure(rows[3..].windows(2).all(|w| w[1].1 < w[0].1), || "cosine tail not strictly decreasing".into())?;
    Ok(format!("epoch 3 = {at3}, epoch 49 = {last}, shape monotone"))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_ffm")).args(args).current_dir(cwd).output().map_err(|e| e.to_string())?;
    ensure(o.status.success(), || format!("ffm {}: {}", args.join(" "), String::from_utf8_lossy(&o.stderr)))
}

const OUTPUTS: &[&str] = &[
    "sim/gt.jsonl",
    "sim/part_dets.jsonl",
    "sim/body_dets.jsonl",
    "sim/manifest.json",
    "fused.jsonl",
    "report.json",
    "flops.json",
    "lr.csv",
];

/// SHA-256 over every output of [`cli_session`], pinned from the first run so
/// that any platform producing different bytes fails.
const GOLDEN_SHA256: &str = "c15b338045ec48c8495f67d11ffd560afeb15390ab7379559ae04e16bb1b17f7";

fn cli_session(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    fs::write(dir.join("scene.json"), r#"{"seed":7,"n_scenes":20}"#).map_err(|e| e.to_string())?;
    run_cli(&["simulate", "--config", "scene.json", "--out", "sim"], dir)?;
    run_cli(&["ffm", "--dets", "sim/part_dets.jsonl", "--out", "fused.jsonl"], dir)?;
    run_cli(&["eval", "--dets", "fused.jsonl", "--dets", "sim/body_dets.jsonl", "--gt", "sim/gt.jsonl", "--report", "report.json"], dir)?;
    run_cli(&["flops", "--builtin", "yolov5s-baseline", "--compare", "yolov5s-ghost-neck", "--json", "flops.json"], dir)?;
    run_cli(&["lr", "--out", "lr.csv"], dir)?;
    OUTPUTS.iter().map(|f| fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))).collect()
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = cli_session(a.path())?;
    let second = cli_session(b.path())?;
    for (name, (x, y)) in OUTPUTS.iter().zip(first.iter().zip(&second)) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    let mut h = Sha256::new();
    for (name, bytes) in OUTPUTS.iter().zip(&first) {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    let digest: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    ensure(digest == GOLDEN_SHA256, || format!("output digest {digest} != golden {GOLDEN_SHA256}"))?;
    Ok(format!("{} files byte-identical across runs, sha256 {}", OUTPUTS.len(), &digest[..16]))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check, Duration); 9] = [
        ("1 restore round trip", restore_round_trip, Duration::from_secs(1)),
        ("2 ghost ratio and MAC counts", ghost_ratio_and_macs, Duration::from_secs(30)),
        ("3 model parameter and FLOPs deltas", model_totals, Duration::from_secs(5)),
        ("4 occlusion robustness", occlusion_robustness, Duration::from_secs(60)),
        ("5 noise-free sanity", noise_free_sanity, Duration::from_secs(10)),
        ("6 WIoU gradient check", wiou_gradient_check, Duration::from_secs(10)),
        ("7 AP oracle equivalence", ap_oracle, Duration::from_secs(10)),
        ("8 learning-rate schedule", lr_schedule, Duration::from_secs(1)),
        // no runtime limit is set for determinism; a generous ceiling keeps CI honest
        ("9 CLI determinism", determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail}; {took:.2?})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why}; {took:.2?})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
