//! `ffm`: simulate occluded pedestrians, fuse part detections, evaluate AP, and
//! inspect model complexity, learning-rate schedules and box losses.
//!
//! Exit status: 0 on success, 2 for invalid flags or configuration, 1 for any
//! other failure.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ffm_core::complexity::{self, ModelSpec, ParamConvention};
use ffm_core::eval::{self, ApMode, EvalConfig};
use ffm_core::io::{self, ConfigError, RunConfig};
use ffm_core::losses::{self, BoxPair};
use ffm_core::micro_nn::{self, ConvKernelSet, FeatureMap, GhostModule, SEWeights};
use ffm_core::schedule::{self, ScheduleConfig};
use ffm_core::sim::{self, SceneConfig};
use ffm_core::{BBox, Execution};

#[derive(Parser)]
#[command(name = "ffm", version, about = "Part-based pedestrian box fusion toolkit")]
struct Cli {
    /// Run all work on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes: gt.jsonl, part_dets.jsonl, body_dets.jsonl, manifest.json.
    Simulate {
        /// Scene configuration (JSON); omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore and fuse part detections into whole-body detections.
    Ffm {
        /// Part detections (JSONL).
        #[arg(long)]
        dets: PathBuf,
        /// Run configuration (JSON): restore_rules, fusion, nms, eval.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fused detections (JSONL).
        #[arg(long)]
        out: PathBuf,
    },
    /// Average precision of one or more detection files against ground truth.
    Eval {
        /// Detections (JSONL); repeat to compare several runs.
        #[arg(long, required = true)]
        dets: Vec<PathBuf>,
        /// Ground truth (JSONL).
        #[arg(long)]
        gt: PathBuf,
        /// Matching IoU threshold; overrides the run configuration.
        #[arg(long)]
        iou: Option<f64>,
        /// AP interpolation; overrides the run configuration.
        #[arg(long, value_enum)]
        ap_mode: Option<ApModeArg>,
        /// Run configuration (JSON); only its `eval` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON report destination.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parameter and FLOPs totals of a layer-list model.
    Flops {
        /// Model spec (JSON).
        #[arg(long, conflicts_with = "builtin", required_unless_present_any = ["builtin", "list"])]
        model: Option<PathBuf>,
        /// A shipped model spec by name (see --list).
        #[arg(long)]
        builtin: Option<String>,
        /// List shipped model specs and exit.
        #[arg(long, exclusive = true)]
        list: bool,
        /// Report FLOPs as 2 x MACs.
        #[arg(long)]
        flops: bool,
        #[arg(long, value_enum, default_value = "batch-norm")]
        convention: ConventionArg,
        /// Second model to report the relative change against the first.
        #[arg(long)]
        compare: Option<String>,
        /// Cross-check every conv, ghost and SE layer against the reference forward pass.
        #[arg(long)]
        verify: bool,
        /// Spatial size cap for --verify inputs.
        #[arg(long, default_value_t = 8)]
        verify_size: usize,
        /// JSON report destination.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Per-epoch learning rates as CSV.
    Lr {
        /// Schedule configuration (JSON); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        peak: Option<f64>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        final_fraction: Option<f64>,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss (and optionally its gradient) for one predicted/ground-truth pair.
    Loss {
        /// Predicted box as cx,cy,w,h.
        #[arg(long, allow_hyphen_values = true)]
        pred: String,
        /// Ground-truth box as cx,cy,w,h.
        #[arg(long, allow_hyphen_values = true)]
        gt: String,
        #[arg(long, value_enum, default_value = "wiou")]
        kind: LossKind,
        /// Read boxes as x1,y1,x2,y2.
        #[arg(long)]
        corners: bool,
        /// Also print the gradient with respect to the predicted cx, cy, w, h.
        #[arg(long)]
        grad: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ApModeArg {
    AllPoint,
    ElevenPoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    BatchNorm,
    Fused,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossKind {
    Iou,
    Wiou,
}

enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, exec: Execution) -> Outcome {
    match command {
        Command::Simulate { config, seed, out } => simulate(exec, config.as_deref(), seed, &out),
        Command::Ffm { dets, config, out } => fuse(exec, &dets, config.as_deref(), &out),
        Command::Eval { dets, gt, iou, ap_mode, config, report } => {
            evaluate(exec, &dets, &gt, iou, ap_mode, config.as_deref(), report.as_deref())
        }
        Command::Flops { model, builtin, list, flops, convention, compare, verify, verify_size, json } => {
            if list {
                for name in complexity::builtin_names() {
                    println!("{name}");
                }
                return Ok(());
            }
            let convention = match convention {
                ConventionArg::BatchNorm => ParamConvention::BatchNorm,
                ConventionArg::Fused => ParamConvention::Fused,
            };
            let model = load_model(model.as_deref(), builtin.as_deref())?;
            flops_report(exec, &model, flops, convention, compare.as_deref(), verify.then_some(verify_size), json.as_deref())
        }
        Command::Lr { config, epochs, warmup, peak, start, final_fraction, out } => {
            let mut cfg = match &config {
                Some(path) => io::parse_schedule_config(&read_config(path)?)?,
                None => ScheduleConfig::default(),
            };
            cfg.total_epochs = epochs.unwrap_or(cfg.total_epochs);
            cfg.warmup_epochs = warmup.unwrap_or(cfg.warmup_epochs);
            cfg.lr_peak = peak.unwrap_or(cfg.lr_peak);
            cfg.lr_start = start.unwrap_or(cfg.lr_start);
            cfg.lr_final_fraction = final_fraction.unwrap_or(cfg.lr_final_fraction);
            lr(&cfg, out.as_deref())
        }
        Command::Loss { pred, gt, kind, corners, grad } => loss(&pred, &gt, kind, corners, grad),
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => Ok(io::parse_run_config(&read_config(p)?)?),
        None => Ok(RunConfig::default()),
    }
}

fn simulate(exec: Execution, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Outcome {
    let mut cfg = match config {
        Some(p) => io::parse_scene_config(&read_config(p)?)?,
        None => SceneConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let scenes = sim::generate_batch(exec, &cfg).map_err(|e| match e {
        sim::SimError::InvalidConfig { field, reason } => Failure::Config(format!("{field}: {reason}")),
        other => Failure::Runtime(other.into()),
    })?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let gts: Vec<_> = scenes.iter().flat_map(|s| s.body_gts.iter().cloned()).collect();
    let mut parts: Vec<_> = scenes.iter().flat_map(|s| s.part_detections.iter().cloned()).collect();
    let mut bodies: Vec<_> = scenes.iter().flat_map(|s| s.baseline_detections.iter().cloned()).collect();
    io::sort_canonical(&mut parts);
    io::sort_canonical(&mut bodies);

    let mut w = create(&out.join("gt.jsonl"))?;
    io::write_ground_truths(&mut w, &gts).context("writing gt.jsonl")?;
    w.flush()?;
    let mut w = create(&out.join("part_dets.jsonl"))?;
    io::write_detections(&mut w, &parts).context("writing part_dets.jsonl")?;
    w.flush()?;
    let mut w = create(&out.join("body_dets.jsonl"))?;
    io::write_detections(&mut w, &bodies).context("writing body_dets.jsonl")?;
    w.flush()?;

    let manifest = json!({
        "config": serde_json::to_value(&cfg).map_err(anyhow::Error::from)?,
        "rng": "ChaCha8, seed_from_u64(seed + scene index)",
        "scenes": scenes.iter().map(|s| json!({
            "image_id": s.image_id,
            "seed": s.seed,
            "pedestrians": s.pedestrians,
            "occluders": s.occluders,
        })).collect::<Vec<_>>(),
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "{} scenes, {} pedestrians, {} part detections, {} body detections -> {}",
        scenes.len(),
        gts.len(),
        parts.len(),
        bodies.len(),
        out.display()
    );
    Ok(())
}

fn fuse(exec: Execution, dets: &Path, config: Option<&Path>, out: &Path) -> Outcome {
    let cfg = load_run_config(config)?;
    let input = io::read_detections(open(dets)?).with_context(|| format!("reading {}", dets.display()))?;
    let fused = ffm_core::ffm::run_ffm_with(exec, &input, &cfg.restore_rules, &cfg.fusion, &cfg.nms)
        .map_err(anyhow::Error::from)?;
    let mut w = create(out)?;
    io::write_detections(&mut w, &fused).context("writing fused detections")?;
    w.flush().map_err(anyhow::Error::from)?;
    println!("{} part detections -> {} whole-body detections", input.len(), fused.len());
    Ok(())
}

fn evaluate(
    exec: Execution,
    dets: &[PathBuf],
    gt: &Path,
    iou: Option<f64>,
    ap_mode: Option<ApModeArg>,
    config: Option<&Path>,
    report: Option<&Path>,
) -> Outcome {
    let mut cfg: EvalConfig = load_run_config(config)?.eval;
    if let Some(iou) = iou {
        cfg.iou_threshold = iou;
    }
    if let Some(mode) = ap_mode {
        cfg.mode = match mode {
            ApModeArg::AllPoint => ApMode::AllPoint,
            ApModeArg::ElevenPoint => ApMode::ElevenPoint,
        };
    }
    cfg.validate().map_err(|e| Failure::Config(format!("iou: {e}")))?;
    let gts = io::read_ground_truths(open(gt)?).with_context(|| format!("reading {}", gt.display()))?;
    let mut runs = Vec::new();
    for path in dets {
        let d = io::read_detections(open(path)?).with_context(|| format!("reading {}", path.display()))?;
        let r = eval::evaluate_run_with(exec, &d, &gts, &cfg).map_err(anyhow::Error::from)?;
        println!("== {}", path.display());
        print!("{}", eval::render_table(&r));
        let mut value = serde_json::to_value(&r).map_err(anyhow::Error::from)?;
        value["name"] = json!(path.display().to_string());
        runs.push(value);
    }
    if let Some(report) = report {
        write_json(report, &json!({ "convention": cfg.convention(), "runs": runs }))?;
    }
    Ok(())
}

fn load_model(path: Option<&Path>, builtin: Option<&str>) -> Result<ModelSpec, Failure> {
    match (path, builtin) {
        (Some(p), _) => Ok(io::parse_json(&read_config(p)?)?),
        (None, Some(name)) => resolve_model_name(name),
        (None, None) => Err(Failure::Config("one of --model or --builtin is required".into())),
    }
}

/// A shipped model name, or else a path to a spec file.
fn resolve_model_name(name: &str) -> Result<ModelSpec, Failure> {
    if let Some(m) = complexity::builtin(name) {
        return Ok(m);
    }
    let path = Path::new(name);
    if path.exists() {
        return Ok(io::parse_json(&read_config(path)?)?);
    }
    let known: Vec<&str> = complexity::builtin_names().collect();
    Err(Failure::Config(format!("unknown model {name:?}; shipped models: {}", known.join(", "))))
}

fn flops_report(
    exec: Execution,
    model: &ModelSpec,
    as_flops: bool,
    convention: ParamConvention,
    compare: Option<&str>,
    verify_size: Option<usize>,
    json_out: Option<&Path>,
) -> Outcome {
    let summarize = |m: &ModelSpec| complexity::summarize(m, convention).map_err(|e| Failure::Config(e.to_string()));
    let report = summarize(model)?;
    print!("{}", complexity::render_table(&report, as_flops));
    let mut out = json!({ "report": serde_json::to_value(&report).map_err(anyhow::Error::from)? });
    if let Some(other) = compare {
        let other = summarize(&resolve_model_name(other)?)?;
        let delta = complexity::compare(&report, &other);
        println!(
            "{} vs {}: params {} -> {} ({:+.2}%), MACs {} -> {} ({:+.2}%)",
            delta.base,
            delta.variant,
            delta.base_params,
            delta.variant_params,
            -100.0 * delta.param_reduction,
            delta.base_flops,
            delta.variant_flops,
            -100.0 * delta.flops_reduction
        );
        out["compare"] = serde_json::to_value(&delta).map_err(anyhow::Error::from)?;
    }
    if let Some(size) = verify_size {
        if size == 0 {
            return Err(Failure::Config("verify_size: must be at least 1".into()));
        }
        let mismatches = verify(exec, model, size)?;
        if !mismatches.is_empty() {
            for m in &mismatches {
                eprintln!("{m}");
            }
            return Err(Failure::Runtime(anyhow::anyhow!("{} layer(s) disagree with the reference forward pass", mismatches.len())));
        }
        println!("verify: analytical MACs match the reference forward pass on every conv, ghost and SE layer");
    }
    if let Some(path) = json_out {
        write_json(path, &out)?;
    }
    Ok(())
}

/// Runs each countable layer forward on random input, capped at `size` x `size`
/// spatially, and compares observed MACs with the analytical count.
fn verify(exec: Execution, model: &ModelSpec, size: usize) -> Result<Vec<String>, Failure> {
    use complexity::LayerKind;
    use rand::SeedableRng;

    let resolved = complexity::resolve(model).map_err(|e| Failure::Config(e.to_string()))?;
    let checks = ffm_core::par::map(exec, &resolved, |(layer, _)| -> anyhow::Result<Option<String>> {
        if !matches!(layer.kind, LayerKind::Conv | LayerKind::GhostConv | LayerKind::Se) {
            return Ok(None);
        }
        let mut spec = layer.clone();
        spec.in_h = spec.in_h.map(|h| h.min(size));
        spec.in_w = spec.in_w.map(|w| w.min(size));
        let (h, w, c1) = (spec.in_h.unwrap_or(1), spec.in_w.unwrap_or(1), spec.c1.unwrap_or(1));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = FeatureMap::random(h, w, c1, &mut rng)?;
        let stride = spec.stride.unwrap_or(1);
        let pad = spec.pad.unwrap_or(spec.n.unwrap_or(1) / 2);
        let (observed, analytical) = match layer.kind {
            LayerKind::Conv => {
                let k = ConvKernelSet::random(spec.c2.unwrap_or(1), c1, spec.n.unwrap_or(1), &mut rng)?;
                (micro_nn::conv2d_counted(&x, &k, stride, pad)?.macs, complexity::conv_flops(&spec)?)
            }
            LayerKind::GhostConv => {
                let g = GhostModule::random(
                    c1,
                    spec.c2.unwrap_or(1),
                    spec.n.unwrap_or(1),
                    spec.s.unwrap_or(1),
                    spec.l.unwrap_or(1),
                    &mut rng,
                )?;
                (micro_nn::ghost_counted(&x, &g, stride, pad)?.macs, complexity::ghost_flops(&spec)?)
            }
            _ => {
                let weights = SEWeights::random(c1, spec.r.unwrap_or(1), &mut rng)?;
                (micro_nn::se_counted(&x, &weights)?.macs, complexity::se_flops(&spec)?)
            }
        };
        let name = spec.name.clone().unwrap_or_else(|| spec.kind.to_string());
        Ok((observed != analytical).then(|| format!("{name}: analytical {analytical} != observed {observed}")))
    });
    let mut mismatches = Vec::new();
    for c in checks {
        if let Some(m) = c? {
            mismatches.push(m);
        }
    }
    Ok(mismatches)
}

fn lr(cfg: &ScheduleConfig, out: Option<&Path>) -> Outcome {
    let rows = schedule::emit_schedule(cfg).map_err(|e| match e {
        schedule::ScheduleError::InvalidConfig { field, reason } => Failure::Config(format!("{field}: {reason}")),
        other => Failure::Runtime(other.into()),
    })?;
    let mut csv = String::from("epoch,lr\n");
    for (epoch, lr) in rows {
        csv.push_str(&format!("{epoch},{lr}\n"));
    }
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn parse_box(text: &str, corners: bool, flag: &str) -> Result<BBox, Failure> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Config(format!("{flag}: {e}")))?;
    if v.len() != 4 {
        return Err(Failure::Config(format!("{flag}: expected 4 comma-separated numbers, got {}", v.len())));
    }
    let b = if corners { BBox::from_corners(v[0], v[1], v[2], v[3]) } else { BBox::new(v[0], v[1], v[2], v[3]) };
    b.map_err(|e| Failure::Config(format!("{flag}: {e}")))
}

fn loss(pred: &str, gt: &str, kind: LossKind, corners: bool, grad: bool) -> Outcome {
    let pair = BoxPair::new(parse_box(pred, corners, "pred")?, parse_box(gt, corners, "gt")?);
    let value = match kind {
        LossKind::Iou => losses::iou_loss(&pair),
        LossKind::Wiou => losses::wiou_loss(&pair),
    };
    println!("{value}");
    if grad {
        let g = match kind {
            LossKind::Iou => losses::iou_loss_gradient(&pair),
            LossKind::Wiou => losses::loss_gradient(&pair),
        };
        match g {
            Ok(g) => println!("d/dcx {}\nd/dcy {}\nd/dw {}\nd/dh {}", g[0], g[1], g[2], g[3]),
            Err(e) => bail_runtime(e)?,
        }
    }
    Ok(())
}

fn bail_runtime(e: impl std::error::Error + Send + Sync + 'static) -> Outcome {
    Err(Failure::Runtime(anyhow::Error::new(e)))
}
