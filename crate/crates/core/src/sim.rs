//! Synthetic pedestrian scenes with rectangular occluders.
//!
//! Each scene places pedestrians (whole-body boxes) uniformly in the image,
//! derives their head and leg boxes from fixed body proportions, and drops an
//! occluder onto each pedestrian with probability `occlusion_rate`. Two
//! simulated detectors then look at the scene:
//!
//! - a part detector emitting `head` / `leg` boxes whose visible fraction is at
//!   least `visibility_threshold`;
//! - a whole-body baseline emitting `person` boxes under the same rule applied
//!   to the full body.
//!
//! Emitted boxes get zero-mean Gaussian noise with `sigma = noise_eta * size`
//! per coordinate, and confidence `conf_base - conf_penalty * (1 - visibility)`
//! plus Gaussian noise, clamped to `[0.001, 1]`.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed + index)`, so
//! a scene is a pure function of its config and index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, EvalConfig, EvalError, EvalReport, GroundTruth};
use crate::ffm::{self, Detection, FfmError, FusionConfig, NmsParams, RestoreRule, PERSON};
use crate::geometry::{BBox, GeometryError};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("could not place pedestrian {pedestrian} in scene {scene} after {attempts} attempts (max_body_iou too strict for the image size?)")]
    Placement { scene: usize, pedestrian: usize, attempts: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ffm(#[from] FfmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub img_w: f64,
    pub img_h: f64,
    pub n_pedestrians: usize,
    /// Body heights are uniform in this range.
    pub height_range: [f64; 2],
    /// Body width over body height.
    pub body_aspect: f64,
    /// Probability that a pedestrian receives an occluder.
    pub occlusion_rate: f64,
    pub visibility_threshold: f64,
    pub noise_eta: f64,
    pub conf_base: f64,
    pub conf_penalty: f64,
    pub conf_noise: f64,
    /// Occluder width as a fraction of the occluded body's width.
    pub occluder_width_range: [f64; 2],
    /// Occluder height as a fraction of the occluded body's height.
    pub occluder_height_range: [f64; 2],
    /// Occluder centers fall in this lower fraction of the body; 1 disables the bias.
    pub occluder_band: f64,
    /// Largest IoU allowed between two pedestrian bodies in one scene.
    pub max_body_iou: f64,
    pub max_placement_attempts: usize,
    pub seed: u64,
    pub n_scenes: usize,
    /// Image ids are `{sequence}/{index:04}`.
    pub sequence: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            img_w: 640.0,
            img_h: 480.0,
            n_pedestrians: 4,
            height_range: [80.0, 240.0],
            body_aspect: 0.41,
            occlusion_rate: 0.4,
            visibility_threshold: 0.5,
            noise_eta: 0.02,
            conf_base: 0.9,
            conf_penalty: 0.5,
            conf_noise: 0.05,
            occluder_width_range: [0.8, 1.6],
            occluder_height_range: [0.3, 0.6],
            occluder_band: 0.6,
            max_body_iou: 0.3,
            max_placement_attempts: 1000,
            seed: 0,
            n_scenes: 1,
            sequence: "sim".into(),
        }
    }
}

fn check(ok: bool, field: &'static str, reason: impl FnOnce() -> String) -> Result<(), SimError> {
    if ok {
        Ok(())
    } else {
        Err(SimError::InvalidConfig { field, reason: reason() })
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn range_ok(r: [f64; 2]) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        check(self.img_w.is_finite() && self.img_w > 0.0, "img_w", || format!("must be positive, got {}", self.img_w))?;
        check(self.img_h.is_finite() && self.img_h > 0.0, "img_h", || format!("must be positive, got {}", self.img_h))?;
        check(range_ok(self.height_range) && self.height_range[1] <= self.img_h, "height_range", || {
            format!("must satisfy 0 < lo <= hi <= img_h ({}), got {:?}", self.img_h, self.height_range)
        })?;
        check(
            self.body_aspect.is_finite() && self.body_aspect > 0.0 && self.body_aspect * self.height_range[1] <= self.img_w,
            "body_aspect",
            || format!("must be positive with the widest body fitting in img_w, got {}", self.body_aspect),
        )?;
        check(unit(self.occlusion_rate), "occlusion_rate", || format!("must lie in [0, 1], got {}", self.occlusion_rate))?;
        check(self.visibility_threshold > 0.0 && self.visibility_threshold <= 1.0, "visibility_threshold", || {
            format!("must lie in (0, 1], got {}", self.visibility_threshold)
        })?;
        check(self.noise_eta.is_finite() && self.noise_eta >= 0.0, "noise_eta", || {
            format!("must be non-negative, got {}", self.noise_eta)
        })?;
        check(self.conf_base > 0.0 && self.conf_base <= 1.0, "conf_base", || format!("must lie in (0, 1], got {}", self.conf_base))?;
        check(self.conf_penalty.is_finite() && self.conf_penalty >= 0.0, "conf_penalty", || {
            format!("must be non-negative, got {}", self.conf_penalty)
        })?;
        check(self.conf_noise.is_finite() && self.conf_noise >= 0.0, "conf_noise", || {
            format!("must be non-negative, got {}", self.conf_noise)
        })?;
        check(range_ok(self.occluder_width_range), "occluder_width_range", || {
            format!("must satisfy 0 < lo <= hi, got {:?}", self.occluder_width_range)
        })?;
        check(range_ok(self.occluder_height_range), "occluder_height_range", || {
            format!("must satisfy 0 < lo <= hi, got {:?}", self.occluder_height_range)
        })?;
        check(self.occluder_band > 0.0 && self.occluder_band <= 1.0, "occluder_band", || {
            format!("must lie in (0, 1], got {}", self.occluder_band)
        })?;
        check(unit(self.max_body_iou), "max_body_iou", || format!("must lie in [0, 1], got {}", self.max_body_iou))?;
        check(self.max_placement_attempts > 0, "max_placement_attempts", || "must be at least 1".into())?;
        check(self.n_scenes > 0, "n_scenes", || "must be at least 1".into())?;
        check(!self.sequence.is_empty() && !self.sequence.contains('/'), "sequence", || {
            format!("must be non-empty and contain no '/', got {:?}", self.sequence)
        })?;
        Ok(())
    }
}

/// Head box of a body: `(cx, cy - 2H/5, W/2, H/5)`.
pub fn derive_head(body: &BBox) -> Result<BBox, GeometryError> {
    let h = body.h() / 5.0;
    BBox::new(body.cx(), body.cy() - 2.0 * h, body.w() / 2.0, h)
}

/// Leg box of a body: `(cx, cy + H/4, 3W/4, H/2)`.
pub fn derive_leg(body: &BBox) -> Result<BBox, GeometryError> {
    let h = body.h() / 2.0;
    BBox::new(body.cx(), body.cy() + 0.5 * h, 0.75 * body.w(), h)
}

/// Fraction of `part` not covered by the union of `occluders`.
pub fn visibility(part: &BBox, occluders: &[BBox]) -> f64 {
    let [px1, py1, px2, py2] = part.corners();
    let clipped: Vec<[f64; 4]> = occluders
        .iter()
        .map(|o| [o.x1().max(px1), o.y1().max(py1), o.x2().min(px2), o.y2().min(py2)])
        .filter(|c| c[2] > c[0] && c[3] > c[1])
        .collect();
    if clipped.is_empty() {
        return 1.0;
    }
    let mut xs: Vec<f64> = clipped.iter().flat_map(|c| [c[0], c[2]]).collect();
    let mut ys: Vec<f64> = clipped.iter().flat_map(|c| [c[1], c[3]]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut covered = 0.0;
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let inside = clipped.iter().any(|c| c[0] <= xw[0] && xw[1] <= c[2] && c[1] <= yw[0] && yw[1] <= c[3]);
            if inside {
                covered += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    let area = (px2 - px1) * (py2 - py1);
    (1.0 - covered / area).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub id: usize,
    pub body: BBox,
    pub head: BBox,
    pub leg: BBox,
    /// Index into the scene's occluders, if this pedestrian received one.
    pub occluder: Option<usize>,
    pub head_visibility: f64,
    pub leg_visibility: f64,
    pub body_visibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub seed: u64,
    pub pedestrians: Vec<Pedestrian>,
    pub occluders: Vec<BBox>,
    /// Head and leg boxes of every pedestrian.
    pub part_gts: Vec<GroundTruth>,
    pub body_gts: Vec<GroundTruth>,
    pub part_detections: Vec<Detection>,
    pub baseline_detections: Vec<Detection>,
}

fn lerp(lo: f64, hi: f64, u: f64) -> f64 {
    lo + (hi - lo) * u
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lerp(lo, hi, self.rng.random::<f64>())
    }

    fn normal(&mut self, sigma: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        sigma * z
    }

    fn noisy_box(&mut self, b: &BBox, eta: f64) -> Result<BBox, GeometryError> {
        let cx = b.cx() + self.normal(eta * b.w());
        let cy = b.cy() + self.normal(eta * b.h());
        // keep a sliver of the true size so extreme draws stay valid
        let w = (b.w() + self.normal(eta * b.w())).max(0.05 * b.w());
        let h = (b.h() + self.normal(eta * b.h())).max(0.05 * b.h());
        BBox::new(cx, cy, w, h)
    }

    fn conf(&mut self, cfg: &SceneConfig, vis: f64) -> f64 {
        let raw = cfg.conf_base - cfg.conf_penalty * (1.0 - vis) + self.normal(cfg.conf_noise);
        raw.clamp(0.001, 1.0)
    }
}

/// Scene `index` of the batch described by `cfg`.
pub fn generate_scene(cfg: &SceneConfig, index: usize) -> Result<Scene, SimError> {
    cfg.validate()?;
    let seed = cfg.seed.wrapping_add(index as u64);
    let mut s = Sampler { rng: ChaCha8Rng::seed_from_u64(seed) };
    let image_id = format!("{}/{:04}", cfg.sequence, index);

    let mut bodies: Vec<BBox> = Vec::with_capacity(cfg.n_pedestrians);
    for pedestrian in 0..cfg.n_pedestrians {
        let mut placed = None;
        for _ in 0..cfg.max_placement_attempts {
            let h = s.uniform(cfg.height_range[0], cfg.height_range[1]);
            let w = cfg.body_aspect * h;
            let cx = s.uniform(w / 2.0, cfg.img_w - w / 2.0);
            let cy = s.uniform(h / 2.0, cfg.img_h - h / 2.0);
            let body = BBox::new(cx, cy, w, h)?;
            if bodies.iter().all(|b| b.iou(&body) <= cfg.max_body_iou) {
                placed = Some(body);
                break;
            }
        }
        let body = placed.ok_or(SimError::Placement { scene: index, pedestrian, attempts: cfg.max_placement_attempts })?;
        bodies.push(body);
    }

    let mut occluders = Vec::new();
    let mut assigned = vec![None; bodies.len()];
    for (i, body) in bodies.iter().enumerate() {
        if s.rng.random::<f64>() >= cfg.occlusion_rate {
            continue;
        }
        let w = body.w() * s.uniform(cfg.occluder_width_range[0], cfg.occluder_width_range[1]);
        let h = body.h() * s.uniform(cfg.occluder_height_range[0], cfg.occluder_height_range[1]);
        let cx = body.cx() + body.w() * s.uniform(-0.5, 0.5);
        let cy = s.uniform(body.y2() - cfg.occluder_band * body.h(), body.y2());
        assigned[i] = Some(occluders.len());
        occluders.push(BBox::new(cx, cy, w, h)?);
    }

    let mut pedestrians = Vec::with_capacity(bodies.len());
    let mut part_gts = Vec::new();
    let mut body_gts = Vec::new();
    let mut part_detections = Vec::new();
    let mut baseline_detections = Vec::new();
    for (id, body) in bodies.into_iter().enumerate() {
        let head = derive_head(&body)?;
        let leg = derive_leg(&body)?;
        let p = Pedestrian {
            id,
            body,
            head,
            leg,
            occluder: assigned[id],
            head_visibility: visibility(&head, &occluders),
            leg_visibility: visibility(&leg, &occluders),
            body_visibility: visibility(&body, &occluders),
        };
        body_gts.push(GroundTruth::new(&image_id, PERSON, body));
        for (class, part, vis) in [("head", head, p.head_visibility), ("leg", leg, p.leg_visibility)] {
            part_gts.push(GroundTruth::new(&image_id, class, part));
            if vis >= cfg.visibility_threshold {
                let b = s.noisy_box(&part, cfg.noise_eta)?;
                let conf = s.conf(cfg, vis);
                part_detections.push(Detection::new(&image_id, class, b, conf)?);
            }
        }
        if p.body_visibility >= cfg.visibility_threshold {
            let b = s.noisy_box(&body, cfg.noise_eta)?;
            let conf = s.conf(cfg, p.body_visibility);
            baseline_detections.push(Detection::new(&image_id, PERSON, b, conf)?);
        }
        pedestrians.push(p);
    }

    Ok(Scene { image_id, seed, pedestrians, occluders, part_gts, body_gts, part_detections, baseline_detections })
}

/// The first scene of `cfg`.
pub fn generate(cfg: &SceneConfig) -> Result<Scene, SimError> {
    generate_scene(cfg, 0)
}

/// All `n_scenes` scenes, generated independently.
pub fn generate_batch(exec: Execution, cfg: &SceneConfig) -> Result<Vec<Scene>, SimError> {
    cfg.validate()?;
    par::map_range(exec, cfg.n_scenes, |i| generate_scene(cfg, i)).into_iter().collect()
}

/// Settings for running both detectors' outputs through evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineSettings {
    pub rules: Vec<RestoreRule>,
    pub fusion: FusionConfig,
    pub nms: NmsParams,
    pub eval: EvalConfig,
}

impl PipelineSettings {
    pub fn standard() -> Self {
        Self { rules: ffm::default_rules(), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineComparison {
    pub ffm_detections: Vec<Detection>,
    pub ffm: EvalReport,
    pub baseline: EvalReport,
}

/// Evaluates fused part detections and the whole-body baseline against the
/// same body ground truth. Both streams pass through the same NMS.
pub fn compare_pipelines(exec: Execution, scenes: &[Scene], settings: &PipelineSettings) -> Result<PipelineComparison, SimError> {
    let parts: Vec<Detection> = scenes.iter().flat_map(|s| s.part_detections.iter().cloned()).collect();
    let baseline: Vec<Detection> = scenes.iter().flat_map(|s| s.baseline_detections.iter().cloned()).collect();
    let gts: Vec<GroundTruth> = scenes.iter().flat_map(|s| s.body_gts.iter().cloned()).collect();
    let fused = ffm::run_ffm_with(exec, &parts, &settings.rules, &settings.fusion, &settings.nms)?;
    let baseline = ffm::nms(&baseline, settings.nms.iou_thr, settings.nms.conf_thr);
    Ok(PipelineComparison {
        ffm: eval::evaluate_run_with(exec, &fused, &gts, &settings.eval)?,
        baseline: eval::evaluate_run_with(exec, &baseline, &gts, &settings.eval)?,
        ffm_detections: fused,
    })
}
