//! Feature fusion: turn part detections (heads, legs) into whole-pedestrian boxes.
//!
//! The pipeline runs in three stages after a conventional NMS pass:
//!
//! 1. **classify** partitions the detections of an image by part class;
//! 2. **restore** maps every part box to a whole-body candidate using fixed body
//!    proportions ([`RestoreRule`]);
//! 3. **fuse** matches head-derived and leg-derived candidates one-to-one by IoU.
//!    A matched pair is the same person, so only its more confident member
//!    survives. Unmatched candidates are kept as occluded pedestrians.
//!
//! Each image is processed independently; [`run_ffm_with`] spreads images over
//! threads when the `parallel` feature is enabled.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError};
use crate::par::{self, Execution};

/// Class name given to restored whole-body boxes.
pub const PERSON: &str = "person";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FfmError {
    #[error("detection confidence must lie in (0, 1], got {0}")]
    InvalidConfidence(f64),
    #[error("detection class name must be non-empty")]
    EmptyClass,
    #[error("unknown detection class `{0}` (no restore rule and strict class checking is on)")]
    UnknownClass(String),
    #[error("more than one restore rule for part class `{0}`")]
    DuplicateRule(String),
    #[error("restore rule for `{rule}` applied to a `{part}` detection")]
    RuleMismatch { rule: String, part: String },
    #[error("restore rule for `{0}` must have positive width and height factors")]
    InvalidRule(String),
    #[error("threshold `{name}` must lie in [0, 1], got {value}")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A scored, class-tagged box on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_name: String,
    pub bbox: BBox,
    pub conf: f64,
    /// Fields carried through from the input record without interpretation.
    pub extra: Map<String, Value>,
}

impl Detection {
    pub fn new(
        image_id: impl Into<String>,
        class_name: impl Into<String>,
        bbox: BBox,
        conf: f64,
    ) -> Result<Self, FfmError> {
        let det = Self {
            image_id: image_id.into(),
            class_name: class_name.into(),
            bbox,
            conf,
            extra: Map::new(),
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<(), FfmError> {
        if !(self.conf > 0.0 && self.conf <= 1.0) {
            return Err(FfmError::InvalidConfidence(self.conf));
        }
        if self.class_name.is_empty() {
            return Err(FfmError::EmptyClass);
        }
        Ok(())
    }
}

/// Descending confidence, then box coordinates, then class name.
pub(crate) fn canonical_order(a: &Detection, b: &Detection) -> Ordering {
    b.conf
        .total_cmp(&a.conf)
        .then_with(|| a.bbox.total_cmp(&b.bbox))
        .then_with(|| a.class_name.cmp(&b.class_name))
}

/// Affine body proportions mapping a part box to the whole-body box.
///
/// `cx = part.cx + dx_factor * part.w`, `cy = part.cy + dy_factor * part.h`,
/// `w = w_factor * part.w`, `h = h_factor * part.h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestoreRule {
    pub part_class: String,
    pub dy_factor: f64,
    #[serde(default)]
    pub dx_factor: f64,
    pub w_factor: f64,
    pub h_factor: f64,
}

impl RestoreRule {
    /// Head box: the body center sits two head-heights lower; the body is two
    /// head-widths wide and five head-heights tall.
    pub fn head() -> Self {
        Self { part_class: "head".into(), dy_factor: 2.0, dx_factor: 0.0, w_factor: 2.0, h_factor: 5.0 }
    }

    /// Leg box: the body center sits half a leg-height higher; the body is 4/3 of
    /// the leg width and twice the leg height.
    pub fn leg() -> Self {
        Self {
            part_class: "leg".into(),
            dy_factor: -0.5,
            dx_factor: 0.0,
            w_factor: 4.0 / 3.0,
            h_factor: 2.0,
        }
    }

    pub fn identity(part_class: impl Into<String>) -> Self {
        Self { part_class: part_class.into(), dy_factor: 0.0, dx_factor: 0.0, w_factor: 1.0, h_factor: 1.0 }
    }

    pub fn validate(&self) -> Result<(), FfmError> {
        let finite = self.dy_factor.is_finite() && self.dx_factor.is_finite();
        if !finite || !(self.w_factor > 0.0 && self.w_factor.is_finite()) || !(self.h_factor > 0.0 && self.h_factor.is_finite()) {
            return Err(FfmError::InvalidRule(self.part_class.clone()));
        }
        Ok(())
    }

    /// Applies the rule to a bare box.
    pub fn apply(&self, part: &BBox) -> Result<BBox, GeometryError> {
        BBox::new(
            part.cx() + self.dx_factor * part.w(),
            part.cy() + self.dy_factor * part.h(),
            self.w_factor * part.w(),
            self.h_factor * part.h(),
        )
    }
}

/// Head and leg rules, in that order.
pub fn default_rules() -> Vec<RestoreRule> {
    vec![RestoreRule::head(), RestoreRule::leg()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Keep the head-derived (first set) candidate on equal confidence.
    #[default]
    PreferHead,
    /// Keep the leg-derived (second set) candidate on equal confidence.
    PreferLeg,
    /// Confidence decides; exact ties fall back to the head-derived candidate.
    PreferHigherConf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub iou_threshold: f64,
    pub tie_break: TieBreak,
    pub strict_classes: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, tie_break: TieBreak::PreferHead, strict_classes: false }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FfmError> {
        check_unit("iou_threshold", self.iou_threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsParams {
    pub conf_thr: f64,
    pub iou_thr: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self { conf_thr: 0.25, iou_thr: 0.45 }
    }
}

impl NmsParams {
    pub fn validate(&self) -> Result<(), FfmError> {
        check_unit("conf_thr", self.conf_thr)?;
        check_unit("iou_thr", self.iou_thr)
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), FfmError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FfmError::InvalidThreshold { name, value })
    }
}

/// Output of [`classify`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Classified {
    /// Detections per part class, in input order.
    pub by_class: BTreeMap<String, Vec<Detection>>,
    /// Detections whose class has no rule (lenient mode only).
    pub passthrough: Vec<Detection>,
}

/// Partitions detections by part class.
///
/// Every class named by a rule gets an entry, possibly empty, unless the input
/// is empty. With `strict`, a detection of a class without a rule is an error;
/// otherwise it lands in [`Classified::passthrough`].
pub fn classify(dets: &[Detection], rules: &[RestoreRule], strict: bool) -> Result<Classified, FfmError> {
    let mut out = Classified::default();
    for (i, rule) in rules.iter().enumerate() {
        if rules[..i].iter().any(|r| r.part_class == rule.part_class) {
            return Err(FfmError::DuplicateRule(rule.part_class.clone()));
        }
    }
    if dets.is_empty() {
        return Ok(out);
    }
    for rule in rules {
        out.by_class.insert(rule.part_class.clone(), Vec::new());
    }
    for det in dets {
        match out.by_class.get_mut(&det.class_name) {
            Some(set) => set.push(det.clone()),
            None if strict => return Err(FfmError::UnknownClass(det.class_name.clone())),
            None => out.passthrough.push(det.clone()),
        }
    }
    Ok(out)
}

/// Restores a part detection to a whole-body [`PERSON`] detection.
///
/// Confidence and image are copied unchanged.
pub fn restore(part: &Detection, rule: &RestoreRule) -> Result<Detection, FfmError> {
    if part.class_name != rule.part_class {
        return Err(FfmError::RuleMismatch { rule: rule.part_class.clone(), part: part.class_name.clone() });
    }
    Ok(Detection {
        image_id: part.image_id.clone(),
        class_name: PERSON.to_string(),
        bbox: rule.apply(&part.bbox)?,
        conf: part.conf,
        extra: Map::new(),
    })
}

/// Result of [`fuse_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    /// Surviving candidates in canonical order.
    pub kept: Vec<Detection>,
    /// Accepted `(head index, leg index)` pairs, in acceptance order.
    pub pairs: Vec<(usize, usize)>,
}

/// Fuses head-derived and leg-derived whole-body candidates.
pub fn fuse(heads: &[Detection], legs: &[Detection], cfg: &FusionConfig) -> Vec<Detection> {
    fuse_detailed(heads, legs, cfg).kept
}

/// [`fuse`], also reporting which pairs were matched.
///
/// All cross-set pairs on the same image with IoU >= threshold are visited in
/// descending IoU order (ties by head index, then leg index); a pair is accepted
/// when neither member is matched yet.
pub fn fuse_detailed(heads: &[Detection], legs: &[Detection], cfg: &FusionConfig) -> Fusion {
    let mut candidates = Vec::new();
    for (i, h) in heads.iter().enumerate() {
        for (j, l) in legs.iter().enumerate() {
            if h.image_id != l.image_id {
                continue;
            }
            let overlap = h.bbox.iou(&l.bbox);
            if overlap >= cfg.iou_threshold {
                candidates.push((overlap, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut head_used = vec![false; heads.len()];
    let mut leg_used = vec![false; legs.len()];
    let mut pairs = Vec::new();
    let mut kept = Vec::with_capacity(heads.len() + legs.len());
    for (_, i, j) in candidates {
        if head_used[i] || leg_used[j] {
            continue;
        }
        head_used[i] = true;
        leg_used[j] = true;
        pairs.push((i, j));
        let (h, l) = (&heads[i], &legs[j]);
        let keep_head = match h.conf.total_cmp(&l.conf) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => cfg.tie_break != TieBreak::PreferLeg,
        };
        kept.push(if keep_head { h.clone() } else { l.clone() });
    }
    kept.extend(heads.iter().zip(&head_used).filter(|(_, used)| !**used).map(|(d, _)| d.clone()));
    kept.extend(legs.iter().zip(&leg_used).filter(|(_, used)| !**used).map(|(d, _)| d.clone()));
    kept.sort_by(canonical_order);
    Fusion { kept, pairs }
}

/// Greedy per-class non-maximum suppression.
///
/// Detections below `conf_thr` are dropped. Within each `(image, class)` group
/// the most confident remaining box is kept and every box overlapping it with
/// IoU >= `iou_thr` is removed, until the group is empty.
pub fn nms(dets: &[Detection], iou_thr: f64, conf_thr: f64) -> Vec<Detection> {
    let mut groups: BTreeMap<(&str, &str), Vec<&Detection>> = BTreeMap::new();
    for det in dets.iter().filter(|d| d.conf >= conf_thr) {
        groups.entry((det.image_id.as_str(), det.class_name.as_str())).or_default().push(det);
    }
    let mut out = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| canonical_order(a, b));
        let mut alive = vec![true; group.len()];
        for i in 0..group.len() {
            if !alive[i] {
                continue;
            }
            out.push(group[i].clone());
            for j in i + 1..group.len() {
                if alive[j] && group[i].bbox.iou(&group[j].bbox) >= iou_thr {
                    alive[j] = false;
                }
            }
        }
    }
    out.sort_by(canonical_order);
    out
}

/// Full pipeline on one image's detections: NMS, classify, restore, fuse.
///
/// Candidates restored by the first rule are fused with those of the second,
/// the result with the third, and so on. Lenient-mode passthrough detections
/// are appended untouched. Output is in canonical order.
fn run_ffm_image(
    dets: &[Detection],
    rules: &[RestoreRule],
    cfg: &FusionConfig,
    nms_params: &NmsParams,
) -> Result<Vec<Detection>, FfmError> {
    let survivors = nms(dets, nms_params.iou_thr, nms_params.conf_thr);
    let mut classified = classify(&survivors, rules, cfg.strict_classes)?;
    let mut fused: Option<Vec<Detection>> = None;
    for rule in rules {
        let parts = classified.by_class.remove(&rule.part_class).unwrap_or_default();
        let restored = parts.iter().map(|p| restore(p, rule)).collect::<Result<Vec<_>, _>>()?;
        fused = Some(match fused {
            None => restored,
            Some(prev) => fuse(&prev, &restored, cfg),
        });
    }
    let mut out = fused.unwrap_or_default();
    out.extend(classified.passthrough);
    out.sort_by(canonical_order);
    Ok(out)
}

/// Runs the pipeline on every image in `dets`, using the default execution mode.
pub fn run_ffm(
    dets: &[Detection],
    rules: &[RestoreRule],
    cfg: &FusionConfig,
    nms_params: &NmsParams,
) -> Result<Vec<Detection>, FfmError> {
    run_ffm_with(Execution::default(), dets, rules, cfg, nms_params)
}

/// [`run_ffm`] with an explicit execution mode.
///
/// Output is sorted by image id, then canonically within each image, regardless
/// of execution mode.
pub fn run_ffm_with(
    exec: Execution,
    dets: &[Detection],
    rules: &[RestoreRule],
    cfg: &FusionConfig,
    nms_params: &NmsParams,
) -> Result<Vec<Detection>, FfmError> {
    cfg.validate()?;
    nms_params.validate()?;
    for rule in rules {
        rule.validate()?;
    }
    let mut per_image: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for det in dets {
        per_image.entry(det.image_id.as_str()).or_default().push(det.clone());
    }
    let images: Vec<Vec<Detection>> = per_image.into_values().collect();
    let results = par::try_map(exec, &images, |img| run_ffm_image(img, rules, cfg, nms_params))?;
    Ok(results.into_iter().flatten().collect())
}
