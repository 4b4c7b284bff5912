//! Average precision of detections against ground truth.
//!
//! Detections are matched greedily per (image, class) in descending confidence;
//! each takes the unmatched ground truth of highest IoU at or above the
//! threshold. Ground truths flagged `ignore` absorb a detection without making
//! it a true or false positive.
//!
//! AP is the area under the precision envelope, taking one PR point per
//! distinct confidence threshold so that tied scores enter together and the
//! result depends on score ranks only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ffm::Detection;
use crate::geometry::BBox;
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("average precision is undefined without ground truth")]
    NoGroundTruth,
    #[error("IoU threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_name: String,
    pub bbox: BBox,
    pub ignore: bool,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, class_name: impl Into<String>, bbox: BBox) -> Self {
        Self { image_id: image_id.into(), class_name: class_name.into(), bbox, ignore: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Tp,
    Fp,
    /// Matched an ignore-flagged ground truth.
    Ignored,
}

/// A detection's confidence with its match outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub conf: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub score_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMode {
    /// Area under the full precision envelope.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

impl ApMode {
    fn describe(self) -> &'static str {
        match self {
            ApMode::AllPoint => "all-point interpolated AP",
            ApMode::ElevenPoint => "11-point interpolated AP",
        }
    }
}

/// Labels for `dets` in input order, matching within each (image, class) pair.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64) -> Vec<Label> {
    let mut gt_groups: BTreeMap<(&str, &str), Vec<&GroundTruth>> = BTreeMap::new();
    for gt in gts {
        gt_groups.entry((&gt.image_id, &gt.class_name)).or_default().push(gt);
    }
    let mut det_groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        det_groups.entry((&d.image_id, &d.class_name)).or_default().push(i);
    }
    let mut labels = vec![Label::Fp; dets.len()];
    for (key, idx) in det_groups {
        let group_gts = gt_groups.get(&key).map(Vec::as_slice).unwrap_or(&[]);
        let group_dets: Vec<&Detection> = idx.iter().map(|&i| &dets[i]).collect();
        for (i, label) in idx.iter().zip(match_group(&group_dets, group_gts, iou_thr)) {
            labels[*i] = label;
        }
    }
    labels
}

fn match_group(dets: &[&Detection], gts: &[&GroundTruth], iou_thr: f64) -> Vec<Label> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // stable: equal confidences keep input order
    order.sort_by(|&a, &b| dets[b].conf.total_cmp(&dets[a].conf));
    let mut taken = vec![false; gts.len()];
    let mut labels = vec![Label::Fp; dets.len()];
    for i in order {
        let best = |want_ignore: bool| {
            let mut best: Option<(usize, f64)> = None;
            for (j, gt) in gts.iter().enumerate() {
                if taken[j] || gt.ignore != want_ignore {
                    continue;
                }
                let iou = dets[i].bbox.iou(&gt.bbox);
                if iou >= iou_thr && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            best.map(|(j, _)| j)
        };
        if let Some(j) = best(false) {
            taken[j] = true;
            labels[i] = Label::Tp;
        } else if let Some(j) = best(true) {
            taken[j] = true;
            labels[i] = Label::Ignored;
        }
    }
    labels
}

/// One PR point per distinct confidence, in descending confidence order.
/// Ignored detections are dropped.
pub fn pr_curve(labels: &[Scored], n_gt: usize) -> Result<Vec<PrPoint>, EvalError> {
    if n_gt == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    let mut scored: Vec<Scored> = labels.iter().copied().filter(|s| s.label != Label::Ignored).collect();
    scored.sort_by(|a, b| b.conf.total_cmp(&a.conf));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, s) in scored.iter().enumerate() {
        match s.label {
            Label::Tp => tp += 1,
            _ => fp += 1,
        }
        if scored.get(k + 1).is_some_and(|next| next.conf == s.conf) {
            continue;
        }
        points.push(PrPoint {
            recall: tp as f64 / n_gt as f64,
            precision: tp as f64 / (tp + fp) as f64,
            score_threshold: s.conf,
        });
    }
    Ok(points)
}

/// Precision envelope: each point's precision replaced by the maximum at equal
/// or higher recall.
fn envelope(points: &[PrPoint]) -> Vec<f64> {
    let mut env: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for k in (0..env.len().saturating_sub(1)).rev() {
        env[k] = env[k].max(env[k + 1]);
    }
    env
}

pub fn average_precision(labels: &[Scored], n_gt: usize, mode: ApMode) -> Result<f64, EvalError> {
    let points = pr_curve(labels, n_gt)?;
    let env = envelope(&points);
    Ok(match mode {
        ApMode::AllPoint => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (p, e) in points.iter().zip(&env) {
                ap += (p.recall - prev_recall) * e;
                prev_recall = p.recall;
            }
            ap
        }
        ApMode::ElevenPoint => {
            let mut sum = 0.0;
            for i in 0..=10 {
                let r = i as f64 / 10.0;
                // envelope is non-increasing in recall, so the first point reaching r is the max
                sum += points.iter().zip(&env).find(|(p, _)| p.recall >= r).map_or(0.0, |(_, e)| *e);
            }
            sum / 11.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(rename = "iou_thr")]
    pub iou_threshold: f64,
    #[serde(rename = "ap_mode")]
    pub mode: ApMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, mode: ApMode::AllPoint }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(EvalError::InvalidThreshold(self.iou_threshold));
        }
        Ok(())
    }

    pub fn convention(&self) -> String {
        format!("{} at IoU >= {:.2}, greedy matching by confidence", self.mode.describe(), self.iou_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_name: String,
    /// `None` when the class has no non-ignored ground truth.
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_det: usize,
    pub tp: usize,
    pub fp: usize,
    pub ignored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub images: usize,
    pub mean_ap: Option<f64>,
    pub classes: Vec<ClassReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub convention: String,
    pub iou_threshold: f64,
    pub mode: ApMode,
    pub images: usize,
    pub detections: usize,
    pub ground_truths: usize,
    pub mean_ap: Option<f64>,
    pub classes: Vec<ClassReport>,
    pub groups: Vec<GroupReport>,
}

/// Group key: the part of the image id before the first `/`, or `"all"`.
pub fn image_group(image_id: &str) -> &str {
    match image_id.split_once('/') {
        Some((prefix, _)) => prefix,
        None => "all",
    }
}

pub fn evaluate_run(dets: &[Detection], gts: &[GroundTruth], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    evaluate_run_with(Execution::default(), dets, gts, cfg)
}

/// [`evaluate_run`] with an explicit execution mode; matching runs per image.
pub fn evaluate_run_with(
    exec: Execution,
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let mut images: BTreeMap<&str, (Vec<Detection>, Vec<GroundTruth>)> = BTreeMap::new();
    for d in dets {
        images.entry(&d.image_id).or_default().0.push(d.clone());
    }
    for g in gts {
        images.entry(&g.image_id).or_default().1.push(g.clone());
    }
    let images: Vec<(&str, (Vec<Detection>, Vec<GroundTruth>))> = images.into_iter().collect();
    let matched = par::map(exec, &images, |(_, (d, g))| match_detections(d, g, cfg.iou_threshold));

    let mut all = Accumulator::default();
    let mut groups: BTreeMap<&str, (usize, Accumulator)> = BTreeMap::new();
    for ((id, (d, g)), labels) in images.iter().zip(&matched) {
        let group = groups.entry(image_group(id)).or_default();
        group.0 += 1;
        for acc in [&mut all, &mut group.1] {
            acc.add(d, g, labels);
        }
    }
    let classes = all.finish(cfg.mode)?;
    let groups = groups
        .into_iter()
        .map(|(group, (n_images, acc))| {
            let classes = acc.finish(cfg.mode)?;
            Ok(GroupReport { group: group.to_string(), images: n_images, mean_ap: mean_ap(&classes), classes })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport {
        convention: cfg.convention(),
        iou_threshold: cfg.iou_threshold,
        mode: cfg.mode,
        images: images.len(),
        detections: dets.len(),
        ground_truths: gts.len(),
        mean_ap: mean_ap(&classes),
        classes,
        groups,
    })
}

fn mean_ap(classes: &[ClassReport]) -> Option<f64> {
    let aps: Vec<f64> = classes.iter().filter_map(|c| c.ap).collect();
    if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

#[derive(Default)]
struct Accumulator {
    per_class: BTreeMap<String, (Vec<Scored>, usize)>,
}

impl Accumulator {
    fn add(&mut self, dets: &[Detection], gts: &[GroundTruth], labels: &[Label]) {
        for (d, &label) in dets.iter().zip(labels) {
            self.per_class.entry(d.class_name.clone()).or_default().0.push(Scored { conf: d.conf, label });
        }
        for g in gts {
            let entry = self.per_class.entry(g.class_name.clone()).or_default();
            if !g.ignore {
                entry.1 += 1;
            }
        }
    }

    fn finish(self, mode: ApMode) -> Result<Vec<ClassReport>, EvalError> {
        self.per_class
            .into_iter()
            .map(|(class_name, (scored, n_gt))| {
                let count = |l: Label| scored.iter().filter(|s| s.label == l).count();
                let ap = match average_precision(&scored, n_gt, mode) {
                    Ok(ap) => Some(ap),
                    Err(EvalError::NoGroundTruth) => None,
                    Err(e) => return Err(e),
                };
                Ok(ClassReport {
                    class_name,
                    ap,
                    n_gt,
                    n_det: scored.len(),
                    tp: count(Label::Tp),
                    fp: count(Label::Fp),
                    ignored: count(Label::Ignored),
                })
            })
            .collect()
    }
}

fn fmt_ap(ap: Option<f64>) -> String {
    ap.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// One row per image group plus an overall row, AP in percent.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", report.convention);
    let names: Vec<&str> = report.classes.iter().map(|c| c.class_name.as_str()).collect();
    let group_w = report.groups.iter().map(|g| g.group.len()).max().unwrap_or(0).max(7);
    let _ = write!(out, "{:<group_w$}  {:>6}", "group", "images");
    for n in &names {
        let _ = write!(out, "  {:>10}", n);
    }
    let _ = writeln!(out, "  {:>8}", "mAP");
    let mut row = |label: &str, images: usize, classes: &[ClassReport], mean: Option<f64>| {
        let _ = write!(out, "{:<group_w$}  {:>6}", label, images);
        for n in &names {
            let ap = classes.iter().find(|c| c.class_name == *n).and_then(|c| c.ap);
            let _ = write!(out, "  {:>10}", fmt_ap(ap));
        }
        let _ = writeln!(out, "  {:>8}", fmt_ap(mean));
    };
    for g in &report.groups {
        row(&g.group, g.images, &g.classes, g.mean_ap);
    }
    row("overall", report.images, &report.classes, report.mean_ap);
    out
}
