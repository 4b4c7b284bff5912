//! JSONL records and JSON configuration files.
//!
//! Detection lines carry `image_id`, `class`, `cx`, `cy`, `w`, `h`, `conf`;
//! ground-truth lines the same without `conf` and with an optional `ignore`.
//! Writers emit those keys in that order, numbers with six decimals, followed by
//! any unrecognised fields of the input record in key order. Parsing a
//! canonical line and writing it back reproduces it byte for byte.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::eval::{EvalConfig, EvalError, GroundTruth};
use crate::ffm::{self, Detection, FfmError, FusionConfig, NmsParams, RestoreRule};
use crate::geometry::BBox;
use crate::schedule::{ScheduleConfig, ScheduleError};
use crate::sim::{SceneConfig, SimError};

/// A configuration problem, located by its key path.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl ToString) -> Self {
        Self { path: path.into(), message: message.to_string() }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Six decimals, with negative zero printed as zero.
pub fn fmt_num(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn push_str_field(out: &mut String, key: &str, value: &str) {
    out.push_str(&serde_json::to_string(key).expect("string keys serialize"));
    out.push(':');
    out.push_str(&serde_json::to_string(value).expect("strings serialize"));
}

fn push_num_field(out: &mut String, key: &str, value: f64) {
    out.push('"');
    out.push_str(key);
    out.push_str("\":");
    out.push_str(&fmt_num(value));
}

fn push_box(out: &mut String, b: &BBox) {
    for (k, v) in [("cx", b.cx()), ("cy", b.cy()), ("w", b.w()), ("h", b.h())] {
        out.push(',');
        push_num_field(out, k, v);
    }
}

fn push_extra(out: &mut String, extra: &Map<String, Value>) {
    let mut keys: Vec<&String> = extra.keys().collect();
    keys.sort();
    for k in keys {
        out.push(',');
        out.push_str(&serde_json::to_string(k).expect("string keys serialize"));
        out.push(':');
        out.push_str(&serde_json::to_string(&extra[k]).expect("JSON values serialize"));
    }
}

/// Canonical JSON line for a detection, without the trailing newline.
pub fn detection_line(d: &Detection) -> String {
    let mut out = String::from("{");
    push_str_field(&mut out, "image_id", &d.image_id);
    out.push(',');
    push_str_field(&mut out, "class", &d.class_name);
    push_box(&mut out, &d.bbox);
    out.push(',');
    push_num_field(&mut out, "conf", d.conf);
    push_extra(&mut out, &d.extra);
    out.push('}');
    out
}

/// Canonical JSON line for a ground-truth box; `ignore` appears only when set.
pub fn ground_truth_line(g: &GroundTruth) -> String {
    let mut out = String::from("{");
    push_str_field(&mut out, "image_id", &g.image_id);
    out.push(',');
    push_str_field(&mut out, "class", &g.class_name);
    push_box(&mut out, &g.bbox);
    if g.ignore {
        out.push_str(",\"ignore\":true");
    }
    out.push('}');
    out
}

#[derive(Deserialize)]
struct DetectionRecord {
    image_id: String,
    class: String,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    conf: f64,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthRecord {
    image_id: String,
    class: String,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    ignore: bool,
}

fn parse_record<T: DeserializeOwned>(line: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.into_inner().to_string()
        } else {
            format!("{path}: {}", e.into_inner())
        }
    })
}

pub fn parse_detection(line: &str) -> Result<Detection, String> {
    let r: DetectionRecord = parse_record(line)?;
    let bbox = BBox::new(r.cx, r.cy, r.w, r.h).map_err(|e| e.to_string())?;
    let det = Detection { image_id: r.image_id, class_name: r.class, bbox, conf: r.conf, extra: r.extra };
    det.validate().map_err(|e| e.to_string())?;
    Ok(det)
}

pub fn parse_ground_truth(line: &str) -> Result<GroundTruth, String> {
    let r: GroundTruthRecord = parse_record(line)?;
    let bbox = BBox::new(r.cx, r.cy, r.w, r.h).map_err(|e| e.to_string())?;
    if r.class.is_empty() {
        return Err(FfmError::EmptyClass.to_string());
    }
    Ok(GroundTruth { image_id: r.image_id, class_name: r.class, bbox, ignore: r.ignore })
}

fn read_lines<T>(reader: impl BufRead, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line).map_err(|message| IoError::Record { line: i + 1, message })?);
    }
    Ok(out)
}

pub fn read_detections(reader: impl BufRead) -> Result<Vec<Detection>, IoError> {
    read_lines(reader, parse_detection)
}

pub fn read_ground_truths(reader: impl BufRead) -> Result<Vec<GroundTruth>, IoError> {
    read_lines(reader, parse_ground_truth)
}

pub fn write_detections(mut w: impl Write, dets: &[Detection]) -> std::io::Result<()> {
    for d in dets {
        writeln!(w, "{}", detection_line(d))?;
    }
    Ok(())
}

pub fn write_ground_truths(mut w: impl Write, gts: &[GroundTruth]) -> std::io::Result<()> {
    for g in gts {
        writeln!(w, "{}", ground_truth_line(g))?;
    }
    Ok(())
}

/// Sorts by image id, then descending confidence, then box and class.
pub fn sort_canonical(dets: &mut [Detection]) {
    dets.sort_by(|a, b| a.image_id.cmp(&b.image_id).then_with(|| ffm::canonical_order(a, b)));
}

/// Parameters of the `ffm` and `eval` commands. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub restore_rules: Vec<RestoreRule>,
    pub fusion: FusionConfig,
    pub nms: NmsParams,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            restore_rules: ffm::default_rules(),
            fusion: FusionConfig::default(),
            nms: NmsParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn ffm_config_error(section: &str, e: FfmError) -> ConfigError {
    match e {
        FfmError::InvalidThreshold { name, value } => {
            ConfigError::at(format!("{section}.{name}"), format!("must lie in [0, 1], got {value}"))
        }
        other => ConfigError::at(section, other),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.restore_rules.is_empty() {
            return Err(ConfigError::at("restore_rules", "at least one rule is required"));
        }
        for (i, rule) in self.restore_rules.iter().enumerate() {
            rule.validate().map_err(|e| ffm_config_error(&format!("restore_rules[{i}]"), e))?;
            if self.restore_rules[..i].iter().any(|r| r.part_class == rule.part_class) {
                return Err(ConfigError::at(
                    format!("restore_rules[{i}].part_class"),
                    format!("duplicate rule for class {:?}", rule.part_class),
                ));
            }
        }
        self.fusion.validate().map_err(|e| ffm_config_error("fusion", e))?;
        self.nms.validate().map_err(|e| ffm_config_error("nms", e))?;
        self.eval.validate().map_err(|e| match e {
            EvalError::InvalidThreshold(v) => ConfigError::at("eval.iou_thr", format!("must lie in (0, 1], got {v}")),
            other => ConfigError::at("eval", other),
        })?;
        Ok(())
    }
}

/// Deserializes JSON, reporting the key path of the first problem.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::at(if path == "." { "<root>".to_string() } else { path }, e.into_inner())
    })
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = parse_json(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_scene_config(text: &str) -> Result<SceneConfig, ConfigError> {
    let cfg: SceneConfig = parse_json(text)?;
    cfg.validate().map_err(|e| match e {
        SimError::InvalidConfig { field, reason } => ConfigError::at(field, reason),
        other => ConfigError::at("<root>", other),
    })?;
    Ok(cfg)
}

pub fn parse_schedule_config(text: &str) -> Result<ScheduleConfig, ConfigError> {
    let cfg: ScheduleConfig = parse_json(text)?;
    cfg.validate().map_err(|e| match e {
        ScheduleError::InvalidConfig { field, reason } => ConfigError::at(field, reason),
        other => ConfigError::at("<root>", other),
    })?;
    Ok(cfg)
}
