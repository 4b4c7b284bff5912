//! Analytical parameter and FLOPs accounting from declarative layer lists.
//!
//! FLOPs are multiply-accumulate counts: an ordinary convolution costs
//! `h2 * w2 * c2 * c1 * n * n`, a Ghost module
//! `h2 * w2 * (c2/s) * c1 * n * n + (s-1) * h2 * w2 * (c2/s) * l * l`.
//! Convolutions are bias-free and followed by batch norm, whose affine pair is
//! counted per output channel ([`ParamConvention::BatchNorm`]) or folded into a
//! single bias ([`ParamConvention::Fused`]).
//!
//! A [`ModelSpec`] is a graph in list form. Each layer names its inputs with
//! `from` (negative = relative, `-1` the previous layer; non-negative = absolute
//! index); layer 0's `-1` is the model input. Structural layers (`concat`,
//! `upsample`, `add`) carry no parameters and let FPN-style necks be described.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::micro_nn::conv_out_dim;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplexityError {
    #[error("expected a `{expected}` layer, got `{got}`")]
    WrongKind { expected: &'static str, got: LayerKind },
    #[error("`{kind}` layer is missing field `{field}`")]
    MissingField { kind: LayerKind, field: &'static str },
    #[error("field `{field}` must be positive")]
    ZeroField { field: &'static str },
    #[error("ghost ratio s = {s} does not divide c2 = {c2}")]
    RatioDoesNotDivide { s: usize, c2: usize },
    #[error("SE reduction r = {r} does not divide c = {c}")]
    ReductionDoesNotDivide { r: usize, c: usize },
    #[error("kernel {n} does not fit the {h}x{w} input with padding {pad}")]
    KernelTooLarge { n: usize, h: usize, w: usize, pad: usize },
    #[error("layer {index} ({name}): {source}")]
    Layer { index: usize, name: String, source: Box<ComplexityError> },
    #[error("layer {index} ({name}): input `from` {from} does not refer to an earlier layer")]
    BadReference { index: usize, name: String, from: i64 },
    #[error("layer {index} ({name}): declared input {declared} but the graph supplies {actual}")]
    ChainMismatch { index: usize, name: String, declared: Dims, actual: Dims },
}

/// Channel and spatial extent of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    #[default]
    Conv,
    GhostConv,
    Se,
    Fc,
    OtherFixed,
    Concat,
    Upsample,
    Add,
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayerKind::Conv => "conv",
            LayerKind::GhostConv => "ghost_conv",
            LayerKind::Se => "se",
            LayerKind::Fc => "fc",
            LayerKind::OtherFixed => "other_fixed",
            LayerKind::Concat => "concat",
            LayerKind::Upsample => "upsample",
            LayerKind::Add => "add",
        };
        f.write_str(s)
    }
}

fn default_from() -> Vec<i64> {
    vec![-1]
}

fn is_default_from(from: &[i64]) -> bool {
    from.is_empty() || from == [-1]
}

/// One layer. Which fields are required depends on `kind`:
///
/// | kind          | fields                                                        |
/// |---------------|---------------------------------------------------------------|
/// | `conv`        | `c1 c2 n stride in_h in_w`, optional `pad` (default `n/2`), `bias` |
/// | `ghost_conv`  | as `conv`, plus `s` and `l`                                   |
/// | `se`          | `c1 r in_h in_w`                                              |
/// | `fc`          | `c1 c2`                                                       |
/// | `other_fixed` | `fixed_params fixed_flops`, optional `out_c out_h out_w`      |
/// | `upsample`    | optional `factor` (default 2)                                 |
/// | `concat`, `add` | `from` only                                                 |
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_from", skip_serializing_if = "is_default_from")]
    pub from: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Plain convolution bias instead of a following batch norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_params: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_flops: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<usize>,
}

impl LayerSpec {
    /// Convolution layer with same padding.
    pub fn conv(c1: usize, c2: usize, n: usize, stride: usize, in_h: usize, in_w: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            c1: Some(c1),
            c2: Some(c2),
            n: Some(n),
            stride: Some(stride),
            in_h: Some(in_h),
            in_w: Some(in_w),
            ..Default::default()
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn ghost(c1: usize, c2: usize, n: usize, stride: usize, in_h: usize, in_w: usize, s: usize, l: usize) -> Self {
        Self { kind: LayerKind::GhostConv, s: Some(s), l: Some(l), ..Self::conv(c1, c2, n, stride, in_h, in_w) }
    }

    pub fn se(c: usize, r: usize, in_h: usize, in_w: usize) -> Self {
        Self {
            kind: LayerKind::Se,
            c1: Some(c),
            r: Some(r),
            in_h: Some(in_h),
            in_w: Some(in_w),
            ..Default::default()
        }
    }

    pub fn fc(c1: usize, c2: usize) -> Self {
        Self { kind: LayerKind::Fc, c1: Some(c1), c2: Some(c2), ..Default::default() }
    }

    pub fn fixed(params: u64, flops: u64) -> Self {
        Self { kind: LayerKind::OtherFixed, fixed_params: Some(params), fixed_flops: Some(flops), ..Default::default() }
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = Some(pad);
        self
    }

    fn req(&self, field: &'static str, v: Option<usize>) -> Result<usize, ComplexityError> {
        match v {
            None => Err(ComplexityError::MissingField { kind: self.kind, field }),
            Some(0) => Err(ComplexityError::ZeroField { field }),
            Some(x) => Ok(x),
        }
    }

    fn expect_kind(&self, kinds: &[LayerKind], expected: &'static str) -> Result<(), ComplexityError> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(ComplexityError::WrongKind { expected, got: self.kind })
        }
    }

    fn effective_pad(&self) -> Result<usize, ComplexityError> {
        Ok(self.pad.unwrap_or(self.req("n", self.n)? / 2))
    }

    /// Output dims of a `conv` or `ghost_conv` layer.
    fn conv_geometry(&self) -> Result<ConvGeometry, ComplexityError> {
        let c1 = self.req("c1", self.c1)?;
        let c2 = self.req("c2", self.c2)?;
        let n = self.req("n", self.n)?;
        let stride = self.req("stride", self.stride)?;
        let in_h = self.req("in_h", self.in_h)?;
        let in_w = self.req("in_w", self.in_w)?;
        let pad = self.effective_pad()?;
        let too_large = ComplexityError::KernelTooLarge { n, h: in_h, w: in_w, pad };
        let h2 = conv_out_dim(in_h, n, stride, pad).ok_or(too_large.clone())?;
        let w2 = conv_out_dim(in_w, n, stride, pad).ok_or(too_large)?;
        Ok(ConvGeometry { c1, c2, n, h2, w2 })
    }

    fn ghost_params(&self) -> Result<(usize, usize), ComplexityError> {
        let c2 = self.req("c2", self.c2)?;
        let s = self.req("s", self.s)?;
        let l = self.req("l", self.l)?;
        if c2 % s != 0 {
            return Err(ComplexityError::RatioDoesNotDivide { s, c2 });
        }
        Ok((s, l))
    }

    fn se_params(&self) -> Result<(usize, usize), ComplexityError> {
        let c = self.req("c1", self.c1)?;
        let r = self.req("r", self.r)?;
        if c % r != 0 {
            return Err(ComplexityError::ReductionDoesNotDivide { r, c });
        }
        Ok((c, r))
    }

    fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("#{index} {}", self.kind))
    }
}

struct ConvGeometry {
    c1: usize,
    c2: usize,
    n: usize,
    h2: usize,
    w2: usize,
}

/// How the per-channel normalisation after each convolution is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamConvention {
    /// Batch-norm scale and shift: two parameters per output channel.
    #[default]
    BatchNorm,
    /// Batch norm folded into the convolution: one bias per output channel.
    Fused,
}

impl ParamConvention {
    fn per_channel(self) -> u64 {
        match self {
            ParamConvention::BatchNorm => 2,
            ParamConvention::Fused => 1,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ParamConvention::BatchNorm => "bias-free conv + batch-norm affine (2 params per output channel)",
            ParamConvention::Fused => "batch norm folded into conv bias (1 param per output channel)",
        }
    }
}

/// `h2 * w2 * c2 * c1 * n * n` multiply-accumulates.
///
/// A `ghost_conv` layer is priced as the ordinary convolution it replaces.
pub fn conv_flops(spec: &LayerSpec) -> Result<u64, ComplexityError> {
    spec.expect_kind(&[LayerKind::Conv, LayerKind::GhostConv], "conv")?;
    let g = spec.conv_geometry()?;
    Ok((g.h2 * g.w2 * g.c2 * g.c1 * g.n * g.n) as u64)
}

/// `h2 * w2 * (c2/s) * c1 * n * n + (s-1) * h2 * w2 * (c2/s) * l * l`.
pub fn ghost_flops(spec: &LayerSpec) -> Result<u64, ComplexityError> {
    spec.expect_kind(&[LayerKind::GhostConv], "ghost_conv")?;
    let g = spec.conv_geometry()?;
    let (s, l) = spec.ghost_params()?;
    let m = g.c2 / s;
    Ok((g.h2 * g.w2 * m * g.c1 * g.n * g.n + (s - 1) * g.h2 * g.w2 * m * l * l) as u64)
}

/// FC, rectifier, FC and the channel-wise rescale: `2 c^2 / r + h * w * c`.
pub fn se_flops(spec: &LayerSpec) -> Result<u64, ComplexityError> {
    spec.expect_kind(&[LayerKind::Se], "se")?;
    let (c, r) = spec.se_params()?;
    let h = spec.req("in_h", spec.in_h)?;
    let w = spec.req("in_w", spec.in_w)?;
    Ok((2 * c * c / r + h * w * c) as u64)
}

/// Ordinary-convolution over Ghost-module cost: `(exact, approx)` where
/// `approx = s * c1 / (s + c1 - 1)`. The two agree whenever `l == n`.
pub fn speedup_ratio(spec: &LayerSpec) -> Result<(f64, f64), ComplexityError> {
    let ghost = ghost_flops(spec)?;
    let conv = conv_flops(spec)?;
    let (s, _) = spec.ghost_params()?;
    let c1 = spec.req("c1", spec.c1)?;
    let exact = conv as f64 / ghost as f64;
    let approx = (s * c1) as f64 / (s + c1 - 1) as f64;
    Ok((exact, approx))
}

/// Multiply-accumulates of one layer, dispatching on kind.
pub fn layer_flops(spec: &LayerSpec) -> Result<u64, ComplexityError> {
    match spec.kind {
        LayerKind::Conv => conv_flops(spec),
        LayerKind::GhostConv => ghost_flops(spec),
        LayerKind::Se => se_flops(spec),
        LayerKind::Fc => Ok((spec.req("c1", spec.c1)? * spec.req("c2", spec.c2)?) as u64),
        LayerKind::OtherFixed => Ok(spec.fixed_flops.unwrap_or(0)),
        LayerKind::Concat | LayerKind::Upsample | LayerKind::Add => Ok(0),
    }
}

/// Learnable parameters of one layer.
///
/// - conv: `c1 c2 n^2` plus the normalisation term on `c2` (or `c2` biases if `bias`)
/// - ghost: the intrinsic conv on `c2/s` channels plus `(s-1) (c2/s)` depthwise
///   `l x l` kernels, each normalised
/// - se: `2 c^2 / r` weights plus `c + c/r` biases
/// - fc: `c1 c2 + c2`
pub fn layer_params(spec: &LayerSpec, convention: ParamConvention) -> Result<u64, ComplexityError> {
    let norm = convention.per_channel();
    match spec.kind {
        LayerKind::Conv => {
            let c1 = spec.req("c1", spec.c1)? as u64;
            let c2 = spec.req("c2", spec.c2)? as u64;
            let n = spec.req("n", spec.n)? as u64;
            let per = if spec.bias == Some(true) { 1 } else { norm };
            Ok(c1 * c2 * n * n + per * c2)
        }
        LayerKind::GhostConv => {
            let c1 = spec.req("c1", spec.c1)? as u64;
            let n = spec.req("n", spec.n)? as u64;
            let (s, l) = spec.ghost_params()?;
            let m = (spec.req("c2", spec.c2)? / s) as u64;
            let (s, l) = (s as u64, l as u64);
            let cheap = (s - 1) * m;
            Ok(c1 * m * n * n + norm * m + cheap * l * l + norm * cheap)
        }
        LayerKind::Se => {
            let (c, r) = spec.se_params()?;
            Ok((2 * c * c / r + c + c / r) as u64)
        }
        LayerKind::Fc => {
            let c1 = spec.req("c1", spec.c1)? as u64;
            let c2 = spec.req("c2", spec.c2)? as u64;
            Ok(c1 * c2 + c2)
        }
        LayerKind::OtherFixed => Ok(spec.fixed_params.unwrap_or(0)),
        LayerKind::Concat | LayerKind::Upsample | LayerKind::Add => Ok(0),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default = "default_input_c")]
    pub input_c: usize,
    pub input_h: usize,
    pub input_w: usize,
    pub layers: Vec<LayerSpec>,
}

fn default_input_c() -> usize {
    3
}

impl ModelSpec {
    pub fn input_dims(&self) -> Dims {
        Dims { c: self.input_c, h: self.input_h, w: self.input_w }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub params: u64,
    pub flops: u64,
    pub out: Dims,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub convention: ParamConvention,
    pub convention_note: String,
    pub flops_unit: String,
    pub total_params: u64,
    /// Multiply-accumulates.
    pub total_flops: u64,
    pub layers: Vec<LayerReport>,
}

impl ModelReport {
    /// Billions of operations; `as_flops` doubles MACs into FLOPs.
    pub fn giga(&self, as_flops: bool) -> f64 {
        let ops = if as_flops { 2 * self.total_flops } else { self.total_flops };
        ops as f64 / 1e9
    }
}

/// Relative change from `base` to `variant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDelta {
    pub base: String,
    pub variant: String,
    pub base_params: u64,
    pub variant_params: u64,
    pub base_flops: u64,
    pub variant_flops: u64,
    /// `1 - variant / base`; positive means the variant is smaller.
    pub param_reduction: f64,
    pub flops_reduction: f64,
}

pub fn compare(base: &ModelReport, variant: &ModelReport) -> ModelDelta {
    ModelDelta {
        base: base.model.clone(),
        variant: variant.model.clone(),
        base_params: base.total_params,
        variant_params: variant.total_params,
        base_flops: base.total_flops,
        variant_flops: variant.total_flops,
        param_reduction: 1.0 - variant.total_params as f64 / base.total_params as f64,
        flops_reduction: 1.0 - variant.total_flops as f64 / base.total_flops as f64,
    }
}

/// Resolves `from` references, checks every declared input against the graph,
/// and returns each layer with its missing input dims filled in plus its output.
pub fn resolve(model: &ModelSpec) -> Result<Vec<(LayerSpec, Dims)>, ComplexityError> {
    let mut outs: Vec<Dims> = Vec::with_capacity(model.layers.len());
    let mut resolved = Vec::with_capacity(model.layers.len());
    for (index, layer) in model.layers.iter().enumerate() {
        let name = layer.label(index);
        let wrap = |e: ComplexityError| ComplexityError::Layer { index, name: name.clone(), source: Box::new(e) };
        let from: &[i64] = if layer.from.is_empty() { &[-1] } else { &layer.from };
        let mut inputs = Vec::with_capacity(from.len());
        for &f in from {
            let target = if f < 0 { index as i64 + f } else { f };
            let dims = if target == -1 && index == 0 {
                model.input_dims()
            } else if target >= 0 && (target as usize) < index {
                outs[target as usize]
            } else {
                return Err(ComplexityError::BadReference { index, name, from: f });
            };
            inputs.push(dims);
        }
        let first = inputs[0];
        let mut spec = layer.clone();
        let mismatch = |declared: Dims| ComplexityError::ChainMismatch {
            index,
            name: name.clone(),
            declared,
            actual: first,
        };
        let out = match layer.kind {
            LayerKind::Conv | LayerKind::GhostConv | LayerKind::Se => {
                let declared = Dims {
                    c: layer.c1.unwrap_or(first.c),
                    h: layer.in_h.unwrap_or(first.h),
                    w: layer.in_w.unwrap_or(first.w),
                };
                if declared != first || inputs.len() != 1 {
                    return Err(mismatch(declared));
                }
                spec.c1 = Some(first.c);
                spec.in_h = Some(first.h);
                spec.in_w = Some(first.w);
                if layer.kind == LayerKind::Se {
                    spec.se_params().map_err(wrap)?;
                    first
                } else {
                    if layer.kind == LayerKind::GhostConv {
                        spec.ghost_params().map_err(wrap)?;
                    }
                    let g = spec.conv_geometry().map_err(wrap)?;
                    Dims { c: g.c2, h: g.h2, w: g.w2 }
                }
            }
            LayerKind::Fc => {
                let flat = first.c * first.h * first.w;
                let c1 = layer.c1.unwrap_or(flat);
                if c1 != flat {
                    return Err(mismatch(Dims { c: c1, h: 1, w: 1 }));
                }
                spec.c1 = Some(c1);
                Dims { c: spec.req("c2", spec.c2).map_err(wrap)?, h: 1, w: 1 }
            }
            LayerKind::OtherFixed => Dims {
                c: layer.out_c.unwrap_or(first.c),
                h: layer.out_h.unwrap_or(first.h),
                w: layer.out_w.unwrap_or(first.w),
            },
            LayerKind::Upsample => {
                let f = layer.factor.unwrap_or(2);
                Dims { c: first.c, h: first.h * f, w: first.w * f }
            }
            LayerKind::Concat => {
                if let Some(bad) = inputs.iter().find(|d| d.h != first.h || d.w != first.w) {
                    return Err(ComplexityError::ChainMismatch { index, name, declared: first, actual: *bad });
                }
                Dims { c: inputs.iter().map(|d| d.c).sum(), ..first }
            }
            LayerKind::Add => {
                if let Some(bad) = inputs.iter().find(|d| **d != first) {
                    return Err(ComplexityError::ChainMismatch { index, name, declared: first, actual: *bad });
                }
                first
            }
        };
        outs.push(out);
        resolved.push((spec, out));
    }
    Ok(resolved)
}

/// Per-layer and total parameters and MACs.
pub fn summarize(model: &ModelSpec, convention: ParamConvention) -> Result<ModelReport, ComplexityError> {
    let resolved = resolve(model)?;
    let mut layers = Vec::with_capacity(resolved.len());
    for (index, (spec, out)) in resolved.into_iter().enumerate() {
        let name = spec.label(index);
        let wrap = |e| ComplexityError::Layer { index, name: name.clone(), source: Box::new(e) };
        let params = layer_params(&spec, convention).map_err(wrap)?;
        let flops = layer_flops(&spec).map_err(wrap)?;
        layers.push(LayerReport { index, name, kind: spec.kind, params, flops, out });
    }
    Ok(ModelReport {
        model: model.name.clone(),
        convention,
        convention_note: convention.describe().to_string(),
        flops_unit: "multiply-accumulates".to_string(),
        total_params: layers.iter().map(|l| l.params).sum(),
        total_flops: layers.iter().map(|l| l.flops).sum(),
        layers,
    })
}

/// Aligned text table of a report; `as_flops` doubles MACs in the totals line.
pub fn render_table(report: &ModelReport, as_flops: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", report.model);
    let _ = writeln!(out, "params: {}", report.convention_note);
    let name_w = report.layers.iter().map(|l| l.name.len()).max().unwrap_or(4).max(4);
    let _ = writeln!(out, "{:>4}  {:<name_w$}  {:<11}  {:>12}  {:>15}  {:>14}", "#", "name", "kind", "params", "MACs", "out (HxWxC)");
    for l in &report.layers {
        let _ = writeln!(
            out,
            "{:>4}  {:<name_w$}  {:<11}  {:>12}  {:>15}  {:>14}",
            l.index,
            l.name,
            l.kind.to_string(),
            l.params,
            l.flops,
            l.out.to_string()
        );
    }
    let unit = if as_flops { "GFLOPs (2 x MACs)" } else { "GMACs" };
    let _ = writeln!(
        out,
        "total: {} params, {} MACs, {:.2} {unit}",
        report.total_params,
        report.total_flops,
        report.giga(as_flops)
    );
    out
}

const BUILTIN: &[(&str, &str)] = &[
    ("yolov5s-baseline", include_str!("../models/yolov5s-baseline.json")),
    ("yolov5s-se", include_str!("../models/yolov5s-se.json")),
    ("yolov5s-ghost-neck", include_str!("../models/yolov5s-ghost-neck.json")),
    ("yolov5s-se-ghost-neck", include_str!("../models/yolov5s-se-ghost-neck.json")),
];

/// Names of the model specs shipped with the crate.
pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Parses a shipped model spec by name.
pub fn builtin(name: &str) -> Option<ModelSpec> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| serde_json::from_str(src).expect("shipped model specs parse"))
}
