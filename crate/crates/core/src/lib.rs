//! Occlusion-aware pedestrian box recovery from part detections.
//!
//! The centrepiece is [`ffm`]: head and leg detections are restored to
//! whole-body boxes through fixed body proportions and fused by IoU matching.
//! Around it sit the numerics needed to evaluate and reason about it:
//!
//! - [`geometry`]: center/size boxes, IoU, enclosing box, clipping
//! - [`losses`]: IoU and Wise-IoU box regression losses with analytic gradients
//! - [`eval`]: detection matching and average precision
//! - [`micro_nn`]: reference SE-block, Ghost-module and convolution forward passes
//! - [`complexity`]: analytical parameter and FLOPs accounting for layer specs
//! - [`schedule`]: warmup plus cosine-annealing learning rates
//! - [`sim`]: synthetic occluded-pedestrian scenes used as a test oracle
//! - [`io`]: JSONL record formats and run configuration
//! - [`par`]: data-parallel helpers (rayon behind the `parallel` feature)

pub mod complexity;
pub mod eval;
pub mod ffm;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod micro_nn;
pub mod par;
pub mod schedule;
pub mod sim;

pub use ffm::{Detection, FusionConfig, NmsParams, RestoreRule, TieBreak};
pub use geometry::BBox;
pub use par::Execution;
