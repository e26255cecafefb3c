//! Video semantic segmentation with keyframe feature propagation along
//! block motion vectors.
//!
//! The expensive feature network runs only on keyframes. Intermediate frames
//! reuse keyframe features warped with the block motion a video codec would
//! already carry, either forward from the previous keyframe or from both
//! enclosing keyframes and fused.

pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod model;
pub mod motion;
pub mod pipeline;
pub mod types;
pub mod warp;

pub use error::{Error, Result};
pub use fusion::{alpha_for, fit_conv_fusion, fuse, ConvKernel, FusionKind, FusionWeights};
pub use model::{FeatureNetwork, SegModel, TaskNetwork, ToyFeatureNet, ToyModel};
pub use motion::{estimate_motion, estimate_stream_motion, MatchParams};
pub use pipeline::{
    fusion_samples, run, run_baseline, run_inter, run_inter_with, run_prop, Interpolation,
    StreamResult,
};
pub use types::{
    FeatureMap, Frame, MotionField, Offset, PipelineConfig, Scheme, SegMap, WarpField, BLOCK_SIZE,
    IGNORE_LABEL,
};
pub use warp::{bilinear_warp, propagate_chain};
