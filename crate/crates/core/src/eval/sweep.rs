//! Keyframe-interval sweeps and fusion ablations.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{min_accuracy, miou, per_offset_miou};
use crate::eval::Dataset;
use crate::fusion::FusionWeights;
use crate::model::SegModel;
use crate::motion::{estimate_stream_motion, MatchParams};
use crate::pipeline::{run, run_inter_with, Interpolation};
use crate::types::{MotionField, PipelineConfig, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub scheme: Scheme,
    pub keyframe_interval: usize,
    /// Percent over all frames.
    pub miou_avg: f64,
    /// Percent, worst keyframe offset.
    pub miou_min: f64,
    /// Frames per second, median of the timed repetitions.
    pub throughput: f64,
    /// Percent per offset `i % n`; entry 0 is the keyframes.
    pub per_offset_miou: Vec<f64>,
}

impl IntervalReport {
    /// Equality ignoring the measured throughput.
    pub fn same_accuracy(&self, other: &IntervalReport) -> bool {
        self.scheme == other.scheme
            && self.keyframe_interval == other.keyframe_interval
            && self.miou_avg == other.miou_avg
            && self.miou_min == other.miou_min
            && self.per_offset_miou == other.per_offset_miou
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub schemes: Vec<Scheme>,
    pub intervals: Vec<usize>,
    pub fusion: FusionWeights,
    pub match_params: MatchParams,
    /// Timed runs per (scheme, interval) after one untimed warm-up run.
    pub repetitions: usize,
    pub workers: usize,
    /// Charge motion estimation to the propagating schemes.
    pub include_motion_cost: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            intervals: (1..=10).collect(),
            fusion: FusionWeights::average(),
            match_params: MatchParams::default(),
            repetitions: 3,
            workers: 1,
            include_motion_cost: false,
        }
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2
    }
}

fn accuracy(
    data: &Dataset<'_>,
    preds: &[crate::types::SegMap],
    n: usize,
) -> Result<(f64, f64, Vec<f64>)> {
    let avg = 100.0 * miou(preds, data.ground_truth, data.num_classes)?.mean;
    let per = per_offset_miou(preds, data.ground_truth, n, data.num_classes)?;
    let min = min_accuracy(&per)?;
    Ok((avg, min, per))
}

/// Estimates motion for the stream, then sweeps with it.
pub fn sweep(
    data: &Dataset<'_>,
    model: SegModel<'_>,
    options: &SweepOptions,
) -> Result<Vec<IntervalReport>> {
    data.check()?;
    let start = Instant::now();
    let motion = estimate_stream_motion(data.frames, &options.match_params)?;
    sweep_with_motion(data, &motion, start.elapsed(), model, options)
}

/// Runs every scheme at every interval on precomputed motion.
/// `motion_time` is what producing `motion` cost; it is added to the
/// propagating schemes' timings when `include_motion_cost` is set.
pub fn sweep_with_motion(
    data: &Dataset<'_>,
    motion: &[MotionField],
    motion_time: Duration,
    model: SegModel<'_>,
    options: &SweepOptions,
) -> Result<Vec<IntervalReport>> {
    data.check()?;
    if options.repetitions == 0 {
        return Err(Error::InvalidArgument(
            "at least one timed repetition is needed".into(),
        ));
    }
    let len = data.frames.len();
    let mut reports = Vec::new();
    for &scheme in &options.schemes {
        for &n in &options.intervals {
            let context = |e| Error::AtRun {
                scheme: scheme.name().into(),
                interval: n,
                source: Box::new(e),
            };
            if n == 0 || n > len {
                return Err(context(Error::InvalidArgument(format!(
                    "interval outside 1..={len}"
                ))));
            }
            let config = PipelineConfig::new(scheme, n, data.num_classes)
                .map_err(context)?
                .with_fusion(options.fusion.clone())
                .with_workers(options.workers);
            let result = run(data.frames, motion, &config, model).map_err(context)?;
            let mut times = Vec::with_capacity(options.repetitions);
            for _ in 0..options.repetitions {
                let start = Instant::now();
                run(data.frames, motion, &config, model).map_err(context)?;
                let mut elapsed = start.elapsed();
                if options.include_motion_cost && scheme != Scheme::Baseline {
                    elapsed += motion_time;
                }
                times.push(elapsed);
            }
            let secs = median(times).as_secs_f64().max(f64::MIN_POSITIVE);
            let (miou_avg, miou_min, per_offset_miou) =
                accuracy(data, &result.segmentations, n).map_err(context)?;
            reports.push(IntervalReport {
                scheme,
                keyframe_interval: n,
                miou_avg,
                miou_min,
                throughput: len as f64 / secs,
                per_offset_miou,
            });
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub miou_avg: f64,
    pub per_offset_miou: Vec<f64>,
}

pub fn interpolation_name(i: &Interpolation) -> &'static str {
    match i {
        Interpolation::Fused(w) => w.kind().name(),
        Interpolation::ForwardOnly => "forward",
        Interpolation::BackwardOnly => "backward",
    }
}

/// Accuracy of the inter scheme at one interval with each choice of
/// interpolation.
pub fn fusion_ablation(
    data: &Dataset<'_>,
    motion: &[MotionField],
    interval: usize,
    model: SegModel<'_>,
    variants: &[Interpolation],
) -> Result<Vec<AblationRow>> {
    data.check()?;
    let config = PipelineConfig::new(Scheme::Inter, interval, data.num_classes)?;
    variants
        .iter()
        .map(|v| {
            let result = run_inter_with(data.frames, motion, &config, model, v)?;
            let (miou_avg, _, per_offset_miou) = accuracy(data, &result.segmentations, interval)?;
            Ok(AblationRow {
                variant: interpolation_name(v).into(),
                miou_avg,
                per_offset_miou,
            })
        })
        .collect()
}
