//! End-to-end segmentation of a frame stream.
//!
//! Three schemes share one interval-oriented driver:
//!
//! * baseline: features and task network on every frame;
//! * prop: features on keyframes (`i % n == 0`), every other frame warps
//!   the previous frame's features forward with its negated motion field;
//! * inter: on keyframe `k` the features of keyframe `k + n` are computed as
//!   well, both are propagated across the interval (forward with negated
//!   fields, backward with the fields as-is, walking frames in reverse) and
//!   intermediate frame `k + p` fuses the forward map warped `p` steps with
//!   the backward map warped `n - p` steps.
//!
//! The next keyframe's features are reused when the window advances, so
//! inter runs the feature network once per interval. The last interval of a
//! stream has no next keyframe and falls back to forward propagation.
//!
//! Frame positions are taken from the slice order, not [`Frame::index`].
//! `motion[i]` links frame `i - 1` to frame `i`.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{alpha_for, fuse, FusionSample, FusionWeights};
use crate::model::SegModel;
use crate::motion::{negate, to_warp_field};
use crate::types::{check_stream, FeatureMap, Frame, MotionField, PipelineConfig, Scheme, SegMap};
use crate::warp::{bilinear_warp, propagate_chain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Motion,
    Feature,
    Warp,
    Fusion,
    Task,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Motion => "motion",
            Component::Feature => "feature",
            Component::Warp => "warp",
            Component::Fusion => "fusion",
            Component::Task => "task",
        }
    }
}

/// Work done on behalf of one frame, one entry per invocation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameCost {
    entries: Vec<(Component, Duration)>,
}

impl FrameCost {
    pub fn record(&mut self, component: Component, elapsed: Duration) {
        self.entries.push((component, elapsed));
    }

    pub fn entries(&self) -> &[(Component, Duration)] {
        &self.entries
    }

    pub fn calls(&self, component: Component) -> usize {
        self.entries.iter().filter(|(c, _)| *c == component).count()
    }

    pub fn has(&self, component: Component) -> bool {
        self.calls(component) > 0
    }

    pub fn time(&self, component: Component) -> Duration {
        self.entries
            .iter()
            .filter(|(c, _)| *c == component)
            .map(|(_, d)| *d)
            .sum()
    }

    pub fn total(&self) -> Duration {
        self.entries.iter().map(|(_, d)| *d).sum()
    }
}

/// How a frame's features were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSource {
    Keyframe,
    /// Forward-warped `steps` times from the last keyframe.
    Propagated {
        steps: usize,
    },
    /// Fusion of the previous keyframe warped `forward_steps` times and the
    /// next keyframe warped `backward_steps` times.
    Interpolated {
        forward_steps: usize,
        backward_steps: usize,
    },
}

#[derive(Debug, Clone)]
pub struct StreamResult {
    pub segmentations: Vec<SegMap>,
    pub costs: Vec<FrameCost>,
    pub keyframe_flags: Vec<bool>,
    pub sources: Vec<FrameSource>,
}

impl StreamResult {
    pub fn len(&self) -> usize {
        self.segmentations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segmentations.is_empty()
    }

    /// Equality of everything except timings.
    pub fn same_outputs(&self, other: &StreamResult) -> bool {
        self.segmentations == other.segmentations
            && self.keyframe_flags == other.keyframe_flags
            && self.sources == other.sources
    }

    pub fn feature_calls(&self) -> usize {
        self.costs.iter().map(|c| c.calls(Component::Feature)).sum()
    }

    pub fn time(&self, component: Component) -> Duration {
        self.costs.iter().map(|c| c.time(component)).sum()
    }

    fn from_outputs(outputs: Vec<FrameOutput>) -> Self {
        let mut r = StreamResult {
            segmentations: Vec::with_capacity(outputs.len()),
            costs: Vec::with_capacity(outputs.len()),
            keyframe_flags: Vec::with_capacity(outputs.len()),
            sources: Vec::with_capacity(outputs.len()),
        };
        for o in outputs {
            r.keyframe_flags.push(o.source == FrameSource::Keyframe);
            r.segmentations.push(o.seg);
            r.costs.push(o.cost);
            r.sources.push(o.source);
        }
        r
    }
}

/// Frames a streaming consumer waits before a segmentation is emitted.
pub fn output_latency(scheme: Scheme, interval: usize) -> usize {
    match scheme {
        Scheme::Inter if interval > 1 => interval,
        _ => 0,
    }
}

struct FrameOutput {
    seg: SegMap,
    cost: FrameCost,
    source: FrameSource,
}

fn timed<T>(
    cost: &mut FrameCost,
    component: Component,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    cost.record(component, start.elapsed());
    Ok(out)
}

struct Stream<'a> {
    frames: &'a [Frame],
    motion: &'a [MotionField],
    model: SegModel<'a>,
}

impl Stream<'_> {
    fn extract(&self, i: usize, cost: &mut FrameCost) -> Result<FeatureMap> {
        timed(cost, Component::Feature, || {
            self.model.features.extract(&self.frames[i])
        })
        .map_err(Error::at_frame(i))
    }

    fn segment(&self, i: usize, f: &FeatureMap, cost: &mut FrameCost) -> Result<SegMap> {
        let frame = &self.frames[i];
        timed(cost, Component::Task, || {
            self.model.task.segment(f, frame.width(), frame.height())
        })
        .map_err(Error::at_frame(i))
    }

    fn field(&self, i: usize) -> Result<&MotionField> {
        self.motion.get(i).ok_or(Error::MissingMotion(i))
    }

    /// Warp field carrying features of frame `i - 1` onto frame `i`.
    fn forward_field(&self, i: usize, stride: usize) -> Result<crate::types::WarpField> {
        to_warp_field(&negate(self.field(i)?), stride)
    }

    /// Warp field carrying features of frame `i` back onto frame `i - 1`.
    fn backward_field(&self, i: usize, stride: usize) -> Result<crate::types::WarpField> {
        to_warp_field(self.field(i)?, stride)
    }

    fn keyframes(&self, n: usize) -> Vec<usize> {
        (0..self.frames.len()).step_by(n).collect()
    }

    fn interval_end(&self, k: usize, n: usize) -> usize {
        (k + n).min(self.frames.len())
    }

    /// Segments keyframe `k` and forward-propagates through the rest of its
    /// interval.
    fn propagate_interval(
        &self,
        k: usize,
        n: usize,
        key_features: FeatureMap,
        mut key_cost: FrameCost,
        start_offset: usize,
    ) -> Result<Vec<FrameOutput>> {
        let end = self.interval_end(k, n);
        let mut out = Vec::with_capacity(end - k);
        if start_offset == 0 {
            let seg = self.segment(k, &key_features, &mut key_cost)?;
            out.push(FrameOutput {
                seg,
                cost: key_cost,
                source: FrameSource::Keyframe,
            });
        }
        let stride = key_features.stride();
        let mut cache = key_features;
        for i in k + 1..end {
            let mut cost = FrameCost::default();
            let field = self.forward_field(i, stride)?;
            cache = timed(&mut cost, Component::Warp, || bilinear_warp(&cache, &field))
                .map_err(Error::at_frame(i))?;
            let seg = self.segment(i, &cache, &mut cost)?;
            out.push(FrameOutput {
                seg,
                cost,
                source: FrameSource::Propagated { steps: i - k },
            });
        }
        Ok(out)
    }

    /// Forward chain from keyframe `k` and backward chain from keyframe
    /// `k + n`; entry `s` of each is its map after `s` steps.
    fn branches(
        &self,
        k: usize,
        n: usize,
        key: &FeatureMap,
        next: &FeatureMap,
    ) -> Result<(Vec<FeatureMap>, Vec<FeatureMap>)> {
        let stride = key.stride();
        let forward_fields = (k + 1..k + n)
            .map(|i| self.forward_field(i, stride))
            .collect::<Result<Vec<_>>>()?;
        let backward_fields = (k + 2..=k + n)
            .rev()
            .map(|i| self.backward_field(i, stride))
            .collect::<Result<Vec<_>>>()?;
        let forward = propagate_chain(key, n - 1, &forward_fields).map_err(Error::at_frame(k))?;
        let backward =
            propagate_chain(next, n - 1, &backward_fields).map_err(Error::at_frame(k))?;
        assert_eq!(forward.len(), n, "forward chain length");
        assert_eq!(backward.len(), n, "backward chain length");
        Ok((forward, backward))
    }

    fn interpolate_interval(
        &self,
        k: usize,
        n: usize,
        key_features: FeatureMap,
        next_features: Option<&FeatureMap>,
        mut key_cost: FrameCost,
        interpolation: &Interpolation,
    ) -> Result<Vec<FrameOutput>> {
        let Some(next) = next_features else {
            return self.propagate_interval(k, n, key_features, key_cost, 0);
        };
        let seg = self.segment(k, &key_features, &mut key_cost)?;

        let (forward, backward) = timed(&mut key_cost, Component::Warp, || {
            self.branches(k, n, &key_features, next)
        })?;

        let mut out = Vec::with_capacity(n);
        out.push(FrameOutput {
            seg,
            cost: key_cost,
            source: FrameSource::Keyframe,
        });
        for p in 1..n {
            let i = k + p;
            let mut cost = FrameCost::default();
            let seg = match interpolation {
                Interpolation::Fused(weights) => {
                    let (alpha, _) = alpha_for(n, p)?;
                    let fused = timed(&mut cost, Component::Fusion, || {
                        fuse(&forward[p], &backward[n - p], alpha, weights)
                    })
                    .map_err(Error::at_frame(i))?;
                    self.segment(i, &fused, &mut cost)?
                }
                Interpolation::ForwardOnly => self.segment(i, &forward[p], &mut cost)?,
                Interpolation::BackwardOnly => self.segment(i, &backward[n - p], &mut cost)?,
            };
            out.push(FrameOutput {
                seg,
                cost,
                source: FrameSource::Interpolated {
                    forward_steps: p,
                    backward_steps: n - p,
                },
            });
        }
        Ok(out)
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn flatten(chunks: Vec<Vec<FrameOutput>>) -> StreamResult {
    StreamResult::from_outputs(chunks.into_iter().flatten().collect())
}

/// Full model on every frame.
pub fn run_baseline(frames: &[Frame], model: SegModel<'_>) -> Result<StreamResult> {
    baseline(frames, model, 1)
}

fn baseline(frames: &[Frame], model: SegModel<'_>, workers: usize) -> Result<StreamResult> {
    check_stream(frames)?;
    let stream = Stream {
        frames,
        motion: &[],
        model,
    };
    let one = |i: usize| -> Result<FrameOutput> {
        let mut cost = FrameCost::default();
        let f = stream.extract(i, &mut cost)?;
        let seg = stream.segment(i, &f, &mut cost)?;
        Ok(FrameOutput {
            seg,
            cost,
            source: FrameSource::Keyframe,
        })
    };
    let outputs = if workers > 1 {
        with_workers(workers, || {
            (0..frames.len())
                .into_par_iter()
                .map(one)
                .collect::<Result<Vec<_>>>()
        })??
    } else {
        (0..frames.len()).map(one).collect::<Result<Vec<_>>>()?
    };
    Ok(StreamResult::from_outputs(outputs))
}

/// Keyframe features propagated forward along block motion.
pub fn run_prop(
    frames: &[Frame],
    motion: &[MotionField],
    config: &PipelineConfig,
    model: SegModel<'_>,
) -> Result<StreamResult> {
    check_stream(frames)?;
    let n = config.keyframe_interval();
    let stream = Stream {
        frames,
        motion,
        model,
    };
    let interval = |k: usize| -> Result<Vec<FrameOutput>> {
        let mut cost = FrameCost::default();
        let f = stream.extract(k, &mut cost)?;
        stream.propagate_interval(k, n, f, cost, 0)
    };
    let keys = stream.keyframes(n);
    let chunks = if config.workers() > 1 {
        with_workers(config.workers(), || {
            keys.par_iter()
                .map(|&k| interval(k))
                .collect::<Result<Vec<_>>>()
        })??
    } else {
        keys.iter()
            .map(|&k| interval(k))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(flatten(chunks))
}

/// Which propagated maps feed the intermediate frames of the inter scheme.
/// The single-branch variants exist for ablation studies.
#[derive(Debug, Clone, PartialEq)]
pub enum Interpolation {
    Fused(FusionWeights),
    ForwardOnly,
    BackwardOnly,
}

/// Bi-directional feature interpolation between enclosing keyframes.
pub fn run_inter(
    frames: &[Frame],
    motion: &[MotionField],
    config: &PipelineConfig,
    model: SegModel<'_>,
) -> Result<StreamResult> {
    let fused = Interpolation::Fused(config.fusion().clone());
    run_inter_with(frames, motion, config, model, &fused)
}

/// The inter scheme with an explicit choice of branches; the fusion
/// weights in `config` are not consulted.
pub fn run_inter_with(
    frames: &[Frame],
    motion: &[MotionField],
    config: &PipelineConfig,
    model: SegModel<'_>,
    interpolation: &Interpolation,
) -> Result<StreamResult> {
    check_stream(frames)?;
    let n = config.keyframe_interval();
    let stream = Stream {
        frames,
        motion,
        model,
    };
    let keys = stream.keyframes(n);

    if config.workers() > 1 {
        // Batch schedule: every keyframe's features first, then all
        // intervals independently.
        let chunks = with_workers(config.workers(), || -> Result<Vec<Vec<FrameOutput>>> {
            let features = keys
                .par_iter()
                .map(|&k| {
                    let mut cost = FrameCost::default();
                    stream.extract(k, &mut cost).map(|f| (f, cost))
                })
                .collect::<Result<Vec<_>>>()?;
            keys.par_iter()
                .enumerate()
                .map(|(j, &k)| {
                    let (f, cost) = features[j].clone();
                    let next = features.get(j + 1).map(|(f, _)| f);
                    stream.interpolate_interval(k, n, f, next, cost, interpolation)
                })
                .collect()
        })??;
        return Ok(flatten(chunks));
    }

    let mut chunks = Vec::with_capacity(keys.len());
    let mut carried: Option<FeatureMap> = None;
    for &k in &keys {
        let mut cost = FrameCost::default();
        let f = match carried.take() {
            Some(f) => f,
            None => stream.extract(k, &mut cost)?,
        };
        let next = if k + n < frames.len() {
            Some(stream.extract(k + n, &mut cost)?)
        } else {
            None
        };
        chunks.push(stream.interpolate_interval(k, n, f, next.as_ref(), cost, interpolation)?);
        carried = next;
    }
    Ok(flatten(chunks))
}

/// Runs the scheme selected by `config.mode()`.
pub fn run(
    frames: &[Frame],
    motion: &[MotionField],
    config: &PipelineConfig,
    model: SegModel<'_>,
) -> Result<StreamResult> {
    match config.mode() {
        Scheme::Baseline => baseline(frames, model, config.workers()),
        Scheme::Prop => run_prop(frames, motion, config, model),
        Scheme::Inter => run_inter(frames, motion, config, model),
    }
}

/// Training samples for a conv fusion kernel: for every complete interval
/// and intermediate offset, the two propagated branches with the features
/// the network computes on that frame as the target.
pub fn fusion_samples(
    frames: &[Frame],
    motion: &[MotionField],
    interval: usize,
    model: SegModel<'_>,
) -> Result<Vec<FusionSample>> {
    check_stream(frames)?;
    if interval < 2 {
        return Err(Error::InvalidArgument(format!(
            "interval {interval} has no intermediate frames"
        )));
    }
    let stream = Stream {
        frames,
        motion,
        model,
    };
    let mut unused = FrameCost::default();
    let mut samples = Vec::new();
    for k in (0..frames.len()).step_by(interval) {
        if k + interval >= frames.len() {
            break;
        }
        let key = stream.extract(k, &mut unused)?;
        let next = stream.extract(k + interval, &mut unused)?;
        let (forward, backward) = stream
            .branches(k, interval, &key, &next)
            .map_err(Error::at_frame(k))?;
        for p in 1..interval {
            samples.push(FusionSample {
                forward: forward[p].clone(),
                backward: backward[interval - p].clone(),
                alpha: alpha_for(interval, p)?.0,
                target: stream.extract(k + p, &mut unused)?,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "a stream of {} frames has no complete interval of {interval}",
            frames.len()
        )));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ToyFeatureNet, ToyModel};

    fn stream(len: usize) -> Vec<Frame> {
        (0..len)
            .map(|i| {
                let px = (0..32 * 32 * 3)
                    .map(|j| ((j * 7 + i * 13) % 251) as u8)
                    .collect();
                Frame::new(32, 32, px, i).unwrap()
            })
            .collect()
    }

    fn zeros(len: usize) -> Vec<MotionField> {
        vec![MotionField::zeros(2, 2, 16).unwrap(); len]
    }

    #[test]
    fn missing_motion_names_frame() {
        let frames = stream(5);
        let task = ToyModel::random(3, 12, 1).unwrap();
        let model = SegModel::new(&ToyFeatureNet, &task);
        let cfg = PipelineConfig::new(Scheme::Prop, 4, 3).unwrap();
        let err = run_prop(&frames, &zeros(2), &cfg, model).unwrap_err();
        assert!(matches!(err, Error::MissingMotion(2)), "{err}");
        let cfg = PipelineConfig::new(Scheme::Inter, 4, 3).unwrap();
        let err = run_inter(&frames, &zeros(3), &cfg, model).unwrap_err();
        assert!(matches!(err, Error::MissingMotion(_)), "{err}");
    }

    #[test]
    fn model_errors_carry_frame_index() {
        let mut frames = stream(3);
        frames.push(Frame::filled(32, 32, [0; 3], 3).unwrap());
        let task = ToyModel::random(3, 5, 1).unwrap();
        let model = SegModel::new(&ToyFeatureNet, &task);
        let err = run_baseline(&frames, model).unwrap_err();
        assert!(matches!(err, Error::AtFrame { index: 0, .. }), "{err}");
    }

    #[test]
    fn sources_and_costs() {
        let frames = stream(7);
        let task = ToyModel::random(3, 12, 1).unwrap();
        let model = SegModel::new(&ToyFeatureNet, &task);
        let cfg = PipelineConfig::new(Scheme::Inter, 3, 3).unwrap();
        let r = run_inter(&frames, &zeros(7), &cfg, model).unwrap();
        assert_eq!(
            r.sources,
            vec![
                FrameSource::Keyframe,
                FrameSource::Interpolated {
                    forward_steps: 1,
                    backward_steps: 2
                },
                FrameSource::Interpolated {
                    forward_steps: 2,
                    backward_steps: 1
                },
                FrameSource::Keyframe,
                FrameSource::Interpolated {
                    forward_steps: 1,
                    backward_steps: 2
                },
                FrameSource::Interpolated {
                    forward_steps: 2,
                    backward_steps: 1
                },
                FrameSource::Keyframe,
            ]
        );
        assert_eq!(r.feature_calls(), 3);
        assert_eq!(r.costs[0].calls(Component::Feature), 2);
        assert_eq!(r.costs[3].calls(Component::Feature), 1);
        assert_eq!(r.costs[6].calls(Component::Feature), 0);
        for (cost, key) in r.costs.iter().zip(&r.keyframe_flags) {
            if !key {
                assert!(!cost.has(Component::Feature));
                assert!(cost.has(Component::Fusion));
            }
        }
    }

    #[test]
    fn latency() {
        assert_eq!(output_latency(Scheme::Inter, 4), 4);
        assert_eq!(output_latency(Scheme::Inter, 1), 0);
        assert_eq!(output_latency(Scheme::Prop, 4), 0);
    }
}
