//! Accuracy, throughput and synthetic benchmarks.

pub mod metrics;
pub mod scene;
pub mod sweep;
pub mod throughput;

pub use metrics::{class_counts, min_accuracy, miou, per_offset_miou, ClassCounts, MiouReport};
pub use scene::{make_scene, BackgroundSpec, ObjectSpec, SceneSpec, Shape, SyntheticScene};
pub use sweep::{
    fusion_ablation, sweep, sweep_with_motion, AblationRow, IntervalReport, SweepOptions,
};
pub use throughput::{
    intermediate_cost_reduction, throughput_model, CostModel, PredictedThroughput,
};

use crate::error::{Error, Result};
use crate::model::{descriptor, toy_features, ToyModel};
use crate::types::{Frame, SegMap};

/// Frames with aligned ground truth.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub frames: &'a [Frame],
    pub ground_truth: &'a [SegMap],
    pub num_classes: usize,
}

impl<'a> Dataset<'a> {
    pub fn new(
        frames: &'a [Frame],
        ground_truth: &'a [SegMap],
        num_classes: usize,
    ) -> Result<Self> {
        let d = Self {
            frames,
            ground_truth,
            num_classes,
        };
        d.check()?;
        Ok(d)
    }

    pub(crate) fn check(&self) -> Result<()> {
        crate::types::check_stream(self.frames)?;
        if self.frames.len() != self.ground_truth.len() {
            return Err(Error::Mismatch(format!(
                "{} frames with {} ground-truth maps",
                self.frames.len(),
                self.ground_truth.len()
            )));
        }
        for (i, (f, g)) in self.frames.iter().zip(self.ground_truth).enumerate() {
            if f.width() != g.width() || f.height() != g.height() {
                return Err(Error::AtFrame {
                    index: i,
                    source: Box::new(Error::Mismatch(
                        "frame and ground truth differ in size".into(),
                    )),
                });
            }
        }
        Ok(())
    }
}

impl SyntheticScene {
    pub fn dataset(&self) -> Dataset<'_> {
        Dataset {
            frames: &self.frames,
            ground_truth: &self.ground_truth,
            num_classes: self.num_classes(),
        }
    }
}

/// Fits a [`ToyModel`] to labeled frames, with the histogram channels as
/// the mass channels.
pub fn fit_toy_model(data: &Dataset<'_>) -> Result<ToyModel> {
    data.check()?;
    let features = data
        .frames
        .iter()
        .map(toy_features)
        .collect::<Result<Vec<_>>>()?;
    ToyModel::fit(
        &features,
        data.ground_truth,
        data.num_classes,
        descriptor::HISTOGRAM.collect(),
    )
}

/// Seed of the benchmark stream.
pub const BENCHMARK_SEED: u64 = 7;
/// Seed of the separately rendered stream the benchmark model is fitted on.
pub const BENCHMARK_TRAINING_SEED: u64 = 1007;

const BENCHMARK_JSON: &str = include_str!("../../scenes/benchmark.json");

/// The bundled translating scene: a panning background, moving objects and
/// one object entering mid-stream.
pub fn benchmark_spec() -> SceneSpec {
    serde_json::from_str(BENCHMARK_JSON).expect("bundled benchmark scene parses")
}

pub fn benchmark_json() -> &'static str {
    BENCHMARK_JSON
}

/// Benchmark stream plus a toy model fitted on an independent rendering.
pub struct Benchmark {
    pub scene: SyntheticScene,
    pub model: ToyModel,
}

pub fn benchmark() -> Result<Benchmark> {
    let spec = benchmark_spec();
    let training = make_scene(&spec, BENCHMARK_TRAINING_SEED)?;
    let model = fit_toy_model(&training.dataset())?;
    let scene = make_scene(&spec, BENCHMARK_SEED)?;
    Ok(Benchmark { scene, model })
}
