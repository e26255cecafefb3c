//! Scene and model inputs shared by the evaluation commands.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use bmvseg::eval::{benchmark_spec, fit_toy_model, make_scene, Dataset, SceneSpec, BENCHMARK_SEED};
use bmvseg::io::{load_frames, load_labels, read_json};
use bmvseg::{Frame, SegMap, ToyModel};

use crate::SceneOpts;

#[derive(Debug, Clone)]
pub enum SceneArg {
    Benchmark,
    Spec(PathBuf),
    /// Output of `make-scene`: `frames/`, `labels/` and optionally `scene.json`.
    Dir(PathBuf),
}

impl FromStr for SceneArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "benchmark" {
            return Ok(SceneArg::Benchmark);
        }
        let path = PathBuf::from(s);
        if path.is_dir() {
            Ok(SceneArg::Dir(path))
        } else if path.is_file() {
            Ok(SceneArg::Spec(path))
        } else {
            Err(format!("{s} is neither a scene spec nor a scene directory"))
        }
    }
}

/// The model is always fitted on a different rendering than the one it is
/// scored on.
pub fn training_seed(seed: u64) -> u64 {
    seed.wrapping_add(1000)
}

pub fn scene_spec(arg: &str) -> Result<SceneSpec> {
    if arg == "benchmark" {
        Ok(benchmark_spec())
    } else {
        Ok(read_json(arg)?)
    }
}

pub struct Labeled {
    pub frames: Vec<Frame>,
    pub ground_truth: Vec<SegMap>,
    pub num_classes: usize,
}

impl Labeled {
    pub fn dataset(&self) -> Result<Dataset<'_>> {
        Ok(Dataset::new(
            &self.frames,
            &self.ground_truth,
            self.num_classes,
        )?)
    }
}

pub struct Input {
    pub data: Labeled,
    pub model: ToyModel,
}

impl std::ops::Deref for Input {
    type Target = Labeled;

    fn deref(&self) -> &Labeled {
        &self.data
    }
}

fn render(spec: &SceneSpec, seed: u64) -> Result<Labeled> {
    let scene = make_scene(spec, seed)?;
    let num_classes = scene.num_classes();
    Ok(Labeled {
        frames: scene.frames,
        ground_truth: scene.ground_truth,
        num_classes,
    })
}

fn load_dir(dir: &Path, classes: Option<usize>) -> Result<Labeled> {
    let spec_path = dir.join("scene.json");
    let num_classes = match classes {
        Some(c) => c,
        None if spec_path.is_file() => read_json::<SceneSpec>(&spec_path)?.num_classes(),
        None => bail!("{} has no scene.json; pass --classes", dir.display()),
    };
    Ok(Labeled {
        frames: load_frames(dir.join("frames"))?,
        ground_truth: load_labels(dir.join("labels"))?,
        num_classes,
    })
}

/// Labeled frames to fit on. Specs are rendered at `seed`.
pub fn training_data(opts: &SceneOpts, seed: u64) -> Result<Labeled> {
    match &opts.scene {
        SceneArg::Benchmark => render(&benchmark_spec(), seed),
        SceneArg::Spec(path) => render(&read_json(path)?, seed),
        SceneArg::Dir(dir) => load_dir(dir, opts.classes),
    }
}

/// Evaluation data and the model to score on it.
pub fn load_input(opts: &SceneOpts, model: Option<&Path>, seed: u64) -> Result<Input> {
    let data = training_data(opts, seed)?;
    let model = match (model, &opts.scene) {
        (Some(path), _) => read_json(path)?,
        (None, SceneArg::Dir(dir)) => {
            eprintln!(
                "note: no --model given; fitting on {} itself",
                dir.display()
            );
            fit_toy_model(&data.dataset()?)?
        }
        (None, _) => fit_toy_model(&training_data(opts, training_seed(seed))?.dataset()?)?,
    };
    if model.num_classes() != data.num_classes {
        bail!(
            "model has {} classes but the scene has {}",
            model.num_classes(),
            data.num_classes
        );
    }
    Ok(Input { data, model })
}

/// Model JSON at `path`, or the model fitted on the bundled scene.
pub fn load_model(path: Option<&Path>) -> Result<ToyModel> {
    match path {
        Some(p) => read_json(p).with_context(|| format!("loading model {}", p.display())),
        None => Ok(fit_toy_model(
            &render(&benchmark_spec(), training_seed(BENCHMARK_SEED))?.dataset()?,
        )?),
    }
}
