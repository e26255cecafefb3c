//! Files: frames, label maps, motion sidecars, JSON models and reports.

pub mod frames;
pub mod report;
pub mod sidecar;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use frames::{load_frames, load_labels, save_frames, save_labels, RasterFormat};
pub use report::{sweep_svg, write_ablation_csv, write_sweep_csv};
pub use sidecar::{read_sidecar, write_sidecar, MotionSidecar};

/// Reads a JSON document such as a [`crate::ToyModel`],
/// [`crate::FusionWeights`] or [`crate::eval::SceneSpec`].
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}
