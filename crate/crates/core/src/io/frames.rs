//! Frame and label-map directories.
//!
//! Frames are RGB PPM or PNG files; label maps are single-channel PGM or PNG
//! files whose pixel values are the labels. Both are read in lexicographic
//! filename order.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage};

use crate::error::{Error, Result};
use crate::types::{Frame, SegMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RasterFormat {
    /// PPM for frames, PGM for labels.
    #[default]
    Pnm,
    Png,
}

impl RasterFormat {
    fn frame_ext(self) -> &'static str {
        match self {
            RasterFormat::Pnm => "ppm",
            RasterFormat::Png => "png",
        }
    }

    fn label_ext(self) -> &'static str {
        match self {
            RasterFormat::Pnm => "pgm",
            RasterFormat::Png => "png",
        }
    }
}

impl std::str::FromStr for RasterFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pnm" | "ppm" | "pgm" => Ok(RasterFormat::Pnm),
            "png" => Ok(RasterFormat::Png),
            _ => Err(Error::InvalidArgument(format!(
                "unknown image format {s:?}"
            ))),
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 5] = ["ppm", "pgm", "pnm", "png", "pbm"];

/// Image files in `dir`, sorted by name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let path = entry.map_err(Error::io(dir))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            message: "no PPM, PGM or PNG files".into(),
        });
    }
    Ok(files)
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)
        .map_err(Error::io(path))?
        .with_guessed_format()
        .map_err(Error::io(path))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn check_size(path: &Path, first: Option<(usize, usize)>, size: (usize, usize)) -> Result<()> {
    match first {
        Some(f) if f != size => Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{}x{} image among {}x{} images", size.0, size.1, f.0, f.1),
        }),
        _ => Ok(()),
    }
}

/// Loads every frame in `dir`; indices are assigned `0..N`.
pub fn load_frames(dir: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let mut frames: Vec<Frame> = Vec::new();
    for (i, path) in image_files(dir.as_ref())?.into_iter().enumerate() {
        let img = open(&path)?.into_rgb8();
        let size = (img.width() as usize, img.height() as usize);
        check_size(&path, frames.first().map(|f| (f.width(), f.height())), size)?;
        let frame = Frame::new(size.0, size.1, img.into_raw(), i).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        frames.push(frame);
    }
    Ok(frames)
}

fn save(path: &Path, pixels: &[u8], width: usize, height: usize, color: ColorType) -> Result<()> {
    image::save_buffer(path, pixels, width as u32, height as u32, color).map_err(|source| {
        Error::Image {
            path: path.to_path_buf(),
            source,
        }
    })
}

/// Writes `frame_00000.ppm`, ... (or `.png`) and returns the paths.
pub fn save_frames(
    dir: impl AsRef<Path>,
    frames: &[Frame],
    format: RasterFormat,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(format!("frame_{i:05}.{}", format.frame_ext()));
            save(&path, f.pixels(), f.width(), f.height(), ColorType::Rgb8)?;
            Ok(path)
        })
        .collect()
}

/// Loads single-channel label maps from `dir`.
pub fn load_labels(dir: impl AsRef<Path>) -> Result<Vec<SegMap>> {
    let mut maps: Vec<SegMap> = Vec::new();
    for path in image_files(dir.as_ref())? {
        let img = open(&path)?;
        if img.color() != ColorType::L8 {
            return Err(Error::Format {
                path,
                message: format!(
                    "label maps must be 8-bit grayscale, found {:?}",
                    img.color()
                ),
            });
        }
        let img = img.into_luma8();
        let size = (img.width() as usize, img.height() as usize);
        check_size(&path, maps.first().map(|m| (m.width(), m.height())), size)?;
        maps.push(SegMap::new(size.0, size.1, img.into_raw())?);
    }
    Ok(maps)
}

/// Writes `label_00000.pgm`, ... (or `.png`) and returns the paths.
pub fn save_labels(
    dir: impl AsRef<Path>,
    maps: &[SegMap],
    format: RasterFormat,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    maps.iter()
        .enumerate()
        .map(|(i, m)| {
            let path = dir.join(format!("label_{i:05}.{}", format.label_ext()));
            save(&path, m.labels(), m.width(), m.height(), ColorType::L8)?;
            Ok(path)
        })
        .collect()
}
