//! Shared data model: frames, block motion, feature maps, warp fields and
//! label maps.
//!
//! Every constructor validates its dimensions up front, so a value of any of
//! these types is always internally consistent.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionKind, FusionWeights};

/// Label value excluded from evaluation.
pub const IGNORE_LABEL: u8 = 255;

/// Default block size for motion estimation, and the feature stride.
pub const BLOCK_SIZE: usize = 16;

/// An 8-bit RGB frame at position `index` in its stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    index: usize,
}

impl Frame {
    /// Wraps a row-major `height * width * 3` buffer.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, index: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Dimensions(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3], index: usize) -> Result<Self> {
        let pixels = rgb.repeat(width * height);
        Self::new(width, height, pixels, index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn same_size(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Checks that a stream is non-empty, uniformly sized and strictly
/// increasing in frame index.
pub fn check_stream(frames: &[Frame]) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty frame stream".into()))?;
    for pair in frames.windows(2) {
        if !pair[1].same_size(first) {
            return Err(Error::Mismatch(format!(
                "frame {} is {}x{}, stream is {}x{}",
                pair[1].index, pair[1].width, pair[1].height, first.width, first.height
            )));
        }
        if pair[1].index <= pair[0].index {
            return Err(Error::InvalidArgument(format!(
                "frame indices must strictly increase ({} follows {})",
                pair[1].index, pair[0].index
            )));
        }
    }
    Ok(())
}

/// A 2-D displacement. Pixel units in a [`MotionField`], cell units in a
/// [`WarpField`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
}

impl Offset {
    pub const ZERO: Offset = Offset { dx: 0.0, dy: 0.0 };

    pub const fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }
}

impl std::ops::Neg for Offset {
    type Output = Offset;

    fn neg(self) -> Offset {
        Offset::new(-self.dx, -self.dy)
    }
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.dx, self.dy)
    }
}

/// Block motion for one frame, one vector per `block_size` square block.
///
/// `vectors[b]` is the displacement of block `b`'s content from the
/// previous frame to the current one: the best match for the block at
/// position `q` in the current frame sits at `q - vectors[b]` in the
/// previous frame. Forward warping therefore gathers at `q - v`, which is
/// exactly warping with the negated field.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    grid_w: usize,
    grid_h: usize,
    block_size: usize,
    vectors: Vec<Offset>,
}

impl MotionField {
    pub fn new(
        grid_w: usize,
        grid_h: usize,
        block_size: usize,
        vectors: Vec<Offset>,
    ) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Dimensions("block size must be positive".into()));
        }
        if vectors.len() != grid_w * grid_h {
            return Err(Error::Dimensions(format!(
                "motion grid {grid_w}x{grid_h} needs {} vectors, got {}",
                grid_w * grid_h,
                vectors.len()
            )));
        }
        if vectors
            .iter()
            .any(|v| !v.dx.is_finite() || !v.dy.is_finite())
        {
            return Err(Error::InvalidArgument(
                "motion vectors must be finite".into(),
            ));
        }
        Ok(Self {
            grid_w,
            grid_h,
            block_size,
            vectors,
        })
    }

    pub fn zeros(grid_w: usize, grid_h: usize, block_size: usize) -> Result<Self> {
        Self::new(
            grid_w,
            grid_h,
            block_size,
            vec![Offset::ZERO; grid_w * grid_h],
        )
    }

    /// All-zero field covering a `width` x `height` frame.
    pub fn zeros_for_frame(width: usize, height: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Dimensions("block size must be positive".into()));
        }
        Self::zeros(
            width.div_ceil(block_size),
            height.div_ceil(block_size),
            block_size,
        )
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn vectors(&self) -> &[Offset] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, bx: usize, by: usize) -> Offset {
        self.vectors[by * self.grid_w + bx]
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.iter().all(|v| v.dx == 0.0 && v.dy == 0.0)
    }

    pub(crate) fn map_vectors(&self, f: impl Fn(Offset) -> Offset) -> Self {
        Self {
            vectors: self.vectors.iter().copied().map(f).collect(),
            ..self.clone()
        }
    }
}

/// A `channels x height x width` grid of features, one cell per `stride`
/// pixels of the source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    stride: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        stride: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 || stride == 0 {
            return Err(Error::Dimensions(format!(
                "feature map {channels}x{height}x{width} (stride {stride}) has a zero extent"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimensions(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "feature value {i} is not finite"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            stride,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize, stride: usize) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            stride,
            vec![0.0; channels * height * width],
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Feature vector of one cell, gathered across channels.
    pub fn cell(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn scaled(&self, factor: f64) -> FeatureMap {
        self.map(|v| factor * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        FeatureMap {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Elementwise combination of two same-shaped maps.
    pub fn zip_with(&self, other: &FeatureMap, f: impl Fn(f64, f64) -> f64) -> Result<FeatureMap> {
        if !self.same_shape(other) {
            return Err(Error::Mismatch(format!(
                "feature maps {}x{}x{} and {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        Ok(FeatureMap {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..self.clone()
        })
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Builds a map from parts that are already known to be consistent.
    pub(crate) fn from_parts(
        channels: usize,
        height: usize,
        width: usize,
        stride: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            stride,
            data,
        }
    }
}

/// Per-cell displacements in feature-cell units.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    height: usize,
    width: usize,
    offsets: Vec<Offset>,
}

impl WarpField {
    pub fn new(height: usize, width: usize, offsets: Vec<Offset>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimensions(format!(
                "warp field {height}x{width} has a zero extent"
            )));
        }
        if offsets.len() != height * width {
            return Err(Error::Dimensions(format!(
                "warp field {height}x{width} needs {} offsets, got {}",
                height * width,
                offsets.len()
            )));
        }
        if offsets
            .iter()
            .any(|v| !v.dx.is_finite() || !v.dy.is_finite())
        {
            return Err(Error::InvalidArgument("warp offsets must be finite".into()));
        }
        Ok(Self {
            height,
            width,
            offsets,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![Offset::ZERO; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> Offset {
        self.offsets[y * self.width + x]
    }
}

/// Per-pixel class labels; [`IGNORE_LABEL`] marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl SegMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!(
                "label map must be non-empty, got {width}x{height}"
            )));
        }
        if labels.len() != width * height {
            return Err(Error::Dimensions(format!(
                "label map {width}x{height} needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Like [`SegMap::new`], additionally rejecting labels outside
    /// `0..num_classes` (other than the ignore label).
    pub fn with_classes(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        num_classes: usize,
    ) -> Result<Self> {
        let map = Self::new(width, height, labels)?;
        map.check_classes(num_classes)?;
        Ok(map)
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .find(|&&l| l != IGNORE_LABEL && l as usize >= num_classes)
        {
            Some(&l) => Err(Error::InvalidArgument(format!(
                "label {l} outside 0..{num_classes}"
            ))),
            None => Ok(()),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn same_size(&self, other: &SegMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// End-to-end scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Full model on every frame.
    Baseline,
    /// Forward feature propagation from the last keyframe.
    Prop,
    /// Bi-directional interpolation between enclosing keyframes.
    Inter,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Baseline, Scheme::Prop, Scheme::Inter];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::Prop => "prop",
            Scheme::Inter => "inter",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Scheme::Baseline),
            "prop" => Ok(Scheme::Prop),
            "inter" => Ok(Scheme::Inter),
            other => Err(Error::InvalidArgument(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Settings for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    keyframe_interval: usize,
    fusion: FusionWeights,
    mode: Scheme,
    num_classes: usize,
    search_radius: usize,
    workers: usize,
}

impl PipelineConfig {
    pub fn new(mode: Scheme, keyframe_interval: usize, num_classes: usize) -> Result<Self> {
        if keyframe_interval == 0 {
            return Err(Error::InvalidArgument(
                "keyframe interval must be at least 1".into(),
            ));
        }
        if num_classes == 0 || num_classes > IGNORE_LABEL as usize {
            return Err(Error::InvalidArgument(format!(
                "class count must be in 1..={}, got {num_classes}",
                IGNORE_LABEL
            )));
        }
        Ok(Self {
            keyframe_interval,
            fusion: FusionWeights::average(),
            mode,
            num_classes,
            search_radius: BLOCK_SIZE,
            workers: 1,
        })
    }

    pub fn with_fusion(mut self, fusion: FusionWeights) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn with_search_radius(mut self, radius: usize) -> Self {
        self.search_radius = radius;
        self
    }

    /// Worker threads used to process keyframe intervals; 1 runs the
    /// stream strictly in order.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn keyframe_interval(&self) -> usize {
        self.keyframe_interval
    }

    pub fn fusion(&self) -> &FusionWeights {
        &self.fusion
    }

    pub fn fusion_kind(&self) -> FusionKind {
        self.fusion.kind()
    }

    pub fn mode(&self) -> Scheme {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn search_radius(&self) -> usize {
        self.search_radius
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}
