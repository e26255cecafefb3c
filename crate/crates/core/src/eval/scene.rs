//! Procedural moving-object scenes with exact ground truth.
//!
//! A scene is a textured background, optionally panning, with textured
//! rectangles and disks drawn in order on top of it. Everything moves at a
//! constant velocity; positions are rounded to whole pixels per frame, so
//! integer velocities translate content exactly. Textures are random
//! blocky intensity patterns fixed to each object (and to the background
//! plane), drawn from the scene seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Frame, SegMap, BLOCK_SIZE, IGNORE_LABEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub background: BackgroundSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    #[serde(default)]
    pub class: u8,
    pub color: [u8; 3],
    #[serde(default = "default_texture")]
    pub texture: u8,
    #[serde(default = "default_texel")]
    pub texel: usize,
    /// Pan of the background plane, pixels per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            class: 0,
            color: [96, 96, 96],
            texture: default_texture(),
            texel: default_texel(),
            velocity: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Rect { width: usize, height: usize },
    Disk { radius: usize },
}

impl Shape {
    /// Bounding box size.
    fn extent(self) -> (usize, usize) {
        match self {
            Shape::Rect { width, height } => (width, height),
            Shape::Disk { radius } => (2 * radius + 1, 2 * radius + 1),
        }
    }

    /// Whether bounding-box local pixel `(lx, ly)` is inside the shape.
    fn covers(self, lx: i64, ly: i64) -> bool {
        let (w, h) = self.extent();
        if lx < 0 || ly < 0 || lx >= w as i64 || ly >= h as i64 {
            return false;
        }
        match self {
            Shape::Rect { .. } => true,
            Shape::Disk { radius } => {
                let r = radius as i64;
                (lx - r).pow(2) + (ly - r).pow(2) <= r * r
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class: u8,
    pub shape: Shape,
    pub color: [u8; 3],
    #[serde(default = "default_texture")]
    pub texture: u8,
    #[serde(default = "default_texel")]
    pub texel: usize,
    /// Top-left corner of the bounding box at frame 0, which may lie
    /// outside the frame.
    pub position: [f64; 2],
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// First frame in which the object is drawn.
    #[serde(default)]
    pub enter: usize,
    /// First frame in which it is no longer drawn.
    #[serde(default)]
    pub exit: Option<usize>,
}

fn default_texture() -> u8 {
    24
}

fn default_texel() -> usize {
    4
}

impl ObjectSpec {
    fn corner(&self, t: usize) -> (i64, i64) {
        let t = t as f64;
        (
            (self.position[0] + self.velocity[0] * t).round() as i64,
            (self.position[1] + self.velocity[1] * t).round() as i64,
        )
    }

    pub fn visible(&self, t: usize) -> bool {
        t >= self.enter && self.exit.is_none_or(|e| t < e)
    }
}

impl SceneSpec {
    /// One more than the largest class used.
    pub fn num_classes(&self) -> usize {
        self.objects
            .iter()
            .map(|o| o.class)
            .chain([self.background.class])
            .max()
            .map_or(1, |c| c as usize + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("scene: {m}")));
        if self.width < BLOCK_SIZE || self.height < BLOCK_SIZE {
            return bad(format!(
                "frames must be at least {BLOCK_SIZE}x{BLOCK_SIZE}, got {}x{}",
                self.width, self.height
            ));
        }
        if self.frames == 0 {
            return bad("no frames".into());
        }
        let bg = &self.background;
        if bg.class == IGNORE_LABEL {
            return bad(format!("class {IGNORE_LABEL} is reserved"));
        }
        if bg.texel == 0 || bg.velocity.iter().any(|v| !v.is_finite()) {
            return bad("background needs a positive texel and finite velocity".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.class == IGNORE_LABEL {
                return bad(format!("object {i}: class {IGNORE_LABEL} is reserved"));
            }
            let (w, h) = o.shape.extent();
            if w == 0 || h == 0 || matches!(o.shape, Shape::Disk { radius: 0 }) {
                return bad(format!("object {i}: empty shape"));
            }
            if o.texel == 0 {
                return bad(format!("object {i}: texel must be positive"));
            }
            if o.position.iter().chain(&o.velocity).any(|v| !v.is_finite()) {
                return bad(format!("object {i}: non-finite position or velocity"));
            }
            if o.enter >= self.frames {
                return bad(format!("object {i}: enters after the last frame"));
            }
            if let Some(e) = o.exit {
                if e <= o.enter {
                    return bad(format!("object {i}: exits before it enters"));
                }
            }
            for t in (0..self.frames).filter(|&t| o.visible(t)) {
                let (x, y) = o.corner(t);
                let inside = x < self.width as i64
                    && y < self.height as i64
                    && x + w as i64 > 0
                    && y + h as i64 > 0;
                if !inside {
                    return bad(format!(
                        "object {i}: entirely outside the frame at frame {t}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Intensity offsets on a grid of `texel`-sized squares, wrapping.
struct Texture {
    cols: usize,
    rows: usize,
    texel: usize,
    values: Vec<i16>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, texel: usize, amplitude: u8) -> Self {
        let cols = width.div_ceil(texel);
        let rows = height.div_ceil(texel);
        let a = amplitude as i16;
        let values = (0..cols * rows).map(|_| rng.random_range(-a..=a)).collect();
        Self {
            cols,
            rows,
            texel,
            values,
        }
    }

    fn at(&self, x: i64, y: i64) -> i16 {
        let t = self.texel as i64;
        let c = x.div_euclid(t).rem_euclid(self.cols as i64) as usize;
        let r = y.div_euclid(t).rem_euclid(self.rows as i64) as usize;
        self.values[r * self.cols + c]
    }
}

fn shade(color: [u8; 3], offset: i16) -> [u8; 3] {
    color.map(|c| (c as i16 + offset).clamp(0, 255) as u8)
}

/// Side of the wrapping background texture tile, in pixels.
const BACKGROUND_TILE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub seed: u64,
    pub frames: Vec<Frame>,
    pub ground_truth: Vec<SegMap>,
}

impl SyntheticScene {
    pub fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn make_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = &spec.background;
    let bg_tex = Texture::new(
        &mut rng,
        BACKGROUND_TILE,
        BACKGROUND_TILE,
        bg.texel,
        bg.texture,
    );
    let textures: Vec<Texture> = spec
        .objects
        .iter()
        .map(|o| {
            let (w, h) = o.shape.extent();
            Texture::new(&mut rng, w, h, o.texel, o.texture)
        })
        .collect();

    let (w, h) = (spec.width, spec.height);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut ground_truth = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let pan = (
            (bg.velocity[0] * t as f64).round() as i64,
            (bg.velocity[1] * t as f64).round() as i64,
        );
        let mut pixels = Vec::with_capacity(w * h * 3);
        let mut labels = vec![bg.class; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                pixels.extend(shade(bg.color, bg_tex.at(x - pan.0, y - pan.1)));
            }
        }
        for (o, tex) in spec.objects.iter().zip(&textures) {
            if !o.visible(t) {
                continue;
            }
            let (ox, oy) = o.corner(t);
            let (ow, oh) = o.shape.extent();
            let x0 = ox.max(0);
            let y0 = oy.max(0);
            let x1 = (ox + ow as i64).min(w as i64);
            let y1 = (oy + oh as i64).min(h as i64);
            for y in y0..y1 {
                for x in x0..x1 {
                    let (lx, ly) = (x - ox, y - oy);
                    if !o.shape.covers(lx, ly) {
                        continue;
                    }
                    let i = y as usize * w + x as usize;
                    labels[i] = o.class;
                    pixels[3 * i..3 * i + 3].copy_from_slice(&shade(o.color, tex.at(lx, ly)));
                }
            }
        }
        frames.push(Frame::new(w, h, pixels, t)?);
        ground_truth.push(SegMap::new(w, h, labels)?);
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        seed,
        frames,
        ground_truth,
    })
}
