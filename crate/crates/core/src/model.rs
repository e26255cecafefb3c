//! Feature/task network split and the desk-scale reference model.
//!
//! A [`FeatureNetwork`] maps a frame to a stride-16 feature map and is the
//! expensive part that only runs on keyframes. A [`TaskNetwork`] turns any
//! feature map, extracted or warped, into a full-resolution label map.
//!
//! The reference implementations are deliberately small. [`ToyFeatureNet`]
//! describes each 16x16 cell by twelve colour, intensity and texture
//! statistics, so translating scene content translates the descriptors.
//! [`ToyModel`] classifies cells against per-class centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureMap, Frame, SegMap, BLOCK_SIZE, IGNORE_LABEL};

pub trait FeatureNetwork: Send + Sync {
    fn channels(&self) -> usize;

    fn stride(&self) -> usize;

    fn extract(&self, frame: &Frame) -> Result<FeatureMap>;
}

pub trait TaskNetwork: Send + Sync {
    fn num_classes(&self) -> usize;

    /// Segments a `width` x `height` frame from its features.
    fn segment(&self, features: &FeatureMap, width: usize, height: usize) -> Result<SegMap>;
}

/// A feature network paired with the task network that reads its output.
#[derive(Clone, Copy)]
pub struct SegModel<'a> {
    pub features: &'a dyn FeatureNetwork,
    pub task: &'a dyn TaskNetwork,
}

impl<'a> SegModel<'a> {
    pub fn new(features: &'a dyn FeatureNetwork, task: &'a dyn TaskNetwork) -> Self {
        Self { features, task }
    }

    /// Full single-frame inference.
    pub fn segment_frame(&self, frame: &Frame) -> Result<SegMap> {
        let f = self.features.extract(frame)?;
        self.task.segment(&f, frame.width(), frame.height())
    }
}

/// Channel layout of the toy descriptor.
pub mod descriptor {
    use std::ops::Range;

    pub const LEN: usize = 12;
    pub const MEAN_RGB: Range<usize> = 0..3;
    /// Dark / mid / bright intensity fractions; they sum to one.
    pub const HISTOGRAM: Range<usize> = 3..6;
    pub const GRAD_X: usize = 6;
    pub const GRAD_Y: usize = 7;
    /// Top-left, top-right, bottom-left, bottom-right mean intensity.
    pub const QUADRANTS: Range<usize> = 8..12;
}

/// Intensity in `[0, 1]` from 8-bit RGB.
#[inline]
pub fn intensity(rgb: [u8; 3]) -> f64 {
    (299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32) as f64 / 255_000.0
}

/// Histogram bin of an intensity: `[0, 1/3)`, `[1/3, 2/3)`, `[2/3, 1]`.
#[inline]
fn intensity_bin(rgb: [u8; 3]) -> usize {
    let scaled = 3 * (299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32);
    if scaled < 255_000 {
        0
    } else if scaled < 510_000 {
        1
    } else {
        2
    }
}

/// The twelve-channel cell descriptor network, stride 16.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ToyFeatureNet;

impl FeatureNetwork for ToyFeatureNet {
    fn channels(&self) -> usize {
        descriptor::LEN
    }

    fn stride(&self) -> usize {
        BLOCK_SIZE
    }

    fn extract(&self, frame: &Frame) -> Result<FeatureMap> {
        toy_features(frame)
    }
}

/// Per-cell statistics over a `BLOCK_SIZE` grid (edge cells keep their real
/// extent): mean R, G, B; the three-bin intensity histogram; mean absolute
/// horizontal and vertical intensity differences inside the cell; the mean
/// intensity of each cell quadrant. Every value lies in `[0, 1]`.
pub fn toy_features(frame: &Frame) -> Result<FeatureMap> {
    let (w, h) = (frame.width(), frame.height());
    if w < BLOCK_SIZE || h < BLOCK_SIZE {
        return Err(Error::Dimensions(format!(
            "toy features need at least {BLOCK_SIZE}x{BLOCK_SIZE} pixels, got {w}x{h}"
        )));
    }
    let s = BLOCK_SIZE;
    let (fw, fh) = (w.div_ceil(s), h.div_ceil(s));
    let plane = fw * fh;
    let mut data = vec![0.0; descriptor::LEN * plane];

    let gray: Vec<f64> = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| intensity([p[0], p[1], p[2]]))
        .collect();

    for cy in 0..fh {
        for cx in 0..fw {
            let (x0, y0) = (cx * s, cy * s);
            let (cw, ch) = (s.min(w - x0), s.min(h - y0));
            let (half_w, half_h) = (cw.div_ceil(2), ch.div_ceil(2));

            let mut rgb = [0.0f64; 3];
            let mut hist = [0usize; 3];
            let mut quad_sum = [0.0f64; 4];
            let mut quad_n = [0usize; 4];
            let mut gx = 0.0;
            let mut gy = 0.0;
            for y in y0..y0 + ch {
                for x in x0..x0 + cw {
                    let p = frame.rgb(x, y);
                    for (acc, v) in rgb.iter_mut().zip(p) {
                        *acc += v as f64;
                    }
                    hist[intensity_bin(p)] += 1;
                    let g = gray[y * w + x];
                    let q = usize::from(x - x0 >= half_w) + 2 * usize::from(y - y0 >= half_h);
                    quad_sum[q] += g;
                    quad_n[q] += 1;
                    if x + 1 < x0 + cw {
                        gx += (gray[y * w + x + 1] - g).abs();
                    }
                    if y + 1 < y0 + ch {
                        gy += (gray[(y + 1) * w + x] - g).abs();
                    }
                }
            }

            let n = (cw * ch) as f64;
            let mean = quad_sum.iter().sum::<f64>() / n;
            let mut d = [0.0f64; descriptor::LEN];
            for c in 0..3 {
                d[descriptor::MEAN_RGB.start + c] = rgb[c] / (255.0 * n);
                d[descriptor::HISTOGRAM.start + c] = hist[c] as f64 / n;
            }
            d[descriptor::GRAD_X] = if cw > 1 {
                gx / ((cw - 1) * ch) as f64
            } else {
                0.0
            };
            d[descriptor::GRAD_Y] = if ch > 1 {
                gy / (cw * (ch - 1)) as f64
            } else {
                0.0
            };
            for q in 0..4 {
                d[descriptor::QUADRANTS.start + q] = if quad_n[q] > 0 {
                    quad_sum[q] / quad_n[q] as f64
                } else {
                    mean
                };
            }

            let cell = cy * fw + cx;
            for (c, v) in d.into_iter().enumerate() {
                data[c * plane + cell] = v;
            }
        }
    }
    FeatureMap::new(descriptor::LEN, fh, fw, s, data)
}

/// Nearest-centroid cell classifier.
///
/// Class scores are linear in the features:
///
/// `score_k(x) = 2 x . c_k - |c_k|^2 m(x)`
///
/// where `m(x)` sums the designated mass channels (1 when there are none).
/// When `m(x) = 1`, as for the toy histogram channels of any extracted
/// descriptor, this ranks classes exactly like negative squared distance
/// `-|x - c_k|^2`. Being linear, the argmax is unchanged by positive
/// rescaling, so distance-weighted fused features classify like the convex
/// combination they are proportional to. Ties go to the lowest class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawToyModel")]
pub struct ToyModel {
    channels: usize,
    centroids: Vec<Vec<f64>>,
    mass_channels: Vec<usize>,
    seed: Option<u64>,
    #[serde(skip)]
    norms: Vec<f64>,
}

#[derive(Deserialize)]
struct RawToyModel {
    centroids: Vec<Vec<f64>>,
    #[serde(default)]
    mass_channels: Vec<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

impl TryFrom<RawToyModel> for ToyModel {
    type Error = Error;

    fn try_from(raw: RawToyModel) -> Result<Self> {
        let mut m = ToyModel::new(raw.centroids, raw.mass_channels)?;
        m.seed = raw.seed;
        Ok(m)
    }
}

impl ToyModel {
    pub fn new(centroids: Vec<Vec<f64>>, mass_channels: Vec<usize>) -> Result<Self> {
        let channels = centroids
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("model needs at least one class".into()))?;
        if channels == 0 {
            return Err(Error::Dimensions(
                "centroids need at least one channel".into(),
            ));
        }
        if centroids.len() > IGNORE_LABEL as usize {
            return Err(Error::InvalidArgument(format!(
                "at most {} classes are supported",
                IGNORE_LABEL
            )));
        }
        for (k, c) in centroids.iter().enumerate() {
            if c.len() != channels {
                return Err(Error::Dimensions(format!(
                    "centroid {k} has {} channels, expected {channels}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "centroid {k} is not finite"
                )));
            }
        }
        for i in 0..centroids.len() {
            for j in 0..i {
                if centroids[i] == centroids[j] {
                    return Err(Error::InvalidArgument(format!(
                        "centroids {j} and {i} are identical"
                    )));
                }
            }
        }
        if let Some(&m) = mass_channels.iter().find(|&&m| m >= channels) {
            return Err(Error::InvalidArgument(format!(
                "mass channel {m} outside 0..{channels}"
            )));
        }
        let norms = centroids
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        Ok(Self {
            channels,
            centroids,
            mass_channels,
            seed: None,
            norms,
        })
    }

    /// Random centroids in `[0, 1)` with no mass channels.
    pub fn random(num_classes: usize, channels: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let centroids = (0..num_classes)
            .map(|_| (0..channels).map(|_| rng.random::<f64>()).collect())
            .collect();
        let mut m = Self::new(centroids, Vec::new())?;
        m.seed = Some(seed);
        Ok(m)
    }

    /// Fits one centroid per class as the mean feature vector of the cells
    /// whose pixels are mostly labeled with that class.
    pub fn fit(
        features: &[FeatureMap],
        labels: &[SegMap],
        num_classes: usize,
        mass_channels: Vec<usize>,
    ) -> Result<Self> {
        if features.len() != labels.len() || features.is_empty() {
            return Err(Error::Mismatch(format!(
                "{} feature maps for {} label maps",
                features.len(),
                labels.len()
            )));
        }
        let channels = features[0].channels();
        let mut sums = vec![vec![0.0; channels]; num_classes];
        let mut counts = vec![0usize; num_classes];
        for (f, gt) in features.iter().zip(labels) {
            if f.channels() != channels {
                return Err(Error::Mismatch(
                    "feature maps differ in channel count".into(),
                ));
            }
            let votes = cell_majority(gt, f.width(), f.height(), f.stride(), num_classes)?;
            for (cell, label) in votes.into_iter().enumerate() {
                let Some(k) = label else { continue };
                counts[k] += 1;
                for (c, acc) in sums[k].iter_mut().enumerate() {
                    *acc += f.plane(c)[cell];
                }
            }
        }
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!(
                "class {k} covers no cell in the training data"
            )));
        }
        let centroids = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();
        Self::new(centroids, mass_channels)
    }

    pub fn num_classes(&self) -> usize {
        self.centroids.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn mass_channels(&self) -> &[usize] {
        &self.mass_channels
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn mass(&self, x: &[f64]) -> f64 {
        if self.mass_channels.is_empty() {
            1.0
        } else {
            self.mass_channels.iter().fold(0.0, |acc, &c| acc + x[c])
        }
    }

    /// Class of one feature vector.
    pub fn classify(&self, x: &[f64]) -> u8 {
        let m = self.mass(x);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (k, (c, norm)) in self.centroids.iter().zip(&self.norms).enumerate() {
            let dot = x.iter().zip(c).fold(0.0, |acc, (a, b)| acc + a * b);
            let score = 2.0 * dot - norm * m;
            if score > best_score {
                best_score = score;
                best = k;
            }
        }
        best as u8
    }

    /// Per-cell labels, row-major over the feature grid.
    pub fn cell_labels(&self, features: &FeatureMap) -> Result<Vec<u8>> {
        if features.channels() != self.channels {
            return Err(Error::Mismatch(format!(
                "model expects {} channels, features have {}",
                self.channels,
                features.channels()
            )));
        }
        // Channel-major accumulation; per cell this is the same arithmetic,
        // in the same order, as `classify`.
        let cells = features.plane_len();
        let mass: Vec<f64> = if self.mass_channels.is_empty() {
            vec![1.0; cells]
        } else {
            (0..cells)
                .map(|i| {
                    self.mass_channels
                        .iter()
                        .fold(0.0, |acc, &c| acc + features.plane(c)[i])
                })
                .collect()
        };
        let mut labels = vec![0u8; cells];
        let mut best = vec![f64::NEG_INFINITY; cells];
        let mut dot = vec![0.0; cells];
        for (k, (centroid, norm)) in self.centroids.iter().zip(&self.norms).enumerate() {
            dot.fill(0.0);
            for (c, &weight) in centroid.iter().enumerate() {
                for (d, &v) in dot.iter_mut().zip(features.plane(c)) {
                    *d += weight * v;
                }
            }
            for i in 0..cells {
                let score = 2.0 * dot[i] - norm * mass[i];
                if score > best[i] {
                    best[i] = score;
                    labels[i] = k as u8;
                }
            }
        }
        Ok(labels)
    }
}

impl TaskNetwork for ToyModel {
    fn num_classes(&self) -> usize {
        self.centroids.len()
    }

    fn segment(&self, features: &FeatureMap, width: usize, height: usize) -> Result<SegMap> {
        let s = features.stride();
        if width.div_ceil(s) != features.width() || height.div_ceil(s) != features.height() {
            return Err(Error::Mismatch(format!(
                "{}x{} feature grid at stride {s} does not cover a {width}x{height} frame",
                features.width(),
                features.height()
            )));
        }
        let cells = self.cell_labels(features)?;
        upsample_labels(&cells, features.width(), s, width, height)
    }
}

/// Toy task head: classify every cell, then upsample labels by nearest
/// neighbour to the full `fw * stride` x `fh * stride` extent.
pub fn toy_task(features: &FeatureMap, model: &ToyModel) -> Result<SegMap> {
    let s = features.stride();
    model.segment(features, features.width() * s, features.height() * s)
}

fn upsample_labels(
    cells: &[u8],
    grid_w: usize,
    stride: usize,
    width: usize,
    height: usize,
) -> Result<SegMap> {
    let mut labels = vec![0u8; width * height];
    // Fill the first pixel row of each cell row, then copy it down.
    for (cy, band) in labels.chunks_mut(stride * width).enumerate() {
        let cell_row = &cells[cy * grid_w..][..grid_w];
        let (first, rest) = band.split_at_mut(width);
        for (span, &label) in first.chunks_mut(stride).zip(cell_row) {
            span.fill(label);
        }
        for row in rest.chunks_exact_mut(width) {
            row.copy_from_slice(first);
        }
    }
    SegMap::new(width, height, labels)
}

/// Majority label of each `stride` cell, ignoring [`IGNORE_LABEL`]. Ties
/// go to the lower class; cells with no labeled pixel get `None`.
pub fn cell_majority(
    gt: &SegMap,
    grid_w: usize,
    grid_h: usize,
    stride: usize,
    num_classes: usize,
) -> Result<Vec<Option<usize>>> {
    if gt.width().div_ceil(stride) != grid_w || gt.height().div_ceil(stride) != grid_h {
        return Err(Error::Mismatch(format!(
            "{}x{} label map does not match a {grid_w}x{grid_h} grid at stride {stride}",
            gt.width(),
            gt.height()
        )));
    }
    gt.check_classes(num_classes)?;
    let mut votes = vec![vec![0usize; num_classes]; grid_w * grid_h];
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let l = gt.get(x, y);
            if l != IGNORE_LABEL {
                votes[(y / stride) * grid_w + x / stride][l as usize] += 1;
            }
        }
    }
    Ok(votes
        .into_iter()
        .map(|v| {
            let (k, &n) = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("at least one class");
            (n > 0).then_some(k)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_gray_descriptor() {
        let frame = Frame::filled(48, 32, [128, 128, 128], 0).unwrap();
        let f = toy_features(&frame).unwrap();
        assert_eq!((f.channels(), f.height(), f.width()), (12, 2, 3));
        for cell in 0..f.plane_len() {
            for c in descriptor::MEAN_RGB {
                assert!((f.plane(c)[cell] - 0.5).abs() < 1.0 / 255.0);
            }
            assert_eq!(f.plane(descriptor::GRAD_X)[cell], 0.0);
            assert_eq!(f.plane(descriptor::GRAD_Y)[cell], 0.0);
            assert_eq!(f.plane(descriptor::HISTOGRAM.start + 1)[cell], 1.0);
        }
    }

    #[test]
    fn undersized_frame_rejected() {
        let frame = Frame::filled(15, 32, [0, 0, 0], 0).unwrap();
        assert!(toy_features(&frame).is_err());
    }

    #[test]
    fn partial_edge_cells() {
        let frame = Frame::filled(17, 16, [255, 255, 255], 0).unwrap();
        let f = toy_features(&frame).unwrap();
        assert_eq!(f.width(), 2);
        // The one-pixel-wide edge cell has no horizontal pairs and empty
        // right quadrants, which fall back to the cell mean.
        assert_eq!(f.get(descriptor::GRAD_X, 0, 1), 0.0);
        assert_eq!(f.get(descriptor::QUADRANTS.start + 1, 0, 1), 1.0);
    }

    #[test]
    fn exact_centroid_cells_classify_as_that_class() {
        let model = ToyModel::random(4, 5, 11).unwrap();
        for k in 0..4 {
            let c = &model.centroids()[k];
            let data: Vec<f64> = c.iter().flat_map(|&v| [v, v, v]).collect();
            let f = FeatureMap::new(5, 1, 3, 16, data).unwrap();
            let seg = toy_task(&f, &model).unwrap();
            assert_eq!((seg.width(), seg.height()), (48, 16));
            assert!(seg.labels().iter().all(|&l| l as usize == k));
        }
    }

    #[test]
    fn ties_go_to_lower_class() {
        let model = ToyModel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![]).unwrap();
        assert_eq!(model.classify(&[0.5, 0.5]), 0);
        let model = ToyModel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![]).unwrap();
        assert_eq!(model.classify(&[0.5, 0.5]), 0);
    }

    #[test]
    fn model_validation() {
        assert!(ToyModel::new(vec![], vec![]).is_err());
        assert!(ToyModel::new(vec![vec![1.0], vec![1.0]], vec![]).is_err());
        assert!(ToyModel::new(vec![vec![1.0], vec![1.0, 2.0]], vec![]).is_err());
        assert!(ToyModel::new(vec![vec![1.0], vec![2.0]], vec![1]).is_err());
        let model = ToyModel::random(3, 4, 1).unwrap();
        let f = FeatureMap::zeros(5, 1, 1, 16).unwrap();
        assert!(toy_task(&f, &model).is_err());
    }

    #[test]
    fn mass_scoring_is_scale_invariant() {
        let model =
            ToyModel::new(vec![vec![0.9, 0.1, 0.3], vec![0.2, 0.8, 0.6]], vec![0, 1]).unwrap();
        for x in [[0.7, 0.3, 0.4], [0.4, 0.6, 0.5], [0.1, 0.9, 0.9]] {
            let k = model.classify(&x);
            let half: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
            assert_eq!(model.classify(&half), k);
        }
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let model = ToyModel::random(3, 2, 5).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ToyModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        assert!(serde_json::from_str::<ToyModel>(r#"{"centroids":[[1.0],[1.0]]}"#).is_err());
    }

    #[test]
    fn majority_votes() {
        let gt = SegMap::new(
            4,
            2,
            vec![0, 1, 1, IGNORE_LABEL, 1, 0, IGNORE_LABEL, IGNORE_LABEL],
        )
        .unwrap();
        let v = cell_majority(&gt, 2, 1, 2, 2).unwrap();
        assert_eq!(v, vec![Some(0), Some(1)]);
        let all_ignored = SegMap::filled(2, 2, IGNORE_LABEL).unwrap();
        assert_eq!(cell_majority(&all_ignored, 1, 1, 2, 2).unwrap(), vec![None]);
    }
}
