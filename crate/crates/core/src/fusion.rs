//! Distance weighting and fusion of forward- and backward-warped features.
//!
//! Both inputs are scaled by their weights before the fusion operator runs:
//! `F(alpha * forward, (1 - alpha) * backward)`, for every operator
//! including max.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Max,
    Average,
    Conv,
}

impl FusionKind {
    pub fn name(self) -> &'static str {
        match self {
            FusionKind::Max => "max",
            FusionKind::Average => "avg",
            FusionKind::Conv => "conv",
        }
    }
}

impl std::fmt::Display for FusionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(FusionKind::Max),
            "avg" | "average" => Ok(FusionKind::Average),
            "conv" => Ok(FusionKind::Conv),
            other => Err(Error::InvalidArgument(format!(
                "unknown fusion '{other}' (expected max, avg or conv)"
            ))),
        }
    }
}

/// A 1x1 convolution from `2C` stacked channels down to `C`.
///
/// `weights[j * C + o]` mixes stacked input channel `j` into output channel
/// `o`; inputs `0..C` are the weighted forward map and `C..2C` the weighted
/// backward map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct ConvKernel {
    channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
struct RawKernel {
    channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl TryFrom<RawKernel> for ConvKernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        ConvKernel::new(raw.channels, raw.weights, raw.bias)
    }
}

impl ConvKernel {
    pub fn new(channels: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Dimensions(
                "conv kernel needs at least one channel".into(),
            ));
        }
        if weights.len() != 2 * channels * channels || bias.len() != channels {
            return Err(Error::Dimensions(format!(
                "conv kernel for {channels} channels needs {} weights and {channels} biases, got {} and {}",
                2 * channels * channels,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "conv kernel values must be finite".into(),
            ));
        }
        Ok(Self {
            channels,
            weights,
            bias,
        })
    }

    /// The kernel that reproduces average fusion: `(a + b) / 2` per channel.
    pub fn averaging(channels: usize) -> Self {
        let mut weights = vec![0.0; 2 * channels * channels];
        for c in 0..channels {
            weights[c * channels + c] = 0.5;
            weights[(channels + c) * channels + c] = 0.5;
        }
        Self {
            channels,
            weights,
            bias: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.channels + output]
    }
}

/// A fusion operator together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FusionWeights {
    Max,
    #[serde(alias = "avg")]
    Average,
    Conv {
        kernel: ConvKernel,
    },
}

impl FusionWeights {
    pub fn max() -> Self {
        FusionWeights::Max
    }

    pub fn average() -> Self {
        FusionWeights::Average
    }

    pub fn conv(kernel: ConvKernel) -> Self {
        FusionWeights::Conv { kernel }
    }

    pub fn kind(&self) -> FusionKind {
        match self {
            FusionWeights::Max => FusionKind::Max,
            FusionWeights::Average => FusionKind::Average,
            FusionWeights::Conv { .. } => FusionKind::Conv,
        }
    }

    /// Parameter-free weights for `kind`; conv kernels have to be fitted
    /// or loaded instead.
    pub fn parameter_free(kind: FusionKind) -> Result<Self> {
        match kind {
            FusionKind::Max => Ok(FusionWeights::Max),
            FusionKind::Average => Ok(FusionWeights::Average),
            FusionKind::Conv => Err(Error::InvalidArgument(
                "conv fusion needs a fitted kernel".into(),
            )),
        }
    }
}

/// Weights for a frame `offset` frames past its keyframe, with the next
/// keyframe `interval - offset` frames ahead: `((n - p) / n, p / n)`.
pub fn alpha_for(interval: usize, offset: usize) -> Result<(f64, f64)> {
    if offset == 0 || offset >= interval {
        return Err(Error::InvalidArgument(format!(
            "offset {offset} is not an intermediate position for interval {interval}"
        )));
    }
    let n = interval as f64;
    Ok(((interval - offset) as f64 / n, offset as f64 / n))
}

/// Fuses the forward map `ff` and backward map `fb`, weighting them by
/// `alpha` and `1 - alpha` first.
pub fn fuse(
    ff: &FeatureMap,
    fb: &FeatureMap,
    alpha: f64,
    weights: &FusionWeights,
) -> Result<FeatureMap> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "fusion weight {alpha} outside [0, 1]"
        )));
    }
    if !ff.same_shape(fb) {
        return Err(Error::Mismatch(format!(
            "forward map {}x{}x{}, backward map {}x{}x{}",
            ff.channels(),
            ff.height(),
            ff.width(),
            fb.channels(),
            fb.height(),
            fb.width()
        )));
    }
    let beta = 1.0 - alpha;
    match weights {
        FusionWeights::Max => ff.zip_with(fb, |a, b| (alpha * a).max(beta * b)),
        FusionWeights::Average => ff.zip_with(fb, |a, b| (alpha * a + beta * b) / 2.0),
        FusionWeights::Conv { kernel } => conv_fuse(ff, fb, alpha, beta, kernel),
    }
}

fn conv_fuse(
    ff: &FeatureMap,
    fb: &FeatureMap,
    alpha: f64,
    beta: f64,
    kernel: &ConvKernel,
) -> Result<FeatureMap> {
    let c = ff.channels();
    if kernel.channels() != c {
        return Err(Error::Mismatch(format!(
            "conv kernel expects {} channels, feature maps have {c}",
            kernel.channels()
        )));
    }
    let n = ff.plane_len();
    let mut data = Vec::with_capacity(c * n);
    for o in 0..c {
        let bias = kernel.bias()[o];
        let start = data.len();
        data.resize(start + n, bias);
        let out = &mut data[start..];
        for j in 0..c {
            let wf = kernel.weight(j, o) * alpha;
            let wb = kernel.weight(c + j, o) * beta;
            for ((dst, &a), &b) in out.iter_mut().zip(ff.plane(j)).zip(fb.plane(j)) {
                *dst += wf * a + wb * b;
            }
        }
    }
    FeatureMap::new(c, ff.height(), ff.width(), ff.stride(), data)
}

/// One training example for conv fusion: two warped inputs, their weight
/// and the features the fusion should reproduce.
#[derive(Debug, Clone)]
pub struct FusionSample {
    pub forward: FeatureMap,
    pub backward: FeatureMap,
    pub alpha: f64,
    pub target: FeatureMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Singular values below this fraction of the largest are treated as
    /// zero.
    pub rank_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            rank_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvFit {
    pub weights: FusionWeights,
    /// Mean squared error of the fitted fusion over every sample value.
    pub residual_mse: f64,
    /// The stacked inputs did not have full column rank; the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
    pub rank: usize,
}

/// Fits a conv fusion kernel by linear least squares.
///
/// Every cell of every sample is one regression row over the `2C` weighted,
/// stacked inputs plus a bias column; all output channels share that design
/// matrix. Rank-deficient systems get the minimum-norm solution and are
/// flagged rather than rejected.
pub fn fit_conv_fusion(samples: &[FusionSample], options: &FitOptions) -> Result<ConvFit> {
    let first = samples.first().ok_or_else(|| {
        Error::InvalidArgument("conv fusion fit needs at least one sample".into())
    })?;
    let c = first.forward.channels();
    for (i, s) in samples.iter().enumerate() {
        if !s.forward.same_shape(&s.backward)
            || !s.forward.same_shape(&s.target)
            || s.forward.channels() != c
        {
            return Err(Error::Mismatch(format!(
                "fusion sample {i} has inconsistent feature map shapes"
            )));
        }
        if !(0.0..=1.0).contains(&s.alpha) {
            return Err(Error::InvalidArgument(format!(
                "fusion sample {i} has weight {} outside [0, 1]",
                s.alpha
            )));
        }
    }

    let rows: usize = samples.iter().map(|s| s.forward.plane_len()).sum();
    let cols = 2 * c + 1;
    let mut x = DMatrix::<f64>::zeros(rows, cols);
    let mut t = DMatrix::<f64>::zeros(rows, c);
    let mut row = 0;
    for s in samples {
        let beta = 1.0 - s.alpha;
        for cell in 0..s.forward.plane_len() {
            for j in 0..c {
                x[(row, j)] = s.alpha * s.forward.plane(j)[cell];
                x[(row, c + j)] = beta * s.backward.plane(j)[cell];
                t[(row, j)] = s.target.plane(j)[cell];
            }
            x[(row, 2 * c)] = 1.0;
            row += 1;
        }
    }

    // Reduce tall systems to their triangular factor first; the
    // least-squares and minimum-norm solutions are unchanged.
    let (a, b) = if rows > cols {
        let qr = x.qr();
        let qt_t = qr.q().transpose() * &t;
        (qr.r(), qt_t)
    } else {
        (x, t)
    };
    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = options.rank_tolerance * sigma_max.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let solution = svd
        .solve(&b, eps)
        .map_err(|e| Error::InvalidArgument(format!("least-squares solve failed: {e}")))?;

    let mut weights = vec![0.0; 2 * c * c];
    for j in 0..2 * c {
        for o in 0..c {
            weights[j * c + o] = solution[(j, o)];
        }
    }
    let bias = (0..c).map(|o| solution[(2 * c, o)]).collect();
    let fusion = FusionWeights::conv(ConvKernel::new(c, weights, bias)?);

    let mut sq = 0.0;
    let mut count = 0usize;
    for s in samples {
        let fused = fuse(&s.forward, &s.backward, s.alpha, &fusion)?;
        sq += fused
            .data()
            .iter()
            .zip(s.target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += fused.data().len();
    }

    Ok(ConvFit {
        weights: fusion,
        residual_mse: sq / count as f64,
        rank_deficient: rank < cols,
        rank,
    })
}
