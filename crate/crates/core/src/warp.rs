//! Bilinear feature warping.

use crate::error::{Error, Result};
use crate::types::{FeatureMap, WarpField};

/// Source coordinate along one axis: integer base, next index and fraction,
/// clamped to `[0, len - 1]`.
#[inline]
fn axis(pos: f64, len: usize) -> (usize, usize, f64) {
    let last = (len - 1) as f64;
    let p = pos.clamp(0.0, last);
    let base = p.floor();
    let i0 = base as usize;
    (i0, (i0 + 1).min(len - 1), p - base)
}

/// Four source cells and their bilinear weights.
struct Tap {
    idx: [usize; 4],
    weight: [f64; 4],
}

impl Tap {
    #[inline]
    fn sample(&self, plane: &[f64]) -> f64 {
        let v = self.idx.map(|i| plane[i]);
        let mut acc = 0.0;
        for (x, w) in v.iter().zip(&self.weight) {
            acc += w * x;
        }
        // Keep rounding from stepping outside the sampled values.
        // Feature values are finite, so plain comparisons suffice.
        let min = |a: f64, b: f64| if b < a { b } else { a };
        let max = |a: f64, b: f64| if b > a { b } else { a };
        let lo = min(min(v[0], v[1]), min(v[2], v[3]));
        let hi = max(max(v[0], v[1]), max(v[2], v[3]));
        max(lo, min(acc, hi))
    }
}

/// Resamples `features` so that output cell `(y, x)` holds the bilinear
/// sample of the input at `(x + dx, y + dy)`, all channels sharing the same
/// field. Coordinates are clamped to the map edges.
pub fn bilinear_warp(features: &FeatureMap, field: &WarpField) -> Result<FeatureMap> {
    let (h, w) = (features.height(), features.width());
    if field.height() != h || field.width() != w {
        return Err(Error::Mismatch(format!(
            "warp field is {}x{}, feature map is {h}x{w}",
            field.height(),
            field.width()
        )));
    }

    // Sampling positions depend only on the field; compute them once.
    let taps: Vec<Tap> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| {
            let o = field.get(y, x);
            let (x0, x1, tx) = axis(x as f64 + o.dx, w);
            let (y0, y1, ty) = axis(y as f64 + o.dy, h);
            Tap {
                idx: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
                weight: [
                    (1.0 - tx) * (1.0 - ty),
                    tx * (1.0 - ty),
                    (1.0 - tx) * ty,
                    tx * ty,
                ],
            }
        })
        .collect();

    let mut data = Vec::with_capacity(features.data().len());
    for c in 0..features.channels() {
        let plane = features.plane(c);
        data.extend(taps.iter().map(|t| t.sample(plane)));
    }
    Ok(FeatureMap::from_parts(
        features.channels(),
        h,
        w,
        features.stride(),
        data,
    ))
}

/// Warps `features` one field at a time for `steps` steps.
///
/// Returns `steps + 1` maps: element 0 is the input and element `i` is
/// element `i - 1` warped by `fields[i - 1]`.
pub fn propagate_chain(
    features: &FeatureMap,
    steps: usize,
    fields: &[WarpField],
) -> Result<Vec<FeatureMap>> {
    if fields.len() < steps {
        return Err(Error::InvalidArgument(format!(
            "propagating {steps} steps needs {steps} warp fields, got {}",
            fields.len()
        )));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(features.clone());
    for field in &fields[..steps] {
        let next = bilinear_warp(out.last().expect("chain is never empty"), field)?;
        out.push(next);
    }
    Ok(out)
}
