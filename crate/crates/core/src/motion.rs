//! Block motion compensation.
//!
//! The current frame is cut into a grid of `block_size` squares (partial
//! blocks at the right and bottom edges keep their real extent). Each block
//! is matched against every candidate position in the previous frame within
//! `search_radius` pixels, on luma, by mean squared error. Candidates whose
//! block would leave the previous frame are skipped, so every candidate of a
//! block is compared over the same number of pixels and the search is exact
//! in integer arithmetic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Frame, MotionField, Offset, WarpField, BLOCK_SIZE};

/// Block difference metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMetric {
    #[default]
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchParams {
    block_size: usize,
    search_radius: usize,
    metric: MatchMetric,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            block_size: BLOCK_SIZE,
            search_radius: 16,
            metric: MatchMetric::Mse,
        }
    }
}

impl MatchParams {
    pub fn new(block_size: usize, search_radius: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument(
                "block size must be at least 1".into(),
            ));
        }
        Ok(Self {
            block_size,
            search_radius,
            metric: MatchMetric::Mse,
        })
    }

    pub fn with_radius(search_radius: usize) -> Self {
        Self {
            search_radius,
            ..Self::default()
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn search_radius(&self) -> usize {
        self.search_radius
    }

    pub fn metric(&self) -> MatchMetric {
        self.metric
    }
}

/// Luma scaled by 1000 (`299 R + 587 G + 114 B`) so matching stays in
/// integers.
pub fn luma_plane(frame: &Frame) -> Vec<i64> {
    frame
        .pixels()
        .chunks_exact(3)
        .map(|p| 299 * p[0] as i64 + 587 * p[1] as i64 + 114 * p[2] as i64)
        .collect()
}

struct Plane<'a> {
    data: &'a [i64],
    width: usize,
    height: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    sse: i64,
    v: (i64, i64),
}

impl Candidate {
    /// Lower SSE wins; ties go to the smaller L1 displacement, then the
    /// smaller dy, then the smaller dx.
    fn better_than(&self, other: &Candidate) -> bool {
        let key = |c: &Candidate| (c.sse, c.v.0.abs() + c.v.1.abs(), c.v.1, c.v.0);
        key(self) < key(other)
    }
}

fn search_block(
    prev: &Plane<'_>,
    curr: &Plane<'_>,
    bx: usize,
    by: usize,
    bw: usize,
    bh: usize,
    radius: i64,
) -> Offset {
    let w = prev.width as i64;
    let h = prev.height as i64;
    let (x0, y0) = (bx as i64, by as i64);
    let mut best: Option<Candidate> = None;

    for dy in -radius..=radius {
        // Matched block origin in the previous frame is (x0 - dx, y0 - dy).
        let py = y0 - dy;
        if py < 0 || py + bh as i64 > h {
            continue;
        }
        for dx in -radius..=radius {
            let px = x0 - dx;
            if px < 0 || px + bw as i64 > w {
                continue;
            }
            let bound = best.map_or(i64::MAX, |b| b.sse);
            let mut sse = 0i64;
            'rows: for r in 0..bh {
                let c_row = &curr.data[(by + r) * curr.width + bx..][..bw];
                let p_row = &prev.data[(py as usize + r) * prev.width + px as usize..][..bw];
                for (a, b) in c_row.iter().zip(p_row) {
                    let d = a - b;
                    sse += d * d;
                }
                if sse > bound {
                    break 'rows;
                }
            }
            let cand = Candidate { sse, v: (dx, dy) };
            if best.is_none_or(|b| cand.better_than(&b)) {
                best = Some(cand);
            }
        }
    }

    // (0, 0) always fits, so a candidate exists.
    let best = best.expect("zero displacement is always a candidate");
    Offset::new(best.v.0 as f64, best.v.1 as f64)
}

/// Estimates the block motion field of `curr` relative to `prev`.
///
/// Blocks are searched in parallel on the current rayon pool; the result is
/// independent of the worker count.
pub fn estimate_motion(prev: &Frame, curr: &Frame, params: &MatchParams) -> Result<MotionField> {
    if !prev.same_size(curr) {
        return Err(Error::Mismatch(format!(
            "previous frame is {}x{}, current frame is {}x{}",
            prev.width(),
            prev.height(),
            curr.width(),
            curr.height()
        )));
    }
    let (width, height) = (curr.width(), curr.height());
    let bs = params.block_size;
    let grid_w = width.div_ceil(bs);
    let grid_h = height.div_ceil(bs);

    let prev_luma = luma_plane(prev);
    let curr_luma = luma_plane(curr);
    let prev_plane = Plane {
        data: &prev_luma,
        width,
        height,
    };
    let curr_plane = Plane {
        data: &curr_luma,
        width,
        height,
    };
    let radius = params.search_radius as i64;

    let vectors: Vec<Offset> = (0..grid_w * grid_h)
        .into_par_iter()
        .map(|b| {
            let bx = (b % grid_w) * bs;
            let by = (b / grid_w) * bs;
            let bw = bs.min(width - bx);
            let bh = bs.min(height - by);
            search_block(&prev_plane, &curr_plane, bx, by, bw, bh, radius)
        })
        .collect();

    MotionField::new(grid_w, grid_h, bs, vectors)
}

/// Motion fields for a whole stream. Entry `i` links frame `i - 1` to frame
/// `i`; entry 0 has no predecessor and is all zero.
pub fn estimate_stream_motion(frames: &[Frame], params: &MatchParams) -> Result<Vec<MotionField>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty frame stream".into()))?;
    let mut fields = Vec::with_capacity(frames.len());
    fields.push(MotionField::zeros_for_frame(
        first.width(),
        first.height(),
        params.block_size,
    )?);
    for (i, pair) in frames.windows(2).enumerate() {
        fields.push(estimate_motion(&pair[0], &pair[1], params).map_err(Error::at_frame(i + 1))?);
    }
    Ok(fields)
}

/// Flips every vector.
pub fn negate(mv: &MotionField) -> MotionField {
    mv.map_vectors(|v| -v)
}

/// Resamples a block motion field onto a feature grid of the given stride,
/// converting pixels to cells.
///
/// Each cell takes the vector of the block covering its center. The grid
/// spans the block grid's pixel extent, so with `stride == block_size` the
/// mapping is one-to-one.
pub fn to_warp_field(mv: &MotionField, stride: usize) -> Result<WarpField> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let bs = mv.block_size();
    let fw = (mv.grid_w() * bs).div_ceil(stride);
    let fh = (mv.grid_h() * bs).div_ceil(stride);
    let scale = stride as f64;
    let mut offsets = Vec::with_capacity(fw * fh);
    for cy in 0..fh {
        let by = ((cy * stride + stride / 2) / bs).min(mv.grid_h() - 1);
        for cx in 0..fw {
            let bx = ((cx * stride + stride / 2) / bs).min(mv.grid_w() - 1);
            let v = mv.get(bx, by);
            offsets.push(Offset::new(v.dx / scale, v.dy / scale));
        }
    }
    WarpField::new(fh, fw, offsets)
}

/// Predicts the current frame by copying each block from its matched
/// position in `prev` (edge-clamped), the reconstruction a codec would make
/// before adding residuals.
pub fn compensate(prev: &Frame, mv: &MotionField) -> Result<Frame> {
    let (w, h) = (prev.width(), prev.height());
    let bs = mv.block_size();
    if mv.grid_w() != w.div_ceil(bs) || mv.grid_h() != h.div_ceil(bs) {
        return Err(Error::Mismatch(format!(
            "motion grid {}x{} does not cover a {w}x{h} frame",
            mv.grid_w(),
            mv.grid_h()
        )));
    }
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let v = mv.get(x / bs, y / bs);
            let sx = (x as f64 - v.dx).round().clamp(0.0, (w - 1) as f64) as usize;
            let sy = (y as f64 - v.dy).round().clamp(0.0, (h - 1) as f64) as usize;
            out.extend_from_slice(&prev.rgb(sx, sy));
        }
    }
    Frame::new(w, h, out, prev.index() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_frame(w: usize, h: usize, seed: u64) -> Frame {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h * 3).map(|_| rng.random()).collect();
        Frame::new(w, h, px, 0).unwrap()
    }

    #[test]
    fn identical_frames_give_zero_motion() {
        let f = noise_frame(40, 24, 1);
        let mv = estimate_motion(&f, &f, &MatchParams::default()).unwrap();
        assert_eq!((mv.grid_w(), mv.grid_h()), (3, 2));
        assert!(mv.is_zero());

        // Flat frames tie everywhere; the tie-break keeps the zero vector.
        let flat = Frame::filled(32, 32, [7, 7, 7], 0).unwrap();
        assert!(estimate_motion(&flat, &flat, &MatchParams::default())
            .unwrap()
            .is_zero());
    }

    #[test]
    fn mismatched_frames_rejected() {
        let a = noise_frame(32, 32, 1);
        let b = noise_frame(32, 16, 2);
        assert!(estimate_motion(&a, &b, &MatchParams::default()).is_err());
        assert!(MatchParams::new(0, 4).is_err());
    }

    #[test]
    fn negate_flips_and_is_involution() {
        let mv = MotionField::new(
            2,
            1,
            16,
            vec![Offset::new(-16.0, 0.0), Offset::new(3.0, -2.0)],
        )
        .unwrap();
        let n = negate(&mv);
        assert_eq!(
            n.vectors(),
            &[Offset::new(16.0, 0.0), Offset::new(-3.0, 2.0)]
        );
        assert_eq!(negate(&n), mv);
        let z = MotionField::zeros(3, 2, 16).unwrap();
        assert_eq!(negate(&z), z);
    }

    #[test]
    fn warp_field_units() {
        let mv = MotionField::new(2, 1, 16, vec![Offset::new(-16.0, 0.0); 2]).unwrap();
        let wf = to_warp_field(&mv, 16).unwrap();
        assert_eq!(wf.offsets(), &[Offset::new(-1.0, 0.0); 2]);

        let z = MotionField::zeros(3, 2, 16).unwrap();
        for stride in [4, 8, 16, 32] {
            let wf = to_warp_field(&z, stride).unwrap();
            assert!(wf.offsets().iter().all(|o| *o == Offset::ZERO));
        }
        assert!(to_warp_field(&z, 0).is_err());
    }

    #[test]
    fn warp_field_finer_stride_repeats_blocks() {
        let mv =
            MotionField::new(2, 1, 16, vec![Offset::new(8.0, 0.0), Offset::new(0.0, 8.0)]).unwrap();
        let wf = to_warp_field(&mv, 8).unwrap();
        assert_eq!((wf.height(), wf.width()), (2, 4));
        assert_eq!(wf.get(1, 1), Offset::new(1.0, 0.0));
        assert_eq!(wf.get(0, 2), Offset::new(0.0, 1.0));
    }

    #[test]
    fn compensation_reconstructs_translation() {
        // Shift right by 5 px: interior blocks recover the frame exactly.
        let prev = noise_frame(48, 32, 9);
        let mut px = Vec::new();
        for y in 0..32 {
            for x in 0..48usize {
                px.extend_from_slice(&prev.rgb(x.saturating_sub(5), y));
            }
        }
        let curr = Frame::new(48, 32, px, 1).unwrap();
        let mv = estimate_motion(&prev, &curr, &MatchParams::with_radius(8)).unwrap();
        assert_eq!(mv.get(1, 0), Offset::new(5.0, 0.0));
        let pred = compensate(&prev, &mv).unwrap();
        for y in 0..32 {
            for x in 16..48 {
                assert_eq!(pred.rgb(x, y), curr.rgb(x, y));
            }
        }
    }
}
