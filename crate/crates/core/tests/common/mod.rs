//! Independent reference implementations and fixtures shared by the
//! integration tests. The oracles favour the most direct formulation over
//! speed.

#![allow(dead_code)]

use bmvseg::eval::{
    make_scene, BackgroundSpec, CostModel, ObjectSpec, SceneSpec, Shape, SyntheticScene,
};
use bmvseg::fusion::{alpha_for, fuse, FusionWeights};
use bmvseg::motion::{negate, to_warp_field};
use bmvseg::{
    bilinear_warp, FeatureMap, FeatureNetwork, Frame, MotionField, Offset, SegMap, TaskNetwork,
    WarpField, IGNORE_LABEL,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(rng: &mut impl Rng, width: usize, height: usize, index: usize) -> Frame {
    let pixels = (0..width * height * 3).map(|_| rng.random()).collect();
    Frame::new(width, height, pixels, index).unwrap()
}

/// A smooth-ish random frame and a copy translated by `(sx, sy)` with fresh
/// noise in the uncovered band, so block matching has real structure to
/// find.
pub fn translated_pair(rng: &mut impl Rng, w: usize, h: usize, sx: i64, sy: i64) -> (Frame, Frame) {
    let coarse: Vec<u8> = (0..(w / 4 + 2) * (h / 4 + 2) * 3)
        .map(|_| rng.random())
        .collect();
    let cw = w / 4 + 2;
    let at = |x: usize, y: usize, c: usize| coarse[((y / 4) * cw + x / 4) * 3 + c];
    let mut prev = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                prev.push(at(x, y, c).wrapping_add(rng.random_range(0..8)));
            }
        }
    }
    let mut curr = Vec::with_capacity(w * h * 3);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (px, py) = (x - sx, y - sy);
            for c in 0..3 {
                if px >= 0 && py >= 0 && px < w as i64 && py < h as i64 {
                    curr.push(prev[((py as usize) * w + px as usize) * 3 + c]);
                } else {
                    curr.push(rng.random());
                }
            }
        }
    }
    (
        Frame::new(w, h, prev, 0).unwrap(),
        Frame::new(w, h, curr, 1).unwrap(),
    )
}

fn luma(f: &Frame, x: usize, y: usize) -> i64 {
    let [r, g, b] = f.rgb(x, y);
    299 * r as i64 + 587 * g as i64 + 114 * b as i64
}

/// Exhaustive block matching: list every admissible candidate with its full
/// SSE, sort by (SSE, L1, dy, dx) and take the first.
pub fn motion_oracle(prev: &Frame, curr: &Frame, bs: usize, radius: i64) -> MotionField {
    let (w, h) = (curr.width(), curr.height());
    let (gw, gh) = (w.div_ceil(bs), h.div_ceil(bs));
    let mut vectors = Vec::new();
    for by in 0..gh {
        for bx in 0..gw {
            let (x0, y0) = (bx * bs, by * bs);
            let (bw, bh) = (bs.min(w - x0), bs.min(h - y0));
            let mut cands = Vec::new();
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (px, py) = (x0 as i64 - dx, y0 as i64 - dy);
                    if px < 0 || py < 0 || px + bw as i64 > w as i64 || py + bh as i64 > h as i64 {
                        continue;
                    }
                    let mut sse = 0i64;
                    for y in 0..bh {
                        for x in 0..bw {
                            let d = luma(curr, x0 + x, y0 + y)
                                - luma(prev, px as usize + x, py as usize + y);
                            sse += d * d;
                        }
                    }
                    cands.push((sse, dx.abs() + dy.abs(), dy, dx));
                }
            }
            cands.sort();
            let (_, _, dy, dx) = cands[0];
            vectors.push(Offset::new(dx as f64, dy as f64));
        }
    }
    MotionField::new(gw, gh, bs, vectors).unwrap()
}

/// Bilinear gather written from the textbook formula.
pub fn gather_oracle(map: &FeatureMap, field: &WarpField) -> FeatureMap {
    let (c, h, w) = (map.channels(), map.height(), map.width());
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let o = field.get(y, x);
                let sx = (x as f64 + o.dx).max(0.0).min((w - 1) as f64);
                let sy = (y as f64 + o.dy).max(0.0).min((h - 1) as f64);
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                let v = map.get(ch, y0, x0) * (1.0 - fx) * (1.0 - fy)
                    + map.get(ch, y0, x1) * fx * (1.0 - fy)
                    + map.get(ch, y1, x0) * (1.0 - fx) * fy
                    + map.get(ch, y1, x1) * fx * fy;
                data.push(v);
            }
        }
    }
    FeatureMap::new(c, h, w, map.stride(), data).unwrap()
}

pub fn random_map(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let data = (0..c * h * w)
        .map(|_| rng.random_range(-5.0..5.0))
        .collect();
    FeatureMap::new(c, h, w, 16, data).unwrap()
}

pub fn random_field(rng: &mut impl Rng, h: usize, w: usize, reach: f64) -> WarpField {
    let offsets = (0..h * w)
        .map(|_| {
            Offset::new(
                rng.random_range(-reach..reach),
                rng.random_range(-reach..reach),
            )
        })
        .collect();
    WarpField::new(h, w, offsets).unwrap()
}

fn forward_step(f: &FeatureMap, mv: &MotionField) -> FeatureMap {
    bilinear_warp(f, &to_warp_field(&negate(mv), f.stride()).unwrap()).unwrap()
}

fn backward_step(f: &FeatureMap, mv: &MotionField) -> FeatureMap {
    bilinear_warp(f, &to_warp_field(mv, f.stride()).unwrap()).unwrap()
}

/// Feature propagation written frame by frame: keyframes run the feature
/// network, every other frame warps the previous frame's features.
pub fn prop_oracle(
    frames: &[Frame],
    motion: &[MotionField],
    n: usize,
    feat: &dyn FeatureNetwork,
    task: &dyn TaskNetwork,
) -> Vec<SegMap> {
    let mut out = Vec::new();
    let mut cache: Option<FeatureMap> = None;
    for (i, frame) in frames.iter().enumerate() {
        let f = if i % n == 0 {
            feat.extract(frame).unwrap()
        } else {
            forward_step(cache.as_ref().unwrap(), &motion[i])
        };
        out.push(task.segment(&f, frame.width(), frame.height()).unwrap());
        cache = Some(f);
    }
    out
}

/// Feature interpolation written per frame, recomputing both chains from
/// scratch for every intermediate frame.
pub fn inter_oracle(
    frames: &[Frame],
    motion: &[MotionField],
    n: usize,
    fusion: &FusionWeights,
    feat: &dyn FeatureNetwork,
    task: &dyn TaskNetwork,
) -> Vec<SegMap> {
    let len = frames.len();
    let mut out = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        let k = i - i % n;
        let p = i - k;
        let f = if p == 0 {
            feat.extract(frame).unwrap()
        } else if k + n < len {
            let mut fwd = feat.extract(&frames[k]).unwrap();
            for mv in &motion[k + 1..=i] {
                fwd = forward_step(&fwd, mv);
            }
            let mut bwd = feat.extract(&frames[k + n]).unwrap();
            for j in (i + 1..=k + n).rev() {
                bwd = backward_step(&bwd, &motion[j]);
            }
            let (alpha, _) = alpha_for(n, p).unwrap();
            fuse(&fwd, &bwd, alpha, fusion).unwrap()
        } else {
            let mut fwd = feat.extract(&frames[k]).unwrap();
            for mv in &motion[k + 1..=i] {
                fwd = forward_step(&fwd, mv);
            }
            fwd
        };
        out.push(task.segment(&f, frame.width(), frame.height()).unwrap());
    }
    out
}

/// Mean IoU by checking, for every class separately, every pixel pair.
pub fn pixel_pair_miou(preds: &[SegMap], gts: &[SegMap], classes: usize) -> Option<BigRational> {
    let mut ious = Vec::new();
    for c in 0..classes as u8 {
        let (mut inter, mut union) = (0i64, 0i64);
        for (p, g) in preds.iter().zip(gts) {
            for (&pl, &gl) in p.labels().iter().zip(g.labels()) {
                if gl == IGNORE_LABEL {
                    continue;
                }
                let in_p = pl == c;
                let in_g = gl == c;
                if in_p && in_g {
                    inter += 1;
                }
                if in_p || in_g {
                    union += 1;
                }
            }
        }
        if union > 0 {
            ious.push(BigRational::new(BigInt::from(inter), BigInt::from(union)));
        }
    }
    if ious.is_empty() {
        return None;
    }
    let k = BigRational::from_integer(BigInt::from(ious.len()));
    Some(
        ious.into_iter()
            .fold(BigRational::from_integer(BigInt::from(0)), |a, b| a + b)
            / k,
    )
}

#[derive(Debug, Clone, Copy)]
pub enum SimScheme {
    Baseline,
    PropBmv,
    PropFlow,
    InterBmv,
}

/// Walks `frames` frames one at a time adding up what each one costs and
/// returns frames per time unit.
pub fn simulate_frame_loop(c: &CostModel, scheme: SimScheme, n: usize, frames: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..frames {
        let key = matches!(scheme, SimScheme::Baseline) || i % n == 0;
        total += if key {
            c.feature + c.task
        } else {
            match scheme {
                SimScheme::Baseline => unreachable!(),
                SimScheme::PropBmv => c.warp + c.task,
                SimScheme::PropFlow => c.flow + c.warp + c.task,
                SimScheme::InterBmv => c.warp + c.warp + c.fusion + c.task,
            }
        };
    }
    frames as f64 / total
}

/// Twelve frames of textured objects moving at speeds that are not
/// multiples of the block size, over a slowly panning background.
pub fn small_scene(seed: u64) -> SyntheticScene {
    let spec = SceneSpec {
        width: 80,
        height: 48,
        frames: 12,
        background: BackgroundSpec {
            velocity: [1.0, 0.0],
            ..BackgroundSpec::default()
        },
        objects: vec![
            ObjectSpec {
                class: 1,
                shape: Shape::Rect {
                    width: 24,
                    height: 16,
                },
                color: [210, 50, 40],
                texture: 20,
                texel: 2,
                position: [4.0, 6.0],
                velocity: [3.0, 1.0],
                enter: 0,
                exit: None,
            },
            ObjectSpec {
                class: 2,
                shape: Shape::Disk { radius: 9 },
                color: [40, 60, 220],
                texture: 20,
                texel: 3,
                position: [60.0, 20.0],
                velocity: [-2.0, 0.0],
                enter: 5,
                exit: None,
            },
        ],
    };
    make_scene(&spec, seed).unwrap()
}
