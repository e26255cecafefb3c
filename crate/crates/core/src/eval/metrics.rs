//! Intersection-over-union accuracy.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::types::{SegMap, IGNORE_LABEL};

/// Pixel counts for one class, summed over every frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ClassCounts {
    pub fn union(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg
    }

    /// `None` when the class appears in neither predictions nor ground truth.
    pub fn iou(&self) -> Option<f64> {
        let u = self.union();
        (u > 0).then(|| self.true_pos as f64 / u as f64)
    }

    pub fn iou_exact(&self) -> Option<BigRational> {
        let u = self.union();
        (u > 0).then(|| BigRational::new(BigInt::from(self.true_pos), BigInt::from(u)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    pub counts: Vec<ClassCounts>,
    pub per_class_iou: Vec<Option<f64>>,
    /// Mean IoU in `[0, 1]` over classes with a non-empty union.
    pub mean: f64,
    pub mean_exact: BigRational,
}

impl MiouReport {
    pub fn classes_counted(&self) -> usize {
        self.per_class_iou.iter().flatten().count()
    }
}

/// Accumulates per-class counts over aligned prediction / ground-truth pairs.
///
/// Ground-truth pixels labeled [`IGNORE_LABEL`] are skipped. A prediction of
/// [`IGNORE_LABEL`] on a valid pixel counts as a miss for the true class.
pub fn class_counts(
    preds: &[SegMap],
    gts: &[SegMap],
    num_classes: usize,
) -> Result<Vec<ClassCounts>> {
    if preds.len() != gts.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    if num_classes == 0 || num_classes > IGNORE_LABEL as usize {
        return Err(Error::InvalidArgument(format!(
            "class count must be in 1..={}, got {num_classes}",
            IGNORE_LABEL
        )));
    }
    let mut counts = vec![ClassCounts::default(); num_classes];
    let mut valid = 0u64;
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        if !p.same_size(g) {
            return Err(Error::AtFrame {
                index: i,
                source: Box::new(Error::Mismatch(format!(
                    "prediction is {}x{}, ground truth is {}x{}",
                    p.width(),
                    p.height(),
                    g.width(),
                    g.height()
                ))),
            });
        }
        p.check_classes(num_classes).map_err(Error::at_frame(i))?;
        g.check_classes(num_classes).map_err(Error::at_frame(i))?;
        for (&pl, &gl) in p.labels().iter().zip(g.labels()) {
            if gl == IGNORE_LABEL {
                continue;
            }
            valid += 1;
            if pl == gl {
                counts[gl as usize].true_pos += 1;
            } else {
                counts[gl as usize].false_neg += 1;
                if pl != IGNORE_LABEL {
                    counts[pl as usize].false_pos += 1;
                }
            }
        }
    }
    if valid == 0 {
        return Err(Error::InvalidArgument(
            "ground truth has no labeled pixels".into(),
        ));
    }
    Ok(counts)
}

/// Mean intersection-over-union over all frames.
///
/// Classes absent from both predictions and ground truth are left out of
/// the mean.
pub fn miou(preds: &[SegMap], gts: &[SegMap], num_classes: usize) -> Result<MiouReport> {
    let counts = class_counts(preds, gts, num_classes)?;
    let per_class_iou: Vec<Option<f64>> = counts.iter().map(ClassCounts::iou).collect();
    let exact: Vec<BigRational> = counts.iter().filter_map(ClassCounts::iou_exact).collect();
    let k = exact.len();
    let mean_exact =
        exact.into_iter().sum::<BigRational>() / BigRational::from_integer(BigInt::from(k));
    let mean = mean_exact
        .to_f64()
        .expect("a ratio in [0, 1] converts to f64");
    Ok(MiouReport {
        counts,
        per_class_iou,
        mean,
        mean_exact,
    })
}

/// Mean IoU, as a percentage, of each keyframe offset: offset `o` pools the
/// frames with `i % interval == o`.
pub fn per_offset_miou(
    preds: &[SegMap],
    gts: &[SegMap],
    interval: usize,
    num_classes: usize,
) -> Result<Vec<f64>> {
    if interval == 0 || interval > preds.len() {
        return Err(Error::InvalidArgument(format!(
            "keyframe interval {interval} for a stream of {} frames",
            preds.len()
        )));
    }
    if preds.len() != gts.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    (0..interval)
        .map(|o| {
            let p: Vec<SegMap> = preds.iter().skip(o).step_by(interval).cloned().collect();
            let g: Vec<SegMap> = gts.iter().skip(o).step_by(interval).cloned().collect();
            Ok(100.0 * miou(&p, &g, num_classes)?.mean)
        })
        .collect()
}

/// The worst per-offset accuracy.
pub fn min_accuracy(per_offset: &[f64]) -> Result<f64> {
    per_offset
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidArgument("no per-offset accuracies".into()))
}
