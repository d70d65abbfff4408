//! Binary segmentation scores and height RMSE.

use std::ops::AddAssign;

use bitflags::bitflags;

bitflags! {
    /// Scores whose denominator was zero (reported as 0).
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct Undefined: u8 {
        const PRECISION = 1;
        const RECALL = 1 << 1;
        const IOU = 1 << 2;
        const F1 = 1 << 3;
    }
}

/// Confusion counts; ground is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_masks(predicted: &[bool], labels: &[bool]) -> Self {
        assert_eq!(predicted.len(), labels.len(), "prediction and label counts differ");
        let mut c = Self::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> SegMetrics {
        SegMetrics::from_confusion(*self)
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegMetrics {
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub f1: f64,
    pub undefined: Undefined,
}

fn ratio(num: u64, den: u64, flag: Undefined, undefined: &mut Undefined) -> f64 {
    if den == 0 {
        *undefined |= flag;
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl SegMetrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let mut undefined = Undefined::empty();
        let precision = ratio(c.tp, c.tp + c.fp, Undefined::PRECISION, &mut undefined);
        let recall = ratio(c.tp, c.tp + c.fn_, Undefined::RECALL, &mut undefined);
        let iou = ratio(c.tp, c.tp + c.fp + c.fn_, Undefined::IOU, &mut undefined);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined |= Undefined::F1;
            0.0
        };
        Self {
            counts: c,
            precision,
            recall,
            iou,
            f1,
            undefined,
        }
    }
}

pub fn compute_metrics(predicted: &[bool], labels: &[bool]) -> SegMetrics {
    Confusion::from_masks(predicted, labels).metrics()
}

/// Root mean square of `errors`; `None` when empty.
pub fn rmse(errors: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        sum += e * e;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// RMSE of `model(x, y) - z` over truth samples `(x, y, z)`.
pub fn rmse_terrain(model: impl Fn(f64, f64) -> f64, truth: &[(f64, f64, f64)]) -> Option<f64> {
    rmse(truth.iter().map(|&(x, y, z)| model(x, y) - z))
}

/// Sorted-sample percentile with linear interpolation, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}
