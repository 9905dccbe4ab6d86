use integscan_imaging::Mask;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Per-pixel tallies of a predicted map against ground truth.
pub fn confusion_counts(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::InvalidArgument(format!("prediction {:?} vs ground truth {:?}", pred.dims(), gt.dims())));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        c.record(p, g);
    }
    Ok(c)
}

/// As [`confusion_counts`] for maps stored as 0.0 / 1.0 samples; any other value is rejected.
pub fn confusion_counts_values(pred: &[f64], gt: &[f64]) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!("{} predicted vs {} ground-truth pixels", pred.len(), gt.len())));
    }
    let bit = |v: f64, what: &str| match v {
        v if v == 0.0 => Ok(false),
        v if v == 1.0 => Ok(true),
        v => Err(Error::InvalidArgument(format!("{what} value {v} is not binary"))),
    };
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gt) {
        c.record(bit(p, "prediction")?, bit(g, "ground-truth")?);
    }
    Ok(c)
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.iter().any(|&f| f == 0.0) {
        return 0.0;
    }
    let v = (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt();
    v.clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn prf_iou(c: &ConfusionCounts) -> Prf {
    Prf {
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        // 2PR/(P+R) written in counts so the zero rule needs no special case.
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
    }
}
