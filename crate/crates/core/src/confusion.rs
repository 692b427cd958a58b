use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LabelClass, TernaryLabelMap};

/// Confusion counts of a binary prediction against a ternary label.
/// `MAY` pixels are never counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

pub(crate) fn ensure_shapes(pred: &BinaryMask, label: &TernaryLabelMap) -> Result<()> {
    if pred.shape() != label.shape() {
        return Err(Error::ShapeMismatch {
            left: (1, pred.height(), pred.width()),
            right: (1, label.height(), label.width()),
        });
    }
    Ok(())
}

pub fn confusion_counts(pred: &BinaryMask, label: &TernaryLabelMap) -> Result<ConfusionCounts> {
    ensure_shapes(pred, label)?;
    let mut counts = ConfusionCounts::default();
    for (&p, &l) in pred.values().iter().zip(label.values()) {
        match (p, l) {
            (true, LabelClass::Must) => counts.tp += 1,
            (true, LabelClass::Cannot) => counts.fp += 1,
            (false, LabelClass::Must) => counts.fn_ += 1,
            (false, LabelClass::Cannot) => counts.tn += 1,
            (_, LabelClass::May) => {}
        }
    }
    Ok(counts)
}
