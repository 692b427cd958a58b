//! Painter compositing and the weighted loss totals of the mask predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ChannelField, LossWeights, SoftMask};

/// `painted ⊙ m + x ⊙ (1 - m)` for a binary mask, broadcast over channels.
///
/// Pixels are selected rather than blended so unmasked pixels keep the input
/// bits exactly.
pub fn composite_flood(x: &ChannelField, painted: &ChannelField, m: &SoftMask) -> Result<ChannelField> {
    x.ensure_same_shape(painted)?;
    if (x.height(), x.width()) != m.shape() {
        return Err(Error::ShapeMismatch {
            left: x.shape(),
            right: (1, m.height(), m.width()),
        });
    }
    if let Some((index, &value)) = m.values().iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!(
            "compositing mask must be binary, found {value} at index {index}"
        )));
    }
    let plane = x.plane_len();
    let mask = m.values();
    let out = x
        .values()
        .iter()
        .zip(painted.values())
        .enumerate()
        .map(|(i, (&xv, &pv))| if mask[i % plane] == 1.0 { pv } else { xv })
        .collect();
    ChannelField::new(x.channels(), x.height(), x.width(), out)
}

/// Individual loss values feeding the weighted totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ssimse: f64,
    pub gradient_matching: f64,
    pub seg_ce: f64,
    pub seg_em: f64,
    pub seg_wgan: f64,
    pub mask_tv: f64,
    pub mask_gi: f64,
    pub mask_bce: f64,
    pub mask_em: f64,
    pub mask_wgan: f64,
}

impl LossParts {
    /// Values in `λ1..λ10` order.
    pub fn as_array(&self) -> [f64; 10] {
        [
            self.ssimse,
            self.gradient_matching,
            self.seg_ce,
            self.seg_em,
            self.seg_wgan,
            self.mask_tv,
            self.mask_gi,
            self.mask_bce,
            self.mask_em,
            self.mask_wgan,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedLoss {
    pub depth: f64,
    pub seg: f64,
    pub mask: f64,
    pub masker: f64,
}

pub fn combined_losses(parts: &LossParts, weights: &LossWeights) -> CombinedLoss {
    let p = parts.as_array();
    let weighted = |range: std::ops::Range<usize>| -> f64 { range.map(|k| weights.lambda(k + 1) * p[k]).sum() };
    let depth = weighted(0..2);
    let seg = weighted(2..5);
    let mask = weighted(5..10);
    CombinedLoss {
        depth,
        seg,
        mask,
        masker: depth + seg + mask,
    }
}
