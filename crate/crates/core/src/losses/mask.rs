//! Flood-mask decoder losses: total variation, ground intersection, entropy
//! minimization and binary cross-entropy.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, SoftMask};

use super::EPS_NUM;

fn valid_difference_count(height: usize, width: usize) -> usize {
    (height - 1) * width + height * (width - 1)
}

/// Mean of squared forward differences over all valid vertical and
/// horizontal neighbour pairs.
pub fn tv_loss(m: &SoftMask) -> f64 {
    tv_value(m.height(), m.width(), m.values())
}

pub(crate) fn tv_value(height: usize, width: usize, x: &[f64]) -> f64 {
    let count = valid_difference_count(height, width);
    if count == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for h in 0..height {
        for w in 0..width {
            let v = x[h * width + w];
            if h + 1 < height {
                let d = x[(h + 1) * width + w] - v;
                total += d * d;
            }
            if w + 1 < width {
                let d = x[h * width + w + 1] - v;
                total += d * d;
            }
        }
    }
    total / count as f64
}

pub(crate) fn tv_gradient(height: usize, width: usize, x: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let count = valid_difference_count(height, width);
    if count == 0 {
        return grad;
    }
    let scale = 2.0 / count as f64;
    for h in 0..height {
        for w in 0..width {
            let i = h * width + w;
            if h + 1 < height {
                let j = (h + 1) * width + w;
                let d = scale * (x[j] - x[i]);
                grad[j] += d;
                grad[i] -= d;
            }
            if w + 1 < width {
                let j = i + 1;
                let d = scale * (x[j] - x[i]);
                grad[j] += d;
                grad[i] -= d;
            }
        }
    }
    grad
}

/// Fraction of pixels where the ground pseudo-label exceeds the mask by more
/// than 0.5.
pub fn gi_loss(g: &SoftMask, m: &SoftMask) -> Result<f64> {
    g.ensure_same_shape(m)?;
    let hits = g.values().iter().zip(m.values()).filter(|(g, m)| *g - *m > 0.5).count();
    Ok(hits as f64 / g.values().len() as f64)
}

/// `x ln x` with the `0 ln 0 = 0` convention.
pub(crate) fn x_ln_x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Mean of `-q ln q` over every value of a probability field or mask.
pub fn em_loss(q: &[f64]) -> Result<f64> {
    if q.is_empty() {
        return Err(Error::InvalidArgument("entropy of an empty field".into()));
    }
    for (index, &value) in q.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange {
                index,
                value,
                min: 0.0,
                max: 1.0,
            });
        }
    }
    Ok(em_value(q))
}

pub(crate) fn em_value(q: &[f64]) -> f64 {
    -q.iter().map(|&v| x_ln_x(v)).sum::<f64>() / q.len() as f64
}

pub(crate) fn em_gradient(q: &[f64]) -> Vec<f64> {
    let n = q.len() as f64;
    q.iter().map(|&v| -(v.max(EPS_NUM).ln() + 1.0) / n).collect()
}

/// Mean binary cross-entropy with `m` clamped to `[ε, 1 - ε]`.
pub fn bce_loss(y: &BinaryMask, m: &SoftMask) -> Result<f64> {
    if y.shape() != m.shape() {
        return Err(Error::ShapeMismatch {
            left: (1, y.height(), y.width()),
            right: (1, m.height(), m.width()),
        });
    }
    Ok(bce_value(y.values(), m.values()))
}

fn clamp_prob(v: f64) -> f64 {
    v.clamp(EPS_NUM, 1.0 - EPS_NUM)
}

pub(crate) fn bce_value(y: &[bool], m: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(m)
        .map(|(&y, &m)| {
            let m = clamp_prob(m);
            if y {
                -m.ln()
            } else {
                -(1.0 - m).ln()
            }
        })
        .sum();
    total / m.len() as f64
}

pub(crate) fn bce_gradient(y: &[bool], m: &[f64]) -> Vec<f64> {
    let n = m.len() as f64;
    y.iter()
        .zip(m)
        .map(|(&y, &m)| {
            if m <= EPS_NUM || m >= 1.0 - EPS_NUM {
                return 0.0;
            }
            if y {
                -1.0 / (m * n)
            } else {
                1.0 / ((1.0 - m) * n)
            }
        })
        .collect()
}
