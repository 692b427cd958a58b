//! Scale-and-shift invariant depth losses on disparity maps.
//!
//! Disparities are aligned to zero median and unit mean absolute deviation
//! before comparison, which makes both losses invariant to any positive
//! affine rescaling of the prediction.

use crate::error::{Error, Result};
use crate::raster::ChannelField;

/// Number of pyramid levels of the gradient matching term.
pub const GRADIENT_SCALES: usize = 4;

/// Median; for even lengths the mean of the two central order statistics.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Alignment of one disparity map plus what its backward pass needs.
pub(crate) struct Alignment {
    pub shift: f64,
    pub scale: f64,
    pub aligned: Vec<f64>,
    /// Indices of the order statistics forming the median and their weights.
    median_weights: Vec<(usize, f64)>,
}

impl Alignment {
    pub fn new(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        let median_weights = if n % 2 == 1 {
            vec![(order[n / 2], 1.0)]
        } else {
            vec![(order[n / 2 - 1], 0.5), (order[n / 2], 0.5)]
        };
        let shift: f64 = median_weights.iter().map(|&(i, w)| w * d[i]).sum();
        let scale = d.iter().map(|v| (v - shift).abs()).sum::<f64>() / n as f64;
        if scale <= 0.0 || !scale.is_finite() {
            return Err(Error::DegenerateDisparity);
        }
        let aligned = d.iter().map(|v| (v - shift) / scale).collect();
        Ok(Self {
            shift,
            scale,
            aligned,
            median_weights,
        })
    }

    /// Pulls a gradient with respect to the aligned map back to the raw
    /// disparities.
    pub fn backward(&self, d: &[f64], grad_aligned: &[f64]) -> Vec<f64> {
        let n = d.len() as f64;
        let sign: Vec<f64> = d.iter().map(|v| sign(v - self.shift)).collect();
        let sign_sum: f64 = sign.iter().sum();
        let r_sum: f64 = grad_aligned.iter().sum();
        let r_dot: f64 = grad_aligned.iter().zip(&self.aligned).map(|(r, a)| r * a).sum();
        let mut median_grad = vec![0.0; d.len()];
        for &(i, w) in &self.median_weights {
            median_grad[i] = w;
        }
        (0..d.len())
            .map(|j| {
                let t_j = median_grad[j];
                let s_j = (sign[j] - t_j * sign_sum) / n;
                (grad_aligned[j] - t_j * r_sum - s_j * r_dot) / self.scale
            })
            .collect()
    }
}

/// Sign with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn single_channel(d: &ChannelField) -> Result<()> {
    if d.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "disparity must be single-channel, got {} channels",
            d.channels()
        )));
    }
    Ok(())
}

/// `(d - median(d)) / mean|d - median(d)|`.
pub fn align_disparity(d: &ChannelField) -> Result<ChannelField> {
    single_channel(d)?;
    let a = Alignment::new(d.values())?;
    ChannelField::new(1, d.height(), d.width(), a.aligned)
}

fn check_pair(d: &ChannelField, target: &ChannelField) -> Result<()> {
    single_channel(d)?;
    d.ensure_same_shape(target)
}

/// Half the mean squared difference of the aligned maps.
pub fn ssimse_loss(d: &ChannelField, target: &ChannelField) -> Result<f64> {
    check_pair(d, target)?;
    let target = Alignment::new(target.values())?;
    ssimse_value(d.values(), &target.aligned)
}

pub(crate) fn ssimse_value(d: &[f64], target_aligned: &[f64]) -> Result<f64> {
    let a = Alignment::new(d)?;
    let total: f64 = a
        .aligned
        .iter()
        .zip(target_aligned)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(0.5 * total / d.len() as f64)
}

pub(crate) fn ssimse_gradient(d: &[f64], target_aligned: &[f64]) -> Result<Vec<f64>> {
    let a = Alignment::new(d)?;
    let n = d.len() as f64;
    let r: Vec<f64> = a.aligned.iter().zip(target_aligned).map(|(x, y)| (x - y) / n).collect();
    Ok(a.backward(d, &r))
}

/// 2x2 average pooling; odd trailing rows/columns are dropped.
pub(crate) fn avg_pool2(x: &[f64], height: usize, width: usize) -> (Vec<f64>, usize, usize) {
    let (ph, pw) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(ph * pw);
    for h in 0..ph {
        for w in 0..pw {
            let i = 2 * h * width + 2 * w;
            out.push(0.25 * (x[i] + x[i + 1] + x[i + width] + x[i + width + 1]));
        }
    }
    (out, ph, pw)
}

fn pool_backward(grad: &[f64], height: usize, width: usize) -> Vec<f64> {
    let (ph, pw) = (height / 2, width / 2);
    let mut out = vec![0.0; height * width];
    for h in 0..ph {
        for w in 0..pw {
            let g = 0.25 * grad[h * pw + w];
            let i = 2 * h * width + 2 * w;
            out[i] += g;
            out[i + 1] += g;
            out[i + width] += g;
            out[i + width + 1] += g;
        }
    }
    out
}

fn abs_gradient_sum(x: &[f64], height: usize, width: usize) -> f64 {
    let mut total = 0.0;
    for h in 0..height {
        for w in 0..width {
            let v = x[h * width + w];
            if w + 1 < width {
                total += (x[h * width + w + 1] - v).abs();
            }
            if h + 1 < height {
                total += (x[(h + 1) * width + w] - v).abs();
            }
        }
    }
    total
}

fn abs_gradient_sum_backward(x: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for h in 0..height {
        for w in 0..width {
            let i = h * width + w;
            if w + 1 < width {
                let s = sign(x[i + 1] - x[i]);
                grad[i + 1] += s;
                grad[i] -= s;
            }
            if h + 1 < height {
                let s = sign(x[i + width] - x[i]);
                grad[i + width] += s;
                grad[i] -= s;
            }
        }
    }
    grad
}

fn check_scales(height: usize, width: usize) -> Result<()> {
    let min = 1 << (GRADIENT_SCALES - 1);
    if height < min || width < min {
        return Err(Error::TooSmallForScales {
            height,
            width,
            scales: GRADIENT_SCALES,
        });
    }
    Ok(())
}

/// Multi-scale gradient matching: sum over four pyramid levels of the
/// absolute forward differences of the aligned residual.
pub fn gradient_matching_loss(d: &ChannelField, target: &ChannelField) -> Result<f64> {
    check_pair(d, target)?;
    check_scales(d.height(), d.width())?;
    let target = Alignment::new(target.values())?;
    gradient_matching_value(d.values(), &target.aligned, d.height(), d.width())
}

/// Residual pyramid `R_0 .. R_{K-1}` with the shape of each level.
pub(crate) fn residual_pyramid(residual: Vec<f64>, height: usize, width: usize) -> Vec<(Vec<f64>, usize, usize)> {
    let mut levels = vec![(residual, height, width)];
    for _ in 1..GRADIENT_SCALES {
        let (r, h, w) = levels.last().unwrap();
        levels.push(avg_pool2(r, *h, *w));
    }
    levels
}

pub(crate) fn gradient_matching_value(d: &[f64], target_aligned: &[f64], height: usize, width: usize) -> Result<f64> {
    let a = Alignment::new(d)?;
    let residual: Vec<f64> = a.aligned.iter().zip(target_aligned).map(|(x, y)| x - y).collect();
    Ok(residual_pyramid(residual, height, width)
        .iter()
        .map(|(r, h, w)| abs_gradient_sum(r, *h, *w))
        .sum())
}

pub(crate) fn gradient_matching_gradient(
    d: &[f64],
    target_aligned: &[f64],
    height: usize,
    width: usize,
) -> Result<Vec<f64>> {
    let a = Alignment::new(d)?;
    let residual: Vec<f64> = a.aligned.iter().zip(target_aligned).map(|(x, y)| x - y).collect();
    let levels = residual_pyramid(residual, height, width);
    // accumulate from the coarsest level down to full resolution
    let mut carry: Option<Vec<f64>> = None;
    for k in (0..levels.len()).rev() {
        let (r, h, w) = &levels[k];
        let mut g = abs_gradient_sum_backward(r, *h, *w);
        if let Some(c) = carry.take() {
            for (gi, ci) in g.iter_mut().zip(c) {
                *gi += ci;
            }
        }
        carry = Some(if k > 0 {
            let (_, ph, pw) = &levels[k - 1];
            pool_backward(&g, *ph, *pw)
        } else {
            g
        });
    }
    Ok(a.backward(d, &carry.unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(h: usize, w: usize, v: Vec<f64>) -> ChannelField {
        ChannelField::new(1, h, w, v).unwrap()
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 9.0, 2.0]), 3.0);
    }

    #[test]
    fn align_hand_example() {
        let a = align_disparity(&field(1, 4, vec![1.0, 2.0, 4.0, 9.0])).unwrap();
        let expected = [-0.8, -0.4, 0.4, 2.4];
        for (x, e) in a.values().iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn align_idempotent_and_affine_invariant() {
        let d = field(2, 3, vec![0.1, 0.7, 0.3, 0.95, 0.2, 0.5]);
        let once = align_disparity(&d).unwrap();
        let twice = align_disparity(&once).unwrap();
        for (x, y) in once.values().iter().zip(twice.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        let moved = field(2, 3, d.values().iter().map(|v| 3.5 * v - 2.0).collect());
        for (x, y) in align_disparity(&moved).unwrap().values().iter().zip(once.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_disparity_is_degenerate() {
        let d = field(2, 2, vec![0.4; 4]);
        assert!(matches!(align_disparity(&d), Err(Error::DegenerateDisparity)));
        assert!(matches!(
            ssimse_loss(&d, &field(2, 2, vec![0.1, 0.2, 0.3, 0.4])),
            Err(Error::DegenerateDisparity)
        ));
    }

    #[test]
    fn ssimse_zero_cases() {
        let t = field(2, 3, vec![0.1, 0.7, 0.3, 0.95, 0.2, 0.5]);
        assert_eq!(ssimse_loss(&t, &t).unwrap(), 0.0);
        let d = field(2, 3, t.values().iter().map(|v| 2.0 * v + 3.0).collect());
        assert!(ssimse_loss(&d, &t).unwrap() < 1e-24);
    }

    #[test]
    fn gradient_matching_requires_eight_pixels() {
        let d = ChannelField::from_fn(1, 7, 9, |_, h, w| (h * 9 + w) as f64).unwrap();
        assert!(matches!(
            gradient_matching_loss(&d, &d),
            Err(Error::TooSmallForScales { .. })
        ));
        let d = ChannelField::from_fn(1, 8, 8, |_, h, w| ((h * 7 + w * 3) % 11) as f64).unwrap();
        assert_eq!(gradient_matching_loss(&d, &d).unwrap(), 0.0);
    }

    #[test]
    fn pooling_drops_odd_edge() {
        let (p, h, w) = avg_pool2(&[1.0, 2.0, 9.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0], 3, 3);
        assert_eq!((h, w), (1, 1));
        assert_eq!(p, vec![2.5]);
    }
}
