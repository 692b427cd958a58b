//! Segmentation decoder kernels: cross-entropy, self-information maps,
//! depth-aware fusion and the WGAN objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ChannelField;

use super::mask::x_ln_x;
use super::EPS_NUM;

fn ensure_one_hot(y: &ChannelField) -> Result<()> {
    let n = y.plane_len();
    for p in 0..n {
        let mut sum = 0.0;
        for c in 0..y.channels() {
            let v = y.values()[c * n + p];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "label field is not one-hot: value {v} at pixel {p}"
                )));
            }
            sum += v;
        }
        if sum != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "label field is not one-hot at pixel {p}"
            )));
        }
    }
    Ok(())
}

/// `-Σ_c mean_{h,w}[y ln s]` with `s` clamped below at `ε`.
pub fn ce_loss(y: &ChannelField, s: &ChannelField) -> Result<f64> {
    y.ensure_same_shape(s)?;
    ensure_one_hot(y)?;
    Ok(ce_value(y.values(), s.values(), y.plane_len()))
}

pub(crate) fn ce_value(y: &[f64], s: &[f64], plane: usize) -> f64 {
    let total: f64 = y.iter().zip(s).map(|(&y, &s)| y * s.max(EPS_NUM).ln()).sum();
    -total / plane as f64
}

pub(crate) fn ce_gradient(y: &[f64], s: &[f64], plane: usize) -> Vec<f64> {
    let plane = plane as f64;
    y.iter()
        .zip(s)
        .map(|(&y, &s)| if s > EPS_NUM { -y / (s * plane) } else { 0.0 })
        .collect()
}

/// Elementwise `-q ln q` of a probability field (`0 ln 0 = 0`).
pub fn self_information(q: &ChannelField) -> Result<ChannelField> {
    q.ensure_in_unit_interval()?;
    ChannelField::new(
        q.channels(),
        q.height(),
        q.width(),
        q.values().iter().map(|&v| -x_ln_x(v)).collect(),
    )
}

/// Depth-aware map: every channel of `info` multiplied by the disparity.
pub fn dada_fuse(info: &ChannelField, disparity: &ChannelField) -> Result<ChannelField> {
    if disparity.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "disparity must be single-channel, got {} channels",
            disparity.channels()
        )));
    }
    if (info.height(), info.width()) != (disparity.height(), disparity.width()) {
        return Err(Error::ShapeMismatch {
            left: info.shape(),
            right: disparity.shape(),
        });
    }
    let d = disparity.values();
    let n = d.len();
    ChannelField::new(
        info.channels(),
        info.height(),
        info.width(),
        info.values().iter().enumerate().map(|(i, &v)| v * d[i % n]).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WganLosses {
    /// Generator loss, `-E[Q(real)]`.
    pub generator: f64,
    /// Critic loss, `-E[Q(sim) - Q(real)]`.
    pub discriminator: f64,
}

/// WGAN objectives from critic outputs on real-domain and simulated-domain
/// maps.
pub fn wgan_losses(q_real: &[f64], q_sim: &[f64]) -> Result<WganLosses> {
    if q_real.is_empty() || q_sim.is_empty() {
        return Err(Error::InvalidArgument("critic outputs must be non-empty".into()));
    }
    if let Some(v) = q_real.iter().chain(q_sim).find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite critic output {v}")));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let real = mean(q_real);
    let sim = mean(q_sim);
    Ok(WganLosses {
        generator: -real,
        discriminator: -(sim - real),
    })
}
