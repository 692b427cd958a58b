//! Spatially-adaptive denormalization.
//!
//! Activations are standardized per channel over the spatial axes, then
//! rescaled and shifted by per-pixel maps `γ(U)` and `β(U)` computed from the
//! conditioning stack `U` with 3x3 convolutions (zero padding, stride 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ChannelField;

/// A 3x3 same-size convolution, weights laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv3x3 {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv3x3 {
    pub fn new(in_channels: usize, out_channels: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument("convolution needs at least one channel".into()));
        }
        let expected = out_channels * in_channels * 9;
        if weights.len() != expected || bias.len() != out_channels {
            return Err(Error::InvalidArgument(format!(
                "3x3 convolution {in_channels}->{out_channels} needs {expected} weights and {out_channels} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite convolution parameter".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    /// Zero weights; output is the bias everywhere.
    pub fn constant(in_channels: usize, out_channels: usize, value: f64) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![value; out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn apply(&self, u: &ChannelField) -> Result<ChannelField> {
        if u.channels() != self.in_channels {
            return Err(Error::InvalidArgument(format!(
                "convolution expects {} input channels, conditioning has {}",
                self.in_channels,
                u.channels()
            )));
        }
        let (h, w) = (u.height(), u.width());
        ChannelField::new(self.out_channels, h, w, conv_forward(self, u.values(), h, w))
    }
}

pub(crate) fn conv_forward(conv: &Conv3x3, u: &[f64], h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; conv.out_channels * plane];
    for o in 0..conv.out_channels {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.fill(conv.bias[o]);
        for i in 0..conv.in_channels {
            let src = &u[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = conv.weight(o, i, ky, kx);
                    if k == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            dst[y * w + x] += k * src[sy as usize * w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution given the gradient of its output.
/// Returns `(d_input, d_weights, d_bias)`.
pub(crate) fn conv_backward(
    conv: &Conv3x3,
    u: &[f64],
    grad_out: &[f64],
    h: usize,
    w: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let mut d_u = vec![0.0; u.len()];
    let mut d_w = vec![0.0; conv.weights.len()];
    let mut d_b = vec![0.0; conv.out_channels];
    for o in 0..conv.out_channels {
        let g = &grad_out[o * plane..(o + 1) * plane];
        d_b[o] = g.iter().sum();
        for i in 0..conv.in_channels {
            let src = &u[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * conv.in_channels + i) * 3 + ky) * 3 + kx;
                    let k = conv.weights[widx];
                    let mut acc = 0.0;
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let s = sy as usize * w + sx as usize;
                            acc += g[y * w + x] * src[s];
                            d_u[i * plane + s] += g[y * w + x] * k;
                        }
                    }
                    d_w[widx] = acc;
                }
            }
        }
    }
    (d_u, d_w, d_b)
}

/// The `γ` and `β` transforms of one denormalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpadeParams {
    pub gamma: Conv3x3,
    pub beta: Conv3x3,
}

impl SpadeParams {
    pub fn new(gamma: Conv3x3, beta: Conv3x3) -> Result<Self> {
        if gamma.in_channels != beta.in_channels || gamma.out_channels != beta.out_channels {
            return Err(Error::InvalidArgument(
                "γ and β transforms must have matching channel counts".into(),
            ));
        }
        Ok(Self { gamma, beta })
    }

    /// Constant `γ` and `β` maps.
    pub fn constant(cond_channels: usize, channels: usize, gamma: f64, beta: f64) -> Self {
        Self {
            gamma: Conv3x3::constant(cond_channels, channels, gamma),
            beta: Conv3x3::constant(cond_channels, channels, beta),
        }
    }

    /// `γ ≡ 1`, `β ≡ 0`: plain per-channel standardization.
    pub fn identity(cond_channels: usize, channels: usize) -> Self {
        Self::constant(cond_channels, channels, 1.0, 0.0)
    }

    pub fn cond_channels(&self) -> usize {
        self.gamma.in_channels
    }

    pub fn channels(&self) -> usize {
        self.gamma.out_channels
    }
}

/// Per-channel mean and population standard deviation over `(h, w)`.
pub fn channel_stats(a: &ChannelField) -> Vec<(f64, f64)> {
    (0..a.channels())
        .map(|c| {
            let v = a.channel(c);
            let n = v.len() as f64;
            // shifted by the first value so a constant channel has exactly
            // zero variance
            let x0 = v[0];
            let offset = v.iter().map(|x| x - x0).sum::<f64>() / n;
            let var = v.iter().map(|x| (x - x0 - offset).powi(2)).sum::<f64>() / n;
            (x0 + offset, var.sqrt())
        })
        .collect()
}

fn check_inputs(a: &ChannelField, u: &ChannelField, params: &SpadeParams) -> Result<()> {
    if (a.height(), a.width()) != (u.height(), u.width()) {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: u.shape(),
        });
    }
    if params.channels() != a.channels() || params.cond_channels() != u.channels() {
        return Err(Error::InvalidArgument(format!(
            "parameters map {} conditioning channels to {} channels; inputs have {} and {}",
            params.cond_channels(),
            params.channels(),
            u.channels(),
            a.channels()
        )));
    }
    Ok(())
}

/// Standardized values and the per-channel `(mean, std)` they came from.
type Normalized = (Vec<f64>, Vec<(f64, f64)>);

pub(crate) fn normalized(a: &ChannelField) -> Result<Normalized> {
    let stats = channel_stats(a);
    if let Some(channel) = stats.iter().position(|&(_, sd)| sd <= 0.0) {
        return Err(Error::DegenerateActivation { channel });
    }
    let plane = a.plane_len();
    let xhat = a
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (mu, sd) = stats[i / plane];
            (v - mu) / sd
        })
        .collect();
    Ok((xhat, stats))
}

/// `γ(U) · (a - μ_c) / σ_c + β(U)`.
pub fn spade_denorm(a: &ChannelField, u: &ChannelField, params: &SpadeParams) -> Result<ChannelField> {
    check_inputs(a, u, params)?;
    let (xhat, _) = normalized(a)?;
    let gamma = params.gamma.apply(u)?;
    let beta = params.beta.apply(u)?;
    let out = xhat
        .iter()
        .zip(gamma.values())
        .zip(beta.values())
        .map(|((x, g), b)| g * x + b)
        .collect();
    ChannelField::new(a.channels(), a.height(), a.width(), out)
}

/// Gradients of `Σ weights ⊙ spade_denorm(a, u, params)`.
pub(crate) struct SpadeGradients {
    pub d_a: Vec<f64>,
    pub d_u: Vec<f64>,
    pub d_gamma_w: Vec<f64>,
    pub d_gamma_b: Vec<f64>,
    pub d_beta_w: Vec<f64>,
    pub d_beta_b: Vec<f64>,
}

pub(crate) fn spade_weighted_sum_gradients(
    a: &ChannelField,
    u: &ChannelField,
    params: &SpadeParams,
    weights: &[f64],
) -> Result<SpadeGradients> {
    check_inputs(a, u, params)?;
    let (h, w) = (a.height(), a.width());
    let plane = h * w;
    let (xhat, stats) = normalized(a)?;
    let gamma = conv_forward(&params.gamma, u.values(), h, w);

    let d_gamma_map: Vec<f64> = weights.iter().zip(&xhat).map(|(wt, x)| wt * x).collect();
    let d_xhat: Vec<f64> = weights.iter().zip(&gamma).map(|(wt, g)| wt * g).collect();

    let mut d_a = vec![0.0; a.len()];
    for (c, &(_, sd)) in stats.iter().enumerate() {
        let range = c * plane..(c + 1) * plane;
        let gx = &d_xhat[range.clone()];
        let xh = &xhat[range.clone()];
        let n = plane as f64;
        let mean_g = gx.iter().sum::<f64>() / n;
        let mean_gx = gx.iter().zip(xh).map(|(g, x)| g * x).sum::<f64>() / n;
        for (k, i) in range.enumerate() {
            d_a[i] = (gx[k] - mean_g - xh[k] * mean_gx) / sd;
        }
    }

    let (du_g, d_gamma_w, d_gamma_b) = conv_backward(&params.gamma, u.values(), &d_gamma_map, h, w);
    let (du_b, d_beta_w, d_beta_b) = conv_backward(&params.beta, u.values(), weights, h, w);
    let d_u = du_g.iter().zip(&du_b).map(|(x, y)| x + y).collect();
    Ok(SpadeGradients {
        d_a,
        d_u,
        d_gamma_w,
        d_gamma_b,
        d_beta_w,
        d_beta_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn activations() -> ChannelField {
        ChannelField::from_fn(3, 4, 5, |c, h, w| {
            ((c * 31 + h * 7 + w * 13) % 17) as f64 * 0.3 - c as f64
        })
        .unwrap()
    }

    #[test]
    fn identity_standardizes_channels() {
        let a = activations();
        let u = ChannelField::filled(2, 4, 5, 0.5).unwrap();
        let out = spade_denorm(&a, &u, &SpadeParams::identity(2, 3)).unwrap();
        for (mu, sd) in channel_stats(&out) {
            assert!(mu.abs() < 1e-12);
            assert!((sd * sd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_case_on_standardized_input() {
        let a = activations();
        let u = ChannelField::filled(1, 4, 5, 0.0).unwrap();
        let std_a = spade_denorm(&a, &u, &SpadeParams::identity(1, 3)).unwrap();
        let out = spade_denorm(&std_a, &u, &SpadeParams::constant(1, 3, 2.0, -1.0)).unwrap();
        for (o, x) in out.values().iter().zip(std_a.values()) {
            assert!((o - (2.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_channel_rejected() {
        let a = ChannelField::from_fn(2, 2, 2, |c, h, w| if c == 1 { 0.3 } else { (h + w) as f64 }).unwrap();
        let u = ChannelField::filled(1, 2, 2, 0.0).unwrap();
        assert!(matches!(
            spade_denorm(&a, &u, &SpadeParams::identity(1, 2)),
            Err(Error::DegenerateActivation { channel: 1 })
        ));
    }

    #[test]
    fn shape_checks() {
        let a = activations();
        let u = ChannelField::filled(2, 4, 4, 0.5).unwrap();
        assert!(spade_denorm(&a, &u, &SpadeParams::identity(2, 3)).is_err());
        let u = ChannelField::filled(2, 4, 5, 0.5).unwrap();
        assert!(spade_denorm(&a, &u, &SpadeParams::identity(3, 3)).is_err());
        assert!(Conv3x3::new(2, 1, vec![0.0; 17], vec![0.0]).is_err());
    }

    #[test]
    fn conv_center_tap_is_identity() {
        let mut weights = vec![0.0; 9];
        weights[4] = 1.0;
        let conv = Conv3x3::new(1, 1, weights, vec![0.5]).unwrap();
        let u = ChannelField::from_fn(1, 3, 3, |_, h, w| (h * 3 + w) as f64).unwrap();
        let out = conv.apply(&u).unwrap();
        for (o, x) in out.values().iter().zip(u.values()) {
            assert_eq!(*o, x + 0.5);
        }
    }
}
