//! Central finite-difference verification of the analytic loss gradients.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::depth::{self, residual_pyramid, Alignment};
use crate::losses::mask;
use crate::losses::segmentation;
use crate::losses::spade::{self, Conv3x3, SpadeParams};
use crate::raster::ChannelField;

/// Finite-difference step on 64-bit values.
pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative deviation, so components whose true
/// value is zero are judged by absolute error.
pub const DEVIATION_FLOOR: f64 = 1e-6;

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait DifferentiableKernel: Sync {
    fn value(&self, params: &[f64]) -> f64;
    fn gradient(&self, params: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Tv,
    Em,
    Ce,
    Bce,
    Ssimse,
    GradientMatching,
    SpadeDenorm,
    GroundIntersection,
    Wgan,
}

impl KernelKind {
    pub const DIFFERENTIABLE: [KernelKind; 7] = [
        KernelKind::Tv,
        KernelKind::Em,
        KernelKind::Ce,
        KernelKind::Bce,
        KernelKind::Ssimse,
        KernelKind::GradientMatching,
        KernelKind::SpadeDenorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Tv => "tv",
            KernelKind::Em => "em",
            KernelKind::Ce => "ce",
            KernelKind::Bce => "bce",
            KernelKind::Ssimse => "ssimse",
            KernelKind::GradientMatching => "gradient_matching",
            KernelKind::SpadeDenorm => "spade_denorm",
            KernelKind::GroundIntersection => "gi",
            KernelKind::Wgan => "wgan",
        }
    }

    pub fn is_differentiable(self) -> bool {
        !matches!(self, KernelKind::GroundIntersection | KernelKind::Wgan)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::DIFFERENTIABLE
            .into_iter()
            .chain([KernelKind::GroundIntersection, KernelKind::Wgan])
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_deviation: f64,
    pub deviations: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative deviation between an analytic and a numerical derivative.
pub fn relative_deviation(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(DEVIATION_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares the kernel's analytic gradient at `point` with central finite
/// differences, one parameter at a time.
pub fn grad_check(kernel: &dyn DifferentiableKernel, point: &[f64], tolerance: f64) -> Result<GradCheckReport> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let analytic = kernel.gradient(point);
    if analytic.len() != point.len() {
        return Err(Error::LengthMismatch {
            expected: point.len(),
            actual: analytic.len(),
        });
    }
    let deviations: Vec<f64> = (0..point.len())
        .into_par_iter()
        .map(|i| {
            let mut x = point.to_vec();
            x[i] = point[i] + FD_STEP;
            let up = kernel.value(&x);
            x[i] = point[i] - FD_STEP;
            let down = kernel.value(&x);
            let numeric = (up - down) / (2.0 * FD_STEP);
            relative_deviation(analytic[i], numeric)
        })
        .collect();
    let max = deviations.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_deviation: max,
        deviations,
        tolerance,
        passed: max <= tolerance,
    })
}

pub struct TvKernel {
    pub height: usize,
    pub width: usize,
}

impl DifferentiableKernel for TvKernel {
    fn value(&self, p: &[f64]) -> f64 {
        mask::tv_value(self.height, self.width, p)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        mask::tv_gradient(self.height, self.width, p)
    }
}

pub struct EmKernel;

impl DifferentiableKernel for EmKernel {
    fn value(&self, p: &[f64]) -> f64 {
        mask::em_value(p)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        mask::em_gradient(p)
    }
}

/// Cross-entropy as a function of the predicted probabilities.
pub struct CeKernel {
    pub labels: Vec<f64>,
    pub plane: usize,
}

impl DifferentiableKernel for CeKernel {
    fn value(&self, p: &[f64]) -> f64 {
        segmentation::ce_value(&self.labels, p, self.plane)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        segmentation::ce_gradient(&self.labels, p, self.plane)
    }
}

pub struct BceKernel {
    pub labels: Vec<bool>,
}

impl DifferentiableKernel for BceKernel {
    fn value(&self, p: &[f64]) -> f64 {
        mask::bce_value(&self.labels, p)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        mask::bce_gradient(&self.labels, p)
    }
}

/// Scale-and-shift invariant MSE as a function of the predicted disparity.
pub struct SsimseKernel {
    target_aligned: Vec<f64>,
}

impl SsimseKernel {
    pub fn new(target: &[f64]) -> Result<Self> {
        Ok(Self {
            target_aligned: Alignment::new(target)?.aligned,
        })
    }
}

impl DifferentiableKernel for SsimseKernel {
    fn value(&self, p: &[f64]) -> f64 {
        depth::ssimse_value(p, &self.target_aligned).unwrap_or(f64::NAN)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        depth::ssimse_gradient(p, &self.target_aligned).unwrap_or_else(|_| vec![f64::NAN; p.len()])
    }
}

pub struct GradientMatchingKernel {
    target_aligned: Vec<f64>,
    height: usize,
    width: usize,
}

impl GradientMatchingKernel {
    pub fn new(target: &[f64], height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            target_aligned: Alignment::new(target)?.aligned,
            height,
            width,
        })
    }
}

impl DifferentiableKernel for GradientMatchingKernel {
    fn value(&self, p: &[f64]) -> f64 {
        depth::gradient_matching_value(p, &self.target_aligned, self.height, self.width).unwrap_or(f64::NAN)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        depth::gradient_matching_gradient(p, &self.target_aligned, self.height, self.width)
            .unwrap_or_else(|_| vec![f64::NAN; p.len()])
    }
}

/// `Σ weights ⊙ spade_denorm(a, U, params)` over the flat vector
/// `[a, U, γ weights, γ bias, β weights, β bias]`.
pub struct SpadeKernel {
    pub channels: usize,
    pub cond_channels: usize,
    pub height: usize,
    pub width: usize,
    pub weights: Vec<f64>,
}

impl SpadeKernel {
    fn sizes(&self) -> [usize; 6] {
        let plane = self.height * self.width;
        let conv = self.channels * self.cond_channels * 9;
        [
            self.channels * plane,
            self.cond_channels * plane,
            conv,
            self.channels,
            conv,
            self.channels,
        ]
    }

    pub fn param_len(&self) -> usize {
        self.sizes().iter().sum()
    }

    /// Flattens `(a, U, params)` into the kernel's parameter layout.
    pub fn pack(a: &ChannelField, u: &ChannelField, params: &SpadeParams) -> Vec<f64> {
        let mut v = a.values().to_vec();
        v.extend_from_slice(u.values());
        v.extend_from_slice(&params.gamma.weights);
        v.extend_from_slice(&params.gamma.bias);
        v.extend_from_slice(&params.beta.weights);
        v.extend_from_slice(&params.beta.bias);
        v
    }

    fn unpack(&self, p: &[f64]) -> Result<(ChannelField, ChannelField, SpadeParams)> {
        let mut parts = Vec::with_capacity(6);
        let mut offset = 0;
        for n in self.sizes() {
            parts.push(p[offset..offset + n].to_vec());
            offset += n;
        }
        let mut it = parts.into_iter();
        let mut next = || it.next().unwrap();
        let a = ChannelField::new(self.channels, self.height, self.width, next())?;
        let u = ChannelField::new(self.cond_channels, self.height, self.width, next())?;
        let gamma = Conv3x3::new(self.cond_channels, self.channels, next(), next())?;
        let beta = Conv3x3::new(self.cond_channels, self.channels, next(), next())?;
        Ok((a, u, SpadeParams::new(gamma, beta)?))
    }
}

impl DifferentiableKernel for SpadeKernel {
    fn value(&self, p: &[f64]) -> f64 {
        let Ok((a, u, params)) = self.unpack(p) else {
            return f64::NAN;
        };
        match spade::spade_denorm(&a, &u, &params) {
            Ok(out) => out.values().iter().zip(&self.weights).map(|(o, w)| o * w).sum(),
            Err(_) => f64::NAN,
        }
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let grads = self
            .unpack(p)
            .and_then(|(a, u, params)| spade::spade_weighted_sum_gradients(&a, &u, &params, &self.weights));
        match grads {
            Ok(g) => [g.d_a, g.d_u, g.d_gamma_w, g.d_gamma_b, g.d_beta_w, g.d_beta_b].concat(),
            Err(_) => vec![f64::NAN; p.len()],
        }
    }
}

/// A kernel bound to one randomly drawn evaluation point.
pub struct KernelInstance {
    pub kernel: Box<dyn DifferentiableKernel + Send>,
    pub point: Vec<f64>,
}

/// A named source of random kernel instances to verify.
pub trait KernelFamily: Sync {
    fn name(&self) -> &str;
    fn instance(&self, rng: &mut Xoshiro256PlusPlus) -> KernelInstance;
}

/// Random instance generator for a differentiable kernel kind. Points are
/// drawn away from the kinks of each kernel (clamps, order changes in the
/// median, zero differences under absolute values).
pub struct StandardFamily(pub KernelKind);

impl StandardFamily {
    pub fn new(kind: KernelKind) -> Result<Self> {
        if !kind.is_differentiable() {
            return Err(Error::UnsupportedKernel(kind.name().to_string()));
        }
        Ok(Self(kind))
    }
}

fn interior(rng: &mut Xoshiro256PlusPlus, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Disparity-like values with pairwise gaps of at least `0.5 / n`.
fn separated(rng: &mut Xoshiro256PlusPlus, n: usize) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(rng);
    ranks
        .into_iter()
        .map(|r| (r as f64 + rng.random_range(0.0..0.5)) / n as f64)
        .collect()
}

fn min_abs_pyramid_difference(d: &[f64], target: &[f64], h: usize, w: usize) -> f64 {
    let (Ok(a), Ok(b)) = (Alignment::new(d), Alignment::new(target)) else {
        return 0.0;
    };
    let residual: Vec<f64> = a.aligned.iter().zip(&b.aligned).map(|(x, y)| x - y).collect();
    let mut min = f64::INFINITY;
    for (r, lh, lw) in residual_pyramid(residual, h, w) {
        for y in 0..lh {
            for x in 0..lw {
                let v = r[y * lw + x];
                if x + 1 < lw {
                    min = min.min((r[y * lw + x + 1] - v).abs());
                }
                if y + 1 < lh {
                    min = min.min((r[(y + 1) * lw + x] - v).abs());
                }
            }
        }
    }
    min
}

impl KernelFamily for StandardFamily {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn instance(&self, rng: &mut Xoshiro256PlusPlus) -> KernelInstance {
        match self.0 {
            KernelKind::Tv => KernelInstance {
                kernel: Box::new(TvKernel { height: 8, width: 8 }),
                point: interior(rng, 64, 0.0, 1.0),
            },
            KernelKind::Em => KernelInstance {
                kernel: Box::new(EmKernel),
                point: interior(rng, 3 * 6 * 6, 0.05, 0.95),
            },
            KernelKind::Ce => {
                let (c, plane) = (9, 6 * 6);
                let mut labels = vec![0.0; c * plane];
                let mut probs = vec![0.0; c * plane];
                for p in 0..plane {
                    labels[rng.random_range(0..c) * plane + p] = 1.0;
                    let raw = interior(rng, c, 0.2, 1.0);
                    let total: f64 = raw.iter().sum();
                    for (k, v) in raw.into_iter().enumerate() {
                        probs[k * plane + p] = v / total;
                    }
                }
                KernelInstance {
                    kernel: Box::new(CeKernel { labels, plane }),
                    point: probs,
                }
            }
            KernelKind::Bce => KernelInstance {
                kernel: Box::new(BceKernel {
                    labels: (0..64).map(|_| rng.random_bool(0.5)).collect(),
                }),
                point: interior(rng, 64, 0.05, 0.95),
            },
            KernelKind::Ssimse => {
                let target = separated(rng, 64);
                KernelInstance {
                    kernel: Box::new(SsimseKernel::new(&target).expect("separated target")),
                    point: separated(rng, 64),
                }
            }
            KernelKind::GradientMatching => {
                let (h, w) = (8, 8);
                loop {
                    let target = separated(rng, h * w);
                    let d = separated(rng, h * w);
                    // keep every residual difference well clear of |x| at 0
                    if min_abs_pyramid_difference(&d, &target, h, w) > 1e-3 {
                        break KernelInstance {
                            kernel: Box::new(GradientMatchingKernel::new(&target, h, w).expect("separated target")),
                            point: d,
                        };
                    }
                }
            }
            KernelKind::SpadeDenorm => {
                let (channels, cond_channels, height, width) = (2, 3, 5, 6);
                let kernel = SpadeKernel {
                    channels,
                    cond_channels,
                    height,
                    width,
                    weights: interior(rng, channels * height * width, -1.0, 1.0),
                };
                let point = interior(rng, kernel.param_len(), -1.0, 1.0);
                KernelInstance {
                    kernel: Box::new(kernel),
                    point,
                }
            }
            KernelKind::GroundIntersection | KernelKind::Wgan => {
                unreachable!("StandardFamily::new rejects non-differentiable kernels")
            }
        }
    }
}

pub fn standard_families() -> Vec<Box<dyn KernelFamily>> {
    KernelKind::DIFFERENTIABLE
        .into_iter()
        .map(|k| Box::new(StandardFamily(k)) as Box<dyn KernelFamily>)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelVerification {
    pub kernel: String,
    pub instances: usize,
    pub max_relative_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Grad-checks `instances` random points of one kernel family. The RNG
/// stream depends only on `(seed, family name)`.
pub fn verify_family(
    family: &dyn KernelFamily,
    instances: usize,
    seed: u64,
    tolerance: f64,
) -> Result<KernelVerification> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ name_hash(family.name()));
    let mut max: f64 = 0.0;
    for _ in 0..instances {
        let inst = family.instance(&mut rng);
        let report = grad_check(inst.kernel.as_ref(), &inst.point, tolerance)?;
        // NaN deviations must fail
        max = if report.max_relative_deviation.is_nan() {
            f64::NAN
        } else {
            max.max(report.max_relative_deviation)
        };
    }
    Ok(KernelVerification {
        kernel: family.name().to_string(),
        instances,
        max_relative_deviation: max,
        tolerance,
        passed: max <= tolerance,
    })
}

/// Runs `verify_family` for the kernel kind, or fails for kernels without
/// a gradient.
pub fn verify_kind(kind: KernelKind, instances: usize, seed: u64, tolerance: f64) -> Result<KernelVerification> {
    verify_family(&StandardFamily::new(kind)?, instances, seed, tolerance)
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}
