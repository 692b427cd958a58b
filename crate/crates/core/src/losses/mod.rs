//! Loss formulas and conditioning operators as standalone numerical kernels.
//!
//! Natural logarithms throughout, with `ε = 1e-12` clamping inside logs.

pub mod composite;
pub mod depth;
pub mod mask;
pub mod segmentation;
pub mod spade;

pub use composite::{combined_losses, composite_flood, CombinedLoss, LossParts};
pub use depth::{align_disparity, gradient_matching_loss, median, ssimse_loss, GRADIENT_SCALES};
pub use mask::{bce_loss, em_loss, gi_loss, tv_loss};
pub use segmentation::{ce_loss, dada_fuse, self_information, wgan_losses, WganLosses};
pub use spade::{channel_stats, spade_denorm, Conv3x3, SpadeParams};

/// Clamp applied inside every logarithm.
pub const EPS_NUM: f64 = 1e-12;
