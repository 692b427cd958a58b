//! Evaluation toolkit for mask-conditioned flood image generation.
//!
//! - [`metrics`]: error rate, F0.5 and edge coherence of binary flood masks
//!   against ternary must/may/cannot labels.
//! - [`losses`]: the training objectives as plain numerical kernels, with
//!   analytic gradients checked by [`gradcheck`].
//! - [`bootstrap`] and [`study`]: paired ablation differences, trimmed means
//!   and percentile bootstrap intervals.

pub mod bootstrap;
pub mod boundary;
pub mod confusion;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod raster;
pub mod study;

pub use bootstrap::{bootstrap_ci, preference_ci, trimmed_mean, BootstrapCi, PreferenceCi, PreferenceVote, Statistic};
pub use boundary::{sobel_boundary, BoundarySet};
pub use confusion::{confusion_counts, ConfusionCounts};
pub use error::{Error, Result};
pub use metrics::{edge_coherence, error_rate, evaluate_dataset, evaluate_image, f05_score, Metric, MetricRecord};
pub use raster::{BinaryMask, ChannelField, LabelClass, LossWeights, SoftMask, TernaryLabelMap};
pub use study::{
    ablation_study, paired_differences, standard_configs, technique_pairs, BootstrapResult, BootstrapSettings,
    ModelConfig, Technique,
};
