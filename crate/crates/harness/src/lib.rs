//! Command-line harness for flood-mask studies: dataset evaluation, paired
//! ablations, kernel verification, synthetic datasets and the rating
//! service backend.

pub mod ablate;
pub mod dataset;
pub mod evaluate;
pub mod manifest;
pub mod serve;
pub mod synth;
pub mod verify;

use std::fmt;

pub use ablate::{cmd_ablate, AblateOutput, AblationReport};
pub use evaluate::{cmd_evaluate, EvaluateOutput, EvaluationSummary};
pub use manifest::StudyManifest;
pub use verify::{cmd_verify, run_verify, VerifyOptions, VerifyReport};

/// An invocation that cannot run as given (exit status 2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
