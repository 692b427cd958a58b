//! Fail-fast loading of a study dataset: every label and prediction is
//! decoded and shape-checked up front, and all offenders are reported
//! together before any metric is computed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use floodbench_core::io::{list_png_ids, load_label_map, load_mask};
use floodbench_core::metrics::evaluate_image;
use floodbench_core::{BinaryMask, MetricRecord, TernaryLabelMap};
use rayon::prelude::*;

use crate::manifest::StudyManifest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub offenders: Vec<String>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset validation failed with {} problem(s):", self.offenders.len())?;
        for o in &self.offenders {
            writeln!(f, "  - {o}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

pub struct Dataset {
    /// Labels ordered by image id.
    pub labels: Vec<(String, TernaryLabelMap)>,
    /// Binarized predictions per model, aligned with `labels`.
    pub predictions: Vec<(String, Vec<BinaryMask>)>,
}

impl Dataset {
    pub fn load(manifest: &StudyManifest, model_ids: &[String]) -> Result<Self, ValidationError> {
        let mut offenders = Vec::new();
        let label_files = match list_png_ids(&manifest.labels) {
            Ok(files) => files,
            Err(e) => {
                return Err(ValidationError {
                    offenders: vec![format!("labels: {e}")],
                })
            }
        };
        let labels: Vec<_> = label_files
            .par_iter()
            .map(|(id, path)| load_label_map(path).map(|l| (id.clone(), l)))
            .collect();
        let labels: Vec<(String, TernaryLabelMap)> = labels
            .into_iter()
            .filter_map(|r| r.map_err(|e| offenders.push(format!("label {e}"))).ok())
            .collect();

        let mut predictions = Vec::new();
        for model in model_ids {
            let dir = manifest.dataset.join(model);
            let files: BTreeMap<String, PathBuf> = match list_png_ids(&dir) {
                Ok(f) => f.into_iter().collect(),
                Err(_) => {
                    offenders.push(format!(
                        "model `{model}`: prediction directory {} not found",
                        dir.display()
                    ));
                    continue;
                }
            };
            let missing: Vec<&str> = labels
                .iter()
                .filter(|(id, _)| !files.contains_key(id))
                .map(|(id, _)| id.as_str())
                .collect();
            if !missing.is_empty() {
                offenders.push(format!(
                    "model `{model}`: no prediction for image(s) {}",
                    missing.join(", ")
                ));
            }
            let extra = files.keys().filter(|id| !labels.iter().any(|(l, _)| l == *id)).count();
            if extra > 0 {
                tracing::warn!(model = %model, extra, "predictions without a label are ignored");
            }
            let loaded: Vec<Result<BinaryMask, String>> = labels
                .par_iter()
                .filter(|(id, _)| files.contains_key(id))
                .map(|(id, label)| {
                    let mask = load_mask(&files[id], manifest.threshold)
                        .map_err(|e| format!("model `{model}`: {e}"))?
                        .binary;
                    if mask.shape() != label.shape() {
                        return Err(format!(
                            "model `{model}`, image `{id}`: prediction is {:?} but label is {:?}",
                            mask.shape(),
                            label.shape()
                        ));
                    }
                    Ok(mask)
                })
                .collect();
            let mut masks = Vec::with_capacity(loaded.len());
            for r in loaded {
                match r {
                    Ok(m) => masks.push(m),
                    Err(e) => offenders.push(e),
                }
            }
            predictions.push((model.clone(), masks));
        }
        if offenders.is_empty() {
            Ok(Self { labels, predictions })
        } else {
            Err(ValidationError { offenders })
        }
    }

    /// Per-image records for every model, model-major in load order.
    pub fn evaluate(&self) -> Vec<MetricRecord> {
        self.predictions
            .iter()
            .flat_map(|(model, masks)| {
                let records: Vec<MetricRecord> = self
                    .labels
                    .par_iter()
                    .zip(masks.par_iter())
                    .map(|((id, label), pred)| {
                        evaluate_image(model, id, pred, label).expect("shapes validated at load")
                    })
                    .collect();
                records
            })
            .collect()
    }
}
