//! Mask quality metrics: error rate, F0.5 and edge coherence.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{min_distances, sobel_boundary};
use crate::confusion::{confusion_counts, ensure_shapes, ConfusionCounts};
use crate::error::{Error, Result};
use crate::io::{list_png_ids, load_label_map, load_mask};
use crate::raster::{BinaryMask, LabelClass, TernaryLabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Error,
    F05,
    EdgeCoherence,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Error, Metric::F05, Metric::EdgeCoherence];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Error => "error",
            Metric::F05 => "f05",
            Metric::EdgeCoherence => "edge_coherence",
        }
    }

    /// Whether larger values of the metric are better.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Error)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}`")))
    }
}

/// Metric values of one model on one test image. Degenerate cases are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model_id: String,
    pub image_id: String,
    pub error: f64,
    pub f05: Option<f64>,
    pub edge_coherence: Option<f64>,
}

impl MetricRecord {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Error => Some(self.error),
            Metric::F05 => self.f05,
            Metric::EdgeCoherence => self.edge_coherence,
        }
    }
}

/// `(FN + FP) / (H * W)`.
pub fn error_rate(pred: &BinaryMask, label: &TernaryLabelMap) -> Result<f64> {
    let c = confusion_counts(pred, label)?;
    Ok(error_from_counts(&c, pred.height() * pred.width()))
}

fn error_from_counts(c: &ConfusionCounts, pixels: usize) -> f64 {
    (c.fn_ + c.fp) as f64 / pixels as f64
}

/// F-beta with beta = 0.5 from confusion counts, `None` when precision or
/// recall is undefined.
pub fn f05_from_counts(c: &ConfusionCounts) -> Option<f64> {
    if c.tp + c.fp == 0 || c.tp + c.fn_ == 0 {
        return None;
    }
    if c.tp == 0 {
        // precision = recall = 0
        return Some(0.0);
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    Some(1.25 * precision * recall / (0.25 * precision + recall))
}

pub fn f05_score(pred: &BinaryMask, label: &TernaryLabelMap) -> Result<Option<f64>> {
    Ok(f05_from_counts(&confusion_counts(pred, label)?))
}

/// `1 - σ` of the normalized minimum distances from each predicted boundary
/// pixel to the must-be-flooded boundary. Distances are divided by the image
/// height; σ is the population standard deviation.
pub fn edge_coherence(pred: &BinaryMask, label: &TernaryLabelMap) -> Result<Option<f64>> {
    ensure_shapes(pred, label)?;
    let predicted = sobel_boundary(pred);
    let reference = sobel_boundary(&label.class_mask(LabelClass::Must));
    if predicted.is_empty() {
        return Ok(None);
    }
    let Some(distances) = min_distances(&predicted, &reference)? else {
        return Ok(None);
    };
    let h = pred.height() as f64;
    let normalized: Vec<f64> = distances.into_iter().map(|d| d / h).collect();
    Ok(Some(1.0 - population_std(&normalized)))
}

/// Shifted by the first value so that equal inputs give exactly zero.
pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let x0 = xs[0];
    let mean = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - x0 - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

pub fn evaluate_image(
    model_id: &str,
    image_id: &str,
    pred: &BinaryMask,
    label: &TernaryLabelMap,
) -> Result<MetricRecord> {
    let counts = confusion_counts(pred, label)?;
    Ok(MetricRecord {
        model_id: model_id.to_string(),
        image_id: image_id.to_string(),
        error: error_from_counts(&counts, pred.height() * pred.width()),
        f05: f05_from_counts(&counts),
        edge_coherence: edge_coherence(pred, label)?,
    })
}

/// Evaluates every labeled image against the model's prediction directory.
///
/// Records come back ordered by image id. A labeled image without a
/// prediction is a hard error naming every absent id; predictions without a
/// label are ignored.
pub fn evaluate_dataset(
    model_id: &str,
    pred_dir: &Path,
    label_dir: &Path,
    threshold: f64,
) -> Result<Vec<MetricRecord>> {
    let labels = list_png_ids(label_dir)?;
    let preds: BTreeMap<String, std::path::PathBuf> = list_png_ids(pred_dir)?.into_iter().collect();
    let missing: Vec<String> = labels
        .iter()
        .filter(|(id, _)| !preds.contains_key(id))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions { ids: missing });
    }
    let extra = preds.len() - labels.len();
    if extra > 0 {
        tracing::warn!(model_id, extra, "predictions without a label were ignored");
    }
    labels
        .par_iter()
        .map(|(id, label_path)| {
            let label = load_label_map(label_path)?;
            let pred = load_mask(&preds[id], threshold)?;
            evaluate_image(model_id, id, &pred.binary, &label)
        })
        .collect()
}

/// Writes records with header `model_id,image_id,error,f05,edge_coherence`;
/// missing values become empty fields.
pub fn write_records_csv<W: Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer
            .serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    if records.is_empty() {
        writer
            .write_record(["model_id", "image_id", "error", "f05", "edge_coherence"])
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Schema(format!("metrics csv: {e}"))))
        .collect()
}
