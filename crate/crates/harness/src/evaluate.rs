//! `floodbench evaluate`: per-image metrics for every model plus a summary
//! of per-model medians with bootstrap intervals.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use floodbench_core::bootstrap::{bootstrap_statistic, stream_seed, Statistic};
use floodbench_core::metrics::write_records_csv;
use floodbench_core::{BootstrapSettings, Metric, MetricRecord};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::manifest::StudyManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub median: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Images with a defined value.
    pub n: usize,
    /// Images where the metric is undefined.
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub n_images: usize,
    pub metrics: Vec<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub threshold: f64,
    pub bootstrap: BootstrapSettings,
    pub statistic: String,
    pub models: Vec<ModelSummary>,
}

pub struct EvaluateOutput {
    pub records: Vec<MetricRecord>,
    pub summary: EvaluationSummary,
    pub metrics_csv: PathBuf,
    pub summary_json: PathBuf,
}

/// Median and bootstrap interval of one model's metric values.
pub fn summarize_metric(
    values: &[Option<f64>],
    metric: Metric,
    settings: &BootstrapSettings,
    seed: u64,
) -> Result<MetricSummary> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let missing = values.len() - present.len();
    if present.is_empty() {
        return Ok(MetricSummary {
            metric,
            median: None,
            ci_low: None,
            ci_high: None,
            n: 0,
            missing,
        });
    }
    let ci = bootstrap_statistic(&present, Statistic::Median, settings.n_resamples, settings.conf, seed)?;
    Ok(MetricSummary {
        metric,
        median: Some(ci.estimate),
        ci_low: Some(ci.ci_low),
        ci_high: Some(ci.ci_high),
        n: present.len(),
        missing,
    })
}

pub fn summarize(
    records: &[MetricRecord],
    model_ids: &[String],
    threshold: f64,
    settings: &BootstrapSettings,
) -> Result<EvaluationSummary> {
    let mut models = Vec::new();
    for (i, model) in model_ids.iter().enumerate() {
        let rows: Vec<&MetricRecord> = records.iter().filter(|r| &r.model_id == model).collect();
        let mut metrics = Vec::new();
        for metric in Metric::ALL {
            let values: Vec<Option<f64>> = rows.iter().map(|r| r.get(metric)).collect();
            let seed = stream_seed(
                settings.seed ^ 0x0e7a_1000,
                (i * Metric::ALL.len() + metric as usize) as u64,
            );
            metrics.push(summarize_metric(&values, metric, settings, seed)?);
        }
        models.push(ModelSummary {
            model_id: model.clone(),
            n_images: rows.len(),
            metrics,
        });
    }
    Ok(EvaluationSummary {
        threshold,
        bootstrap: *settings,
        statistic: "median".into(),
        models,
    })
}

pub fn cmd_evaluate(manifest: &StudyManifest) -> Result<EvaluateOutput> {
    manifest.check_paths()?;
    let model_ids = manifest.model_ids()?;
    let dataset = Dataset::load(manifest, &model_ids)?;
    tracing::info!(
        models = model_ids.len(),
        images = dataset.labels.len(),
        "dataset validated"
    );
    let records = dataset.evaluate();
    let summary = summarize(&records, &model_ids, manifest.threshold, &manifest.bootstrap)?;

    std::fs::create_dir_all(&manifest.out).with_context(|| format!("creating {}", manifest.out.display()))?;
    let metrics_csv = manifest.out.join("metrics.csv");
    let file = File::create(&metrics_csv).with_context(|| format!("creating {}", metrics_csv.display()))?;
    write_records_csv(BufWriter::new(file), &records)?;
    let summary_json = manifest.out.join("summary.json");
    write_json(&summary_json, &summary)?;
    Ok(EvaluateOutput {
        records,
        summary,
        metrics_csv,
        summary_json,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
