//! `floodbench ablate`: paired technique comparisons over the model flag
//! matrix, written as a results table and a per-technique JSON report.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use floodbench_core::study::{technique_pairs, write_results_csv, AblationOutcome};
use floodbench_core::{ablation_study, BootstrapResult, BootstrapSettings, Metric, Technique};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::evaluate::write_json;
use crate::manifest::StudyManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEffect {
    pub metric: Metric,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub n_pairs: usize,
    pub n_images: usize,
    pub improves: bool,
    pub worsens: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueEffects {
    pub technique: Technique,
    pub label: String,
    pub pairs: Vec<(String, String)>,
    pub metrics: Vec<MetricEffect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub bootstrap: BootstrapSettings,
    pub statistic: String,
    pub n_models: usize,
    pub n_images: usize,
    pub techniques: Vec<TechniqueEffects>,
    pub omitted: Vec<Technique>,
}

pub struct AblateOutput {
    pub outcome: AblationOutcome,
    pub report: AblationReport,
    pub ablation_csv: PathBuf,
    pub ablation_json: PathBuf,
}

fn effect(r: &BootstrapResult) -> MetricEffect {
    MetricEffect {
        metric: r.metric,
        estimate: r.estimate,
        ci_low: r.ci_low,
        ci_high: r.ci_high,
        p: r.p,
        n_pairs: r.n_pairs,
        n_images: r.n_images,
        improves: r.improves(),
        worsens: r.worsens(),
    }
}

pub fn cmd_ablate(manifest: &StudyManifest) -> Result<AblateOutput> {
    manifest.check_paths()?;
    let Some(configs) = manifest.configs()? else {
        bail!("ablation needs a `flags` study config table in the manifest");
    };
    if configs.is_empty() {
        bail!("study config table lists no models");
    }
    let model_ids: Vec<String> = configs.iter().map(|c| c.model_id.clone()).collect();
    let dataset = Dataset::load(manifest, &model_ids)?;
    let records = dataset.evaluate();
    let outcome = ablation_study(&records, &configs, &manifest.bootstrap)?;
    for t in &outcome.omitted {
        tracing::warn!(technique = %t, "technique omitted: no pair of models differs by it alone");
    }

    let techniques = Technique::ALL
        .into_iter()
        .filter(|t| !outcome.omitted.contains(t))
        .map(|t| TechniqueEffects {
            technique: t,
            label: t.label().to_string(),
            pairs: technique_pairs(&configs, t),
            metrics: outcome
                .results
                .iter()
                .filter(|r| r.technique == t)
                .map(effect)
                .collect(),
        })
        .collect();
    let report = AblationReport {
        bootstrap: manifest.bootstrap,
        statistic: format!("trimmed mean ({} per tail)", manifest.bootstrap.trim),
        n_models: configs.len(),
        n_images: dataset.labels.len(),
        techniques,
        omitted: outcome.omitted.clone(),
    };

    std::fs::create_dir_all(&manifest.out).with_context(|| format!("creating {}", manifest.out.display()))?;
    let ablation_csv = manifest.out.join("ablation.csv");
    let file = File::create(&ablation_csv).with_context(|| format!("creating {}", ablation_csv.display()))?;
    write_results_csv(BufWriter::new(file), &outcome.results)?;
    let ablation_json = manifest.out.join("ablation.json");
    write_json(&ablation_json, &report)?;
    Ok(AblateOutput {
        outcome,
        report,
        ablation_csv,
        ablation_json,
    })
}
