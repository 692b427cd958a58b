//! Ablation study: model flag matrix, technique pairing, paired metric
//! differences and per-technique bootstrap results.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_ci, stream_seed, DEFAULT_CONF, DEFAULT_RESAMPLES, DEFAULT_TRIM};
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Pseudo,
    Depth,
    Seg,
    Spade,
    DadaS,
    DadaM,
}

impl Technique {
    pub const ALL: [Technique; 6] = [
        Technique::Pseudo,
        Technique::Depth,
        Technique::Seg,
        Technique::Spade,
        Technique::DadaS,
        Technique::DadaM,
    ];

    /// Column name in study config tables.
    pub fn name(self) -> &'static str {
        match self {
            Technique::Pseudo => "pseudo",
            Technique::Depth => "depth",
            Technique::Seg => "seg",
            Technique::Spade => "spade",
            Technique::DadaS => "dada_s",
            Technique::DadaM => "dada_m",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Technique::Pseudo => "Pseudo labels",
            Technique::Depth => "Depth",
            Technique::Seg => "Segmentation",
            Technique::Spade => "SPADE",
            Technique::DadaS => "DADA (S)",
            Technique::DadaM => "DADA (M)",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Technique::ALL
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown technique `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub flags: BTreeSet<Technique>,
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>, flags: impl IntoIterator<Item = Technique>) -> Self {
        Self {
            model_id: model_id.into(),
            flags: flags.into_iter().collect(),
        }
    }

    pub fn has(&self, t: Technique) -> bool {
        self.flags.contains(&t)
    }

    fn bits(&self) -> u8 {
        self.flags.iter().fold(0, |acc, t| acc | t.bit())
    }
}

/// The 18 mask-model configurations of the ablation, ids "1" to "18". Models
/// 10 to 18 repeat 1 to 9 without pseudo labels.
pub fn standard_configs() -> Vec<ModelConfig> {
    use Technique::*;
    let base: [&[Technique]; 9] = [
        &[],
        &[Depth],
        &[Seg],
        &[Depth, Seg],
        &[Depth, Seg, Spade],
        &[Depth, Seg, DadaS],
        &[Depth, Seg, Spade, DadaS],
        &[Depth, Seg, DadaM],
        &[Depth, Seg, DadaS, DadaM],
    ];
    let with_pseudo = base
        .iter()
        .enumerate()
        .map(|(i, f)| ModelConfig::new((i + 1).to_string(), f.iter().copied().chain([Pseudo])));
    let without = base
        .iter()
        .enumerate()
        .map(|(i, f)| ModelConfig::new((i + 10).to_string(), f.iter().copied()));
    with_pseudo.chain(without).collect()
}

fn ensure_unique_ids(configs: &[ModelConfig]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for c in configs {
        if !seen.insert(c.model_id.as_str()) {
            return Err(Error::Schema(format!("duplicate model id `{}`", c.model_id)));
        }
    }
    Ok(())
}

/// `(with, without)` model ids whose flag sets differ exactly by `technique`,
/// in config order of the model using it.
pub fn technique_pairs(configs: &[ModelConfig], technique: Technique) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for with in configs.iter().filter(|c| c.has(technique)) {
        let target = with.bits() & !technique.bit();
        for without in configs.iter().filter(|c| c.bits() == target) {
            pairs.push((with.model_id.clone(), without.model_id.clone()));
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifferences {
    pub diffs: Vec<f64>,
    /// Distinct images contributing at least one difference.
    pub n_images: usize,
}

/// `with − without` for every pair and image where both values exist.
/// Output order is pair order, then image id.
pub fn paired_differences(
    records: &[MetricRecord],
    pairs: &[(String, String)],
    metric: Metric,
) -> Result<PairedDifferences> {
    let mut by_model: HashMap<&str, BTreeMap<&str, Option<f64>>> = HashMap::new();
    for r in records {
        by_model
            .entry(r.model_id.as_str())
            .or_default()
            .insert(r.image_id.as_str(), r.get(metric));
    }
    let mut diffs = Vec::new();
    let mut images = BTreeSet::new();
    for (with, without) in pairs {
        let (Some(a), Some(b)) = (by_model.get(with.as_str()), by_model.get(without.as_str())) else {
            continue;
        };
        for (image, va) in a {
            if let (Some(va), Some(Some(vb))) = (va, b.get(image)) {
                diffs.push(va - vb);
                images.insert(*image);
            }
        }
    }
    if diffs.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no image has {metric} values for both models of any pair"
        )));
    }
    Ok(PairedDifferences {
        diffs,
        n_images: images.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub n_resamples: usize,
    pub trim: f64,
    pub conf: f64,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            n_resamples: DEFAULT_RESAMPLES,
            trim: DEFAULT_TRIM,
            conf: DEFAULT_CONF,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub technique: Technique,
    pub metric: Metric,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub n_pairs: usize,
    pub n_images: usize,
}

impl BootstrapResult {
    /// Whether the whole interval lies on the improving side of zero.
    pub fn improves(&self) -> bool {
        if self.metric.higher_is_better() {
            self.ci_low > 0.0
        } else {
            self.ci_high < 0.0
        }
    }

    /// Whether the whole interval lies on the worsening side of zero.
    pub fn worsens(&self) -> bool {
        if self.metric.higher_is_better() {
            self.ci_high < 0.0
        } else {
            self.ci_low > 0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOutcome {
    pub results: Vec<BootstrapResult>,
    /// Techniques with no with/without pair among the configs.
    pub omitted: Vec<Technique>,
}

fn cell_seed(seed: u64, technique: Technique, metric: Metric) -> u64 {
    let cell = technique as u64 * Metric::ALL.len() as u64 + metric as u64;
    stream_seed(seed ^ 0x5eed_ab1a_7e00_0000, cell)
}

/// One result per (technique, metric) in technique-major order. Techniques
/// without any pair are reported in `omitted` and skipped.
pub fn ablation_study(
    records: &[MetricRecord],
    configs: &[ModelConfig],
    settings: &BootstrapSettings,
) -> Result<AblationOutcome> {
    ensure_unique_ids(configs)?;
    let mut results = Vec::new();
    let mut omitted = Vec::new();
    for technique in Technique::ALL {
        let pairs = technique_pairs(configs, technique);
        if pairs.is_empty() {
            tracing::warn!(%technique, "no model pair isolates technique; omitted");
            omitted.push(technique);
            continue;
        }
        for metric in Metric::ALL {
            let paired = paired_differences(records, &pairs, metric)?;
            let ci = bootstrap_ci(
                &paired.diffs,
                settings.n_resamples,
                settings.trim,
                settings.conf,
                cell_seed(settings.seed, technique, metric),
            )?;
            results.push(BootstrapResult {
                technique,
                metric,
                estimate: ci.estimate,
                ci_low: ci.ci_low,
                ci_high: ci.ci_high,
                p: ci.p,
                n_pairs: pairs.len(),
                n_images: paired.n_images,
            });
        }
    }
    Ok(AblationOutcome { results, omitted })
}

fn parse_flag(raw: &str, model: &str, column: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "x" | "y" => Ok(true),
        "0" | "false" | "no" | "" | "n" => Ok(false),
        other => Err(Error::Schema(format!(
            "model `{model}`: `{other}` is not a boolean in column `{column}`"
        ))),
    }
}

/// Reads a CSV with a `model_id` column and one boolean column per
/// technique. Column names are case-insensitive; extra columns are ignored.
pub fn read_configs_csv<R: Read>(input: R) -> Result<Vec<ModelConfig>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("csv: {e}")))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let id_col = column("model_id")?;
    let flag_cols = Technique::ALL
        .iter()
        .map(|t| column(t.name()).map(|i| (*t, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut configs = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Schema(format!("csv: {e}")))?;
        let id = row.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Schema("empty model_id".into()));
        }
        let mut flags = BTreeSet::new();
        for (t, i) in &flag_cols {
            if parse_flag(row.get(*i).unwrap_or(""), &id, t.name())? {
                flags.insert(*t);
            }
        }
        configs.push(ModelConfig { model_id: id, flags });
    }
    ensure_unique_ids(&configs)?;
    Ok(configs)
}

/// Reads a JSON array of objects, each with `model_id` and one boolean per
/// technique, e.g. `{"model_id": "1", "pseudo": true, "depth": false, ...}`.
pub fn read_configs_json<R: Read>(input: R) -> Result<Vec<ModelConfig>> {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> =
        serde_json::from_reader(input).map_err(|e| Error::Schema(format!("json: {e}")))?;
    let mut configs = Vec::new();
    for (n, row) in rows.iter().enumerate() {
        let id = match row.get("model_id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(v)) => v.to_string(),
            _ => return Err(Error::Schema(format!("entry {n}: missing `model_id`"))),
        };
        let mut flags = BTreeSet::new();
        for t in Technique::ALL {
            match row.get(t.name()) {
                Some(serde_json::Value::Bool(true)) => {
                    flags.insert(t);
                }
                Some(serde_json::Value::Bool(false)) => {}
                Some(other) => {
                    return Err(Error::Schema(format!(
                        "model `{id}`: `{other}` is not a boolean in `{t}`"
                    )))
                }
                None => return Err(Error::Schema(format!("model `{id}`: missing flag `{t}`"))),
            }
        }
        configs.push(ModelConfig { model_id: id, flags });
    }
    ensure_unique_ids(&configs)?;
    Ok(configs)
}

pub fn write_configs_csv<W: Write>(out: W, configs: &[ModelConfig]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Schema(format!("csv: {e}"));
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["model_id"];
    header.extend(Technique::ALL.iter().map(|t| t.name()));
    writer.write_record(&header).map_err(csv_err)?;
    for c in configs {
        let mut row = vec![c.model_id.clone()];
        row.extend(Technique::ALL.iter().map(|t| u8::from(c.has(*t)).to_string()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::Schema(format!("csv: {e}")))?;
    Ok(())
}

/// Results table with columns `technique,metric,estimate,ci_low,ci_high,p`.
pub fn write_results_csv<W: Write>(out: W, results: &[BootstrapResult]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(["technique", "metric", "estimate", "ci_low", "ci_high", "p"])
        .map_err(csv_err)?;
    for r in results {
        writer
            .write_record([
                r.technique.name().to_string(),
                r.metric.name().to_string(),
                r.estimate.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.p.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer
        .flush()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}
