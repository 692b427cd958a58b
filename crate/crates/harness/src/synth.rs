//! Synthetic study generator: ternary labels, predictions for the 18-model
//! flag matrix with planted per-technique error effects, a ground-segmentation
//! baseline, the flag table and a manifest tying them together.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use floodbench_core::bootstrap::stream_seed;
use floodbench_core::io::{save_binary_mask, save_label_map};
use floodbench_core::study::write_configs_csv;
use floodbench_core::{standard_configs, BinaryMask, LabelClass, ModelConfig, Technique, TernaryLabelMap};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

/// Planted change in error rate when a technique is added. Five techniques
/// lower the error and DADA (M) raises it.
pub const PLANTED_ERROR_EFFECTS: [(Technique, f64); 6] = [
    (Technique::Pseudo, -0.012),
    (Technique::Depth, -0.006),
    (Technique::Seg, -0.008),
    (Technique::Spade, -0.004),
    (Technique::DadaS, -0.005),
    (Technique::DadaM, 0.004),
];

pub const BASELINE_ID: &str = "G";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub images: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub effects: Vec<(Technique, f64)>,
    /// Half-width of the uniform per-(model, image) error jitter.
    pub jitter: f64,
    /// Resamples written into the manifest's bootstrap table.
    pub n_resamples: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            images: 180,
            height: 64,
            width: 64,
            seed: 0,
            effects: PLANTED_ERROR_EFFECTS.to_vec(),
            jitter: 0.004,
            n_resamples: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub configs: Vec<ModelConfig>,
}

fn image_id(i: usize) -> String {
    format!("img{i:04}")
}

/// A wavy waterline: rows below it must be flooded, rows above cannot be,
/// with an uncertain band in between.
fn synth_label(rng: &mut Xoshiro256PlusPlus, h: usize, w: usize) -> TernaryLabelMap {
    let level = rng.random_range(0.3..0.7) * h as f64;
    let amp = rng.random_range(0.0..0.1) * h as f64;
    let freq = rng.random_range(0.5..3.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let band = rng.random_range(1.0..4.0);
    TernaryLabelMap::from_fn(h, w, |y, x| {
        let line = level + amp * (freq * std::f64::consts::TAU * x as f64 / w as f64 + phase).sin();
        let dy = y as f64 - line;
        if dy > band {
            LabelClass::Must
        } else if dy < -band {
            LabelClass::Cannot
        } else {
            LabelClass::May
        }
    })
    .expect("nonempty label")
}

/// The label's ideal mask with exactly `round(rate * H * W)` decided pixels
/// flipped, so the error rate equals the rounded target.
fn synth_prediction(rng: &mut Xoshiro256PlusPlus, label: &TernaryLabelMap, rate: f64) -> BinaryMask {
    let (h, w) = label.shape();
    let mut values: Vec<bool> = label
        .values()
        .iter()
        .map(|&c| match c {
            LabelClass::Must => true,
            LabelClass::Cannot => false,
            LabelClass::May => rng.random_bool(0.5),
        })
        .collect();
    let decided: Vec<usize> = (0..h * w).filter(|&i| label.values()[i] != LabelClass::May).collect();
    let k = ((rate.clamp(0.0, 1.0) * (h * w) as f64).round() as usize).min(decided.len());
    for j in sample(rng, decided.len(), k) {
        let i = decided[j];
        values[i] = !values[i];
    }
    BinaryMask::new(h, w, values).expect("shape preserved")
}

fn model_error(config: &ModelConfig, effects: &[(Technique, f64)]) -> f64 {
    effects.iter().filter(|(t, _)| config.has(*t)).map(|(_, e)| e).sum()
}

/// Writes the dataset under `root` and returns the manifest path.
pub fn generate(root: &Path, opts: &SynthOptions) -> Result<SynthDataset> {
    ensure!(opts.images > 0, "need at least one image");
    ensure!(opts.height >= 3 && opts.width >= 3, "images must be at least 3x3");
    let data = root.join("data");
    let labels_dir = data.join("labels");
    std::fs::create_dir_all(&labels_dir).with_context(|| format!("creating {}", labels_dir.display()))?;
    let configs = standard_configs();
    let (h, w) = (opts.height, opts.width);

    let images: Vec<(TernaryLabelMap, f64)> = (0..opts.images)
        .map(|i| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(stream_seed(opts.seed, i as u64));
            let label = synth_label(&mut rng, h, w);
            // per-image difficulty shared by every model
            let base = rng.random_range(0.06..0.12);
            (label, base)
        })
        .collect();
    images
        .par_iter()
        .enumerate()
        .try_for_each(|(i, (label, _))| save_label_map(&labels_dir.join(format!("{}.png", image_id(i))), label))?;

    let mut models: Vec<(String, f64)> = configs
        .iter()
        .map(|c| (c.model_id.clone(), model_error(c, &opts.effects)))
        .collect();
    models.push((BASELINE_ID.to_string(), 0.05));
    for (m, (model, offset)) in models.iter().enumerate() {
        let dir = data.join(model);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        images.par_iter().enumerate().try_for_each(|(i, (label, base))| {
            let stream = ((m as u64) << 32) | i as u64;
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(stream_seed(opts.seed ^ 0x9e37_79b9, stream));
            let rate = base + offset + rng.random_range(-opts.jitter..=opts.jitter);
            let pred = synth_prediction(&mut rng, label, rate);
            save_binary_mask(&dir.join(format!("{}.png", image_id(i))), &pred)
        })?;
    }

    let flags = root.join("models.csv");
    let file = std::fs::File::create(&flags).with_context(|| format!("creating {}", flags.display()))?;
    write_configs_csv(file, &configs)?;
    let manifest = root.join("study.toml");
    let text = format!(
        "dataset = \"data\"\nflags = \"models.csv\"\nbaselines = [\"{BASELINE_ID}\"]\nout = \"out\"\n\n\
         [bootstrap]\nn_resamples = {}\nseed = {}\n",
        opts.n_resamples, opts.seed
    );
    std::fs::write(&manifest, text).with_context(|| format!("writing {}", manifest.display()))?;
    Ok(SynthDataset {
        root: root.to_path_buf(),
        manifest,
        configs,
    })
}
