//! The pair table: `pairs.csv` in the pairs directory with columns
//! `pair_id,candidate,alternative,candidate_image,alternative_image`.
//! Image paths are relative to the directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

pub const PAIRS_FILE: &str = "pairs.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub pair_id: String,
    pub candidate: String,
    pub alternative: String,
    pub candidate_image: PathBuf,
    pub alternative_image: PathBuf,
}

impl PairSpec {
    pub fn image_for(&self, model: &str) -> Option<&Path> {
        if model == self.candidate {
            Some(&self.candidate_image)
        } else if model == self.alternative {
            Some(&self.alternative_image)
        } else {
            None
        }
    }

    pub fn contains(&self, model: &str) -> bool {
        model == self.candidate || model == self.alternative
    }
}

/// Ids end up in URL paths, so keep them to a safe alphabet.
fn url_safe(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

pub fn load_pairs(dir: &Path) -> Result<Vec<PairSpec>> {
    let path = dir.join(PAIRS_FILE);
    let mut reader = csv::Reader::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    for (line, row) in reader.deserialize::<PairSpec>().enumerate() {
        let mut pair = row.with_context(|| format!("{}: row {}", path.display(), line + 1))?;
        for id in [&pair.pair_id, &pair.candidate, &pair.alternative] {
            if !url_safe(id) {
                problems.push(format!("pair row {}: id `{id}` must use only [A-Za-z0-9._-]", line + 1));
            }
        }
        if pair.candidate == pair.alternative {
            problems.push(format!(
                "pair `{}` compares `{}` with itself",
                pair.pair_id, pair.candidate
            ));
        }
        if !seen.insert(pair.pair_id.clone()) {
            problems.push(format!("duplicate pair id `{}`", pair.pair_id));
        }
        pair.candidate_image = dir.join(&pair.candidate_image);
        pair.alternative_image = dir.join(&pair.alternative_image);
        for img in [&pair.candidate_image, &pair.alternative_image] {
            if !img.is_file() {
                problems.push(format!("pair `{}`: image {} not found", pair.pair_id, img.display()));
            }
        }
        pairs.push(pair);
    }
    if !problems.is_empty() {
        bail!("invalid pair table {}:\n  {}", path.display(), problems.join("\n  "));
    }
    ensure!(!pairs.is_empty(), "pair table {} is empty", path.display());
    Ok(pairs)
}
