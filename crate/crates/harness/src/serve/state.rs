//! Pair scheduling and vote bookkeeping. One mutex guards the scheduler and
//! the vote log together, so appends are ordered and a pair never collects
//! more than its quota.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use anyhow::Result;
use chrono::Utc;
use floodbench_core::bootstrap::stream_seed;
use floodbench_core::{preference_ci, PreferenceVote};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::pairs::PairSpec;
use super::store::{Choice, VoteLog, VoteRecord};

pub const DEFAULT_QUOTA: usize = 3;
pub const DEFAULT_LEASE: Duration = Duration::from_secs(600);
pub const DEFAULT_PROMPT: &str = "Which image looks more like an actual flood?";

/// Settings of the preference intervals reported by `/api/results`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultSettings {
    pub conf: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for ResultSettings {
    fn default() -> Self {
        Self {
            conf: floodbench_core::bootstrap::DEFAULT_CONF,
            n_resamples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Side {
    pub model: String,
    pub image_url: String,
}

/// What `/api/pairs/next` hands a rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub pair_id: String,
    pub left: Side,
    pub right: Side,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRequest {
    pub pair_id: String,
    pub rater_id: String,
    pub left_model: String,
    pub right_model: String,
    pub choice: Choice,
    #[serde(default)]
    pub nonce: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VoteOutcome {
    Recorded(VoteRecord),
    /// The nonce was seen before; nothing new was stored.
    Duplicate(VoteRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VoteRejection {
    /// Malformed or inconsistent with the pair table (400).
    Invalid(String),
    /// Well-formed but not acceptable now (409).
    Conflict(String),
}

struct Lease {
    rater: String,
    left_is_candidate: bool,
    expires: Instant,
}

#[derive(Default)]
struct PairState {
    votes: usize,
    raters: HashSet<String>,
    leases: Vec<Lease>,
}

pub struct Scheduler {
    pairs: Vec<PairSpec>,
    index: HashMap<String, usize>,
    state: Vec<PairState>,
    votes: Vec<VoteRecord>,
    nonces: HashMap<String, usize>,
    quota: usize,
    lease_ttl: Duration,
    prompt: String,
    rng: Xoshiro256PlusPlus,
    log: VoteLog,
}

pub struct SchedulerConfig {
    pub quota: usize,
    pub lease_ttl: Duration,
    pub prompt: String,
    pub seed: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            quota: DEFAULT_QUOTA,
            lease_ttl: DEFAULT_LEASE,
            prompt: DEFAULT_PROMPT.to_string(),
            seed: 0,
        }
    }
}

pub fn image_url(pair_id: &str, model: &str) -> String {
    format!("/api/images/{pair_id}/{model}")
}

impl Scheduler {
    /// Builds the scheduler from the pair table and the votes replayed from
    /// the log. Replayed votes for unknown pairs are kept in the log but not
    /// counted.
    pub fn new(pairs: Vec<PairSpec>, log: VoteLog, replayed: Vec<VoteRecord>, config: SchedulerConfig) -> Self {
        let index = pairs.iter().enumerate().map(|(i, p)| (p.pair_id.clone(), i)).collect();
        let state = pairs.iter().map(|_| PairState::default()).collect();
        let mut s = Self {
            pairs,
            index,
            state,
            votes: Vec::new(),
            nonces: HashMap::new(),
            quota: config.quota,
            lease_ttl: config.lease_ttl,
            prompt: config.prompt,
            rng: Xoshiro256PlusPlus::seed_from_u64(config.seed),
            log,
        };
        let mut unknown = 0usize;
        for v in replayed {
            if s.index.contains_key(&v.pair_id) {
                s.admit(v);
            } else {
                unknown += 1;
            }
        }
        if unknown > 0 {
            tracing::warn!(
                unknown,
                "vote log holds votes for pairs missing from the pair table; ignored"
            );
        }
        s
    }

    fn admit(&mut self, v: VoteRecord) {
        let st = &mut self.state[self.index[&v.pair_id]];
        st.votes += 1;
        st.raters.insert(v.rater_id.clone());
        if let Some(n) = &v.nonce {
            self.nonces.insert(n.clone(), self.votes.len());
        }
        self.votes.push(v);
    }

    pub fn pairs(&self) -> &[PairSpec] {
        &self.pairs
    }

    pub fn pair(&self, id: &str) -> Option<&PairSpec> {
        self.index.get(id).map(|&i| &self.pairs[i])
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.votes
    }

    pub fn quota(&self) -> usize {
        self.quota
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn completed_pairs(&self) -> usize {
        self.state.iter().filter(|s| s.votes >= self.quota).count()
    }

    fn expire(&mut self, now: Instant) {
        for st in &mut self.state {
            st.leases.retain(|l| l.expires > now);
        }
    }

    fn assignment(&self, i: usize, left_is_candidate: bool) -> Assignment {
        let p = &self.pairs[i];
        let (l, r) = if left_is_candidate {
            (&p.candidate, &p.alternative)
        } else {
            (&p.alternative, &p.candidate)
        };
        Assignment {
            pair_id: p.pair_id.clone(),
            left: Side {
                model: l.clone(),
                image_url: image_url(&p.pair_id, l),
            },
            right: Side {
                model: r.clone(),
                image_url: image_url(&p.pair_id, r),
            },
            prompt: self.prompt.clone(),
        }
    }

    /// Next pair for `rater`, or `None` when every pair the rater may still
    /// judge is at quota or reserved by others.
    ///
    /// A rater holding a live reservation gets the same pair back with the
    /// same presentation order. Otherwise the least-served eligible pair is
    /// reserved for the lease period.
    pub fn next(&mut self, rater: &str, now: Instant) -> Option<Assignment> {
        self.expire(now);
        for (i, st) in self.state.iter().enumerate() {
            if let Some(l) = st.leases.iter().find(|l| l.rater == rater) {
                return Some(self.assignment(i, l.left_is_candidate));
            }
        }
        let quota = self.quota;
        let (i, _) = self
            .state
            .iter()
            .enumerate()
            .filter(|(_, st)| st.votes + st.leases.len() < quota && !st.raters.contains(rater))
            .min_by_key(|(i, st)| (st.votes + st.leases.len(), *i))?;
        let left_is_candidate = self.rng.random_bool(0.5);
        self.state[i].leases.push(Lease {
            rater: rater.to_string(),
            left_is_candidate,
            expires: now + self.lease_ttl,
        });
        Some(self.assignment(i, left_is_candidate))
    }

    /// Validates, persists and counts one vote.
    pub fn vote(&mut self, req: VoteRequest, now: Instant) -> Result<Result<VoteOutcome, VoteRejection>> {
        use VoteRejection::{Conflict, Invalid};
        if req.rater_id.trim().is_empty() {
            return Ok(Err(Invalid("rater_id must not be empty".into())));
        }
        if req.nonce.as_deref().is_some_and(|n| n.is_empty()) {
            return Ok(Err(Invalid("nonce must not be empty when given".into())));
        }
        let Some(&i) = self.index.get(&req.pair_id) else {
            return Ok(Err(Invalid(format!("unknown pair `{}`", req.pair_id))));
        };
        let pair = &self.pairs[i];
        for m in [&req.left_model, &req.right_model] {
            if !pair.contains(m) {
                return Ok(Err(Invalid(format!(
                    "model `{m}` is not in pair `{}` ({} vs {})",
                    pair.pair_id, pair.candidate, pair.alternative
                ))));
            }
        }
        if req.left_model == req.right_model {
            return Ok(Err(Invalid("left_model and right_model must differ".into())));
        }
        if let Some(&k) = req.nonce.as_ref().and_then(|n| self.nonces.get(n)) {
            let prior = &self.votes[k];
            if prior.pair_id != req.pair_id || prior.rater_id != req.rater_id {
                return Ok(Err(Conflict("nonce already used for a different vote".into())));
            }
            return Ok(Ok(VoteOutcome::Duplicate(prior.clone())));
        }
        let (candidate, alternative) = (pair.candidate.clone(), pair.alternative.clone());
        self.expire(now);
        let quota = self.quota;
        let st = &mut self.state[i];
        if st.raters.contains(&req.rater_id) {
            return Ok(Err(Conflict(format!(
                "rater `{}` already judged pair `{}`",
                req.rater_id, req.pair_id
            ))));
        }
        let own = st.leases.iter().position(|l| l.rater == req.rater_id);
        let others = st.leases.len() - usize::from(own.is_some());
        if st.votes + others >= quota {
            return Ok(Err(Conflict(format!(
                "pair `{}` already has its {quota} votes",
                req.pair_id
            ))));
        }
        let record = VoteRecord {
            pair_id: req.pair_id,
            candidate,
            alternative,
            left_model: req.left_model,
            right_model: req.right_model,
            choice: req.choice,
            rater_id: req.rater_id,
            timestamp: Utc::now(),
            nonce: req.nonce,
        };
        // persist before counting so an acknowledged vote is always on disk
        self.log.append(&record)?;
        if let Some(k) = own {
            self.state[i].leases.swap_remove(k);
        }
        self.admit(record.clone());
        Ok(Ok(VoteOutcome::Recorded(record)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub candidate: String,
    pub alternative: String,
    /// Fraction of votes choosing the candidate.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_votes: usize,
    pub n_pairs: usize,
    pub votes_for_candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsMetadata {
    /// Unit resampled by the bootstrap.
    pub resampling: String,
    pub rater_policy: String,
    pub quota: usize,
    pub prompt: String,
    pub conf: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub total_votes: usize,
    pub total_pairs: usize,
    pub completed_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsPayload {
    pub metadata: ResultsMetadata,
    pub comparisons: Vec<ComparisonResult>,
}

/// Bootstrap seed of one comparison; depends only on the model names.
pub fn comparison_seed(seed: u64, candidate: &str, alternative: &str) -> u64 {
    let h = candidate
        .bytes()
        .chain([0])
        .chain(alternative.bytes())
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        });
    stream_seed(seed, h)
}

/// Preference rate and interval per (candidate, alternative), computed from
/// the stored records alone, so an offline replay of the log reproduces it.
pub fn comparison_results(votes: &[VoteRecord], settings: &ResultSettings) -> Result<Vec<ComparisonResult>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&VoteRecord>> = BTreeMap::new();
    for v in votes {
        groups.entry((&v.candidate, &v.alternative)).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|((candidate, alternative), vs)| {
            let prefs: Vec<PreferenceVote> = vs
                .iter()
                .map(|v| PreferenceVote {
                    pair_id: v.pair_id.clone(),
                    chose_candidate: v.chose_candidate(),
                })
                .collect();
            let ci = preference_ci(
                &prefs,
                settings.conf,
                settings.n_resamples,
                comparison_seed(settings.seed, candidate, alternative),
            )?;
            let n_pairs = vs.iter().map(|v| v.pair_id.as_str()).collect::<HashSet<_>>().len();
            Ok(ComparisonResult {
                candidate: candidate.to_string(),
                alternative: alternative.to_string(),
                rate: ci.rate,
                ci_low: ci.ci_low,
                ci_high: ci.ci_high,
                n_votes: ci.n_votes,
                n_pairs,
                votes_for_candidate: prefs.iter().filter(|p| p.chose_candidate).count(),
            })
        })
        .collect()
}

impl Scheduler {
    pub fn metadata(&self, settings: &ResultSettings) -> ResultsMetadata {
        ResultsMetadata {
            resampling: "votes".into(),
            rater_policy: "each rater judges a pair at most once".into(),
            quota: self.quota,
            prompt: self.prompt.clone(),
            conf: settings.conf,
            n_resamples: settings.n_resamples,
            seed: settings.seed,
            total_votes: self.votes.len(),
            total_pairs: self.pairs.len(),
            completed_pairs: self.completed_pairs(),
        }
    }
}

pub fn results_payload(
    metadata: ResultsMetadata,
    votes: &[VoteRecord],
    settings: &ResultSettings,
) -> Result<ResultsPayload> {
    Ok(ResultsPayload {
        metadata,
        comparisons: comparison_results(votes, settings)?,
    })
}
