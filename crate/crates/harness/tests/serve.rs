mod common;

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Duration;

use axum::http::StatusCode;
use axum::Router;
use common::{get, pairs_dir, post, post_raw, vote_for};
use floodbench::serve::store::quarantine_path;
use floodbench::serve::{build_app, comparison_seed, read_votes, ResultSettings, ServeConfig, VoteLog, VoteRecord};
use floodbench_core::{preference_ci, PreferenceVote};
use proptest::prelude::*;
use serde_json::{json, Value};
use tempfile::TempDir;

fn config(root: &Path, n_pairs: usize) -> ServeConfig {
    ServeConfig {
        results: ResultSettings {
            conf: 0.99,
            n_resamples: 5000,
            seed: 9,
        },
        ..ServeConfig::new(pairs_dir(root, n_pairs, "A", "B"), root.join("votes.jsonl"))
    }
}

async fn next(app: &Router, rater: &str) -> Option<Value> {
    let r = get(app, &format!("/api/pairs/next?rater={rater}")).await;
    match r.status {
        StatusCode::OK => Some(r.json()),
        StatusCode::NO_CONTENT => None,
        s => panic!("unexpected {s}: {}", String::from_utf8_lossy(&r.body)),
    }
}

async fn vote(app: &Router, rater: &str, pick: &str) -> Option<Value> {
    let a = next(app, rater).await?;
    let r = post(app, "/api/votes", vote_for(&a, rater, pick)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));
    Some(a)
}

fn log_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[tokio::test]
async fn two_pairs_take_three_votes_each_then_exhaust() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2);
    let app = build_app(&cfg).unwrap();
    for rater in ["r1", "r2", "r3"] {
        for _ in 0..2 {
            vote(&app, rater, "A").await.unwrap();
        }
        // each rater has judged both pairs
        assert!(next(&app, rater).await.is_none());
    }
    assert!(next(&app, "fresh").await.is_none());
    assert_eq!(log_lines(&cfg.vote_log), 6);
    let health = get(&app, "/healthz").await.json();
    assert_eq!((health["pairs"].as_u64(), health["votes"].as_u64()), (Some(2), Some(6)));
    let res = get(&app, "/api/results").await.json();
    assert_eq!(res["metadata"]["completed_pairs"], 2);
    assert_eq!(res["metadata"]["resampling"], "votes");
    assert_eq!(res["comparisons"][0]["rate"], 1.0);
    assert_eq!(res["comparisons"][0]["ci_low"], 1.0);
}

#[tokio::test]
async fn malformed_votes_get_400_with_a_reason() {
    let dir = TempDir::new().unwrap();
    let app = build_app(&config(dir.path(), 1)).unwrap();
    let a = next(&app, "r").await.unwrap();
    let good = vote_for(&a, "r", "A");
    let variants = [
        ("left_model", json!("C")),
        ("right_model", json!("Z")),
        ("pair_id", json!("p99")),
        ("choice", json!("middle")),
        ("rater_id", json!("")),
        ("right_model", good["left_model"].clone()),
    ];
    for (field, value) in variants {
        let mut body = good.clone();
        body[field] = value;
        let r = post(&app, "/api/votes", body).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{field}");
        assert!(r.json()["error"].as_str().unwrap().len() > 5);
    }
    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("choice");
    assert_eq!(post(&app, "/api/votes", missing).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(
        post_raw(&app, "/api/votes", "{not json").await.status,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(get(&app, "/api/pairs/next").await.status, StatusCode::BAD_REQUEST);
    let not_in_pair = {
        let mut b = good.clone();
        b["left_model"] = json!("C");
        post(&app, "/api/votes", b).await.json()
    };
    assert!(not_in_pair["error"].as_str().unwrap().contains("`C`"));
    // nothing was stored
    assert_eq!(get(&app, "/healthz").await.json()["votes"], 0);
    assert_eq!(post(&app, "/api/votes", good).await.status, StatusCode::CREATED);
}

#[tokio::test]
async fn repeat_raters_and_full_pairs_conflict() {
    let dir = TempDir::new().unwrap();
    let cfg = ServeConfig {
        quota: 2,
        ..config(dir.path(), 1)
    };
    let app = build_app(&cfg).unwrap();
    let a = vote(&app, "r1", "A").await.unwrap();
    let again = post(&app, "/api/votes", vote_for(&a, "r1", "B")).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    vote(&app, "r2", "B").await.unwrap();
    // a rater who never fetched the pair cannot push it past its quota
    let late = post(&app, "/api/votes", vote_for(&a, "r3", "A")).await;
    assert_eq!(late.status, StatusCode::CONFLICT);
    assert_eq!(read_votes(&cfg.vote_log).unwrap().len(), 2);
}

#[tokio::test]
async fn duplicate_nonce_is_stored_once() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 1);
    let app = build_app(&cfg).unwrap();
    let a = next(&app, "r").await.unwrap();
    let mut body = vote_for(&a, "r", "A");
    body["nonce"] = json!("n-1");
    let first = post(&app, "/api/votes", body.clone()).await;
    let second = post(&app, "/api/votes", body.clone()).await;
    assert_eq!((first.status, second.status), (StatusCode::CREATED, StatusCode::OK));
    assert_eq!(second.json()["status"], "duplicate");
    assert_eq!(first.json()["vote"], second.json()["vote"]);
    assert_eq!(log_lines(&cfg.vote_log), 1);
    // a reused nonce cannot smuggle in another rater's vote
    body["rater_id"] = json!("other");
    assert_eq!(post(&app, "/api/votes", body).await.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn a_rater_keeps_the_same_pair_until_voting() {
    let dir = TempDir::new().unwrap();
    let app = build_app(&config(dir.path(), 5)).unwrap();
    let first = next(&app, "r").await.unwrap();
    let again = next(&app, "r").await.unwrap();
    assert_eq!(first, again);
    assert!(first["prompt"].as_str().unwrap().contains("flood"));
    let pair = first["pair_id"].as_str().unwrap();
    for side in ["left", "right"] {
        let url = first[side]["image_url"].as_str().unwrap();
        let model = first[side]["model"].as_str().unwrap();
        assert_eq!(url, format!("/api/images/{pair}/{model}"));
    }
}

#[tokio::test]
async fn abandoned_reservations_expire() {
    let dir = TempDir::new().unwrap();
    let cfg = ServeConfig {
        quota: 1,
        lease_ttl: Duration::from_millis(50),
        ..config(dir.path(), 1)
    };
    let app = build_app(&cfg).unwrap();
    assert!(next(&app, "a").await.is_some());
    assert!(next(&app, "b").await.is_none());
    tokio::time::sleep(Duration::from_millis(80)).await;
    vote(&app, "b", "A").await.unwrap();
    assert!(next(&app, "a").await.is_none());
}

#[tokio::test]
async fn presentation_order_is_randomized_but_pairing_kept() {
    let dir = TempDir::new().unwrap();
    let cfg = ServeConfig {
        quota: 1000,
        ..config(dir.path(), 1)
    };
    let app = build_app(&cfg).unwrap();
    let mut candidate_left = 0;
    for i in 0..200 {
        let rater = format!("r{i}");
        let a = next(&app, &rater).await.unwrap();
        let left = a["left"]["model"].as_str().unwrap();
        candidate_left += usize::from(left == "A");
        // vote for whatever is on the left
        post(&app, "/api/votes", vote_for(&a, &rater, left)).await;
    }
    // Binomial(200, 1/2) stays in [70, 130] with overwhelming probability
    assert!((70..=130).contains(&candidate_left), "{candidate_left}");
    let votes = read_votes(&cfg.vote_log).unwrap();
    assert!(votes.iter().all(|v| v.candidate == "A" && v.alternative == "B"));
    let chose_a = votes.iter().filter(|v| v.chose_candidate()).count();
    assert_eq!(chose_a, candidate_left);
}

fn offline(votes: &[VoteRecord], s: &ResultSettings) -> floodbench_core::PreferenceCi {
    let prefs: Vec<PreferenceVote> = votes
        .iter()
        .map(|v| PreferenceVote {
            pair_id: v.pair_id.clone(),
            chose_candidate: v.chosen_model() == v.candidate,
        })
        .collect();
    preference_ci(&prefs, s.conf, s.n_resamples, comparison_seed(s.seed, "A", "B")).unwrap()
}

#[tokio::test]
async fn planted_seventy_thirty_preference_is_reported() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 30);
    let app = build_app(&cfg).unwrap();
    let mut k = 0usize;
    for round in 0..3 {
        let rater = format!("rater{round}");
        for _ in 0..30 {
            // 7 of every 10 votes prefer the candidate
            let pick = if k % 10 < 7 { "A" } else { "B" };
            vote(&app, &rater, pick).await.unwrap();
            k += 1;
        }
    }
    assert!(next(&app, "anyone").await.is_none());
    let res = get(&app, "/api/results").await.json();
    let c = &res["comparisons"][0];
    assert_eq!(res["comparisons"].as_array().unwrap().len(), 1);
    assert_eq!(
        (c["candidate"].as_str(), c["alternative"].as_str()),
        (Some("A"), Some("B"))
    );
    assert_eq!(c["n_votes"], 90);
    assert_eq!(c["n_pairs"], 30);
    assert_eq!(c["votes_for_candidate"], 63);
    assert!((c["rate"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    let (lo, hi) = (c["ci_low"].as_f64().unwrap(), c["ci_high"].as_f64().unwrap());
    assert!(lo < 0.7 && 0.7 < hi && lo > 0.5, "[{lo}, {hi}]");

    let replay = offline(&read_votes(&cfg.vote_log).unwrap(), &cfg.results);
    assert_eq!(
        (replay.rate, replay.ci_low, replay.ci_high),
        (c["rate"].as_f64().unwrap(), lo, hi)
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_raters_never_exceed_the_quota() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 12);
    let app = build_app(&cfg).unwrap();
    let mut tasks = Vec::new();
    for r in 0..24 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let rater = format!("r{r}");
            let mut n = 0;
            while let Some(a) = next(&app, &rater).await {
                let mut body = vote_for(&a, &rater, if n % 2 == 0 { "A" } else { "B" });
                body["nonce"] = json!(format!("{rater}-{n}"));
                // double submission, as from a double click
                let (x, y) = tokio::join!(post(&app, "/api/votes", body.clone()), post(&app, "/api/votes", body));
                let mut codes = [x.status.as_u16(), y.status.as_u16()];
                codes.sort();
                assert_eq!(codes, [200, 201]);
                n += 1;
            }
            n
        }));
    }
    let mut total = 0;
    for t in tasks {
        total += t.await.unwrap();
    }
    assert_eq!(total, 36);

    // post-hoc audit of the log
    let votes = read_votes(&cfg.vote_log).unwrap();
    assert_eq!(votes.len(), 36);
    let mut per_pair: HashMap<&str, usize> = HashMap::new();
    let mut seen = HashSet::new();
    for v in &votes {
        *per_pair.entry(&v.pair_id).or_default() += 1;
        assert!(seen.insert((&v.pair_id, &v.rater_id)), "rater judged a pair twice");
    }
    assert_eq!(per_pair.len(), 12);
    assert!(per_pair.values().all(|&n| n == 3));
    let nonces: HashSet<_> = votes.iter().map(|v| v.nonce.clone().unwrap()).collect();
    assert_eq!(nonces.len(), 36);
}

#[tokio::test]
async fn reload_reconstructs_scheduling_state() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 3);
    let app = build_app(&cfg).unwrap();
    let first = vote(&app, "r1", "A").await.unwrap();
    vote(&app, "r1", "B").await.unwrap();
    vote(&app, "r2", "A").await.unwrap();
    let before = get(&app, "/api/results").await.body;
    let votes_before = read_votes(&cfg.vote_log).unwrap();
    drop(app);

    let app = build_app(&cfg).unwrap();
    assert_eq!(get(&app, "/api/results").await.body, before);
    assert_eq!(read_votes(&cfg.vote_log).unwrap(), votes_before);
    // r1 has one unjudged pair left
    let a = next(&app, "r1").await.unwrap();
    assert_ne!(a["pair_id"], first["pair_id"]);
    post(&app, "/api/votes", vote_for(&a, "r1", "A")).await;
    assert!(next(&app, "r1").await.is_none());
    assert_eq!(
        post(&app, "/api/votes", vote_for(&first, "r1", "A")).await.status,
        StatusCode::CONFLICT
    );
}

#[tokio::test]
async fn torn_final_line_is_quarantined() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2);
    let app = build_app(&cfg).unwrap();
    vote(&app, "r1", "A").await.unwrap();
    vote(&app, "r2", "A").await.unwrap();
    drop(app);
    let mut text = std::fs::read_to_string(&cfg.vote_log).unwrap();
    let intact = text.clone();
    text.push_str("{\"pair_id\":\"p1\",\"candid");
    std::fs::write(&cfg.vote_log, &text).unwrap();

    let app = build_app(&cfg).unwrap();
    assert_eq!(get(&app, "/healthz").await.json()["votes"], 2);
    assert_eq!(std::fs::read_to_string(&cfg.vote_log).unwrap(), intact);
    let q = std::fs::read_to_string(quarantine_path(&cfg.vote_log)).unwrap();
    assert!(q.contains("\"candid"), "{q}");
    // the service keeps accepting votes on a clean log
    vote(&app, "r3", "B").await.unwrap();
    assert_eq!(read_votes(&cfg.vote_log).unwrap().len(), 3);
}

#[tokio::test]
async fn images_are_served_as_immutable_png() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 1);
    let app = build_app(&cfg).unwrap();
    let r = get(&app, "/api/images/p0/B").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["content-type"], "image/png");
    assert_eq!(r.headers["cache-control"], "public, max-age=31536000, immutable");
    assert_eq!(r.body, std::fs::read(cfg.pairs_dir.join("img/p0_a.png")).unwrap());
    assert_eq!(get(&app, "/api/images/p0/C").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/images/p7/A").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn static_bundle_is_served_when_configured() {
    let dir = TempDir::new().unwrap();
    let web = dir.path().join("web");
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<h1>rate</h1>").unwrap();
    let cfg = ServeConfig {
        static_dir: Some(web),
        ..config(dir.path(), 1)
    };
    let app = build_app(&cfg).unwrap();
    let r = get(&app, "/index.html").await;
    assert_eq!(
        (r.status, r.body.as_slice()),
        (StatusCode::OK, b"<h1>rate</h1>".as_slice())
    );
    assert_eq!(get(&app, "/healthz").await.status, StatusCode::OK);
}

#[tokio::test]
async fn empty_log_reports_no_comparisons() {
    let dir = TempDir::new().unwrap();
    let app = build_app(&config(dir.path(), 2)).unwrap();
    let res = get(&app, "/api/results").await.json();
    assert_eq!(res["comparisons"], json!([]));
    assert_eq!(res["metadata"]["quota"], 3);
}

#[test]
fn invalid_pair_tables_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 2);
    let csv = cfg.pairs_dir.join("pairs.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    std::fs::write(
        &csv,
        text.replace("img/p1_a.png", "img/gone.png") + "p0,A,A,img/p0_c.png,img/p0_a.png\n",
    )
    .unwrap();
    let msg = format!("{:#}", build_app(&cfg).err().unwrap());
    assert!(
        msg.contains("gone.png") && msg.contains("duplicate pair id `p0`") && msg.contains("itself"),
        "{msg}"
    );
}

fn arb_vote() -> impl Strategy<Value = VoteRecord> {
    (
        0usize..5,
        any::<bool>(),
        any::<bool>(),
        "[a-z]{1,6}",
        proptest::option::of("[a-z0-9]{1,8}"),
        0i64..2_000_000_000,
    )
        .prop_map(|(p, swap, left, rater, nonce, t)| {
            let (l, r) = if swap { ("B", "A") } else { ("A", "B") };
            VoteRecord {
                pair_id: format!("p{p}"),
                candidate: "A".into(),
                alternative: "B".into(),
                left_model: l.into(),
                right_model: r.into(),
                choice: if left {
                    floodbench::serve::Choice::Left
                } else {
                    floodbench::serve::Choice::Right
                },
                rater_id: rater,
                timestamp: chrono::DateTime::from_timestamp(t, 0).unwrap(),
                nonce,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn log_reload_round_trips(votes in proptest::collection::vec(arb_vote(), 0..12), cut in 1usize..400) {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let (mut log, replay) = VoteLog::open(&path).unwrap();
            prop_assert!(replay.votes.is_empty());
            for v in &votes {
                log.append(v).unwrap();
            }
        }
        let (_, replay) = VoteLog::open(&path).unwrap();
        prop_assert_eq!(&replay.votes, &votes);
        prop_assert_eq!(replay.quarantined, None);

        // tear the last record at an arbitrary byte
        if let Some(last) = votes.last() {
            let full = std::fs::read(&path).unwrap();
            let len = serde_json::to_vec(last).unwrap().len();
            let keep = full.len() - 1 - len + (cut % len).max(1);
            std::fs::write(&path, &full[..keep]).unwrap();
            let (_, replay) = VoteLog::open(&path).unwrap();
            prop_assert_eq!(&replay.votes[..], &votes[..votes.len() - 1]);
            prop_assert!(replay.quarantined.is_some());
            prop_assert_eq!(read_votes(&path).unwrap(), votes[..votes.len() - 1].to_vec());
        }
    }
}
