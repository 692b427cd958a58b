#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use floodbench_core::io::{save_binary_mask, save_label_map};
use floodbench_core::{BinaryMask, TernaryLabelMap};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

/// Label from rows of class codes.
pub fn label(rows: &[&[u8]]) -> TernaryLabelMap {
    let codes: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    TernaryLabelMap::from_codes(rows.len(), rows[0].len(), &codes).unwrap()
}

/// Mask from rows of `0`/`1`.
pub fn mask(rows: &[&[u8]]) -> BinaryMask {
    let bits: Vec<bool> = rows.iter().flat_map(|r| r.iter().map(|&b| b == 1)).collect();
    BinaryMask::new(rows.len(), rows[0].len(), bits).unwrap()
}

pub fn put_label(dataset: &Path, id: &str, l: &TernaryLabelMap) {
    let dir = dataset.join("labels");
    std::fs::create_dir_all(&dir).unwrap();
    save_label_map(&dir.join(format!("{id}.png")), l).unwrap();
}

pub fn put_pred(dataset: &Path, model: &str, id: &str, m: &BinaryMask) {
    let dir = dataset.join(model);
    std::fs::create_dir_all(&dir).unwrap();
    save_binary_mask(&dir.join(format!("{id}.png")), m).unwrap();
}

pub fn write_manifest(root: &Path, body: &str) -> PathBuf {
    let path = root.join("study.toml");
    std::fs::write(&path, body).unwrap();
    path
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}

pub async fn post_raw(app: &Router, uri: &str, raw: &str) -> Reply {
    let req = Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(raw.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

/// A pairs directory with `n` pairs of `candidate` vs `alternative`, each
/// side a distinct tiny PNG.
pub fn pairs_dir(root: &Path, n: usize, candidate: &str, alternative: &str) -> PathBuf {
    let dir = root.join("pairs");
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let mut csv = String::from("pair_id,candidate,alternative,candidate_image,alternative_image\n");
    for i in 0..n {
        for (side, bit) in [("c", true), ("a", false)] {
            let m = BinaryMask::from_fn(4, 4, |y, x| (y * 4 + x == i % 16) == bit).unwrap();
            save_binary_mask(&dir.join(format!("img/p{i}_{side}.png")), &m).unwrap();
        }
        csv.push_str(&format!(
            "p{i},{candidate},{alternative},img/p{i}_c.png,img/p{i}_a.png\n"
        ));
    }
    std::fs::write(dir.join("pairs.csv"), csv).unwrap();
    dir
}

/// Vote body choosing `pick` for an assignment returned by `/next`.
pub fn vote_for(assignment: &Value, rater: &str, pick: &str) -> Value {
    let left = assignment["left"]["model"].as_str().unwrap();
    let right = assignment["right"]["model"].as_str().unwrap();
    let choice = if pick == left {
        "left"
    } else {
        assert_eq!(pick, right);
        "right"
    };
    serde_json::json!({
        "pair_id": assignment["pair_id"],
        "rater_id": rater,
        "left_model": left,
        "right_model": right,
        "choice": choice,
    })
}
