#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, TimeZone, Utc};
use http_body_util::BodyExt;
use tower::ServiceExt;

use selfportrait::ingest::Dataset;
use selfportrait::semantic::{MockEmbedder, ProviderError};
use selfportrait::service::Engine;
use selfportrait::summarize::{MockSummarizer, PromptTemplates, RegenerationPolicy, SummaryProvider};
use selfportrait::synth::{synthetic_dataset, SynthParams};

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap()
}

/// Six users with 30 to 60 ratings over 80 movies, ending at `t0`.
pub fn small_dataset() -> Dataset {
    synthetic_dataset(
        &SynthParams {
            users: 6,
            movies: 80,
            ratings_per_user: 30..=60,
            end: t0(),
            history_days: 730,
        },
        17,
    )
}

/// Mock summarizer that can be switched into an outage.
#[derive(Default)]
pub struct Switchable {
    pub down: AtomicBool,
}

impl SummaryProvider for Switchable {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        if self.down.load(Ordering::SeqCst) {
            return Err(ProviderError::Unavailable("connection refused".into()));
        }
        MockSummarizer.complete(prompt)
    }
}

pub fn engine(dataset: Dataset, summarizer: Arc<dyn SummaryProvider>) -> Engine {
    Engine::new(
        dataset,
        Arc::new(MockEmbedder::new(64, 42)),
        summarizer,
        PromptTemplates::default(),
        RegenerationPolicy::default(),
        20,
    )
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

/// Twelve users over eight weeks. Nobody edits in the first four weeks;
/// afterwards four users never edit, four edit once and four edit three
/// times. The frequent editors also view three times as many movies in the
/// second half.
pub fn three_group_scenario() -> String {
    let mut users = Vec::new();
    for g in 0..3 {
        for k in 0..4 {
            let edits = match g {
                0 => String::new(),
                1 => r#"{"day": 30, "section": "liked", "action": "keep"}"#.to_string(),
                _ => r#"{"day": 29, "section": "liked", "action": "drop_last_sentence"},
                        {"day": 33, "section": "disliked", "action": "clear"},
                        {"day": 40, "section": "recent", "action": "append", "text": "Lately I want slow science fiction."}"#
                    .to_string(),
            };
            let later_views = if g == 2 { 9.0 } else { 3.0 };
            users.push(format!(
                r#"{{"id": "g{g}k{k}", "base_ratings": {base},
                    "activity": [{{"from_day": 0, "sessions": 1.2, "views": 3, "ratings": 0.4}},
                                 {{"from_day": 28, "sessions": 1.2, "views": {later_views}, "ratings": 0.4}}],
                    "edits": [{edits}]}}"#,
                base = 30 + 7 * k + 3 * g
            ));
        }
    }
    format!(r#"{{"seed": 21, "days": 56, "movies": 120, "users": [{}]}}"#, users.join(","))
}

pub const BASELINE: &str = "2025-03-01/2025-03-29";
pub const EXPERIMENT: &str = "2025-03-29/2025-04-26";

/// Every file under `dir` with its bytes, by relative path.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((
            entry.strip_prefix(dir).unwrap().display().to_string(),
            fs::read(&entry).unwrap(),
        ));
    }
    out.sort();
    out
}

pub fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

/// Runs the command-line binary.
pub fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfportrait"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
