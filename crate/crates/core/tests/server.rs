mod common;

use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::http::StatusCode;
use chrono::Duration;
use serde_json::json;

use common::*;
use selfportrait::domain::{Author, Portrait};
use selfportrait::metrics::MetricsOptions;
use selfportrait::server::{router, AppState, ManualClock};
use selfportrait::store;
use selfportrait::summarize::{SummaryProvider, NO_DISLIKES_PLACEHOLDER};

struct Harness {
    dir: tempfile::TempDir,
    clock: Arc<ManualClock>,
    provider: Arc<Switchable>,
    state: Arc<AppState>,
    app: axum::Router,
}

fn open(dir: tempfile::TempDir, token: Option<&str>) -> Harness {
    let clock = Arc::new(ManualClock::new(t0()));
    let provider = Arc::new(Switchable::default());
    let state = Arc::new(
        AppState::open(
            engine(small_dataset(), provider.clone() as Arc<dyn SummaryProvider>),
            dir.path().to_owned(),
            clock.clone(),
            MetricsOptions::default(),
            4,
            token.map(str::to_owned),
        )
        .unwrap(),
    );
    let app = router(state.clone());
    Harness {
        dir,
        clock,
        provider,
        state,
        app,
    }
}

fn harness() -> Harness {
    open(tempfile::tempdir().unwrap(), None)
}

const U: &str = "/api/v1/users/u0001";

async fn generate(h: &Harness) -> Portrait {
    let (s, body) = call(&h.app, "POST", &format!("{U}/regenerate"), None).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_value(json(&body)["portrait"].clone()).unwrap()
}

#[tokio::test]
async fn portrait_lifecycle() {
    let h = harness();
    let (s, _) = call(&h.app, "GET", "/api/v1/users/nobody/portrait", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, body) = call(&h.app, "GET", &format!("{U}/portrait"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(json(&body)["error"], "not_yet_generated");

    let p = generate(&h).await;
    assert_eq!(p.version, 1);
    for sec in ["recent", "liked", "disliked"] {
        assert_eq!(json(&serde_json::to_vec(&p.authors).unwrap())[sec], "ai");
    }

    // Saving the text unchanged is a retained edit.
    let (s, body) = call(
        &h.app,
        "PUT",
        &format!("{U}/portrait/liked"),
        Some(json!({"text": p.liked_summary, "base_version": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["portrait"]["version"], 2);
    assert_eq!(v["edit"]["summary_class"], "retained");
    assert_eq!(v["portrait"]["authors"]["liked"], "user");
    assert_eq!(v["portrait"]["authors"]["recent"], "ai");

    let (s, body) = call(
        &h.app,
        "PUT",
        &format!("{U}/portrait/liked"),
        Some(json!({"text": "something else", "base_version": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(json(&body)["current_version"], 2);

    let (s, _) = call(&h.app, "PUT", &format!("{U}/portrait/recent"), Some(json!({"text": " ", "base_version": 2}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&h.app, "PUT", &format!("{U}/portrait/middle"), Some(json!({"text": "x", "base_version": 2}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, body) = call(&h.app, "PUT", &format!("{U}/portrait/disliked"), Some(json!({"text": "", "base_version": 2}))).await;
    assert_eq!(s, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["portrait"]["disliked_summary"], NO_DISLIKES_PLACEHOLDER);
    assert_eq!(v["edit"]["summary_class"], "pruned");

    let (_, body) = call(&h.app, "GET", &format!("{U}/edits"), None).await;
    assert_eq!(json(&body).as_array().unwrap().len(), 2);
    let (_, body) = call(&h.app, "GET", &format!("{U}/portrait/versions"), None).await;
    assert_eq!(json(&body).as_array().unwrap().len(), 3);
    let (_, body) = call(&h.app, "GET", &format!("{U}/status"), None).await;
    assert_eq!(json(&body)["edits"], 2);
}

#[tokio::test]
async fn regeneration_gate_and_outage() {
    let h = harness();
    generate(&h).await;
    h.clock.advance(Duration::days(1));
    let (s, _) = call(&h.app, "POST", &format!("{U}/regenerate"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);

    h.provider.down.store(true, Ordering::SeqCst);
    let (s, body) = call(&h.app, "POST", &format!("{U}/regenerate?force=true"), None).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY, "{}", String::from_utf8_lossy(&body));
    let (_, body) = call(&h.app, "GET", &format!("{U}/portrait"), None).await;
    assert_eq!(json(&body)["version"], 1);

    h.provider.down.store(false, Ordering::SeqCst);
    let (s, body) = call(&h.app, "POST", &format!("{U}/regenerate?force=true"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json(&body)["portrait"]["version"], 2);
    assert_eq!(json(&body)["record"]["kind"], "regeneration");
}

#[tokio::test]
async fn events_drive_the_daily_sweep() {
    let h = harness();
    assert_eq!(h.state.sweep().generated, 6);
    let (_, body) = call(&h.app, "GET", &format!("{U}/status"), None).await;
    let base = json(&body)["ratings_now"].as_u64().unwrap();

    let movies: Vec<String> = (1..=10).map(|i| i.to_string()).collect();
    let events: Vec<_> = movies
        .iter()
        .map(|m| json!({"kind": "rating", "movie_id": m, "score": 4.5}))
        .collect();
    let (s, body) = call(&h.app, "POST", &format!("{U}/events"), Some(json!(events))).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let (s, _) = call(&h.app, "POST", &format!("{U}/events"), Some(json!([{"kind": "rating", "movie_id": "1"}]))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&h.app, "POST", &format!("{U}/events"), Some(json!([{"kind": "movie_view", "movie_id": "nope"}]))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // Within the cadence nothing happens.
    h.clock.advance(Duration::hours(23));
    assert_eq!(h.state.sweep().generated, 0);
    h.clock.advance(Duration::hours(1));
    let r = h.state.sweep();
    assert_eq!((r.generated, r.failed), (1, 0));
    let (_, body) = call(&h.app, "GET", &format!("{U}/status"), None).await;
    let st = json(&body);
    assert_eq!(st["ratings_at_generation"].as_u64().unwrap(), base + 10);
    assert_eq!(st["version"], 2);
}

#[tokio::test]
async fn treemap_slices() {
    let h = harness();
    let (s, body) = call(&h.app, "GET", &format!("{U}/treemap?category=genre"), None).await;
    assert_eq!(s, StatusCode::OK);
    let v = json(&body);
    let total: u64 = v["cells"].as_array().unwrap().iter().map(|c| c["count"].as_u64().unwrap()).sum();
    let catalog = &h.state.engine.dataset.catalog;
    let expected: usize = h
        .state
        .engine
        .dataset
        .ratings
        .iter()
        .filter(|r| r.user_id.as_str() == "u0001")
        .map(|r| catalog.movie(&r.movie_id).unwrap().genres.len())
        .sum();
    assert_eq!(total as usize, expected);
    for c in ["actor", "director", "language", "popularity", "release_year"] {
        let (s, _) = call(&h.app, "GET", &format!("{U}/treemap?category={c}"), None).await;
        assert_eq!(s, StatusCode::OK, "{c}");
    }
    let (s, _) = call(&h.app, "GET", &format!("{U}/treemap?category=colour"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn token_is_enforced_when_set() {
    let h = open(tempfile::tempdir().unwrap(), Some("s3cret"));
    let (s, _) = call(&h.app, "GET", "/api/v1/health", None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let req = axum::http::Request::builder()
        .uri("/api/v1/health")
        .header("authorization", "Bearer s3cret")
        .body(axum::body::Body::empty())
        .unwrap();
    let resp = tower::ServiceExt::oneshot(h.app.clone(), req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_edits_keep_the_chain_gap_free() {
    let h = harness();
    generate(&h).await;
    for round in 1..=3u64 {
        let tasks: Vec<_> = (0..100)
            .map(|i| {
                let app = h.app.clone();
                tokio::spawn(async move {
                    call(
                        &app,
                        "PUT",
                        &format!("{U}/portrait/liked"),
                        Some(json!({"text": format!("Round {round} writer {i} likes noir."), "base_version": round})),
                    )
                    .await
                    .0
                })
            })
            .collect();
        let mut ok = 0;
        for t in tasks {
            match t.await.unwrap() {
                StatusCode::OK => ok += 1,
                StatusCode::CONFLICT => {}
                other => panic!("unexpected {other}"),
            }
        }
        assert_eq!(ok, 1, "round {round}");
    }
    let (_, body) = call(&h.app, "GET", &format!("{U}/portrait/versions"), None).await;
    let versions: Vec<u64> = json(&body).as_array().unwrap().iter().map(|p| p["version"].as_u64().unwrap()).collect();
    assert_eq!(versions, vec![1, 2, 3, 4]);
    let (_, body) = call(&h.app, "GET", &format!("{U}/edits"), None).await;
    assert_eq!(json(&body).as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn restart_replays_to_the_same_portraits() {
    let h = harness();
    h.state.sweep();
    for (i, user) in ["u0000", "u0002", "u0003"].iter().enumerate() {
        let uri = format!("/api/v1/users/{user}/portrait/recent");
        let (s, _) = call(&h.app, "PUT", &uri, Some(json!({"text": format!("Edited {i}."), "base_version": 1}))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let before: Vec<_> = h
        .state
        .users()
        .iter()
        .map(|u| h.state.view(u).and_then(|v| v.latest().cloned()))
        .collect();

    let Harness { dir, state, app, .. } = h;
    drop(app);
    drop(state);
    // A write torn by the crash.
    let torn = store::user_dir(dir.path(), &"u0002".into()).join("portraits.jsonl");
    std::fs::OpenOptions::new()
        .append(true)
        .open(&torn)
        .and_then(|mut f| std::io::Write::write_all(&mut f, b"{\"user_id\":\"u0002\",\"vers"))
        .unwrap();

    let h = open(dir, None);
    let after: Vec<_> = h
        .state
        .users()
        .iter()
        .map(|u| h.state.view(u).and_then(|v| v.latest().cloned()))
        .collect();
    assert_eq!(before, after);
    assert!(after.iter().all(Option::is_some));
    let edited = after[2].as_ref().unwrap();
    assert_eq!(edited.version, 2);
    assert_eq!(edited.authors.recent, Author::User);
}

#[tokio::test]
async fn report_needs_enough_data() {
    let h = harness();
    h.state.sweep();
    let (s, _) = call(&h.app, "GET", "/api/v1/analysis/report?window=2025-03-01/2025-03-08", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    for user in ["u0000", "u0001"] {
        let (s, _) = call(
            &h.app,
            "POST",
            &format!("/api/v1/users/{user}/events"),
            Some(json!([{"kind": "login"}, {"kind": "movie_view", "movie_id": "3"}])),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
    }
    // Only two users have events, and an empty window has none.
    let uri = "/api/v1/analysis/report?window=2025-03-01/2025-03-02&baseline=2025-02-01/2025-03-01";
    let (s, body) = call(&h.app, "GET", uri, None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{}", String::from_utf8_lossy(&body));
    let (s, _) = call(&h.app, "GET", "/api/v1/analysis/report?window=bad&baseline=bad", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
