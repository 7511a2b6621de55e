mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use counterpoint::clock::Clock;
use counterpoint::server::{self, AppState};
use counterpoint_core::scorers::{HttpToxicityClient, RetryPolicy, RuleToxicityScorer};
use reqwest::StatusCode;
use serde_json::{json, Value};

async fn spawn(router: axum::Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}")
}

async fn start(token: Option<&str>) -> (String, Arc<counterpoint::Engine>) {
    let engine = Arc::new(engine_with(
        Arc::new(rules_scorer()),
        config(0.5, 100, 30),
        Clock::System,
    ));
    let state = AppState::new(engine.clone(), token.map(String::from));
    (spawn(server::router(state)).await, engine)
}

async fn error_code(resp: reqwest::Response) -> (StatusCode, String) {
    let status = resp.status();
    let body: Value = resp.json().await.unwrap();
    (status, body["error"]["code"].as_str().unwrap().to_string())
}

/// Polls `/stats` until `pred` holds.
async fn wait_for(client: &reqwest::Client, base: &str, pred: impl Fn(&Value) -> bool) -> Value {
    for _ in 0..200 {
        let s: Value = client
            .get(format!("{base}/stats"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        if pred(&s) {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("stats never reached the expected state");
}

#[tokio::test]
async fn ingest_admits_filters_and_rejects() {
    let (base, _) = start(None).await;
    let c = reqwest::Client::new();
    let now = chrono::Utc::now();

    let r = c
        .post(format!("{base}/ingest"))
        .json(&abusive("1", now))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    assert_eq!(r.json::<Value>().await.unwrap()["tweet_id"], "1");

    let mut rt = benign("2", now);
    rt.is_retweet = true;
    let r = c.post(format!("{base}/ingest")).json(&rt).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Value>().await.unwrap()["reason"], "retweet");

    let r = c
        .post(format!("{base}/ingest"))
        .json(&abusive("1", now))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Value>().await.unwrap()["reason"], "duplicate");

    let r = c
        .post(format!("{base}/ingest"))
        .json(&json!({"id": "3", "text": "no timestamp"}))
        .send()
        .await
        .unwrap();
    assert_eq!(error_code(r).await, (StatusCode::BAD_REQUEST, "invalid_body".into()));

    let s = wait_for(&c, &base, |s| s["analysed"] == 1).await;
    assert_eq!(s["abusive"], 1);
    // no approved library yet
    let s = wait_for(&c, &base, |s| s["library_alert"] == true).await;
    assert_eq!(s["sent"], 0);
}

#[tokio::test]
async fn threshold_round_trips_into_history() {
    let (base, engine) = start(None).await;
    let c = reqwest::Client::new();
    let r = c
        .put(format!("{base}/config/threshold"))
        .json(&json!({"theta": 0.8, "operator": "ops"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let cfg: Value = r.json().await.unwrap();
    assert_eq!(cfg["theta"], 0.8);
    let last = cfg["history"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(
        (last["key"].as_str(), last["value"].as_f64()),
        (Some("theta"), Some(0.8))
    );
    assert_eq!(engine.theta(), 0.8);

    let s: Value = c
        .get(format!("{base}/stats"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(s["current_theta"], 0.8);

    let r = c
        .put(format!("{base}/config/threshold"))
        .json(&json!({"theta": 1.5, "operator": "ops"}))
        .send()
        .await
        .unwrap();
    assert_eq!(
        error_code(r).await,
        (StatusCode::BAD_REQUEST, "theta_out_of_range".into())
    );
    let r = c
        .put(format!("{base}/config/threshold"))
        .json(&json!({"theta": 0.7}))
        .send()
        .await
        .unwrap();
    assert_eq!(error_code(r).await, (StatusCode::BAD_REQUEST, "invalid_body".into()));
    assert_eq!(engine.theta(), 0.8);
}

#[tokio::test]
async fn curation_lifecycle() {
    let (base, _) = start(None).await;
    let c = reqwest::Client::new();
    let submit = |text: String| c.post(format!("{base}/curation")).json(&json!({"text": text})).send();

    let r = submit("You make politics better.".into()).await.unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    let entry: Value = r.json().await.unwrap();
    assert_eq!(entry["state"], "submitted");
    let id = entry["id"].as_i64().unwrap();

    let pending: Value = c
        .get(format!("{base}/curation?state=submitted"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(pending.as_array().unwrap().len(), 1);

    let review = |id: i64, body: Value| c.post(format!("{base}/curation/{id}/review")).json(&body).send();
    let r = review(id, json!({"action": "edit_and_approve", "operator": "ed"}))
        .await
        .unwrap();
    assert_eq!(
        error_code(r).await,
        (StatusCode::BAD_REQUEST, "missing_new_text".into())
    );
    let r = review(
        id,
        json!({"action": "edit_and_approve", "new_text": "x".repeat(281), "operator": "ed"}),
    )
    .await
    .unwrap();
    assert_eq!(
        error_code(r).await,
        (StatusCode::UNPROCESSABLE_ENTITY, "text_too_long".into())
    );

    let r = review(
        id,
        json!({"action": "edit_and_approve", "new_text": "You make politics better!", "operator": "ed"}),
    )
    .await
    .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let entry: Value = r.json().await.unwrap();
    assert_eq!(entry["state"], "approved");
    assert_eq!(entry["text"], "You make politics better!");
    assert_eq!(entry["history"][0]["old_text"], "You make politics better.");

    // approved entries leave the pending queue immediately
    let pending: Value = c
        .get(format!("{base}/curation?state=submitted"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(pending.as_array().unwrap().is_empty());
    let s: Value = c
        .get(format!("{base}/stats"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(s["approved_library_size"], 1);

    let r = review(id, json!({"action": "reject", "operator": "ed"})).await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::CONFLICT, "terminal_state".into()));
    let r = review(999, json!({"action": "approve", "operator": "ed"}))
        .await
        .unwrap();
    assert_eq!(error_code(r).await, (StatusCode::NOT_FOUND, "not_found".into()));
    let r = review(id, json!({"action": "undo", "operator": "ed"})).await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::BAD_REQUEST, "invalid_action".into()));

    let r = submit("   ".into()).await.unwrap();
    assert_eq!(
        error_code(r).await,
        (StatusCode::UNPROCESSABLE_ENTITY, "empty_text".into())
    );
    let r = c.get(format!("{base}/curation?state=bogus")).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::BAD_REQUEST, "invalid_state".into()));
}

#[tokio::test]
async fn bearer_token_guards_every_route_but_health() {
    let (base, _) = start(Some("s3cret")).await;
    let c = reqwest::Client::new();
    assert_eq!(
        c.get(format!("{base}/health")).send().await.unwrap().status(),
        StatusCode::OK
    );

    let r = c.get(format!("{base}/stats")).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::UNAUTHORIZED, "unauthorized".into()));
    let r = c
        .get(format!("{base}/stats"))
        .bearer_auth("wrong")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    let r = c
        .post(format!("{base}/ingest"))
        .json(&benign("1", chrono::Utc::now()))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);

    let r = c
        .get(format!("{base}/stats"))
        .bearer_auth("s3cret")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
}

#[tokio::test]
async fn pipeline_scores_through_mock_scorer_over_http() {
    let scorer_base = spawn(server::mock_scorer_router(
        RuleToxicityScorer::new(counterpoint::fixture::mock_rules()).unwrap(),
        Some("key-1".into()),
    ))
    .await;
    let client = HttpToxicityClient::new(&scorer_base, Some("key-1".into()))
        .unwrap()
        .with_retry(RetryPolicy {
            max_attempts: 2,
            base_delay: Duration::from_millis(5),
        });
    let engine = Arc::new(engine_with(Arc::new(client), config(0.9, 100, 30), Clock::System));
    approve_library(&engine, 2);
    let base = spawn(server::router(AppState::new(engine.clone(), None))).await;
    let c = reqwest::Client::new();
    let now = chrono::Utc::now();
    c.post(format!("{base}/ingest"))
        .json(&abusive("1", now))
        .send()
        .await
        .unwrap();
    c.post(format!("{base}/ingest"))
        .json(&benign("2", now))
        .send()
        .await
        .unwrap();
    let s = wait_for(&c, &base, |s| s["analysed"] == 2 && s["sent"] == 1).await;
    assert_eq!(s["abusive"], 1);
    assert!(s["last_response_at"].is_string());

    // the mock rejects a wrong key without scoring
    let r = c
        .post(format!("{scorer_base}/v1/score"))
        .header("x-api-key", "nope")
        .json(&json!({"text": "hi", "attributes": ["TOXICITY"]}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn scorer_outage_is_retried_in_the_background() {
    let tox = Switchable::new();
    let engine = Arc::new(engine_with(tox.clone(), config(0.5, 100, 30), Clock::System));
    let state = AppState::new(engine.clone(), None);
    server::spawn_retry_loop(state.clone(), Duration::from_millis(50));
    let base = spawn(server::router(state)).await;
    let c = reqwest::Client::new();

    tox.set_down(true);
    c.post(format!("{base}/ingest"))
        .json(&abusive("1", chrono::Utc::now()))
        .send()
        .await
        .unwrap();
    wait_for(&c, &base, |s| s["failed"] == 1).await;
    tox.set_down(false);
    let s = wait_for(&c, &base, |s| s["analysed"] == 1).await;
    assert_eq!((s["abusive"].as_u64(), s["failed"].as_u64()), (Some(1), Some(0)));
}
