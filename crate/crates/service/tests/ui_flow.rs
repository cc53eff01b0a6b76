//! The request sequence a browser session issues against the service.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use egomedia_core::engine::Engine;
use egomedia_core::learner::{LearnerConfig, ParamStore};
use egomedia_core::params::{Owner, ParamVector};
use egomedia_core::synth::{synthetic_world, SynthWorldConfig};
use egomedia_core::world::WorldStore;
use egomedia_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    let w = synthetic_world(&SynthWorldConfig::default());
    let mut store = WorldStore::new();
    for f in w.facts.facts() {
        store.insert_fact(f.clone());
    }
    store.extend_media(w.media.records().iter().cloned());
    let mut th = ParamVector::zero(Owner::Shared);
    th.set("lex:in_front_of→frontOf", 2.0);
    th.set("lex:on_the_right_of→rightOf", 2.0);
    th.set("lex:near→near", 2.0);
    let state = AppState::new(store, ParamStore::new(th), Engine::default(), LearnerConfig::default(), std::env::temp_dir());
    router(Arc::new(state))
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
    let s = resp.status();
    (s, serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap())
}

fn gallery(v: &Value) -> Vec<String> {
    v["retrievals"].as_array().unwrap().iter().map(|r| r["media_id"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn preflight_is_allowed() {
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/query")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
        .body(Body::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key(header::ACCESS_CONTROL_ALLOW_METHODS));
}

#[tokio::test]
async fn a_session_facing_east() {
    let app = app();
    let (s, ctx) = post(&app, "/context", json!({"user_id": "ui", "lat": 49.2560, "lon": 7.0420, "heading_deg": 90, "query_time": 20150516})).await;
    assert_eq!(s, StatusCode::OK);
    let v0 = ctx["version"].as_u64().unwrap();
    let (_, ctx) = post(&app, "/context", json!({"user_id": "ui", "lat": 49.2561, "lon": 7.0421, "heading_deg": 90, "query_time": 20150516})).await;
    assert!(ctx["version"].as_u64().unwrap() > v0);

    let q = json!({"user_id": "ui", "text": "what is in front of campus center?", "frame": "user_centric"});
    let (s, a) = post(&app, "/query", q.clone()).await;
    assert_eq!(s, StatusCode::OK);
    assert!(a["logical_form"].as_str().unwrap().contains("rightOf"));
    let (_, b) = post(&app, "/query", q).await;
    assert_eq!(gallery(&a), gallery(&b));

    let (_, g) = post(&app, "/query", json!({"user_id": "ui", "text": "what is in front of campus center?", "frame": "geomagnetic"})).await;
    assert!(g["logical_form"].as_str().unwrap().contains("frontOf"));
    assert_ne!(gallery(&a), gallery(&g));

    let (s, err) = post(&app, "/query", json!({"user_id": "ui", "text": "sing me a song"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["detail"].is_string());

    let marks: Vec<Value> = gallery(&a).iter().map(|id| json!({"media_id": id, "relevant": true})).collect();
    let (s, fb) = post(&app, "/feedback", json!({"user_id": "ui", "query_id": a["query_id"], "marks": marks})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(fb["params_version"], a["params_version"].as_u64().unwrap() + 1);
    let (_, fb) = post(&app, "/feedback", json!({"user_id": "ui", "query_id": b["query_id"], "marks": []})).await;
    assert_eq!(fb["params_version"], a["params_version"].as_u64().unwrap() + 2);
}

#[tokio::test]
async fn two_sessions_keep_separate_badges() {
    let app = app();
    for u in ["left", "right"] {
        let (s, _) = post(&app, "/context", json!({"user_id": u, "lat": 49.2560, "lon": 7.0420, "heading_deg": 0})).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, r) = post(&app, "/query", json!({"user_id": "left", "text": "what is near mpi inf?"})).await;
    for _ in 0..3 {
        post(&app, "/feedback", json!({"user_id": "left", "query_id": r["query_id"], "marks": []})).await;
    }
    let (_, l) = post(&app, "/query", json!({"user_id": "left", "text": "what is near mpi inf?"})).await;
    let (_, rt) = post(&app, "/query", json!({"user_id": "right", "text": "what is near mpi inf?"})).await;
    assert_eq!(l["params_version"], 3);
    assert_eq!(rt["params_version"], 0);
}
