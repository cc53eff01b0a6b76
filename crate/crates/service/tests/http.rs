use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use egomedia_core::engine::Engine;
use egomedia_core::geo::{destination, LatLon};
use egomedia_core::learner::{LearnerConfig, ParamStore};
use egomedia_core::logic::{evaluate, parse_canonical_text, GeometryConfig};
use egomedia_core::params::{Owner, ParamVector};
use egomedia_core::world::{DayStamp, GeoFact, MediaKind, MediaRecord, UserContext, WorldSnapshot, WorldStore};
use egomedia_service::app::{ErrorBody, QueryResponse};
use egomedia_service::{router, AppState, DataDir};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const POSTBANK: LatLon = LatLon { lat: 49.2567, lon: 7.0430 };

fn store() -> WorldStore {
    let day = DayStamp::new(20150511).unwrap();
    let mut s = WorldStore::new();
    s.insert_fact(GeoFact::new("bank", "postbank", POSTBANK.lat, POSTBANK.lon).unwrap());
    let mut media = Vec::new();
    for (id, brg, dist) in [("east1", 90.0, 120.0), ("east2", 80.0, 200.0), ("north1", 0.0, 150.0), ("south1", 180.0, 90.0)] {
        let p = destination(POSTBANK, brg, dist);
        media.push(MediaRecord::new(id, MediaKind::Image, p.lat, p.lon, day, format!("{id}.jpg")).unwrap());
    }
    s.extend_media(media);
    s
}

fn trained() -> ParamVector {
    let mut th = ParamVector::zero(Owner::Shared);
    for (phrase, rel) in [("in_front_of", "frontOf"), ("on_the_right_of", "rightOf"), ("behind", "behind"), ("on_the_left_of", "leftOf")] {
        th.set(format!("lex:{phrase}→{rel}"), 3.0);
    }
    th
}

struct Fixture {
    app: Router,
    dir: tempfile::TempDir,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = DataDir::open(dir.path()).unwrap();
    for id in ["east1", "east2", "north1", "south1"] {
        std::fs::write(data.media_root().join(format!("{id}.jpg")), format!("bytes of {id}")).unwrap();
    }
    let state = AppState::new(store(), ParamStore::new(trained()), Engine::default(), LearnerConfig::default(), data.media_root())
        .with_data_dir(data);
    Fixture { app: router(Arc::new(state)), dir }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, b) = call(app, Method::POST, uri, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn place(app: &Router, user: &str, heading: f64) {
    let (s, _) = post(app, "/context", json!({"user_id": user, "lat": 49.2560, "lon": 7.0420, "heading_deg": heading, "query_time": 20150516})).await;
    assert_eq!(s, StatusCode::OK);
}

async fn ask(app: &Router, user: &str, text: &str, frame: &str) -> QueryResponse {
    let (s, v) = post(app, "/query", json!({"user_id": user, "text": text, "frame": frame})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    serde_json::from_value(v).unwrap()
}

fn ids(r: &QueryResponse) -> Vec<&str> {
    r.retrievals.iter().map(|x| x.media_id.as_str()).collect()
}

fn error_code(v: &Value) -> String {
    serde_json::from_value::<ErrorBody>(v.clone()).unwrap().code
}

#[tokio::test]
async fn context_is_validated_and_normalized() {
    let f = fixture();
    let (s, v) = post(&f.app, "/context", json!({"user_id": "u", "lat": 49.256, "lon": 7.042, "heading_deg": -10.0})).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["version"].as_u64().unwrap() > 0);
    assert_eq!(v["heading_deg"], 350.0);
    let (s, v) = post(&f.app, "/context", json!({"user_id": "u", "lat": 95.0, "lon": 7.042, "heading_deg": 0.0})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "invalid_context");
    let (s, v) = post(&f.app, "/context", json!({"user_id": "u", "lat": 49.0})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "bad_request");
}

#[tokio::test]
async fn frame_flag_decides_the_reading_of_front() {
    let f = fixture();
    place(&f.app, "u", 90.0).await;
    let q = "what is there in front of postbank?";
    let uc = ask(&f.app, "u", q, "user_centric").await;
    assert!(uc.logical_form.contains("rightOf"), "{}", uc.logical_form);
    assert_eq!(ids(&uc), ["east1", "east2"]);
    assert_eq!(uc.frame, egomedia_core::context::Frame::UserCentric);
    let geo = ask(&f.app, "u", q, "geomagnetic").await;
    assert!(geo.logical_form.contains("frontOf"));
    assert_eq!(ids(&geo), ["north1"]);
    let (s, v) = post(&f.app, "/query", json!({"user_id": "u", "text": q})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["frame"], "geomagnetic");
}

#[tokio::test]
async fn query_errors() {
    let f = fixture();
    let (s, v) = post(&f.app, "/query", json!({"user_id": "nobody", "text": "what is near postbank?"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "unknown_user");
    place(&f.app, "u", 0.0).await;
    let (s, v) = post(&f.app, "/query", json!({"user_id": "u", "text": "qwerty"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&v), "no_candidates");
    assert!(v["detail"].as_str().unwrap().contains("qwerty"));
    let (s, _) = post(&f.app, "/query", json!({"user_id": "u", "text": "   "})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn answers_are_deterministic_and_round_trip() {
    let f = fixture();
    place(&f.app, "u", 90.0).await;
    let q = "what is there on the right of postbank?";
    let a = ask(&f.app, "u", q, "geomagnetic").await;
    let b = ask(&f.app, "u", q, "geomagnetic").await;
    assert_ne!(a.query_id, b.query_id);
    assert_eq!((a.retrievals.clone(), &a.logical_form, a.params_version), (b.retrievals.clone(), &b.logical_form, b.params_version));

    let form = parse_canonical_text(&a.logical_form).unwrap();
    let s = store();
    let ctx = UserContext::new("u", 49.2560, 7.0420, 90.0, DayStamp::new(20150516).unwrap()).unwrap();
    let w = WorldSnapshot::from_parts(s.facts().facts().to_vec(), s.media().records().to_vec(), ctx);
    let d = evaluate(&form, &w, &GeometryConfig::default()).unwrap();
    assert_eq!(d.media_ids, ids(&a));
}

#[tokio::test]
async fn feedback_bumps_the_fork_every_time() {
    let f = fixture();
    place(&f.app, "u", 90.0).await;
    let r = ask(&f.app, "u", "what is there in front of postbank?", "geomagnetic").await;
    assert_eq!(r.params_version, 0);
    let marks: Vec<Value> = r.retrievals.iter().map(|x| json!({"media_id": x.media_id, "relevant": true})).collect();
    let body = json!({"user_id": "u", "query_id": r.query_id, "marks": marks});
    let (s, v1) = post(&f.app, "/feedback", body.clone()).await;
    assert_eq!(s, StatusCode::OK);
    let (_, v2) = post(&f.app, "/feedback", body).await;
    let (v1, v2) = (v1["params_version"].as_u64().unwrap(), v2["params_version"].as_u64().unwrap());
    assert!(v1 >= 1 && v2 == v1 + 1);
    let again = ask(&f.app, "u", "what is there in front of postbank?", "geomagnetic").await;
    assert_eq!(again.params_version, v2);

    let (s, v) = post(&f.app, "/feedback", json!({"user_id": "u", "query_id": r.query_id, "marks": [{"media_id": "south1", "relevant": true}]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "mark_not_shown");
    let (s, v) = post(&f.app, "/feedback", json!({"user_id": "u", "query_id": "nope", "marks": []})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "unknown_query");
    let (s, _) = post(&f.app, "/feedback", json!({"user_id": "other", "query_id": r.query_id, "marks": []})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn empty_marks_demote_and_still_bump() {
    let f = fixture();
    place(&f.app, "u", 0.0).await;
    let q = "what is there in front of postbank?";
    let r = ask(&f.app, "u", q, "geomagnetic").await;
    let mut last = 0;
    let mut forms = vec![r.logical_form.clone()];
    let mut qid = r.query_id;
    for _ in 0..30 {
        let (s, v) = post(&f.app, "/feedback", json!({"user_id": "u", "query_id": qid, "marks": []})).await;
        assert_eq!(s, StatusCode::OK);
        let v = v["params_version"].as_u64().unwrap();
        assert_eq!(v, last + 1);
        last = v;
        let r = ask(&f.app, "u", q, "geomagnetic").await;
        forms.push(r.logical_form.clone());
        qid = r.query_id;
    }
    assert_ne!(forms.first(), forms.last(), "repeated rejection should move the argmax");
}

#[tokio::test]
async fn one_users_feedback_leaves_others_alone() {
    let f = fixture();
    place(&f.app, "a", 90.0).await;
    place(&f.app, "b", 90.0).await;
    let q = "what is there in front of postbank?";
    let before = ask(&f.app, "b", q, "geomagnetic").await;
    for _ in 0..20 {
        let r = ask(&f.app, "a", q, "geomagnetic").await;
        let (s, _) = post(&f.app, "/feedback", json!({"user_id": "a", "query_id": r.query_id, "marks": []})).await;
        assert_eq!(s, StatusCode::OK);
    }
    let after = ask(&f.app, "b", q, "geomagnetic").await;
    assert_eq!((ids(&before), &before.logical_form, before.params_version), (ids(&after), &after.logical_form, after.params_version));
    let a = ask(&f.app, "a", q, "geomagnetic").await;
    assert_eq!(a.params_version, 20);
}

#[tokio::test]
async fn media_is_served_with_its_type() {
    let f = fixture();
    let (s, body) = call(&f.app, Method::GET, "/media/east1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"bytes of east1");
    let resp = f.app.clone().oneshot(Request::get("/media/east1").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "image/jpeg");
    let (s, _) = call(&f.app, Method::GET, "/media/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    std::fs::remove_file(f.dir.path().join("media").join("north1.jpg")).unwrap();
    let (s, b) = call(&f.app, Method::GET, "/media/north1", None).await;
    assert_eq!(s, StatusCode::GONE);
    assert_eq!(error_code(&serde_json::from_slice(&b).unwrap()), "media_gone");
}

#[tokio::test]
async fn forks_are_written_to_the_data_directory() {
    let f = fixture();
    place(&f.app, "ann", 0.0).await;
    let r = ask(&f.app, "ann", "what is near postbank?", "geomagnetic").await;
    let (s, _) = post(&f.app, "/feedback", json!({"user_id": "ann", "query_id": r.query_id, "marks": []})).await;
    assert_eq!(s, StatusCode::OK);
    let back = DataDir::open(f.dir.path()).unwrap().load_params().unwrap();
    assert_eq!(back.fork("ann").unwrap().version, 1);
    assert!(Path::new(&f.dir.path().join("params")).read_dir().unwrap().count() >= 1);
}

#[tokio::test]
async fn health_reports_the_world() {
    let f = fixture();
    let (s, b) = call(&f.app, Method::GET, "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!((v["facts"].as_u64(), v["media"].as_u64()), (Some(1), Some(4)));
}
