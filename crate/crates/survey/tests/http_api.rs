use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use headcheck_core::{Label, LabeledExample};
use headcheck_survey::server::{router, AppState};
use headcheck_survey::store::LogEvent;
use headcheck_survey::{create_survey, SurveyConfig, SurveyStore};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "operator-secret";

fn pool() -> Vec<LabeledExample> {
    (0..120)
        .map(|i| LabeledExample {
            text: format!("headline number {i}"),
            label: if i % 2 == 0 { Label::Generated } else { Label::Real },
            year: 2016,
        })
        .collect()
}

fn app() -> (Router, AppState) {
    let survey = create_survey(&pool(), &SurveyConfig { seed: 5, ..Default::default() }).unwrap();
    let state = AppState::new(SurveyStore::in_memory(survey), Some(TOKEN.into()));
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn has_key(v: &Value, key: &str) -> bool {
    match v {
        Value::Object(m) => m.contains_key(key) || m.values().any(|x| has_key(x, key)),
        Value::Array(a) => a.iter().any(|x| has_key(x, key)),
        _ => false,
    }
}

fn assert_participant_safe(body: &str) {
    let v: Value = serde_json::from_str(body).unwrap();
    assert!(!has_key(&v, "label"), "participant payload leaks a label: {body}");
    assert!(!body.contains("\"generated\"") && !body.contains("\"real\""), "payload carries a class value: {body}");
}

#[tokio::test]
async fn complete_session_sees_every_item_once_without_labels() {
    let (app, state) = app();
    let (status, body) = call(&app, "POST", "/sessions", None, None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_participant_safe(&body);
    let sid = serde_json::from_str::<Value>(&body).unwrap()["session_id"].as_str().unwrap().to_string();

    let mut seen = std::collections::HashSet::new();
    loop {
        let (status, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None, None).await;
        assert_eq!(status, StatusCode::OK);
        assert_participant_safe(&body);
        let v: Value = serde_json::from_str(&body).unwrap();
        if v.get("done").is_some() {
            assert_eq!(v["progress"], json!({"answered": 93, "total": 93}));
            break;
        }
        assert_eq!(v["progress"]["answered"].as_u64().unwrap() as usize, seen.len());
        let hid = v["headline_id"].as_str().unwrap().to_string();
        assert!(seen.insert(hid.clone()), "item {hid} served twice");
        let (status, body) = call(
            &app,
            "POST",
            &format!("/sessions/{sid}/judgments"),
            Some(json!({"headline_id": hid, "answer": "real"})),
            None,
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        assert_participant_safe(&body);
    }
    assert_eq!(seen.len(), 93);
    let judgments = state.store.events().iter().filter(|e| matches!(e, LogEvent::Judgment(_))).count();
    assert_eq!(judgments, 93);
}

#[tokio::test]
async fn rejections_have_distinct_statuses() {
    let (app, state) = app();
    let (_, body) = call(&app, "POST", "/sessions", None, None).await;
    let sid = serde_json::from_str::<Value>(&body).unwrap()["session_id"].as_str().unwrap().to_string();
    let hid = state.store.survey().items[0].headline_id.clone();
    let uri = format!("/sessions/{sid}/judgments");

    let (s, _) = call(&app, "POST", &uri, Some(json!({"headline_id": hid, "answer": "generated"})), None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, body) = call(&app, "POST", &uri, Some(json!({"headline_id": hid, "answer": "generated"})), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(body.contains("already answered"));
    let (s, _) = call(&app, "POST", &uri, Some(json!({"headline_id": hid, "answer": "maybe"})), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(state.store.judgments().len(), 1);
}

#[tokio::test]
async fn validation_and_unknowns() {
    let (app, state) = app();
    let (_, body) = call(&app, "POST", "/sessions", None, None).await;
    let sid = serde_json::from_str::<Value>(&body).unwrap()["session_id"].as_str().unwrap().to_string();
    let hid = state.store.survey().items[3].headline_id.clone();
    let uri = format!("/sessions/{sid}/judgments");
    let (s, _) = call(&app, "POST", &uri, Some(json!({"headline_id": hid, "answer": "maybe"})), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "POST", &uri, Some(json!({"headline_id": "h999", "answer": "real"})), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/sessions/nope/next", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(state.store.judgments().is_empty());
}

#[tokio::test]
async fn operator_routes_are_gated() {
    let (app, _) = app();
    let (s, _) = call(&app, "GET", "/surveys/headlines/aggregate", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&app, "GET", "/surveys/headlines/aggregate", None, Some("wrong")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&app, "GET", "/surveys/other/aggregate", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, body) = call(&app, "GET", "/surveys/headlines/aggregate", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["zero_judgments"], json!(true));
    let (s, body) = call(&app, "GET", "/surveys/headlines/headlines.csv", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.starts_with("headline_id,label,shown_count,correct_count\n"));
    assert_eq!(body.lines().count(), 94);
    let (s, _) = call(&app, "GET", "/surveys/headlines/log", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::OK);

    let survey = create_survey(&pool(), &SurveyConfig::default()).unwrap();
    let closed = router(AppState::new(SurveyStore::in_memory(survey), None));
    let (s, _) = call(&closed, "GET", "/surveys/headlines/aggregate", None, Some(TOKEN)).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn concurrent_sessions_keep_their_own_progress() {
    let (app, state) = app();
    let mut handles = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let (_, body) = call(&app, "POST", "/sessions", None, None).await;
            let sid = serde_json::from_str::<Value>(&body).unwrap()["session_id"].as_str().unwrap().to_string();
            for _ in 0..10 {
                let (_, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None, None).await;
                let hid = serde_json::from_str::<Value>(&body).unwrap()["headline_id"].as_str().unwrap().to_string();
                let (s, _) = call(
                    &app,
                    "POST",
                    &format!("/sessions/{sid}/judgments"),
                    Some(json!({"headline_id": hid, "answer": "generated"})),
                    None,
                )
                .await;
                assert_eq!(s, StatusCode::OK);
            }
        }));
    }
    for h in handles {
        h.await.unwrap();
    }
    let agg = state.store.aggregate(0.8);
    assert_eq!(agg.total_answers, 80);
    assert_eq!(agg.participants, 8);
    let shown: u64 = agg.per_headline.iter().map(|h| h.shown_count).sum();
    assert_eq!(shown, agg.total_answers);
    assert_eq!(agg.on_generated.correct + agg.on_real.correct, agg.total_correct);
}
