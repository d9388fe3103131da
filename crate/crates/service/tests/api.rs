use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use fuzzkb_core::fuzzy_rough::{bias_proxy, complexity, top_rules, ScoringConfig};
use fuzzkb_core::query::{closest_rule, resolve, Query, QueryKind, QueryResult};
use fuzzkb_core::rulebase::{prolog_string, FuzzyRule, KnowledgeBase};
use fuzzkb_core::dataset::SplitConfig;
use fuzzkb_service::api::router;
use fuzzkb_service::chat::{Attachment, Chart, MessageReply, ReplyStatus};
use fuzzkb_service::eda;
use fuzzkb_service::pipeline::{build_scored_kb, run_baseline, Prepared};
use fuzzkb_service::session::SessionStore;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn app() -> Router {
    router(Arc::new(SessionStore::new(data_dir())))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, bytes) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn session(app: &Router) -> String {
    let (s, v) = json_call(app, Method::POST, "/api/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    v["id"].as_str().unwrap().to_string()
}

async fn say(app: &Router, id: &str, text: &str) -> MessageReply {
    let (s, v) = json_call(app, Method::POST, &format!("/api/sessions/{id}/message"), Some(json!({ "text": text }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    serde_json::from_value(v).unwrap()
}

/// The KB the service builds for wine with the default build settings.
fn direct_wine_kb() -> (Prepared, KnowledgeBase) {
    let p = Prepared::load(&data_dir().join("wine.arff")).unwrap();
    let run = run_baseline(&p.clean, 5, SplitConfig::default()).unwrap();
    let kb = build_scored_kb(&p.clean, &run.predictions, 5, ScoringConfig::default()).unwrap();
    (p, kb)
}

#[tokio::test]
async fn lifecycle_errors_have_proper_status() {
    let app = app();
    let (s, _) = json_call(&app, Method::GET, "/api/sessions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let id = session(&app).await;
    let base = format!("/api/sessions/{id}");
    let q = json!({ "desired_class": "class_1", "unknowns": ["alcohol"] });
    let (s, v) = json_call(&app, Method::POST, &format!("{base}/query/whatif"), Some(q.clone())).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "conflict");
    assert!(v["message"].as_str().unwrap().contains("not built"));

    let (s, _) = json_call(&app, Method::POST, &format!("{base}/train"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, _) = json_call(&app, Method::POST, &format!("{base}/dataset"), Some(json!({ "name": "wine" }))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/build"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "building requires predictions");

    let (s, v) = json_call(&app, Method::POST, &format!("{base}/train"), Some(json!({ "k": "five" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "validation");
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/train"), Some(json!({ "neighbours": 3 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/dataset"), Some(json!({ "name": "../x" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = json_call(&app, Method::POST, &format!("{base}/train"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/build"), Some(json!({ "lambda": -1.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/build"), Some(json!({ "implicator": "mystery" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/build"), None).await;
    assert_eq!(s, StatusCode::OK);

    let bad = json!({ "desired_class": "class_1", "unknowns": ["colour"] });
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/query/whatif"), Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/query/whatif"), Some(q)).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = json_call(&app, Method::GET, &format!("{base}/top-rules?n=0"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = json_call(&app, Method::GET, &format!("{base}/histogram"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn structured_endpoints_match_library_calls() {
    let app = app();
    let id = session(&app).await;
    let base = format!("/api/sessions/{id}");
    json_call(&app, Method::POST, &format!("{base}/dataset"), Some(json!({ "name": "wine" }))).await;
    json_call(&app, Method::POST, &format!("{base}/train"), None).await;
    let (s, build) = json_call(&app, Method::POST, &format!("{base}/build"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(build["rules"], 178);

    let (p, kb) = direct_wine_kb();

    let (_, text) = call(&app, Method::GET, &format!("{base}/kb.pl"), None).await;
    assert_eq!(String::from_utf8(text).unwrap(), prolog_string(&kb));
    let (_, served) = call(&app, Method::GET, &format!("{base}/kb.json"), None).await;
    assert_eq!(KnowledgeBase::from_json(std::str::from_utf8(&served).unwrap()).unwrap(), kb);

    let (_, v) = json_call(&app, Method::GET, &format!("{base}/complexity"), None).await;
    assert_eq!(v["value"].as_f64().unwrap(), complexity(&kb).unwrap());

    let (_, v) = json_call(&app, Method::GET, &format!("{base}/bias?feature=alcohol"), None).await;
    assert_eq!(v["value"].as_f64().unwrap(), bias_proxy(&kb, "alcohol", &kb.scoring).unwrap());

    let (_, v) = json_call(&app, Method::GET, &format!("{base}/top-rules?n=4"), None).await;
    let served: Vec<FuzzyRule> = serde_json::from_value(v).unwrap();
    let direct: Vec<FuzzyRule> = top_rules(&kb, 4).unwrap().into_iter().cloned().collect();
    assert_eq!(served, direct);

    let query = Query {
        kind: QueryKind::Counterfactual,
        desired_class: kb.class_domain[0].clone(),
        contrast_class: Some(kb.class_domain[1].clone()),
        known: [(kb.features[0].name.clone(), kb.features[0].terms[2].clone())].into(),
        unknowns: vec![kb.features[1].name.clone(), kb.features[2].name.clone()],
        constraints: Default::default(),
        limit: Some(5),
    };
    for (path, kind) in [("whatif", QueryKind::Whatif), ("counterfactual", QueryKind::Counterfactual)] {
        let (s, v) = json_call(&app, Method::POST, &format!("{base}/query/{path}"), Some(serde_json::to_value(&query).unwrap())).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        let served: QueryResult = serde_json::from_value(v).unwrap();
        let direct = resolve(&kb, &Query { kind, ..query.clone() }).unwrap();
        assert_eq!(served, direct);
    }

    let (_, v) = json_call(&app, Method::GET, &format!("{base}/closest?rule_id=7"), None).await;
    let served: FuzzyRule = serde_json::from_value(v["closest"].clone()).unwrap();
    assert_eq!(&served, closest_rule(&kb, kb.rule(7).unwrap()).unwrap());

    let (_, v) = json_call(&app, Method::GET, &format!("{base}/histogram?feature=alcohol&bins=8"), None).await;
    assert_eq!(serde_json::from_value::<eda::HistogramSeries>(v).unwrap(), eda::histogram(&p.imputed, "alcohol", 8).unwrap());
    let (_, v) = json_call(&app, Method::GET, &format!("{base}/correlation?a=alcohol&b=ash"), None).await;
    assert_eq!(serde_json::from_value::<eda::CorrelationSeries>(v).unwrap(), eda::correlation(&p.imputed, "alcohol", "ash").unwrap());
    let (_, v) = json_call(&app, Method::GET, &format!("{base}/correlation-matrix"), None).await;
    assert_eq!(serde_json::from_value::<eda::CorrelationMatrix>(v).unwrap(), eda::correlation_matrix(&p.imputed));

    let (_, v) = json_call(&app, Method::GET, &format!("{base}/schema"), None).await;
    assert_eq!(v["features"].as_array().unwrap().len(), kb.features.len());
    assert_eq!(v["features"][0]["terms"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn predictions_can_be_uploaded() {
    let app = app();
    let id = session(&app).await;
    let base = format!("/api/sessions/{id}");
    json_call(&app, Method::POST, &format!("{base}/dataset"), Some(json!({ "name": "wine" }))).await;
    let (p, _) = direct_wine_kb();
    let csv: String = std::iter::once("id,class,confidence\n".to_string())
        .chain((0..p.clean.len()).map(|i| format!("{i},{},1\n", p.clean.class_label(i))))
        .collect();
    let (s, v) = json_call(&app, Method::POST, &format!("{base}/predictions"), Some(json!({ "csv": csv }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["count"], 178);
    let (s, _) = json_call(&app, Method::POST, &format!("{base}/predictions"), Some(json!({ "csv": "id,class\n0,nope\n" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    // The failed upload left the earlier predictions in place.
    let (s, v) = json_call(&app, Method::POST, &format!("{base}/build"), Some(json!({ "symbols": 3 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["rules"], 178);
}

#[tokio::test]
async fn scripted_conversation_on_diabetes() {
    let app = app();
    let id = session(&app).await;

    let r = say(&app, &id, "Load the diabetes dataset").await;
    assert_eq!(r.status, ReplyStatus::Ok, "{}", r.reply_text);

    let r = say(&app, &id, "Tell me more about the data.").await;
    assert!(r.reply_text.contains("768 instances in total"), "{}", r.reply_text);
    for f in ["Preg", "Gluc", "Pres", "Skin", "Insu", "Mass", "Pedi", "Age"] {
        assert!(r.reply_text.contains(f), "{f}");
    }

    let r = say(&app, &id, "How is BMI distributed?").await;
    assert_eq!(r.status, ReplyStatus::Ok, "{}", r.reply_text);
    match &r.attachments[..] {
        [Attachment::ChartSeries(Chart::Histogram(h))] => {
            assert_eq!(h.feature, "mass");
            assert_eq!(h.counts.iter().sum::<usize>(), 768);
        }
        other => panic!("unexpected attachments {other:?}"),
    }

    let r = say(&app, &id, "How are Age and Pres correlated?").await;
    assert!(r.reply_text.starts_with("The correlation value between Age and Pres is"), "{}", r.reply_text);
    assert!(matches!(&r.attachments[..], [Attachment::ChartSeries(Chart::Scatter(_))]));

    let r = say(&app, &id, "What values should Preg and Gluc take while Age is medium for the outcome to be tested_negative instead of tested_positive?").await;
    assert_eq!(r.status, ReplyStatus::Conflict, "{}", r.reply_text);

    let r = say(&app, &id, "Train the model with a maximum depth of 7 and use 200 estimators.").await;
    assert_eq!(r.status, ReplyStatus::Ok, "{}", r.reply_text);
    assert!(r.reply_text.contains("k = 200"), "{}", r.reply_text);
    assert!(r.reply_text.contains("max_depth"), "{}", r.reply_text);
    let r = say(&app, &id, "Train the model on this data.").await;
    assert!(r.reply_text.contains("k = 5"), "{}", r.reply_text);

    let r = say(&app, &id, "How did you split the data?").await;
    assert!(r.reply_text.contains("(614 instances)") && r.reply_text.contains("(154 instances)"), "{}", r.reply_text);

    let r = say(&app, &id, "Can you construct the symbolic explanation module?").await;
    assert_eq!(r.status, ReplyStatus::Ok, "{}", r.reply_text);
    assert!(r.reply_text.contains("tested_negative and tested_positive"), "{}", r.reply_text);

    let r = say(&app, &id, "What is the complexity of the loaded problem?").await;
    assert!(r.reply_text.starts_with("The complexity of this problem is 0."), "{}", r.reply_text);

    let r = say(&app, &id, "If Preg is very low, Gluc is low, and the outcome is tested_negative, what is Age?").await;
    assert_eq!(r.status, ReplyStatus::Ok, "{}", r.reply_text);
    let Some(Attachment::QueryResult { result }) = r.attachments.first() else { panic!("no query result") };
    // The reply shows the service payload at three decimals.
    if let Some(top) = result.solutions.first() {
        assert!(r.reply_text.contains(&format!("with a certainty of {:.3}.", top.bindings[0].confidence)));
        assert!(r.reply_text.ends_with(&format!("The entire rule has a certainty of {:.3}.", top.rule_confidence)));
        let r = say(&app, &id, "What rule is closest to this one?").await;
        assert!(r.reply_text.starts_with("I found that the following rule is the closest: If Preg is"), "{}", r.reply_text);
    } else {
        assert!(r.reply_text.starts_with("I could not find any rule"));
    }

    let r = say(&app, &id, "What values should Preg and Gluc take while Age is medium for the outcome to be tested_negative instead of tested_positive?").await;
    assert_eq!(r.status, ReplyStatus::Ok, "{}", r.reply_text);
    let Some(Attachment::QueryResult { result }) = r.attachments.first() else { panic!("no query result") };
    assert_eq!(result.kind, QueryKind::Counterfactual);
    assert_eq!(result.contrast_class.as_deref(), Some("tested_positive"));
    if !result.solutions.is_empty() {
        assert!(r.reply_text.contains("Preg should be"), "{}", r.reply_text);
    }

    let r = say(&app, &id, "Show me the top 5 rules").await;
    match &r.attachments[..] {
        [Attachment::KbExcerpt { rules }] => assert_eq!(rules.len(), 5),
        other => panic!("unexpected attachments {other:?}"),
    }

    let r = say(&app, &id, "If Height is tall and the outcome is tested_negative, what is Age?").await;
    assert_eq!(r.status, ReplyStatus::Rejected, "{}", r.reply_text);
    assert!(r.reply_text.contains("Please use these feature names"), "{}", r.reply_text);

    let r = say(&app, &id, "Sing me a song about clouds").await;
    assert_eq!(r.status, ReplyStatus::Rejected);

    let (_, events) = json_call(&app, Method::GET, &format!("/api/sessions/{id}/events"), None).await;
    assert_eq!(events.as_array().unwrap().len() % 2, 0);
    assert_eq!(events[0]["author"], "user");
    assert_eq!(events[1]["author"], "bot");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn readers_never_see_a_partial_kb() {
    let app = app();
    let id = session(&app).await;
    let base = format!("/api/sessions/{id}");
    json_call(&app, Method::POST, &format!("{base}/dataset"), Some(json!({ "name": "wine" }))).await;
    json_call(&app, Method::POST, &format!("{base}/train"), None).await;

    let builder = {
        let app = app.clone();
        let base = base.clone();
        tokio::spawn(async move { json_call(&app, Method::POST, &format!("{base}/build"), None).await })
    };
    let mut seen = Vec::new();
    for _ in 0..20 {
        let (s, v) = json_call(&app, Method::GET, &format!("{base}/complexity"), None).await;
        seen.push((s, v));
    }
    let (s, _) = builder.await.unwrap();
    assert_eq!(s, StatusCode::OK);
    let (_, kb) = direct_wine_kb();
    let full = complexity(&kb).unwrap();
    for (s, v) in seen {
        match s {
            StatusCode::CONFLICT => {}
            StatusCode::OK => assert_eq!(v["value"].as_f64().unwrap(), full),
            other => panic!("unexpected status {other}"),
        }
    }
}

#[tokio::test]
async fn sessions_are_isolated() {
    let app = app();
    let a = session(&app).await;
    let b = session(&app).await;
    json_call(&app, Method::POST, &format!("/api/sessions/{a}/dataset"), Some(json!({ "name": "wine" }))).await;
    let (_, va) = json_call(&app, Method::GET, &format!("/api/sessions/{a}"), None).await;
    let (_, vb) = json_call(&app, Method::GET, &format!("/api/sessions/{b}"), None).await;
    assert_eq!(va["dataset"], "wine");
    assert!(vb["dataset"].is_null());
    let (s, _) = call(&app, Method::DELETE, &format!("/api/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = json_call(&app, Method::GET, &format!("/api/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (_, v) = json_call(&app, Method::GET, "/api/datasets", None).await;
    assert!(v.as_array().unwrap().iter().any(|d| d == "diabetes"));
}
