use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use ctrlbot_core::control::{ControlConfig, Engine, RoutePath, RoutingTrace};
use ctrlbot_core::generation::{BackendError, ExtractiveBackend, GenerationMode, LlmBackend, Prompt};
use ctrlbot_core::retrieval::{RetrievalConfig, RetrievalMethod};
use ctrlbot_service::{router, summarize, AnalyticsSummary, AppState, RatingRecord, ServiceConfig};
use ctrlbot_testkit::{fixture_engine, qa_cases};
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Server {
    base: String,
    state: Arc<AppState>,
    http: reqwest::Client,
    dir: tempfile::TempDir,
}

impl Server {
    async fn start_with(engine: Option<Engine>, tweak: impl FnOnce(&mut ServiceConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ServiceConfig::new(dir.path());
        config.token = None;
        tweak(&mut config);
        let state = AppState::new(config, engine).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = router(Arc::clone(&state));
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self { base, state, http: reqwest::Client::new(), dir }
    }

    async fn start() -> Self {
        Self::start_with(Some(fixture_engine()), |_| {}).await
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn chat(&self, session: Option<&str>, message: &str) -> (StatusCode, Value) {
        let mut body = json!({ "message": message });
        if let Some(s) = session {
            body["session_id"] = json!(s);
        }
        let resp = self.http.post(self.url("/chat")).json(&body).send().await.unwrap();
        (resp.status(), resp.json().await.unwrap())
    }

    async fn send(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.http.request(method, self.url(path));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    fn log_lines(&self, name: &str) -> Vec<String> {
        std::fs::read_to_string(self.dir.path().join(name))
            .unwrap()
            .lines()
            .map(str::to_string)
            .collect()
    }
}

fn question(path: RoutePath) -> String {
    qa_cases()
        .into_iter()
        .find(|c| c.expected_path == path && c.prior_turns.is_empty())
        .unwrap()
        .question
}

fn config_json(method: RetrievalMethod, mode: GenerationMode) -> Value {
    serde_json::to_value(ControlConfig::new(
        RetrievalConfig::new(method, 3),
        mode,
        ctrlbot_core::control::InvocationPolicy::OnNotConclusive,
    ))
    .unwrap()
}

#[tokio::test]
async fn chat_creates_sessions_and_logs_one_trace_per_answer() {
    let s = Server::start().await;
    let (status, body) = s.chat(None, "How much does dark chocolate cost?").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["trace"]["path"], "RuleConclusive");
    assert_eq!(body["answer"], "Dark chocolate costs 5 euro.");
    let session = body["session_id"].as_str().unwrap().to_string();
    assert!(!session.is_empty());

    let (status, err) = s.chat(Some(&session), "   ").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "bad_request");
    assert!(err["detail"].is_string());

    let before = s.log_lines("traces.jsonl");
    let (_, second) = s.chat(Some(&session), "Who founded the shop?").await;
    assert_eq!(second["trace"]["turn_id"], 2);
    let after = s.log_lines("traces.jsonl");
    assert_eq!(after.len(), 2);
    assert_eq!(&after[..1], &before[..]);

    let (_, list) = s.send(reqwest::Method::GET, &format!("/traces/{session}"), None).await;
    let list: Vec<RoutingTrace> = serde_json::from_value(list).unwrap();
    assert_eq!(list.iter().map(|t| t.turn_id).collect::<Vec<_>>(), vec![1, 2]);
}

#[tokio::test]
async fn without_a_knowledge_base_chat_is_unavailable() {
    let s = Server::start_with(None, |_| {}).await;
    let (status, body) = s.chat(None, "hello").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"], "kb_not_loaded");
    let (status, _) = s.send(reqwest::Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn config_reports_control_level_and_rejects_bad_weights() {
    let s = Server::start().await;
    let (status, level) = s
        .send(reqwest::Method::PUT, "/config", Some(config_json(RetrievalMethod::MetadataOnly, GenerationMode::NoGeneration)))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(level["label"], "maximum control");

    let (_, level) = s
        .send(reqwest::Method::PUT, "/config", Some(config_json(RetrievalMethod::Vector, GenerationMode::StandardPrompt)))
        .await;
    assert_eq!(level["label"], "low control");

    let mut bad = config_json(RetrievalMethod::Hybrid, GenerationMode::StandardPrompt);
    bad["retrieval"]["w_text"] = json!(0.5);
    bad["retrieval"]["w_meta"] = json!(0.3);
    bad["retrieval"]["w_vec"] = json!(0.3);
    let (status, err) = s.send(reqwest::Method::PUT, "/config", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "invalid_config");

    let mut unknown = config_json(RetrievalMethod::Hybrid, GenerationMode::StandardPrompt);
    unknown["generation"]["backend_id"] = json!("nowhere");
    let (status, _) = s.send(reqwest::Method::PUT, "/config", Some(unknown)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, current) = s.send(reqwest::Method::GET, "/config", None).await;
    assert_eq!(current["level"]["label"], "low control");

    let (_, body) = s.chat(None, "Who founded the shop?").await;
    assert_eq!(body["trace"]["config_snapshot"]["retrieval"]["method"], "Vector");
}

#[tokio::test]
async fn annotation_becomes_retrievable_after_reindex() {
    let s = Server::start().await;
    let meta = BTreeMap::from([("audience".to_string(), "kids".to_string())]);
    let cfg = RetrievalConfig::new(RetrievalMethod::MetadataOnly, 3);
    let search = |s: &Server| {
        let engine = s.state.engine().unwrap();
        engine
            .index()
            .search(engine.lemmatizer(), &engine.kb().ontology, "", &cfg, &meta)
            .unwrap()
            .into_iter()
            .map(|d| d.id.to_string())
            .collect::<Vec<_>>()
    };
    assert!(search(&s).is_empty());

    let (status, ack) = s
        .send(reqwest::Method::PATCH, "/documents/doc-gifts/annotations", Some(json!({ "audience": "kids" })))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["revision"], 2);
    assert!(search(&s).is_empty(), "edits wait for the next reindex");

    let (status, stats) = s.send(reqwest::Method::POST, "/reindex", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["documents"], 12);
    assert_eq!(search(&s), vec!["doc-gifts".to_string()]);
    assert!(s.dir.path().join("kb/documents").is_dir());
}

#[tokio::test]
async fn documents_can_be_added_listed_and_deleted() {
    let s = Server::start().await;
    let (status, ack) = s
        .send(
            reqwest::Method::POST,
            "/documents",
            Some(json!({ "title": "Easter", "body": "Easter eggs are sold in March.", "metadata": { "topic": ["chocolate"] } })),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = ack["id"].as_str().unwrap().to_string();
    let (_, docs) = s.send(reqwest::Method::GET, "/documents", None).await;
    assert_eq!(docs.as_array().unwrap().len(), 13);

    let (status, _) = s.send(reqwest::Method::DELETE, &format!("/documents/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, err) = s.send(reqwest::Method::DELETE, "/documents/no-such-doc", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "not_found");
    let (status, _) = s
        .send(reqwest::Method::PATCH, "/documents/no-such-doc/annotations", Some(json!({ "a": "b" })))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = s.send(reqwest::Method::POST, "/documents", Some(json!({ "title": "x", "body": "  " }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_reindex_is_refused() {
    let s = Server::start_with(Some(fixture_engine()), |c| c.reindex_delay = Duration::from_millis(400)).await;
    let a = s.http.post(s.url("/reindex")).send();
    let b = async {
        tokio::time::sleep(Duration::from_millis(100)).await;
        s.http.post(s.url("/reindex")).send().await
    };
    let (a, b) = tokio::join!(a, b);
    let mut codes = [a.unwrap().status(), b.unwrap().status()];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
    let (status, _) = s.send(reqwest::Method::POST, "/reindex", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn ratings_feed_analytics_and_end_users_are_limited() {
    let s = Server::start().await;
    let mut session = None;
    for path in [RoutePath::RuleConclusive, RoutePath::RagGenerated, RoutePath::Refusal] {
        let (_, body) = s.chat(session.as_deref(), &question(path)).await;
        assert_eq!(body["trace"]["path"], path.to_string());
        session = Some(body["session_id"].as_str().unwrap().to_string());
    }
    let session = session.unwrap();

    let (_, summary) = s.send(reqwest::Method::GET, "/analytics", None).await;
    let summary: AnalyticsSummary = serde_json::from_value(summary).unwrap();
    assert_eq!(summary.turns, 3);
    assert_eq!(summary.paths[&RoutePath::RuleConclusive], 1);
    assert_eq!(summary.paths[&RoutePath::RagGenerated], 1);
    assert_eq!(summary.paths[&RoutePath::Refusal], 1);
    assert_eq!(summary.refusals, 1);

    let rating = |turn: u64, rater: &str| json!({ "session_id": session, "turn_id": turn, "rater": rater, "verdict": "good" });
    let (status, _) = s.send(reqwest::Method::POST, "/ratings", Some(rating(1, "client_editor"))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = s.send(reqwest::Method::POST, "/ratings", Some(rating(9, "client_editor"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = s
        .send(reqwest::Method::POST, "/ratings", Some(json!({ "session_id": "nobody", "turn_id": 1, "rater": "end_user", "verdict": "bad" })))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    for _ in 0..3 {
        let (status, _) = s.send(reqwest::Method::POST, "/ratings", Some(rating(2, "end_user"))).await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let (status, err) = s.send(reqwest::Method::POST, "/ratings", Some(rating(2, "end_user"))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(err["error"], "rate_limited");

    let (_, served) = s.send(reqwest::Method::GET, "/analytics", None).await;
    let served: AnalyticsSummary = serde_json::from_value(served).unwrap();
    assert_eq!(served.ratings[&ctrlbot_service::Rater::ClientEditor].good, 1);
    assert_eq!(served.ratings[&ctrlbot_service::Rater::EndUser].good, 3);

    // recomputed from the raw files, the summary is the same
    let traces: Vec<RoutingTrace> = s.log_lines("traces.jsonl").iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    let ratings: Vec<RatingRecord> = s.log_lines("ratings.jsonl").iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(summarize(&traces, &ratings, None, None), served);

    let (_, empty) = s.send(reqwest::Method::GET, "/analytics?from=2000-01-01T00:00:00Z&to=2000-01-02T00:00:00Z", None).await;
    assert_eq!(empty["turns"], 0);
    let (status, _) = s.send(reqwest::Method::GET, "/analytics?from=yesterday", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn editor_endpoints_need_the_token() {
    let s = Server::start_with(Some(fixture_engine()), |c| c.token = Some("s3cret".into())).await;
    let body = config_json(RetrievalMethod::MetadataOnly, GenerationMode::NoGeneration);
    let (status, err) = s.send(reqwest::Method::PUT, "/config", Some(body.clone())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(err["error"], "unauthorized");
    let resp = s.http.put(s.url("/config")).bearer_auth("s3cret").json(&body).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let (status, _) = s.send(reqwest::Method::POST, "/reindex", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = s.chat(None, "Hello there").await;
    assert_eq!(status, StatusCode::OK);
}

/// Extractive mock that takes its time, to hold a turn open.
struct SlowMock(ExtractiveBackend);

impl LlmBackend for SlowMock {
    fn id(&self) -> &str {
        self.0.id()
    }

    fn complete(&self, prompt: &Prompt, temperature: f64) -> Result<String, BackendError> {
        std::thread::sleep(Duration::from_millis(400));
        self.0.complete(prompt, temperature)
    }

    fn health(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

#[tokio::test]
async fn config_change_does_not_touch_a_turn_in_flight() {
    let mut engine = fixture_engine();
    let slow = SlowMock(ExtractiveBackend::new(Arc::clone(engine.lemmatizer())));
    engine.backends_mut().register(Arc::new(slow));
    let s = Server::start_with(Some(engine), |_| {}).await;
    let q = question(RoutePath::RagGenerated);

    let turn = s.chat(Some("snap"), &q);
    let change = async {
        tokio::time::sleep(Duration::from_millis(100)).await;
        s.send(reqwest::Method::PUT, "/config", Some(config_json(RetrievalMethod::Hybrid, GenerationMode::NoGeneration)))
            .await
    };
    let ((_, first), (status, _)) = tokio::join!(turn, change);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["trace"]["path"], "RagGenerated");
    assert_eq!(first["trace"]["config_snapshot"]["generation"]["mode"], "StandardPrompt");

    let (_, second) = s.chat(Some("snap"), &q).await;
    assert_eq!(second["trace"]["path"], "RagNoGeneration");
}

#[tokio::test]
async fn static_files_are_served_when_configured() {
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<h1>console</h1>").unwrap();
    let dir = web.path().to_path_buf();
    let s = Server::start_with(Some(fixture_engine()), move |c| c.static_dir = Some(dir)).await;
    let resp = s.http.get(s.url("/index.html")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.text().await.unwrap().contains("console"));
}

#[tokio::test]
async fn turn_numbering_continues_after_restart() {
    let s = Server::start().await;
    let (_, body) = s.chat(Some("again"), "Hello there").await;
    assert_eq!(body["trace"]["turn_id"], 1);
    let config = {
        let mut c = ServiceConfig::new(s.dir.path());
        c.token = None;
        c
    };
    let state = AppState::new(config, Some(fixture_engine())).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    let body: Value = s
        .http
        .post(format!("{base}/chat"))
        .json(&json!({ "session_id": "again", "message": "Hello there" }))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(body["trace"]["turn_id"], 2);
}

#[tokio::test]
async fn bundled_console_is_served() {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../webui");
    let s = Server::start_with(Some(fixture_engine()), move |c| c.static_dir = Some(dir)).await;
    let resp = s.http.get(s.url("/")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let html = resp.text().await.unwrap();
    for endpoint in ["/chat", "/config", "/ratings", "/analytics", "/documents", "/reindex", "/health"] {
        assert!(html.contains(&format!("\"{endpoint}")), "{endpoint}");
    }
}
