use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use revdict_client::Client;
use revdict_core::api::{
    EmbeddingPaths, Engine, Health, HealthStatus, ModelInfo, QueryRequest, QueryResponse,
};
use revdict_core::checkpoint::Checkpoint;
use revdict_core::dataset::Instance;
use revdict_core::embeddings::{write_fixture, Embeddings, DEFAULT_MAX_SENSES};
use revdict_core::model::{EncoderConfig, InputMode, TargetMode};
use revdict_core::ranking::TargetIndex;
use revdict_core::synth::overfit_set;
use revdict_core::train::{train, TrainConfig};
use revdict_service::{router, serve_on, ServeConfig, ServiceState};
use tower::ServiceExt;

struct Fixture {
    emb: Embeddings,
    instances: Vec<Instance>,
    checkpoint: Checkpoint,
}

fn fixture(mode: InputMode) -> Fixture {
    let (emb, instances) = overfit_set(21, 24, 8, 3);
    let words: Vec<String> = instances.iter().map(|i| i.target.clone()).collect();
    let index = TargetIndex::build(
        TargetMode::MultiSense,
        words.iter().map(String::as_str),
        &emb,
    )
    .unwrap();
    let enc = EncoderConfig {
        input_mode: mode,
        hidden_dim: 16,
        seed: 21,
        ..EncoderConfig::default()
    };
    let tc = TrainConfig {
        batch_size: 8,
        max_epochs: 150,
        patience: 150,
        lr: 1e-2,
        seed: 21,
        ..TrainConfig::default()
    };
    let out = train(&instances, &instances, &emb, &index, &enc, &tc, |_| {}).unwrap();
    let checkpoint = Checkpoint::new(&out.model, words);
    Fixture {
        emb,
        instances,
        checkpoint,
    }
}

fn loaded(f: &Fixture) -> ServiceState {
    let state = ServiceState::new();
    state
        .install(Engine::new(&f.checkpoint, f.emb.clone()).unwrap())
        .unwrap();
    state
}

async fn call(app: axum::Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
        .await
        .unwrap();
    let json = serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null);
    (status, json)
}

fn get(path: &str) -> Request<Body> {
    Request::get(path).body(Body::empty()).unwrap()
}

fn post_json(path: &str, body: &serde_json::Value) -> Request<Body> {
    Request::post(path)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn reports_loading_until_a_model_is_installed() {
    let state = ServiceState::new();
    let app = router(state.clone(), None);
    let (s, body) = call(app.clone(), get("/api/v1/health")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["status"], "loading");
    let (s, _) = call(app.clone(), get("/api/v1/model")).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    let (s, _) = call(
        app.clone(),
        post_json("/api/v1/query", &serde_json::json!({"definition": "w1"})),
    )
    .await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);

    let f = fixture(InputMode::AttentionMultiSense);
    state
        .install(Engine::new(&f.checkpoint, f.emb.clone()).unwrap())
        .unwrap();
    let (_, body) = call(app.clone(), get("/api/v1/health")).await;
    assert_eq!(body["status"], "ok");
    let (s, body) = call(app, get("/api/v1/model")).await;
    assert_eq!(s, StatusCode::OK);
    let info: ModelInfo = serde_json::from_value(body).unwrap();
    assert_eq!(info.input_mode, f.checkpoint.config.input_mode);
    assert_eq!(info.target_mode, f.checkpoint.config.target_mode);
    assert_eq!(info.checkpoint_id, f.checkpoint.id());
}

#[tokio::test]
async fn training_definition_ranks_its_word_first() {
    let f = fixture(InputMode::AttentionMultiSense);
    let app = router(loaded(&f), None);
    let inst = &f.instances[3];
    let req = serde_json::json!({"definition": inst.tokens.join(" "), "top_k": 5, "trace": true});
    let (s, body) = call(app, post_json("/api/v1/query", &req)).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let resp: QueryResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.candidates.len(), 5);
    assert_eq!(resp.candidates[0].word, inst.target);
    for (i, c) in resp.candidates.iter().enumerate() {
        assert_eq!(c.rank, i + 1);
    }
    let trace = resp.trace.expect("trace requested");
    assert_eq!(trace.len(), inst.tokens.len());
    for row in &trace {
        assert_eq!(row.weights.len(), row.senses_considered);
        assert!((row.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }
}

#[tokio::test]
async fn invalid_requests_are_400() {
    let f = fixture(InputMode::FirstMultiSense);
    let app = router(loaded(&f), None);
    for body in [
        serde_json::json!({"definition": ""}),
        serde_json::json!({"definition": "  ?! ... "}),
        serde_json::json!({"definition": "w1", "top_k": 0}),
        serde_json::json!({"definition": "w1", "top_k": 101}),
        serde_json::json!({"top_k": 3}),
    ] {
        let (s, resp) = call(app.clone(), post_json("/api/v1/query", &body)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body} -> {resp}");
        assert!(resp["error"].is_string());
    }
    let malformed = Request::post("/api/v1/query")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(call(app, malformed).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn non_attention_models_omit_the_trace() {
    let f = fixture(InputMode::FirstMultiSense);
    let app = router(loaded(&f), None);
    let req = serde_json::json!({"definition": "w1 w2", "trace": true});
    let (s, body) = call(app, post_json("/api/v1/query", &req)).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.get("trace").is_none());
    assert_eq!(body["candidates"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn serves_static_files_next_to_the_api() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(ServiceState::new(), Some(dir.path().to_owned()));
    let resp = app.clone().oneshot(get("/")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
        .await
        .unwrap();
    assert_eq!(&bytes[..], b"<html>ui</html>");
    assert_eq!(
        call(app.clone(), get("/missing.js")).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(call(app, get("/api/v1/health")).await.0, StatusCode::OK);
}

fn write_checkpoint(f: &Fixture, dir: &std::path::Path) -> (PathBuf, EmbeddingPaths) {
    let (single, multi) = write_fixture(&f.emb, dir).unwrap();
    let path = dir.join("model.json");
    f.checkpoint.save(&path).unwrap();
    (
        path,
        EmbeddingPaths {
            single,
            multi,
            max_senses: DEFAULT_MAX_SENSES,
        },
    )
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn client_round_trip_over_http() {
    let f = fixture(InputMode::AttentionMultiSense);
    let dir = tempfile::tempdir().unwrap();
    let (checkpoint, embeddings) = write_checkpoint(&f, dir.path());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_on(
        listener,
        ServeConfig {
            addr,
            checkpoint,
            embeddings: Some(embeddings),
            static_dir: None,
        },
        async {
            let _ = stop_rx.await;
        },
    ));

    let client = Client::new(format!("http://{addr}"));
    let mut health = client.health().await.unwrap();
    for _ in 0..200 {
        if health.status == HealthStatus::Ok {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
        health = client.health().await.unwrap();
    }
    assert_eq!(
        health,
        Health {
            status: HealthStatus::Ok
        }
    );
    assert_eq!(
        client.model().await.unwrap().checkpoint_id,
        f.checkpoint.id()
    );

    // Concurrent identical requests get identical answers.
    let req = QueryRequest {
        trace: true,
        ..QueryRequest::new(f.instances[0].tokens.join(" "))
    };
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let c = client.clone();
            let r = req.clone();
            tokio::spawn(async move { c.query(&r).await.unwrap() })
        })
        .collect();
    let mut responses = Vec::new();
    for h in handles {
        responses.push(h.await.unwrap());
    }
    assert!(responses.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(responses[0].candidates[0].word, f.instances[0].target);

    let err = client.query(&QueryRequest::new("")).await.unwrap_err();
    assert_eq!(err.status(), Some(reqwest_status(400)));

    stop_tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}

fn reqwest_status(code: u16) -> axum::http::StatusCode {
    axum::http::StatusCode::from_u16(code).unwrap()
}

#[tokio::test]
async fn load_failure_stops_the_server() {
    let dir = tempfile::tempdir().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let result = serve_on(
        listener,
        ServeConfig {
            addr,
            checkpoint: dir.path().join("missing.json"),
            embeddings: None,
            static_dir: None,
        },
        std::future::pending(),
    )
    .await;
    assert!(
        matches!(result, Err(revdict_service::ServiceError::Load(_))),
        "{result:?}"
    );
}
