//! Request and response shapes for every HTTP backend, against local stubs.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use mmre_core::embedding::{EmbeddingBackend, HttpEmbedder, OpenAiEmbedder};
use mmre_core::generation::{GenerationBackend, HttpGenerator};
use mmre_core::http::HttpConfig;
use mmre_core::llm::{ChatMessage, HttpChat, LlmBackend, OpenAiChat};
use mmre_core::BackendError;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    body: Value,
    auth: Option<String>,
}

type Handler = dyn Fn(&Seen) -> (u16, String) + Send + Sync;

/// Serve requests on a random local port; returns the base URL and the
/// request log.
fn stub(handler: Box<Handler>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    let log = Arc::new(Mutex::new(Vec::new()));
    let log2 = log.clone();
    std::thread::spawn(move || {
        for mut rq in server.incoming_requests() {
            let mut body = String::new();
            rq.as_reader().read_to_string(&mut body).unwrap();
            let auth = rq
                .headers()
                .iter()
                .find(|h| h.field.equiv("Authorization"))
                .map(|h| h.value.to_string());
            let seen = Seen {
                path: rq.url().to_string(),
                body: serde_json::from_str(&body).unwrap_or(Value::Null),
                auth,
            };
            let (status, reply) = handler(&seen);
            log2.lock().unwrap().push(seen);
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = rq.respond(
                tiny_http::Response::from_string(reply)
                    .with_status_code(status)
                    .with_header(header),
            );
        }
    });
    (format!("http://127.0.0.1:{port}"), log)
}

fn fast() -> HttpConfig {
    HttpConfig {
        timeout: Duration::from_secs(10),
        retries: 2,
        backoff: Duration::from_millis(5),
    }
}

#[test]
fn generate_contract() {
    let (url, log) = stub(Box::new(|s| {
        let inputs = s.body["inputs"].as_array().unwrap();
        let outputs: Vec<String> = inputs.iter().map(|i| format!("out:{}", i.as_str().unwrap())).collect();
        (200, json!({"outputs": outputs, "metadata": {"truncated": []}}).to_string())
    }));
    let g = HttpGenerator::new(&url, "t5", fast()).unwrap();
    let inputs: Vec<String> = (0..6).map(|i| format!("in{i}")).collect();
    let out = g.generate(&inputs).unwrap();
    assert_eq!(out, (0..6).map(|i| format!("out:in{i}")).collect::<Vec<_>>());
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].path, "/generate");
    assert_eq!(seen[0].body, json!({"inputs": inputs}));
}

#[test]
fn generate_rejects_wrong_output_count() {
    let (url, _) = stub(Box::new(|_| (200, json!({"outputs": ["only one"]}).to_string())));
    let g = HttpGenerator::new(&url, "t5", fast()).unwrap();
    let err = g.generate(&["a".into(), "b".into()]).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
}

#[test]
fn embed_contract_with_bearer_key() {
    let (url, log) = stub(Box::new(|s| {
        let n = s.body["inputs"].as_array().unwrap().len();
        (200, json!({"vectors": vec![vec![0.5, 0.5]; n]}).to_string())
    }));
    let e = HttpEmbedder::new(&url, "clip-text", 2, Some("sekret".into()), fast()).unwrap();
    let v = e.embed_batch(&["x".into(), "y".into()]).unwrap();
    assert_eq!(v, vec![vec![0.5, 0.5]; 2]);
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].path, "/embed");
    assert_eq!(seen[0].body, json!({"model": "clip-text", "inputs": ["x", "y"]}));
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sekret"));
}

#[test]
fn openai_embeddings_reordered_by_index() {
    let (url, log) = stub(Box::new(|_| {
        (
            200,
            json!({"data": [
                {"index": 1, "embedding": [0.0, 1.0]},
                {"index": 0, "embedding": [1.0, 0.0]}
            ]})
            .to_string(),
        )
    }));
    let e = OpenAiEmbedder::new(&url, "text-embedding-3-small", 2, None, fast()).unwrap();
    let v = e.embed_batch(&["a".into(), "b".into()]).unwrap();
    assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body["input"], json!(["a", "b"]));
    assert_eq!(seen[0].auth, None);
}

#[test]
fn chat_contract() {
    let (url, log) = stub(Box::new(|_| {
        (
            200,
            json!({"content": "The relation between A (person) and B (person) is peer"}).to_string(),
        )
    }));
    let c = HttpChat::new(&url, "gpt-3.5-turbo", 0.0, None, fast()).unwrap();
    let msgs = vec![
        ChatMessage::user("q"),
        ChatMessage::assistant("a"),
        ChatMessage::user("again"),
    ];
    let out = c.complete(&msgs).unwrap();
    assert!(out.ends_with("is peer"));
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].path, "/chat");
    assert_eq!(
        seen[0].body,
        json!({"model": "gpt-3.5-turbo", "temperature": 0.0, "messages": [
            {"role": "user", "content": "q"},
            {"role": "assistant", "content": "a"},
            {"role": "user", "content": "again"}
        ]})
    );
}

#[test]
fn openai_chat_contract() {
    let (url, log) = stub(Box::new(|_| {
        (
            200,
            json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": "none"}}]}).to_string(),
        )
    }));
    let c = OpenAiChat::new(&url, "gpt-3.5-turbo", 0.0, Some("k".into()), fast()).unwrap();
    assert_eq!(c.complete(&[ChatMessage::user("hi")]).unwrap(), "none");
    let seen = log.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].body["messages"], json!([{"role": "user", "content": "hi"}]));
    assert_eq!(seen[0].body["temperature"], json!(0.0));
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer k"));
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let hits = Arc::new(Mutex::new(0));
    let h = hits.clone();
    let (url, log) = stub(Box::new(move |_| {
        let mut n = h.lock().unwrap();
        *n += 1;
        if *n <= 2 {
            (503, "{}".into())
        } else {
            (200, json!({"outputs": ["ok"]}).to_string())
        }
    }));
    let g = HttpGenerator::new(&url, "t5", fast()).unwrap();
    assert_eq!(g.generate(&["x".into()]).unwrap(), vec!["ok"]);
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let (url, log) = stub(Box::new(|_| (500, "{}".into())));
    let g = HttpGenerator::new(&url, "t5", fast()).unwrap();
    let err = g.generate(&["x".into()]).unwrap_err();
    assert!(err.is_retryable());
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log) = stub(Box::new(|_| (400, "{\"error\":\"bad\"}".into())));
    let c = HttpChat::new(&url, "m", 0.0, None, fast()).unwrap();
    let err = c.complete(&[ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn connection_refused_is_transport() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let g = HttpGenerator::new(&format!("http://127.0.0.1:{port}"), "t5", fast()).unwrap();
    assert!(matches!(g.generate(&["x".into()]), Err(BackendError::Transport(_))));
}

#[test]
fn training_file_lines() {
    use mmre_core::templates::TrainingExample;
    let annotated = TrainingExample {
        id: "s1".into(),
        input: "Type: t; Image: c; Knowledge: k; Text: x".into(),
        target: Some("none".into()),
    };
    let input_only = TrainingExample {
        target: None,
        ..annotated.clone()
    };
    let bytes = mmre_core::io::to_jsonl(&[annotated.clone(), input_only.clone()]);
    let text = String::from_utf8(bytes).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(
        lines[0],
        json!({"id": "s1", "input": "Type: t; Image: c; Knowledge: k; Text: x", "target": "none"})
    );
    assert_eq!(
        lines[1],
        json!({"id": "s1", "input": "Type: t; Image: c; Knowledge: k; Text: x"})
    );
    assert!(text.ends_with('\n'));
    let back: TrainingExample = serde_json::from_value(lines[1].clone()).unwrap();
    assert_eq!(back, input_only);
}

#[test]
fn prediction_file_lines() {
    use mmre_core::corpus::Quintuple;
    use mmre_core::templates::PredictionRecord;
    let q = Quintuple::new("TV3", "organization", "Keadilan", "organization", "subsidiary").unwrap();
    let rec = PredictionRecord {
        id: "s1".into(),
        raw_output: "The relation between TV3 (organization) and Keadilan (organization) is subsidiary".into(),
        quintuples: [q].into_iter().collect(),
        warnings: vec![],
    };
    let v: Value = serde_json::to_value(&rec).unwrap();
    assert_eq!(
        v,
        json!({
            "id": "s1",
            "raw_output": "The relation between TV3 (organization) and Keadilan (organization) is subsidiary",
            "quintuples": [{"e1": "TV3", "t1": "organization", "e2": "Keadilan", "t2": "organization", "r": "subsidiary"}],
            "warnings": []
        })
    );
    let back: PredictionRecord = serde_json::from_value(v).unwrap();
    assert_eq!(back, rec);
}
