//! HTTP backend tests against a loopback listener serving canned replies.
//! No external network: everything runs over 127.0.0.1.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use fractam::gateway::http::{HttpEmbedder, HttpGenerator, HttpReranker};
use fractam::gateway::{
    BackendKind, BackendProfile, Embedder, GatewayError, Generator, GuardedEmbedder, PromptPart,
    Reranker, RetryPolicy,
};

/// Serves one canned (status, body) per expected connection, then stops.
/// Returns the base URL and a channel yielding each request's raw text.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().expect("local addr");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            let mut buffer = [0u8; 65536];
            let mut request = Vec::new();
            // Read until the JSON body closes; requests here are small.
            loop {
                match stream.read(&mut buffer) {
                    Ok(0) => break,
                    Ok(n) => {
                        request.extend_from_slice(&buffer[..n]);
                        let text = String::from_utf8_lossy(&request);
                        if let Some(idx) = text.find("\r\n\r\n") {
                            let header = &text[..idx];
                            let content_length = header
                                .lines()
                                .find_map(|l| {
                                    l.to_ascii_lowercase()
                                        .strip_prefix("content-length:")
                                        .map(str::trim)
                                        .map(String::from)
                                })
                                .and_then(|v| v.parse::<usize>().ok())
                                .unwrap_or(0);
                            if text.len() >= idx + 4 + content_length {
                                break;
                            }
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(String::from_utf8_lossy(&request).to_string());
            let reason = if status == 200 { "OK" } else { "Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}/v1"), rx)
}

fn profile(endpoint: &str, retries: u32) -> BackendProfile {
    BackendProfile {
        kind: BackendKind::Generate,
        endpoint: endpoint.to_string(),
        model: "test-model".to_string(),
        timeout_s: 5,
        retries,
        max_parallel: 1,
        auth_env: None,
    }
}

#[test]
fn generator_round_trip_over_loopback() {
    let body = r#"{"choices":[{"message":{"content":"observed a steady gaze"}}]}"#;
    let (endpoint, requests) = serve(vec![(200, body.to_string())]);
    let generator = HttpGenerator::new(profile(&endpoint, 0)).unwrap();
    let reply = generator
        .generate(&[
            PromptPart::text("describe"),
            PromptPart::media("clip1", fractam::types::Modality::Visual),
        ])
        .unwrap();
    assert_eq!(reply, "observed a steady gaze");
    let request = requests.recv().unwrap();
    assert!(request.contains("POST /v1/chat/completions"));
    assert!(request.contains("\"temperature\":0"));
    assert!(request.contains("clip1"));
}

#[test]
fn generator_retries_on_500_then_succeeds() {
    let ok = r#"{"choices":[{"message":{"content":"second try"}}]}"#;
    let (endpoint, requests) = serve(vec![
        (500, r#"{"error":"transient"}"#.to_string()),
        (200, ok.to_string()),
    ]);
    let generator =
        HttpGenerator::with_policy(profile(&endpoint, 2), RetryPolicy::immediate(2)).unwrap();
    let reply = generator.generate(&[PromptPart::text("x")]).unwrap();
    assert_eq!(reply, "second try");
    assert_eq!(requests.iter().count(), 2, "exactly one retry");
}

#[test]
fn generator_4xx_is_not_retried() {
    let (endpoint, requests) = serve(vec![(400, r#"{"error":"bad request"}"#.to_string())]);
    let generator =
        HttpGenerator::with_policy(profile(&endpoint, 3), RetryPolicy::immediate(3)).unwrap();
    let err = generator.generate(&[PromptPart::text("x")]).unwrap_err();
    match err {
        GatewayError::Status {
            status, attempts, ..
        } => {
            assert_eq!(status, 400);
            assert_eq!(attempts, 1);
        }
        other => panic!("expected Status error, got {other}"),
    }
    assert_eq!(requests.iter().count(), 1);
}

#[test]
fn embedder_normalizes_backend_vectors() {
    let body = r#"{"data":[{"embedding":[3.0,4.0]}]}"#;
    let (endpoint, _requests) = serve(vec![(200, body.to_string())]);
    let mut p = profile(&endpoint, 0);
    p.kind = BackendKind::Embed;
    let embedder = GuardedEmbedder::new(HttpEmbedder::new(p).unwrap());
    let vector = embedder.embed("text").unwrap();
    assert_eq!(vector, vec![0.6, 0.8]);
}

#[test]
fn reranker_clamps_out_of_range_scores() {
    let body = r#"{"results":[{"relevance_score":1.7}]}"#;
    let (endpoint, requests) = serve(vec![(200, body.to_string())]);
    let mut p = profile(&endpoint, 0);
    p.kind = BackendKind::Rerank;
    let reranker = HttpReranker::new(p).unwrap();
    let score = reranker
        .rerank_score("query text", "document text")
        .unwrap();
    assert_eq!(score, 1.0);
    let request = requests.recv().unwrap();
    assert!(request.contains("POST /v1/rerank"));
    assert!(request.contains("query text"));
    assert!(request.contains("document text"));
}

#[test]
fn auth_header_carries_secret_but_body_does_not() {
    std::env::set_var("FRACTAM_LOOPBACK_SECRET", "tok-abc123");
    let body = r#"{"choices":[{"message":{"content":"ok"}}]}"#;
    let (endpoint, requests) = serve(vec![(200, body.to_string())]);
    let mut p = profile(&endpoint, 0);
    p.auth_env = Some("FRACTAM_LOOPBACK_SECRET".to_string());
    let generator = HttpGenerator::new(p).unwrap();
    generator.generate(&[PromptPart::text("x")]).unwrap();
    let request = requests.recv().unwrap();
    assert!(
        request.contains("authorization: Bearer tok-abc123")
            || request.contains("Authorization: Bearer tok-abc123")
    );
    let body_part = request.split("\r\n\r\n").nth(1).unwrap_or("");
    assert!(
        !body_part.contains("tok-abc123"),
        "secret leaked into the body"
    );
}
