//! Wire-protocol tests against a local scripted HTTP server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use sage::gateway::http::{HttpChatProvider, HttpEmbeddingProvider};
use sage::gateway::stub::StubEmbeddingProvider;
use sage::gateway::{Gateway, GatewayError, GenerationConfig, RetryPolicy};

/// Serves one scripted (status, body) response per incoming connection and
/// hands back the request bodies it saw.
fn scripted_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buffer = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).unwrap();
                buffer.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buffer).into_owned();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if buffer.len() >= header_end + 4 + content_length {
                        break text;
                    }
                }
            };
            let body_start = request.find("\r\n\r\n").unwrap() + 4;
            let _ = tx.send(request[body_start..].to_string());
            let reason = if status == 200 { "OK" } else { "Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        initial_backoff: Duration::from_millis(1),
    }
}

fn gateway_for(chat: HttpChatProvider) -> Gateway {
    Gateway::new(
        Box::new(chat),
        Box::new(StubEmbeddingProvider::new(0)),
        "stub-embedder",
    )
    .with_retry(fast_retry(3))
}

#[test]
fn chat_request_and_response_follow_the_wire_shape() {
    let reply = r#"{"choices":[{"message":{"role":"assistant","content":"It depends."}}]}"#;
    let (base, requests) = scripted_server(vec![(200, reply.to_string())]);
    let gateway = gateway_for(HttpChatProvider::new(&base, Some("test-key".into())).unwrap());

    let config = GenerationConfig::new("test-model").with_temperature(0.5);
    let answer = gateway.chat_complete("Is it ok?", &config).unwrap();
    assert_eq!(answer, "It depends.");

    let body: serde_json::Value = serde_json::from_str(&requests.recv().unwrap()).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.5);
    assert_eq!(body["max_tokens"], 256);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "Is it ok?");
}

#[test]
fn throttled_responses_are_retried_until_success() {
    let reply = r#"{"choices":[{"message":{"content":"after retry"}}]}"#;
    let (base, _requests) = scripted_server(vec![
        (429, r#"{"error":"slow down"}"#.to_string()),
        (500, r#"{"error":"hiccup"}"#.to_string()),
        (200, reply.to_string()),
    ]);
    let gateway = gateway_for(HttpChatProvider::new(&base, None).unwrap());
    let answer = gateway
        .chat_complete("q", &GenerationConfig::new("m"))
        .unwrap();
    assert_eq!(answer, "after retry");
}

#[test]
fn unreachable_endpoint_exhausts_retries() {
    // Bind a port and drop the listener so connections are refused.
    let port = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let gateway = gateway_for(
        HttpChatProvider::new(&format!("http://127.0.0.1:{port}"), None).unwrap(),
    );
    let err = gateway
        .chat_complete("q", &GenerationConfig::new("m"))
        .unwrap_err();
    assert!(
        matches!(err, GatewayError::RetriesExhausted { attempts: 3, .. }),
        "{err}"
    );
}

#[test]
fn client_errors_are_not_retried() {
    let (base, _requests) = scripted_server(vec![(400, r#"{"error":"bad"}"#.to_string())]);
    let gateway = gateway_for(HttpChatProvider::new(&base, None).unwrap());
    let err = gateway
        .chat_complete("q", &GenerationConfig::new("m"))
        .unwrap_err();
    assert!(matches!(err, GatewayError::Endpoint { status: 400, .. }), "{err}");
}

#[test]
fn responses_without_choices_are_malformed() {
    let (base, _requests) = scripted_server(vec![(200, r#"{"choices":[]}"#.to_string())]);
    let gateway = gateway_for(HttpChatProvider::new(&base, None).unwrap());
    let err = gateway
        .chat_complete("q", &GenerationConfig::new("m"))
        .unwrap_err();
    assert!(matches!(err, GatewayError::MalformedResponse(_)), "{err}");
}

#[test]
fn embeddings_respect_the_index_field() {
    let reply = r#"{"data":[
        {"index":1,"embedding":[0.0,1.0]},
        {"index":0,"embedding":[1.0,0.0]}
    ]}"#;
    let (base, requests) = scripted_server(vec![(200, reply.to_string())]);
    let provider = HttpEmbeddingProvider::new(&base, "embed-model", None).unwrap();
    let gateway = Gateway::new(
        Box::new(sage::gateway::stub::FixedChatProvider("x".into())),
        Box::new(provider),
        "embed-model",
    )
    .with_retry(fast_retry(2));

    let vectors = Gateway::embed(
        &gateway,
        &["first".to_string(), "second".to_string()],
    )
    .unwrap();
    assert_eq!(vectors[0].components(), &[1.0, 0.0]);
    assert_eq!(vectors[1].components(), &[0.0, 1.0]);

    let body: serde_json::Value = serde_json::from_str(&requests.recv().unwrap()).unwrap();
    assert_eq!(body["model"], "embed-model");
    assert_eq!(body["input"][0], "first");
    assert_eq!(body["input"][1], "second");
}

#[test]
fn inconsistent_embedding_dimensions_are_rejected() {
    let reply = r#"{"data":[
        {"index":0,"embedding":[1.0,0.0]},
        {"index":1,"embedding":[0.0,1.0,2.0]}
    ]}"#;
    let (base, _requests) = scripted_server(vec![(200, reply.to_string())]);
    let provider = HttpEmbeddingProvider::new(&base, "embed-model", None).unwrap();
    let gateway = Gateway::new(
        Box::new(sage::gateway::stub::FixedChatProvider("x".into())),
        Box::new(provider),
        "embed-model",
    )
    .with_retry(fast_retry(2));
    let err = Gateway::embed(&gateway, &["a".to_string(), "b".to_string()]).unwrap_err();
    assert!(matches!(err, GatewayError::InconsistentDimensions(2, 3)), "{err}");
}
