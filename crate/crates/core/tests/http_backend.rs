use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use logparse::gateway::{HttpBackend, HttpConfig};
use logparse::gateway::build_parse_prompt;
use logparse::{Backend, CompletionSettings, GatewayError};

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"`a <*>`"},"finish_reason":"stop"}]}"#;

/// Serves the scripted `(status, body)` replies in order, one per connection,
/// and records each request body.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&bodies);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            seen.lock().unwrap().push(String::from_utf8(request).unwrap());
            let mut stream = reader.into_inner();
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), bodies)
}

fn backend(base_url: String) -> HttpBackend {
    let config = HttpConfig {
        base_url,
        max_attempts: 3,
        initial_backoff: Duration::from_millis(10),
        max_backoff: Duration::from_millis(40),
        timeout: Duration::from_secs(5),
        ..HttpConfig::default()
    };
    HttpBackend::with_api_key(config, Some("test-key".into())).unwrap()
}

#[test]
fn retries_transient_failures_then_succeeds() {
    let (url, bodies) = serve(vec![(500, "{}"), (429, "{}"), (200, OK_BODY)]);
    let mut http = backend(url);
    let prompt = build_parse_prompt::<&str, &str>("a 1", &[("b 2", "b <*>")]);
    let reply = http.complete(&prompt, &CompletionSettings::default()).unwrap();
    assert_eq!(reply, "`a <*>`");

    let bodies = bodies.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    let json: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(json["temperature"], 0.0);
    assert_eq!(json["model"], "gpt-3.5-turbo-0125");
    assert!(json["messages"][1]["content"].as_str().unwrap().contains("a 1"));
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, bodies) = serve(vec![(503, "{}"), (503, "{}"), (503, "{}")]);
    let mut http = backend(url);
    let prompt = build_parse_prompt::<&str, &str>("a 1", &[]);
    match http.complete(&prompt, &CompletionSettings::default()) {
        Err(GatewayError::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(bodies.lock().unwrap().len(), 3);
}

#[test]
fn truncated_output_is_reported() {
    let body = r#"{"choices":[{"message":{"role":"assistant","content":"`a"},"finish_reason":"length"}]}"#;
    let (url, _) = serve(vec![(200, body)]);
    let mut http = backend(url);
    let prompt = build_parse_prompt::<&str, &str>("a 1", &[]);
    assert!(matches!(
        http.complete(&prompt, &CompletionSettings::default()),
        Err(GatewayError::OutputTruncated)
    ));
}
