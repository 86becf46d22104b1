//! Retry behavior against a real HTTP listener.

use mergeval_core::judgeclient::{
    ContentPart, HttpTransport, JudgeClient, JudgeClientConfig, JudgeError, JudgeRequest,
};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::time::Duration;

/// Serve canned HTTP/1.1 status+body pairs, one per connection.
fn serve(responses: Vec<(u16, String)>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            // Drain the request: headers, then Content-Length body bytes.
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let header_end = loop {
                match stream.read(&mut chunk) {
                    Ok(0) => break None,
                    Ok(n) => {
                        buf.extend_from_slice(&chunk[..n]);
                        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                            break Some(pos + 4);
                        }
                    }
                    Err(_) => break None,
                }
            };
            if let Some(header_end) = header_end {
                let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
                let content_length: usize = headers
                    .lines()
                    .find_map(|l| l.strip_prefix("content-length:"))
                    .and_then(|v| v.trim().parse().ok())
                    .unwrap_or(0);
                let mut remaining = content_length.saturating_sub(buf.len() - header_end);
                while remaining > 0 {
                    match stream.read(&mut chunk) {
                        Ok(0) | Err(_) => break,
                        Ok(n) => remaining = remaining.saturating_sub(n),
                    }
                }
            }
            let reason = match status {
                200 => "OK",
                401 => "Unauthorized",
                429 => "Too Many Requests",
                _ => "Error",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    format!("http://{addr}")
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"content": text}}]}).to_string()
}

fn client_for(base: String) -> JudgeClient {
    let transport = HttpTransport::new(base, "test-key", Duration::from_secs(5));
    JudgeClient::new(
        transport,
        JudgeClientConfig {
            backoff_base: Duration::from_millis(1),
            backoff_cap: Duration::from_millis(4),
            ..JudgeClientConfig::default()
        },
    )
    .unwrap()
}

fn request() -> JudgeRequest {
    JudgeRequest::user("gpt-4o", vec![ContentPart::Text("rate this".into())])
}

#[test]
fn http_transport_round_trips_a_completion() {
    let base = serve(vec![(200, completion("scored"))]);
    let reply = client_for(base).send(&request()).unwrap();
    assert_eq!(reply.text, "scored");
    assert_eq!(reply.retries, 0);
}

#[test]
fn http_transport_retries_through_rate_limits() {
    let base = serve(vec![
        (429, String::new()),
        (429, String::new()),
        (200, completion("eventually")),
    ]);
    let reply = client_for(base).send(&request()).unwrap();
    assert_eq!(reply.text, "eventually");
    assert_eq!(reply.retries, 2);
}

#[test]
fn http_transport_stops_on_auth_failure() {
    let base = serve(vec![(401, String::new())]);
    let err = client_for(base).send(&request()).unwrap_err();
    assert!(matches!(err, JudgeError::AuthFailure(401)));
}
