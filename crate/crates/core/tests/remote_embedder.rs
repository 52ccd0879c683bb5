//! The remote embedding client against a minimal in-process HTTP service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use lexsyl_core::corpus::embed::{hash_embed, EmbedError};
use lexsyl_core::{EmbeddingProvider, KnowledgeTree, RemoteEmbedder};
use serde_json::{json, Value};

/// Reads one request and returns its path and JSON body.
fn read_request(stream: &mut TcpStream) -> (String, Value) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).unwrap();
        if header.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    (path, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let head = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).unwrap();
    stream.write_all(body.as_bytes()).unwrap();
}

/// Serves every connection on its own thread with `handler(texts) -> (status, body)`.
fn serve(handler: impl Fn(&[String]) -> (u16, String) + Send + Sync + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handler = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let handler = Arc::clone(&handler);
            thread::spawn(move || {
                let (path, body) = read_request(&mut stream);
                if path != "/embed" {
                    respond(&mut stream, 404, "no such route");
                    return;
                }
                let texts: Vec<String> =
                    serde_json::from_value(body["texts"].clone()).unwrap_or_default();
                let (status, body) = handler(&texts);
                respond(&mut stream, status, &body);
            });
        }
    });
    format!("http://{addr}")
}

fn hash_service(dim: usize) -> impl Fn(&[String]) -> (u16, String) {
    move |texts| {
        // scaled so the client has to normalise
        let vectors: Vec<Vec<f64>> = texts
            .iter()
            .map(|t| {
                hash_embed(t, dim)
                    .unwrap()
                    .iter()
                    .map(|&x| 3.0 * x as f64)
                    .collect()
            })
            .collect();
        (200, json!({"embeddings": vectors, "dim": dim}).to_string())
    }
}

fn client(endpoint: &str, max_in_flight: usize) -> RemoteEmbedder {
    RemoteEmbedder::new(endpoint, max_in_flight, Duration::from_secs(5))
}

#[test]
fn returns_one_unit_vector_per_text_in_order() {
    let endpoint = serve(hash_service(64));
    let remote = client(&format!("{endpoint}/"), 4);
    assert_eq!(remote.dim(), None);
    let out = remote.remote_embed(&["alpha beta", "gamma"]).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(remote.dim(), Some(64));
    for (v, t) in out.iter().zip(["alpha beta", "gamma"]) {
        let want = hash_embed(t, 64).unwrap();
        for (a, b) in v.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
        let norm: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
    assert!(remote.remote_embed(&[]).unwrap().is_empty());
    assert_eq!(remote.embed("  "), Err(EmbedError::EmptyText));
}

#[test]
fn service_errors_carry_status_and_body() {
    let endpoint = serve(|_| (503, "overloaded".to_string()));
    match client(&endpoint, 1).embed("x") {
        Err(EmbedError::ServiceError { status, body }) => {
            assert_eq!(status, 503);
            assert_eq!(body, "overloaded");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn ragged_vectors_are_a_dimension_mismatch() {
    let endpoint = serve(|_| (200, r#"{"embeddings":[[1,0,0],[1,0]],"dim":3}"#.to_string()));
    assert_eq!(
        client(&endpoint, 1).remote_embed(&["a", "b"]),
        Err(EmbedError::DimensionMismatch {
            expected: 3,
            got: 2
        })
    );
}

#[test]
fn dimension_change_between_calls_is_rejected() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let endpoint = serve(move |texts| {
        let dim = if seen.fetch_add(1, Ordering::SeqCst) == 0 {
            16
        } else {
            32
        };
        hash_service(dim)(texts)
    });
    let remote = client(&endpoint, 1);
    assert_eq!(remote.embed("first").unwrap().len(), 16);
    assert_eq!(
        remote.embed("second"),
        Err(EmbedError::DimensionMismatch {
            expected: 16,
            got: 32
        })
    );
}

#[test]
fn malformed_bodies_are_invalid_responses() {
    let endpoint = serve(|_| (200, "{\"vectors\": []}".to_string()));
    assert!(matches!(
        client(&endpoint, 1).embed("x"),
        Err(EmbedError::InvalidResponse(_))
    ));
}

#[test]
fn in_flight_requests_respect_the_cap() {
    let active = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (a, p) = (Arc::clone(&active), Arc::clone(&peak));
    let endpoint = serve(move |texts| {
        let now = a.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(40));
        a.fetch_sub(1, Ordering::SeqCst);
        hash_service(16)(texts)
    });
    let remote = Arc::new(client(&endpoint, 2));
    let workers: Vec<_> = (0..8)
        .map(|i| {
            let remote = Arc::clone(&remote);
            thread::spawn(move || remote.embed(&format!("text {i}")).unwrap())
        })
        .collect();
    for w in workers {
        assert_eq!(w.join().unwrap().len(), 16);
    }
    let peak = peak.load(Ordering::SeqCst);
    assert!((1..=2).contains(&peak), "peak concurrency {peak}");
}

#[test]
fn tree_built_remotely_matches_local_hashing() {
    let endpoint = serve(hash_service(256));
    let world = lexsyl_core::corpus::gen_synthetic(0, 4, 3, 5).unwrap();
    let remote = client(&endpoint, 4);
    let local = lexsyl_core::HashEmbedder::new(256).unwrap();
    let a = KnowledgeTree::build(&world.statutes, &world.cases, &remote, 5).unwrap();
    let b = KnowledgeTree::build(&world.statutes, &world.cases, &local, 5).unwrap();
    for s in a.statutes() {
        assert_eq!(a.links(&s.id), b.links(&s.id));
    }
}
