mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use common::*;
use tabguide::backend::{BackendError, HealthResponse, ScoreRequest, ScoreResponse};
use tabguide::sampler::synthesize;
use tabguide::{Backend, ContextPair, Engine, EngineConfig, HttpBackend, SamplerConfig};
use tiny_http::{Header, Response, Server};

#[derive(Clone, Copy)]
enum Behaviour {
    /// Uniform logits of the right length.
    Uniform,
    /// One logit too many.
    WrongLength,
    /// Not JSON.
    Garbage,
}

struct Mock {
    url: String,
    requests: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

fn spawn(behaviour: Behaviour, max_in_flight: usize) -> Mock {
    let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
    let port = server.server_addr().to_ip().unwrap().port();
    let requests = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let active = Arc::new(AtomicUsize::new(0));
    for _ in 0..8 {
        let server = Arc::clone(&server);
        let requests = Arc::clone(&requests);
        let peak = Arc::clone(&peak);
        let active = Arc::clone(&active);
        thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let json = Header::from_bytes("Content-Type", "application/json").unwrap();
                let body = match req.url() {
                    "/v1/health" => serde_json::to_string(&HealthResponse { ok: true, max_in_flight }).unwrap(),
                    "/v1/score" => {
                        let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        requests.fetch_add(1, Ordering::SeqCst);
                        let mut raw = String::new();
                        req.as_reader().read_to_string(&mut raw).unwrap();
                        let parsed: ScoreRequest = serde_json::from_str(&raw).unwrap();
                        thread::sleep(Duration::from_millis(2));
                        active.fetch_sub(1, Ordering::SeqCst);
                        match behaviour {
                            Behaviour::Uniform => serde_json::to_string(&ScoreResponse {
                                logits: vec![0.0; parsed.candidates.len()],
                            })
                            .unwrap(),
                            Behaviour::WrongLength => serde_json::to_string(&ScoreResponse {
                                logits: vec![0.0; parsed.candidates.len() + 1],
                            })
                            .unwrap(),
                            Behaviour::Garbage => "not json".to_string(),
                        }
                    }
                    _ => {
                        let _ = req.respond(Response::from_string("").with_status_code(404));
                        continue;
                    }
                };
                let _ = req.respond(Response::from_string(body).with_header(json));
            }
        });
    }
    Mock {
        url: format!("http://127.0.0.1:{port}"),
        requests,
        peak,
    }
}

#[test]
fn score_round_trip_and_concurrency_limit() {
    let mock = spawn(Behaviour::Uniform, 2);
    let engine = Engine::fit(iris(), EngineConfig::default()).unwrap();
    let http = HttpBackend::connect(&mock.url, Arc::clone(&engine.layout)).unwrap();
    assert_eq!(http.max_in_flight(), 2);
    let d = http
        .score_candidates(&[ContextPair::new("sepal_length", num(5.1))], "species")
        .unwrap();
    assert_eq!(d.candidates, vec![cat("setosa"), cat("versicolor"), cat("virginica")]);
    assert_eq!(d.logits, vec![0.0; 3]);

    let engine = engine.with_backend(Arc::new(http));
    let records = synthesize(&engine, 40, &SamplerConfig::default()).unwrap();
    assert_eq!(records.len(), 40);
    for r in &records {
        for (f, v) in r.values.iter().enumerate() {
            assert!(engine.is_legal(f, v));
        }
    }
    assert!(mock.peak.load(Ordering::SeqCst) <= 2);
}

#[test]
fn wrong_logit_count_is_malformed_and_sampling_falls_back() {
    let mock = spawn(Behaviour::WrongLength, 4);
    let engine = Engine::fit(iris(), EngineConfig::default()).unwrap();
    let http = HttpBackend::connect(&mock.url, Arc::clone(&engine.layout)).unwrap();
    assert!(matches!(http.score_candidates(&[], "species"), Err(BackendError::Malformed(_))));

    let engine = engine.with_backend(Arc::new(http));
    let config = SamplerConfig {
        max_attempts: 3,
        ..SamplerConfig::default()
    };
    let before = mock.requests.load(Ordering::SeqCst);
    let records = synthesize(&engine, 2, &config).unwrap();
    // every feature exhausted its attempts
    assert_eq!(mock.requests.load(Ordering::SeqCst) - before, 2 * 5 * 3);
    for r in &records {
        assert!(r.provenance.iter().all(|p| p.forced && p.attempts == 3));
        for (f, v) in r.values.iter().enumerate() {
            assert!(engine.is_legal(f, v));
        }
    }
}

#[test]
fn non_json_response_is_malformed() {
    let mock = spawn(Behaviour::Garbage, 1);
    let engine = Engine::fit(iris(), EngineConfig::default()).unwrap();
    let http = HttpBackend::connect(&mock.url, Arc::clone(&engine.layout)).unwrap();
    assert!(matches!(http.score_candidates(&[], "species"), Err(BackendError::Malformed(_))));
}

#[test]
fn unreachable_server_is_unavailable() {
    let engine = Engine::fit(iris(), EngineConfig::default()).unwrap();
    // bind then drop to get a port with nothing listening
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = HttpBackend::connect(&format!("http://127.0.0.1:{port}"), Arc::clone(&engine.layout)).err();
    assert!(matches!(err, Some(BackendError::Unavailable(_))));
}

#[test]
fn request_wire_format() {
    let req = ScoreRequest::new(
        &[ContextPair::new("age", num(42.5))],
        "job",
        &[cat("nurse"), cat("clerk")],
    );
    let v: serde_json::Value = serde_json::to_value(&req).unwrap();
    assert_eq!(
        v,
        serde_json::json!({
            "context": [{"feature": "age", "value": "42.5"}],
            "target": "job",
            "candidates": ["nurse", "clerk"]
        })
    );
}
