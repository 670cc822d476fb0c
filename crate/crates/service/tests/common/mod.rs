#![allow(dead_code)]

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use axum::Router;
use timemap_service::harvest::TransportFailure;
use timemap_service::proxy::{Upstream, UpstreamFuture, UpstreamResult};

pub fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read_to_string(path).unwrap()
}

pub fn fig1() -> String {
    fixture("fig1.link")
}

/// Binds an ephemeral port and serves `app` in the background.
pub async fn spawn(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

/// Upstream that answers from a script, one entry per call; the last entry
/// repeats.
pub struct Scripted {
    script: Mutex<VecDeque<UpstreamResult>>,
    pub calls: AtomicUsize,
}

impl Scripted {
    pub fn new(script: Vec<UpstreamResult>) -> Self {
        Scripted {
            script: Mutex::new(script.into()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn ok(body: &str) -> UpstreamResult {
        Ok((200, body.to_string()))
    }

    pub fn not_found() -> UpstreamResult {
        Ok((404, String::new()))
    }

    pub fn down() -> UpstreamResult {
        Err(TransportFailure("connection refused".into()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Upstream for Scripted {
    fn fetch<'a>(&'a self, _uri_r: &'a str) -> UpstreamFuture<'a> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut script = self.script.lock().unwrap();
        let next = if script.len() > 1 {
            script.pop_front().unwrap()
        } else {
            script.front().cloned().unwrap()
        };
        Box::pin(async move { next })
    }
}
