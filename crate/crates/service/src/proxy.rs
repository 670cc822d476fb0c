//! Caching reverse proxy for an aggregator's TimeMap endpoint.
//!
//! `GET /timemap/link/{uri_r}` answers from the cache while the entry is
//! fresh. Otherwise the upstream is asked again and the response offered
//! to the cache; under the conditional policy a worse TimeMap (a 404, a
//! lost archive) is rejected and the cached body keeps being served.
//!
//! | `X-Cache`          | meaning                                         |
//! |--------------------|-------------------------------------------------|
//! | `HIT`              | fresh entry served                              |
//! | `MISS`             | fetched and stored                              |
//! | `REFRESH-REJECTED` | fetched, not an improvement, cached body served |
//! | `STALE-IF-ERROR`   | upstream failed, cached body served             |

use std::collections::HashMap;
use std::fs;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::pin::Pin;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::Router;
use chrono::DateTime;
use percent_encoding::percent_decode_str;
use timemap_core::linkformat::parse_timemap;
use timemap_core::model::{ArchiveRules, IdentityPolicy, TimeMapSnapshot};
use timemap_core::store::{SnapshotRecord, SnapshotStore};
use timemap_core::{CacheEntry, DecisionOutcome, KeyedSnapshot, Lookup, Moment, PolicyKind, TimeMapCache, Ttl};

use crate::error::{Result, ServiceError};
use crate::harvest::{fetch_timemap, http_client, uri_t, validate_template, TransportFailure};

pub const LINK_FORMAT: &str = "application/link-format";
pub const TIMEMAP_PREFIX: &str = "/timemap/link/";

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyConfig {
    pub listen: SocketAddr,
    pub upstream_template: String,
    pub policy: PolicyKind,
    pub ttl: Ttl,
    pub identity: IdentityPolicy,
    pub upstream_timeout: Duration,
    pub persistence: Option<PathBuf>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            upstream_template: "http://timetravel.mementoweb.org/timemap/link/{uri_r}".into(),
            policy: PolicyKind::Conditional,
            ttl: Ttl::Days(15),
            identity: IdentityPolicy::Loose,
            upstream_timeout: Duration::from_secs(45),
            persistence: None,
        }
    }
}

impl ProxyConfig {
    /// Reads `key = value` lines over the defaults. Keys: `listen`,
    /// `upstream`, `policy`, `ttl`, `identity`, `timeout_secs`, `persistence`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ProxyConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| ServiceError::InvalidConfig(format!("line {}: {msg}", i + 1));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            cfg.set(key, value).map_err(bad)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "listen" => self.listen = value.parse().map_err(|_| format!("bad address `{value}`"))?,
            "upstream" => self.upstream_template = value.to_string(),
            "policy" => self.policy = value.parse()?,
            "ttl" => self.ttl = value.parse()?,
            "identity" => self.identity = value.parse()?,
            "timeout_secs" => {
                let secs: u64 = value.parse().map_err(|_| format!("bad timeout `{value}`"))?;
                self.upstream_timeout = Duration::from_secs(secs);
            }
            "persistence" => {
                self.persistence = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// `TIMEMAP_LISTEN` and `TIMEMAP_UPSTREAM` override the file.
    pub fn apply_env(&mut self) -> Result<()> {
        for (var, key) in [("TIMEMAP_LISTEN", "listen"), ("TIMEMAP_UPSTREAM", "upstream")] {
            if let Ok(v) = std::env::var(var) {
                self.set(key, &v)
                    .map_err(|e| ServiceError::InvalidConfig(format!("{var}: {e}")))?;
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        validate_template(&self.upstream_template)
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        if self.upstream_timeout.is_zero() {
            return Err(ServiceError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

pub type UpstreamResult = std::result::Result<(u16, String), TransportFailure>;
pub type UpstreamFuture<'a> = Pin<Box<dyn Future<Output = UpstreamResult> + Send + 'a>>;

/// Source of TimeMaps behind the proxy.
pub trait Upstream: Send + Sync {
    fn fetch<'a>(&'a self, uri_r: &'a str) -> UpstreamFuture<'a>;
}

pub struct HttpUpstream {
    client: reqwest::Client,
    template: String,
}

impl HttpUpstream {
    pub fn new(template: impl Into<String>, timeout: Duration) -> Result<Self> {
        let template = template.into();
        validate_template(&template)?;
        Ok(HttpUpstream {
            client: http_client(timeout)?,
            template,
        })
    }
}

impl Upstream for HttpUpstream {
    fn fetch<'a>(&'a self, uri_r: &'a str) -> UpstreamFuture<'a> {
        Box::pin(async move { fetch_timemap(&self.client, &uri_t(&self.template, uri_r)).await })
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Moment;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Moment {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Moment::seconds(secs)
    }
}

/// Clock moved by hand, for tests and simulations.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn at(moment: Moment) -> Self {
        ManualClock(AtomicU64::new(moment.as_secs()))
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }

    pub fn set(&self, moment: Moment) {
        self.0.store(moment.as_secs(), Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Moment {
        Moment::seconds(self.0.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Default)]
pub struct Stats {
    pub requests: AtomicU64,
    pub hits: AtomicU64,
    pub misses: AtomicU64,
    pub refresh_rejected: AtomicU64,
    pub stale_if_error: AtomicU64,
    pub bad_gateway: AtomicU64,
    pub bad_request: AtomicU64,
    pub upstream_fetches: AtomicU64,
}

impl Stats {
    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    RefreshRejected,
    StaleIfError,
}

impl CacheStatus {
    pub fn header_value(self) -> &'static str {
        match self {
            CacheStatus::Hit => "HIT",
            CacheStatus::Miss => "MISS",
            CacheStatus::RefreshRejected => "REFRESH-REJECTED",
            CacheStatus::StaleIfError => "STALE-IF-ERROR",
        }
    }
}

/// What the proxy answers for one TimeMap request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Served {
    Body {
        status: u16,
        body: Arc<str>,
        cache: CacheStatus,
        age_secs: u64,
    },
    BadRequest(String),
    BadGateway(String),
}

impl IntoResponse for Served {
    fn into_response(self) -> Response {
        match self {
            Served::Body { status, body, cache, age_secs } => {
                let status = StatusCode::from_u16(status).unwrap_or(StatusCode::OK);
                let mut resp = (status, body.to_string()).into_response();
                let h = resp.headers_mut();
                h.insert(header::CONTENT_TYPE, HeaderValue::from_static(LINK_FORMAT));
                h.insert("x-cache", HeaderValue::from_static(cache.header_value()));
                h.insert(header::AGE, HeaderValue::from(age_secs));
                resp
            }
            Served::BadRequest(msg) => (StatusCode::BAD_REQUEST, msg).into_response(),
            Served::BadGateway(msg) => (StatusCode::BAD_GATEWAY, msg).into_response(),
        }
    }
}

pub struct Proxy {
    config: ProxyConfig,
    cache: Mutex<TimeMapCache<Arc<str>>>,
    key_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    upstream: Arc<dyn Upstream>,
    clock: Arc<dyn Clock>,
    rules: ArchiveRules,
    pub stats: Stats,
}

impl Proxy {
    pub fn new(config: ProxyConfig, upstream: Arc<dyn Upstream>, clock: Arc<dyn Clock>) -> Self {
        let cache = TimeMapCache::new(config.policy, config.ttl).with_identity(config.identity);
        Proxy {
            config,
            cache: Mutex::new(cache),
            key_locks: Mutex::new(HashMap::new()),
            upstream,
            clock,
            rules: ArchiveRules::builtin(),
            stats: Stats::default(),
        }
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    fn key_lock(&self, uri_r: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.key_locks.lock().expect("lock table");
        locks.entry(uri_r.to_string()).or_default().clone()
    }

    fn serve_entry(entry: &CacheEntry<Arc<str>>, cache: CacheStatus, now: Moment) -> Served {
        Served::Body {
            status: entry.snapshot.http_status,
            body: entry.attachment.clone(),
            cache,
            age_secs: entry.age_secs(now),
        }
    }

    /// Answers one request for `uri_r`.
    pub async fn handle(&self, uri_r: &str) -> Served {
        Stats::bump(&self.stats.requests);
        if let Err(msg) = check_uri_r(uri_r) {
            Stats::bump(&self.stats.bad_request);
            return Served::BadRequest(msg);
        }
        // Concurrent requests for one URI-R queue here, so a burst of
        // misses costs one upstream fetch.
        let lock = self.key_lock(uri_r);
        let _guard = lock.lock().await;

        let now = self.clock.now();
        {
            let cache = self.cache.lock().expect("cache lock");
            if let Lookup::Fresh(entry) = cache.lookup(uri_r, now) {
                Stats::bump(&self.stats.hits);
                return Self::serve_entry(entry, CacheStatus::Hit, now);
            }
        }

        Stats::bump(&self.stats.upstream_fetches);
        let fetched = self.upstream.fetch(uri_r).await;
        let now = self.clock.now();
        let snapshot = match fetched {
            Ok((status, body)) => self.snapshot_of(uri_r, status, &body, now).map(|s| (s, body)),
            Err(e) => Err(e.to_string()),
        };

        let mut cache = self.cache.lock().expect("cache lock");
        let (snapshot, body) = match snapshot {
            Ok(ok) => ok,
            Err(reason) => {
                return match cache.get(uri_r) {
                    Some(entry) => {
                        Stats::bump(&self.stats.stale_if_error);
                        Self::serve_entry(entry, CacheStatus::StaleIfError, now)
                    }
                    None => {
                        Stats::bump(&self.stats.bad_gateway);
                        Served::BadGateway(format!("upstream failed: {reason}"))
                    }
                };
            }
        };
        let decision = cache
            .offer(uri_r, snapshot, Arc::from(body), now)
            .expect("snapshot built for this URI-R");
        let status = match decision.outcome {
            DecisionOutcome::Stored => {
                Stats::bump(&self.stats.misses);
                CacheStatus::Miss
            }
            DecisionOutcome::RejectedNotImprovement | DecisionOutcome::RejectedFirstWriteWins => {
                Stats::bump(&self.stats.refresh_rejected);
                CacheStatus::RefreshRejected
            }
        };
        let entry = cache.get(uri_r).expect("entry present after offer");
        Self::serve_entry(entry, status, now)
    }

    /// A usable observation, or why the response does not count as one.
    fn snapshot_of(&self, uri_r: &str, status: u16, body: &str, now: Moment) -> std::result::Result<TimeMapSnapshot, String> {
        let day = (now.as_secs() / timemap_core::cache::SECONDS_PER_DAY) as u32;
        let observed = DateTime::from_timestamp(now.as_secs() as i64, 0);
        let snap = match status {
            404 => TimeMapSnapshot::empty(uri_r, day, 404),
            200..=299 => {
                let raw = parse_timemap(body, Some(uri_r)).map_err(|e| e.to_string())?;
                TimeMapSnapshot::from_raw(&raw, uri_r, day, status, &self.rules)
            }
            other => return Err(format!("upstream status {other}")),
        };
        Ok(match observed {
            Some(at) => snap.with_observed_at(at),
            None => snap,
        })
    }

    pub fn purge(&self, uri_r: Option<&str>) -> usize {
        self.cache.lock().expect("cache lock").purge(uri_r)
    }

    pub fn stats_json(&self) -> serde_json::Value {
        let s = &self.stats;
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        serde_json::json!({
            "requests": get(&s.requests),
            "hits": get(&s.hits),
            "misses": get(&s.misses),
            "refresh_rejected": get(&s.refresh_rejected),
            "stale_if_error": get(&s.stale_if_error),
            "bad_gateway": get(&s.bad_gateway),
            "bad_request": get(&s.bad_request),
            "upstream_fetches": get(&s.upstream_fetches),
            "cached_entries": self.cached_len(),
            "policy": self.config.policy.to_string(),
            "ttl": self.config.ttl.to_string(),
            "identity": self.config.identity.to_string(),
        })
    }

    /// Writes every cache entry to `dir` in the snapshot-store layout,
    /// replacing what was there. The day directory is the day the entry was
    /// stored; the instant is its last upstream fetch.
    pub fn save(&self, dir: &std::path::Path) -> Result<usize> {
        let cache = self.cache.lock().expect("cache lock");
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::create_dir_all(dir)?;
        let store = SnapshotStore::new(dir);
        for (uri_r, entry) in cache.entries() {
            let record = SnapshotRecord::new(
                uri_r,
                (entry.stored_at.as_secs() / timemap_core::cache::SECONDS_PER_DAY) as u32,
                DateTime::from_timestamp(entry.last_fetch_at.as_secs() as i64, 0),
                entry.snapshot.http_status,
                entry.attachment.as_bytes(),
            );
            store.write(&record)?;
        }
        Ok(cache.len())
    }

    /// Reinstates entries written by [`save`](Self::save).
    pub fn load(&self, dir: &std::path::Path) -> Result<usize> {
        if !dir.exists() {
            return Ok(0);
        }
        let store = SnapshotStore::new(dir);
        let mut cache = self.cache.lock().expect("cache lock");
        let mut n = 0;
        for day in store.days()? {
            for (_, rec) in store.read_day(day)? {
                let Some(snapshot) = rec.to_snapshot(&self.rules) else {
                    continue;
                };
                let last_fetch = rec
                    .instant
                    .map_or(0, |t| t.timestamp().max(0) as u64);
                let stored = (u64::from(day) * timemap_core::cache::SECONDS_PER_DAY).min(last_fetch);
                let keyed = KeyedSnapshot::new(&snapshot, cache.identity());
                cache.restore(CacheEntry {
                    snapshot: Arc::new(snapshot),
                    keyed: Arc::new(keyed),
                    attachment: Arc::from(String::from_utf8_lossy(&rec.body).as_ref()),
                    stored_at: Moment::seconds(stored),
                    last_fetch_at: Moment::seconds(last_fetch),
                });
                n += 1;
            }
        }
        Ok(n)
    }
}

/// Accepts absolute http(s) URIs with a host.
fn check_uri_r(uri_r: &str) -> std::result::Result<(), String> {
    match url::Url::parse(uri_r) {
        Ok(u) if matches!(u.scheme(), "http" | "https") && u.host().is_some() => Ok(()),
        _ => Err(format!("not an absolute http(s) URI-R: {uri_r}")),
    }
}

/// Recovers the URI-R from a request path: either appended raw (query
/// string included) or percent-encoded as one segment.
pub fn uri_r_from_request(uri: &Uri) -> Option<String> {
    let full = uri.path_and_query().map_or(uri.path(), |pq| pq.as_str());
    let rest = full.strip_prefix(TIMEMAP_PREFIX)?;
    if rest.is_empty() {
        return None;
    }
    if rest.contains("://") {
        Some(rest.to_string())
    } else {
        percent_decode_str(rest).decode_utf8().ok().map(|s| s.into_owned())
    }
}

async fn timemap_route(State(proxy): State<Arc<Proxy>>, uri: Uri) -> Response {
    match uri_r_from_request(&uri) {
        Some(uri_r) => proxy.handle(&uri_r).await.into_response(),
        None => {
            Stats::bump(&proxy.stats.bad_request);
            (StatusCode::BAD_REQUEST, "missing URI-R").into_response()
        }
    }
}

async fn stats_route(State(proxy): State<Arc<Proxy>>) -> Response {
    axum::Json(proxy.stats_json()).into_response()
}

async fn purge_route(
    State(proxy): State<Arc<Proxy>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let n = proxy.purge(params.get("uri_r").map(String::as_str));
    format!("purged={n}\n").into_response()
}

async fn not_found() -> Response {
    (StatusCode::NOT_FOUND, "not found").into_response()
}

pub fn router(proxy: Arc<Proxy>) -> Router {
    Router::new()
        .route("/timemap/link/", get(timemap_route))
        .route("/timemap/link/{*uri_r}", get(timemap_route))
        .route("/admin/stats", get(stats_route))
        .route("/admin/purge", post(purge_route))
        .route("/admin/{*rest}", any(not_found))
        .fallback(not_found)
        .with_state(proxy)
}

/// Runs until `shutdown` resolves, then persists the cache if configured.
pub async fn serve_with(
    proxy: Arc<Proxy>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    if let Some(dir) = &proxy.config.persistence {
        proxy.load(dir)?;
    }
    axum::serve(listener, router(proxy.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    if let Some(dir) = &proxy.config.persistence {
        proxy.save(dir)?;
    }
    Ok(())
}

pub async fn serve(config: ProxyConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<()> {
    config.validate()?;
    let upstream = Arc::new(HttpUpstream::new(&config.upstream_template, config.upstream_timeout)?);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    let proxy = Arc::new(Proxy::new(config, upstream, Arc::new(SystemClock)));
    serve_with(proxy, listener, shutdown).await
}
