//! One day's TimeMap collection.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use reqwest::redirect::Policy;
use timemap_core::store::{SnapshotRecord, SnapshotStore};
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::error::{Result, ServiceError};

pub const URI_SLOT: &str = "{uri_r}";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(45);
pub const DEFAULT_CONCURRENCY: usize = 11;
pub const MAX_REDIRECTS: usize = 5;

#[derive(Debug, Clone)]
pub struct HarvestJob {
    pub uri_rs: Vec<String>,
    /// Aggregator URI with one `{uri_r}` slot, e.g.
    /// `http://aggregator.example/timemap/link/{uri_r}`.
    pub aggregator_template: String,
    pub timeout: Duration,
    pub concurrency: usize,
    pub output_dir: PathBuf,
}

impl HarvestJob {
    pub fn new(uri_rs: Vec<String>, aggregator_template: impl Into<String>, output_dir: impl Into<PathBuf>) -> Self {
        HarvestJob {
            uri_rs,
            aggregator_template: aggregator_template.into(),
            timeout: DEFAULT_TIMEOUT,
            concurrency: DEFAULT_CONCURRENCY,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_template(&self.aggregator_template)?;
        if self.timeout.is_zero() {
            return Err(ServiceError::InvalidJob("timeout must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(ServiceError::InvalidJob("concurrency must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn validate_template(template: &str) -> Result<()> {
    if template.matches(URI_SLOT).count() != 1 {
        return Err(ServiceError::InvalidJob(format!(
            "template must contain {URI_SLOT} exactly once: {template}"
        )));
    }
    Ok(())
}

/// The TimeMap URI for a resource. The URI-R is substituted verbatim,
/// which is what aggregators expect.
pub fn uri_t(template: &str, uri_r: &str) -> String {
    template.replacen(URI_SLOT, uri_r, 1)
}

/// Timeout, DNS failure, refused or reset connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFailure(pub String);

impl std::fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "transport failure: {}", self.0)
    }
}

/// A client that follows up to five redirects and gives up on a request
/// after `timeout`, body included.
pub fn http_client(timeout: Duration) -> Result<reqwest::Client> {
    reqwest::Client::builder()
        .redirect(Policy::limited(MAX_REDIRECTS))
        .timeout(timeout)
        .build()
        .map_err(|e| ServiceError::Client(e.to_string()))
}

/// One GET; returns the final status and body.
pub async fn fetch_timemap(
    client: &reqwest::Client,
    uri_t: &str,
) -> std::result::Result<(u16, String), TransportFailure> {
    let resp = client
        .get(uri_t)
        .header(reqwest::header::ACCEPT, "application/link-format")
        .send()
        .await
        .map_err(|e| TransportFailure(e.to_string()))?;
    let status = resp.status().as_u16();
    let body = resp.text().await.map_err(|e| TransportFailure(e.to_string()))?;
    Ok((status, body))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HarvestSummary {
    /// 2xx responses.
    pub ok: usize,
    /// Any other HTTP status, 404 included.
    pub http_error: usize,
    pub transport_failure: usize,
}

impl HarvestSummary {
    pub fn total(&self) -> usize {
        self.ok + self.http_error + self.transport_failure
    }

    fn count(&mut self, status: u16) {
        match status {
            0 => self.transport_failure += 1,
            200..=299 => self.ok += 1,
            _ => self.http_error += 1,
        }
    }
}

/// Fetches every URI-R once with at most `concurrency` requests in flight
/// and writes one record per URI-R for `day`. Transport failures are
/// stored with status 0. Duplicate URI-Rs are fetched once.
pub async fn harvest(job: &HarvestJob, day: u32) -> Result<HarvestSummary> {
    job.validate()?;
    let client = http_client(job.timeout)?;
    let store = Arc::new(SnapshotStore::new(&job.output_dir));
    let permits = Arc::new(Semaphore::new(job.concurrency));
    let uris: BTreeSet<&String> = job.uri_rs.iter().collect();

    let mut tasks = JoinSet::new();
    for uri_r in uris {
        let (client, store, permits) = (client.clone(), store.clone(), permits.clone());
        let uri_r = uri_r.clone();
        let target = uri_t(&job.aggregator_template, &uri_r);
        tasks.spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore open");
            let (status, body) = fetch_timemap(&client, &target)
                .await
                .unwrap_or_else(|_| (0, String::new()));
            let record = SnapshotRecord::new(uri_r, day, Some(Utc::now()), status, body);
            tokio::task::spawn_blocking(move || store.write(&record).map(|_| status))
                .await
                .expect("store writer panicked")
        });
    }

    let mut summary = HarvestSummary::default();
    while let Some(done) = tasks.join_next().await {
        let status = done.expect("harvest task panicked")?;
        summary.count(status);
    }
    Ok(summary)
}
