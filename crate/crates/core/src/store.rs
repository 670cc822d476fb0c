//! On-disk snapshot store.
//!
//! ```text
//! <root>/<day>/<percent-encoded uri_r>.tm     raw response body
//! <root>/<day>/<percent-encoded uri_r>.meta   status=<int> instant=<ISO-8601> sha256=<hex>
//! ```
//!
//! A missing instant is written as `instant=-`. Names that would exceed
//! common file-name limits are replaced by the body-independent SHA-256 of
//! the URI-R, and the `.meta` file carries a second `uri_r=` line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linkformat::{parse_timemap, serialize_timemap};
use crate::model::{ArchiveRules, MementoRecord, ObservationSeries, TimeMapSnapshot};
use crate::sim::Trace;

const NAME_SET: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.');
const MAX_NAME: usize = 200;

pub fn sha256_hex(body: &[u8]) -> String {
    hex::encode(Sha256::digest(body))
}

/// One stored fetch outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRecord {
    pub uri_r: String,
    pub day: u32,
    pub instant: Option<DateTime<Utc>>,
    /// 0 for a transport failure.
    pub http_status: u16,
    pub body: Vec<u8>,
    pub sha256: String,
}

impl SnapshotRecord {
    pub fn new(
        uri_r: impl Into<String>,
        day: u32,
        instant: Option<DateTime<Utc>>,
        http_status: u16,
        body: impl Into<Vec<u8>>,
    ) -> Self {
        let body = body.into();
        SnapshotRecord {
            uri_r: uri_r.into(),
            day,
            instant,
            http_status,
            sha256: sha256_hex(&body),
            body,
        }
    }

    /// Serializes a snapshot in canonical link-format.
    pub fn from_snapshot(tm: &TimeMapSnapshot) -> Self {
        let body = if tm.mementos.is_empty() {
            String::new()
        } else {
            serialize_timemap(&tm.to_raw())
        };
        SnapshotRecord::new(&*tm.uri_r, tm.day, tm.observed_at, tm.http_status, body)
    }

    /// Whether the day counts as unobserved: transport failures and any
    /// status other than 2xx or 404.
    pub fn is_gap(&self) -> bool {
        !((200..300).contains(&self.http_status) || self.http_status == 404)
    }

    /// The observation, or `None` for a gap or an unparseable 2xx body.
    pub fn to_snapshot(&self, rules: &ArchiveRules) -> Option<TimeMapSnapshot> {
        if self.is_gap() {
            return None;
        }
        let mut tm = if self.http_status == 404 {
            TimeMapSnapshot::empty(self.uri_r.as_str(), self.day, 404)
        } else {
            let body = String::from_utf8_lossy(&self.body);
            let raw = parse_timemap(&body, Some(&self.uri_r)).ok()?;
            TimeMapSnapshot::from_raw(&raw, self.uri_r.as_str(), self.day, self.http_status, rules)
        };
        tm.observed_at = self.instant;
        Some(tm)
    }

    fn meta_text(&self, hashed_name: bool) -> String {
        let instant = self.instant.map_or_else(
            || "-".to_string(),
            |t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        );
        let mut out = format!(
            "status={} instant={instant} sha256={}\n",
            self.http_status, self.sha256
        );
        if hashed_name {
            out.push_str(&format!("uri_r={}\n", utf8_percent_encode(&self.uri_r, NAME_SET)));
        }
        out
    }
}

/// File stem for a URI-R, and whether it had to be hashed.
pub fn file_stem(uri_r: &str) -> (String, bool) {
    let encoded = utf8_percent_encode(uri_r, NAME_SET).to_string();
    if encoded.len() <= MAX_NAME {
        (encoded, false)
    } else {
        (format!("sha256-{}", sha256_hex(uri_r.as_bytes())), true)
    }
}

#[derive(Debug, Clone)]
pub struct SnapshotStore {
    root: PathBuf,
}

impl SnapshotStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SnapshotStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn day_dir(&self, day: u32) -> PathBuf {
        self.root.join(day.to_string())
    }

    /// Writes both files for a record, replacing any earlier record for the
    /// same (uri_r, day).
    pub fn write(&self, record: &SnapshotRecord) -> Result<()> {
        let dir = self.day_dir(record.day);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (stem, hashed) = file_stem(&record.uri_r);
        let tm = dir.join(format!("{stem}.tm"));
        let meta = dir.join(format!("{stem}.meta"));
        fs::write(&tm, &record.body).map_err(|e| Error::io(&tm, e))?;
        fs::write(&meta, record.meta_text(hashed)).map_err(|e| Error::io(&meta, e))?;
        Ok(())
    }

    pub fn read(&self, day: u32, uri_r: &str) -> Result<Option<SnapshotRecord>> {
        let (stem, _) = file_stem(uri_r);
        let meta = self.day_dir(day).join(format!("{stem}.meta"));
        match fs::metadata(&meta) {
            Ok(_) => self.read_entry(day, &meta).map(Some),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(meta, e)),
        }
    }

    /// Day indices present, ascending. Non-numeric entries are ignored.
    pub fn days(&self) -> Result<Vec<u32>> {
        let mut days: Vec<u32> = read_dir(&self.root)?
            .into_iter()
            .filter(|p| p.is_dir())
            .filter_map(|p| p.file_name()?.to_str()?.parse().ok())
            .collect();
        days.sort_unstable();
        Ok(days)
    }

    /// Every record stored for `day`, keyed by URI-R.
    pub fn read_day(&self, day: u32) -> Result<BTreeMap<String, SnapshotRecord>> {
        let mut out = BTreeMap::new();
        for path in read_dir(&self.day_dir(day))? {
            if path.extension().is_some_and(|e| e == "meta") {
                let rec = self.read_entry(day, &path)?;
                out.insert(rec.uri_r.clone(), rec);
            } else if path.extension().is_some_and(|e| e == "tm")
                && !path.with_extension("meta").exists()
            {
                return Err(corrupt(&path, "body without metadata"));
            }
        }
        Ok(out)
    }

    fn read_entry(&self, day: u32, meta_path: &Path) -> Result<SnapshotRecord> {
        let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
        let fields: HashMap<&str, &str> = text
            .split_whitespace()
            .filter_map(|tok| tok.split_once('='))
            .collect();
        let field = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| corrupt(meta_path, &format!("missing {k}")))
        };
        let http_status: u16 = field("status")?
            .parse()
            .map_err(|_| corrupt(meta_path, "bad status"))?;
        let instant = match field("instant")? {
            "-" => None,
            s => Some(
                DateTime::parse_from_rfc3339(s)
                    .map_err(|_| corrupt(meta_path, "bad instant"))?
                    .with_timezone(&Utc),
            ),
        };
        let sha256 = field("sha256")?.to_ascii_lowercase();
        let encoded = match fields.get("uri_r") {
            Some(u) => (*u).to_string(),
            None => meta_path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| corrupt(meta_path, "unreadable file name"))?
                .to_string(),
        };
        let uri_r = percent_decode_str(&encoded)
            .decode_utf8()
            .map_err(|_| corrupt(meta_path, "file name is not UTF-8"))?
            .into_owned();
        let tm_path = meta_path.with_extension("tm");
        let body = match fs::read(&tm_path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Err(corrupt(&tm_path, "metadata without body"))
            }
            Err(e) => return Err(Error::io(tm_path, e)),
        };
        if sha256_hex(&body) != sha256 {
            return Err(corrupt(&tm_path, "checksum mismatch"));
        }
        Ok(SnapshotRecord {
            uri_r,
            day,
            instant,
            http_status,
            body,
            sha256,
        })
    }

    pub fn load_series(&self, uri_r: &str, rules: &ArchiveRules) -> Result<ObservationSeries> {
        let days = self.days()?;
        let mut records = Vec::new();
        for &day in &days {
            if let Some(r) = self.read(day, uri_r)? {
                records.push(r);
            }
        }
        let n_days = days.last().map_or(0, |d| *d as usize + 1);
        Ok(assemble(uri_r, records, n_days, rules))
    }

    pub fn load_trace(&self, rules: &ArchiveRules) -> Result<Trace> {
        let days = self.days()?;
        let n_days = days.last().map_or(0, |d| *d as usize + 1);
        let mut by_uri: BTreeMap<String, Vec<SnapshotRecord>> = BTreeMap::new();
        let per_day = {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                days.par_iter()
                    .map(|d| self.read_day(*d))
                    .collect::<Result<Vec<_>>>()?
            }
            #[cfg(not(feature = "parallel"))]
            {
                days.iter()
                    .map(|d| self.read_day(*d))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        for day in per_day {
            for (uri, rec) in day {
                by_uri.entry(uri).or_default().push(rec);
            }
        }
        if by_uri.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let series = by_uri
            .into_iter()
            .map(|(uri, recs)| assemble(&uri, recs, n_days, rules))
            .collect();
        Ok(Trace { series, n_days })
    }
}

/// Builds a series from day-ordered records. Unchanged bodies share one
/// memento list.
fn assemble(
    uri_r: &str,
    records: Vec<SnapshotRecord>,
    n_days: usize,
    rules: &ArchiveRules,
) -> ObservationSeries {
    let uri: Arc<str> = Arc::from(uri_r);
    let mut seen: HashMap<(String, u16), Arc<[MementoRecord]>> = HashMap::new();
    let mut snapshots = Vec::new();
    let mut observed = BTreeSet::new();
    for rec in records {
        let key = (rec.sha256.clone(), rec.http_status);
        let tm = match seen.get(&key) {
            Some(ms) if !rec.is_gap() => Some(TimeMapSnapshot {
                uri_r: uri.clone(),
                day: rec.day,
                observed_at: rec.instant,
                mementos: ms.clone(),
                http_status: rec.http_status,
                synthetic: false,
            }),
            _ => rec.to_snapshot(rules).map(|mut tm| {
                tm.uri_r = uri.clone();
                tm
            }),
        };
        if let Some(tm) = tm {
            seen.insert(key, tm.mementos.clone());
            observed.insert(tm.day);
            snapshots.push(tm);
        }
    }
    let mut series = ObservationSeries::new(uri, snapshots);
    series.gaps = (0..n_days as u32).filter(|d| !observed.contains(d)).collect();
    series
}

/// Writes every observed snapshot. Gap days and synthetic fill-ins are
/// left out so they read back as gaps.
pub fn write_trace(trace: &Trace, dir: impl AsRef<Path>) -> Result<()> {
    let store = SnapshotStore::new(dir.as_ref());
    fs::create_dir_all(store.root()).map_err(|e| Error::io(store.root(), e))?;
    let write_series = |s: &ObservationSeries| -> Result<()> {
        for tm in &s.snapshots {
            if !tm.synthetic && !s.gaps.contains(&tm.day) {
                store.write(&SnapshotRecord::from_snapshot(tm))?;
            }
        }
        Ok(())
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        trace.series.par_iter().try_for_each(write_series)
    }
    #[cfg(not(feature = "parallel"))]
    {
        trace.series.iter().try_for_each(write_series)
    }
}

pub fn read_trace(dir: impl AsRef<Path>) -> Result<Trace> {
    SnapshotStore::new(dir.as_ref()).load_trace(&ArchiveRules::builtin())
}

pub fn load_series(store_dir: impl AsRef<Path>, uri_r: &str) -> Result<ObservationSeries> {
    SnapshotStore::new(store_dir.as_ref()).load_series(uri_r, &ArchiveRules::builtin())
}

fn read_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    entries
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect()
}

fn corrupt(path: &Path, reason: &str) -> Error {
    Error::CorruptStore {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}
