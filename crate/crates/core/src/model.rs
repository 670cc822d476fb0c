//! Mementos, TimeMap snapshots and memento identity.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::linkformat::{LinkEntry, RawTimeMap};

/// The archive hosting a memento.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArchiveId(Arc<str>);

impl ArchiveId {
    pub fn new(id: impl AsRef<str>) -> Self {
        ArchiveId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArchiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered URI-prefix rules mapping URI-Ms to archives.
///
/// Prefixes are matched against `host[:port]/path` with the scheme dropped
/// and the host lowercased; the longest matching prefix wins, earlier rules
/// win ties. URI-Ms matching no rule fall back to their lowercased host.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArchiveRules {
    rules: Vec<(String, ArchiveId)>,
}

const DEFAULT_RULES: &str = "\
# Internet Archive
http://api.wayback.archive.org/ api.wayback.archive.org
http://web.archive.org/web/ web.archive.org
http://wayback.archive.org/web/ wayback.archive.org
http://wayback.archive-it.org/ wayback.archive-it.org
# UK
http://webarchive.nationalarchives.gov.uk/ webarchive.nationalarchives.gov.uk
http://www.webarchive.org.uk/wayback/archive/ webarchive.org.uk
# Library of Congress collections share a host
http://webarchive.loc.gov/all/ webarchive.loc.gov
http://webarchive.loc.gov/lcwa/ webarchive.loc.gov/lcwa
http://archive.today/ archive.today
http://archiefweb.eu/ archiefweb.eu
";

impl ArchiveRules {
    pub fn empty() -> Self {
        ArchiveRules::default()
    }

    /// Rules for the archives seen in Memento aggregator output.
    pub fn builtin() -> Self {
        ArchiveRules::parse(DEFAULT_RULES).expect("builtin archive rules are valid")
    }

    /// Parses `<uri-prefix> <archive-id>` lines. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = ArchiveRules::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(prefix), Some(id), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::InvalidRule {
                    line: idx + 1,
                    reason: "expected `<uri-prefix> <archive-id>`".into(),
                });
            };
            rules.push(prefix, id);
        }
        Ok(rules)
    }

    pub fn push(&mut self, prefix: &str, id: &str) {
        self.rules.push((match_key(prefix), ArchiveId::new(id)));
    }

    /// Appends the rules of `other` after this table's rules.
    pub fn extend(&mut self, other: ArchiveRules) {
        self.rules.extend(other.rules);
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn archive_of(&self, uri_m: &str) -> Result<ArchiveId> {
        let url = url::Url::parse(uri_m).map_err(|_| Error::InvalidUri(uri_m.to_owned()))?;
        let host = url
            .host_str()
            .filter(|h| !h.is_empty())
            .ok_or_else(|| Error::InvalidUri(uri_m.to_owned()))?
            .to_ascii_lowercase();
        let key = match_key(uri_m);
        let mut best: Option<&(String, ArchiveId)> = None;
        for rule in &self.rules {
            if key.starts_with(&rule.0) && best.is_none_or(|b| rule.0.len() > b.0.len()) {
                best = Some(rule);
            }
        }
        Ok(best.map_or_else(|| ArchiveId::new(host), |(_, id)| id.clone()))
    }
}

/// `scheme://Host/Path` -> `host/Path`.
fn match_key(uri: &str) -> String {
    let rest = uri.split_once("://").map_or(uri, |(_, rest)| rest);
    let (authority, path) = rest
        .find('/')
        .map_or((rest, ""), |idx| rest.split_at(idx));
    let mut key = authority.to_ascii_lowercase();
    key.push_str(path);
    key
}

/// A memento as listed in one TimeMap observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MementoRecord {
    pub uri_m: Arc<str>,
    /// Memento-Datetime at second precision.
    pub datetime: DateTime<Utc>,
    pub archive: ArchiveId,
    pub uri_r: Arc<str>,
}

impl MementoRecord {
    pub fn new(
        uri_m: &str,
        datetime: DateTime<Utc>,
        uri_r: Arc<str>,
        rules: &ArchiveRules,
    ) -> Result<Self> {
        if uri_m.is_empty() {
            return Err(Error::InvalidUri(String::new()));
        }
        let archive = rules.archive_of(uri_m)?;
        Ok(MementoRecord {
            uri_m: Arc::from(uri_m),
            datetime: truncate_to_second(datetime),
            archive,
            uri_r,
        })
    }
}

fn truncate_to_second(dt: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp(dt.timestamp(), 0).unwrap_or(dt)
}

/// One observation of a TimeMap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeMapSnapshot {
    pub uri_r: Arc<str>,
    /// Observation day index.
    pub day: u32,
    /// Wall-clock time of the observation, kept for provenance.
    pub observed_at: Option<DateTime<Utc>>,
    pub mementos: Arc<[MementoRecord]>,
    /// HTTP status of the response; 0 for a transport failure.
    pub http_status: u16,
    /// Placeholder for a day that was never observed at all.
    pub synthetic: bool,
}

impl TimeMapSnapshot {
    pub fn new(uri_r: impl Into<Arc<str>>, day: u32, mementos: Vec<MementoRecord>) -> Self {
        let http_status = if mementos.is_empty() { 404 } else { 200 };
        TimeMapSnapshot {
            uri_r: uri_r.into(),
            day,
            observed_at: None,
            mementos: mementos.into(),
            http_status,
            synthetic: false,
        }
    }

    pub fn empty(uri_r: impl Into<Arc<str>>, day: u32, http_status: u16) -> Self {
        TimeMapSnapshot {
            uri_r: uri_r.into(),
            day,
            observed_at: None,
            mementos: Arc::from(Vec::new()),
            http_status,
            synthetic: false,
        }
    }

    /// Builds a snapshot from a parsed TimeMap. Every memento takes the
    /// snapshot's `uri_r`, whatever URI-R is embedded in its URI-M.
    /// Entries whose URI-M has no host are dropped.
    pub fn from_raw(
        raw: &RawTimeMap,
        uri_r: impl Into<Arc<str>>,
        day: u32,
        http_status: u16,
        rules: &ArchiveRules,
    ) -> Self {
        let uri_r = uri_r.into();
        let mementos: Vec<_> = if http_status == 404 {
            Vec::new()
        } else {
            raw.mementos()
                .filter_map(|e| {
                    let dt = e.datetime?;
                    MementoRecord::new(&e.target, dt, uri_r.clone(), rules).ok()
                })
                .collect()
        };
        TimeMapSnapshot {
            uri_r,
            day,
            observed_at: None,
            mementos: mementos.into(),
            http_status,
            synthetic: false,
        }
    }

    pub fn with_observed_at(mut self, at: DateTime<Utc>) -> Self {
        self.observed_at = Some(at);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.mementos.is_empty()
    }

    /// Same content, observed on a different day.
    pub fn on_day(&self, day: u32) -> Self {
        TimeMapSnapshot { day, ..self.clone() }
    }

    /// `rel="original"` followed by one `rel="memento"` entry per memento.
    /// A snapshot without mementos renders as an empty document.
    pub fn to_raw(&self) -> RawTimeMap {
        if self.mementos.is_empty() {
            return RawTimeMap::from_entries(Vec::new(), Some(&self.uri_r));
        }
        let mut entries = Vec::with_capacity(self.mementos.len() + 1);
        entries.push(LinkEntry::new(&*self.uri_r, "original"));
        entries.extend(
            self.mementos
                .iter()
                .map(|m| LinkEntry::new(&*m.uri_m, "memento").with_datetime(m.datetime)),
        );
        RawTimeMap::from_entries(entries, Some(&self.uri_r))
    }
}

/// How two URI-Ms are judged to name the same memento.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum IdentityPolicy {
    /// Exact URI-M string equality.
    Strict,
    /// Equality of (archive, Memento-Datetime, URI-R).
    #[default]
    Loose,
}

impl FromStr for IdentityPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(IdentityPolicy::Strict),
            "loose" => Ok(IdentityPolicy::Loose),
            other => Err(format!("unknown identity policy `{other}` (strict|loose)")),
        }
    }
}

impl fmt::Display for IdentityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdentityPolicy::Strict => "strict",
            IdentityPolicy::Loose => "loose",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MementoKey {
    Strict(Arc<str>),
    Loose {
        archive: ArchiveId,
        datetime: DateTime<Utc>,
        uri_r: Arc<str>,
    },
}

pub fn memento_key(m: &MementoRecord, policy: IdentityPolicy) -> MementoKey {
    match policy {
        IdentityPolicy::Strict => MementoKey::Strict(m.uri_m.clone()),
        IdentityPolicy::Loose => MementoKey::Loose {
            archive: m.archive.clone(),
            datetime: m.datetime,
            uri_r: m.uri_r.clone(),
        },
    }
}

/// A snapshot reduced to its sorted, deduplicated memento keys and archives.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyedSnapshot {
    pub keys: Vec<MementoKey>,
    pub archives: Vec<ArchiveId>,
}

impl KeyedSnapshot {
    pub fn new(tm: &TimeMapSnapshot, policy: IdentityPolicy) -> Self {
        let mut keys: Vec<_> = tm.mementos.iter().map(|m| memento_key(m, policy)).collect();
        keys.sort_unstable();
        keys.dedup();
        let mut archives: Vec<_> = tm.mementos.iter().map(|m| m.archive.clone()).collect();
        archives.sort_unstable();
        archives.dedup();
        KeyedSnapshot { keys, archives }
    }

    pub fn cardinality(&self) -> usize {
        self.keys.len()
    }
}

/// Number of distinct mementos under `policy`.
pub fn cardinality(tm: &TimeMapSnapshot, policy: IdentityPolicy) -> usize {
    KeyedSnapshot::new(tm, policy).cardinality()
}

pub fn archives_of(tm: &TimeMapSnapshot) -> BTreeSet<ArchiveId> {
    tm.mementos.iter().map(|m| m.archive.clone()).collect()
}

/// `|TM(prev)| <= |TM(next)|`.
pub fn is_monotone_step(
    prev: &TimeMapSnapshot,
    next: &TimeMapSnapshot,
    policy: IdentityPolicy,
) -> Result<bool> {
    ensure_same_resource(prev, next)?;
    Ok(cardinality(next, policy) >= cardinality(prev, policy))
}

pub(crate) fn ensure_same_resource(a: &TimeMapSnapshot, b: &TimeMapSnapshot) -> Result<()> {
    if a.uri_r != b.uri_r {
        return Err(Error::MismatchedResource {
            left: a.uri_r.to_string(),
            right: b.uri_r.to_string(),
        });
    }
    Ok(())
}

/// Daily observations of one URI-R.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeries {
    pub uri_r: Arc<str>,
    /// Sorted by day. Contiguous from day 0 once gaps are filled.
    pub snapshots: Vec<TimeMapSnapshot>,
    /// Days with no successful observation.
    pub gaps: BTreeSet<u32>,
}

impl ObservationSeries {
    pub fn new(uri_r: impl Into<Arc<str>>, snapshots: Vec<TimeMapSnapshot>) -> Self {
        ObservationSeries {
            uri_r: uri_r.into(),
            snapshots,
            gaps: BTreeSet::new(),
        }
    }

    /// Number of days covered, observed or not.
    pub fn n_days(&self) -> usize {
        let last_obs = self.snapshots.iter().map(|s| s.day).max();
        let last_gap = self.gaps.iter().next_back().copied();
        last_obs.max(last_gap).map_or(0, |d| d as usize + 1)
    }

    /// One snapshot per day, indexed by day.
    pub fn is_contiguous(&self) -> bool {
        self.snapshots
            .iter()
            .enumerate()
            .all(|(i, s)| s.day as usize == i)
    }

    pub fn snapshot(&self, day: u32) -> Option<&TimeMapSnapshot> {
        self.snapshots.iter().find(|s| s.day == day)
    }
}

/// Union of memento keys over days `0..=upto_t`.
pub fn cumulative_set(
    series: &ObservationSeries,
    upto_t: u32,
    policy: IdentityPolicy,
) -> BTreeSet<MementoKey> {
    series
        .snapshots
        .iter()
        .filter(|s| s.day <= upto_t)
        .flat_map(|s| s.mementos.iter().map(move |m| memento_key(m, policy)))
        .collect()
}
