//! Deterministic synthetic observation traces.
//!
//! Each resource starts with a few archives holding historical mementos.
//! On every later day a change event fires with probability
//! `1 / mean_change_interval_days`; its kind is drawn from `event_weights`.
//! Outages hide one archive's mementos for a while and then restore them
//! unchanged, migrations rewrite URI-Ms without touching archive or
//! datetime, redactions delete mementos for good, crawls add new captures
//! and new archives join with their own history.
//!
//! Each resource draws from its own ChaCha stream of the master seed, so a
//! config always produces the same trace regardless of thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ArchiveRules, MementoRecord, ObservationSeries, TimeMapSnapshot};
use crate::sim::Trace;

/// Hosts used for synthetic archives.
pub const ARCHIVE_POOL: [&str; 8] = [
    "web.archive.org",
    "webarchive.nationalarchives.gov.uk",
    "archive.today",
    "archiefweb.eu",
    "webarchive.loc.gov",
    "wayback.archive-it.org",
    "arquivo.pt",
    "webcitation.org",
];

const HISTORY_DAYS: i64 = 3650;
const SECS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Crawl,
    ArchiveOutage,
    /// Scheduled end of an outage; never drawn at random.
    OutageRecovery,
    Redaction,
    Migration,
    NewArchive,
}

impl EventKind {
    /// Kinds that can be drawn on a change day.
    pub const DRAWN: [EventKind; 5] = [
        EventKind::Crawl,
        EventKind::ArchiveOutage,
        EventKind::Redaction,
        EventKind::Migration,
        EventKind::NewArchive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Crawl => "crawl",
            EventKind::ArchiveOutage => "outage",
            EventKind::OutageRecovery => "recovery",
            EventKind::Redaction => "redaction",
            EventKind::Migration => "migration",
            EventKind::NewArchive => "new_archive",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        EventKind::DRAWN
            .into_iter()
            .chain([EventKind::OutageRecovery])
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_resources: usize,
    pub n_days: usize,
    pub seed: u64,
    /// Mean days between change events; infinity disables them.
    pub mean_change_interval_days: f64,
    pub archive_count_range: (usize, usize),
    pub mementos_per_archive: (usize, usize),
    pub event_weights: BTreeMap<EventKind, f64>,
    pub outage_duration_days: (u32, u32),
    /// Chance that each memento of the affected archive moves in a migration.
    pub migration_rate: f64,
    /// Chance that each visible memento is removed in a redaction.
    pub redaction_rate: f64,
    /// Archives that report Memento-Datetimes with the time of day zeroed.
    pub datetime_truncation_archives: BTreeSet<String>,
    pub start_date: NaiveDate,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        // Loss events outweigh gains among change days.
        let event_weights = BTreeMap::from([
            (EventKind::Crawl, 3.0),
            (EventKind::ArchiveOutage, 4.0),
            (EventKind::Redaction, 0.5),
            (EventKind::Migration, 0.5),
            (EventKind::NewArchive, 1.0),
        ]);
        GeneratorConfig {
            n_resources: 100,
            n_days: 92,
            seed: 0,
            mean_change_interval_days: 37.6,
            archive_count_range: (1, 4),
            mementos_per_archive: (1, 20),
            event_weights,
            outage_duration_days: (1, 10),
            migration_rate: 0.5,
            redaction_rate: 0.1,
            datetime_truncation_archives: ["webarchive.nationalarchives.gov.uk", "archiefweb.eu"]
                .into_iter()
                .map(String::from)
                .collect(),
            start_date: NaiveDate::from_ymd_opt(2012, 5, 1).expect("valid date"),
        }
    }
}

impl GeneratorConfig {
    /// Default config where `kind` is the only event drawn.
    pub fn only(kind: EventKind) -> Self {
        GeneratorConfig {
            event_weights: BTreeMap::from([(kind, 1.0)]),
            ..GeneratorConfig::default()
        }
    }

    /// A small, valid config with every knob drawn from `seed`. Used to
    /// build randomized test corpora.
    pub fn random(seed: u64, max_resources: usize, max_days: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = rng.random_range(1..=3);
        let m_lo = rng.random_range(0..=3);
        let o_lo = rng.random_range(1..=3);
        let mut event_weights = BTreeMap::new();
        for kind in EventKind::DRAWN {
            if rng.random_bool(0.8) {
                event_weights.insert(kind, rng.random_range(0.0..5.0));
            }
        }
        event_weights
            .entry(EventKind::ArchiveOutage)
            .and_modify(|w| *w += 0.5)
            .or_insert(1.0);
        GeneratorConfig {
            n_resources: rng.random_range(1..=max_resources.max(1)),
            n_days: rng.random_range(2..=max_days.max(2)),
            seed: rng.random(),
            mean_change_interval_days: if rng.random_bool(0.05) {
                f64::INFINITY
            } else {
                rng.random_range(1.0..40.0)
            },
            archive_count_range: (lo, rng.random_range(lo..=(lo + 3).min(ARCHIVE_POOL.len()))),
            mementos_per_archive: (m_lo, m_lo + rng.random_range(0..=15)),
            event_weights,
            outage_duration_days: (o_lo, o_lo + rng.random_range(0..=10)),
            migration_rate: rng.random_range(0.0..=1.0),
            redaction_rate: rng.random_range(0.0..=1.0),
            datetime_truncation_archives: ARCHIVE_POOL
                .iter()
                .filter(|_| rng.random_bool(0.25))
                .map(|s| s.to_string())
                .collect(),
            ..GeneratorConfig::default()
        }
    }

    pub fn change_probability(&self) -> f64 {
        if self.mean_change_interval_days.is_infinite() {
            0.0
        } else {
            (1.0 / self.mean_change_interval_days).min(1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_days == 0 {
            return bad("n_days must be at least 1".into());
        }
        if self.mean_change_interval_days.is_nan() || self.mean_change_interval_days < 1.0 {
            return bad("mean_change_interval_days must be >= 1 (or inf)".into());
        }
        let (lo, hi) = self.archive_count_range;
        if lo > hi || hi > ARCHIVE_POOL.len() {
            return bad(format!(
                "archive_count_range must satisfy min <= max <= {}",
                ARCHIVE_POOL.len()
            ));
        }
        if self.mementos_per_archive.0 > self.mementos_per_archive.1 {
            return bad("mementos_per_archive min exceeds max".into());
        }
        let (olo, ohi) = self.outage_duration_days;
        if olo == 0 || olo > ohi {
            return bad("outage_duration_days must satisfy 1 <= min <= max".into());
        }
        for (name, p) in [
            ("migration_rate", self.migration_rate),
            ("redaction_rate", self.redaction_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be within [0, 1]"));
            }
        }
        if self
            .event_weights
            .values()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return bad("event weights must be finite and non-negative".into());
        }
        if !EventKind::DRAWN
            .iter()
            .any(|k| self.event_weights.get(k).is_some_and(|w| *w > 0.0))
        {
            return bad("at least one event weight must be positive".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Ranges are written
    /// `min..max`; event weights as `weight.<kind> = <w>`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = GeneratorConfig::default();
        let mut weights_reset = false;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::InvalidConfig(format!("line {}: {msg}", idx + 1));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err("expected `key = value`"))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| err("expected a number"));
            let int = |v: &str| v.parse::<u64>().map_err(|_| err("expected an integer"));
            let range = |v: &str| -> Result<(u64, u64)> {
                let (a, b) = v
                    .split_once("..")
                    .or_else(|| v.split_once(','))
                    .ok_or_else(|| err("expected `min..max`"))?;
                Ok((int(a.trim())?, int(b.trim())?))
            };
            match key {
                "n_resources" => cfg.n_resources = int(value)? as usize,
                "n_days" => cfg.n_days = int(value)? as usize,
                "seed" => cfg.seed = int(value)?,
                "mean_change_interval_days" => {
                    cfg.mean_change_interval_days = if value.eq_ignore_ascii_case("inf") {
                        f64::INFINITY
                    } else {
                        num(value)?
                    }
                }
                "archive_count_range" => {
                    let (a, b) = range(value)?;
                    cfg.archive_count_range = (a as usize, b as usize);
                }
                "mementos_per_archive" => {
                    let (a, b) = range(value)?;
                    cfg.mementos_per_archive = (a as usize, b as usize);
                }
                "outage_duration_days" => {
                    let (a, b) = range(value)?;
                    cfg.outage_duration_days = (a as u32, b as u32);
                }
                "migration_rate" => cfg.migration_rate = num(value)?,
                "redaction_rate" => cfg.redaction_rate = num(value)?,
                "datetime_truncation_archives" => {
                    cfg.datetime_truncation_archives = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect();
                }
                "start_date" => {
                    cfg.start_date = NaiveDate::parse_from_str(value, "%Y-%m-%d")
                        .map_err(|_| err("expected YYYY-MM-DD"))?;
                }
                _ => {
                    let Some(kind) = key.strip_prefix("weight.") else {
                        return Err(err(&format!("unknown key `{key}`")));
                    };
                    let kind: EventKind = kind.parse().map_err(|e: String| err(&e))?;
                    // Any explicit weight replaces the default table.
                    if !weights_reset {
                        cfg.event_weights.clear();
                        weights_reset = true;
                    }
                    cfg.event_weights.insert(kind, num(value)?);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "n_resources = {}\nn_days = {}\nseed = {}\nmean_change_interval_days = {}\n\
             archive_count_range = {}..{}\nmementos_per_archive = {}..{}\n\
             outage_duration_days = {}..{}\nmigration_rate = {}\nredaction_rate = {}\n\
             datetime_truncation_archives = {}\nstart_date = {}\n",
            self.n_resources,
            self.n_days,
            self.seed,
            if self.mean_change_interval_days.is_infinite() {
                "inf".to_string()
            } else {
                self.mean_change_interval_days.to_string()
            },
            self.archive_count_range.0,
            self.archive_count_range.1,
            self.mementos_per_archive.0,
            self.mementos_per_archive.1,
            self.outage_duration_days.0,
            self.outage_duration_days.1,
            self.migration_rate,
            self.redaction_rate,
            self.datetime_truncation_archives
                .iter()
                .cloned()
                .collect::<Vec<_>>()
                .join(", "),
            self.start_date.format("%Y-%m-%d"),
        );
        for (kind, w) in &self.event_weights {
            out.push_str(&format!("weight.{kind} = {w}\n"));
        }
        out
    }
}

/// An event applied while generating, for inspection by tests and reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedEvent {
    pub resource: usize,
    pub day: u32,
    pub kind: EventKind,
    /// Mementos added, hidden, restored, removed or moved.
    pub mementos: usize,
}

pub fn generate(config: &GeneratorConfig) -> Result<Trace> {
    generate_with_events(config).map(|(trace, _)| trace)
}

pub fn generate_with_events(config: &GeneratorConfig) -> Result<(Trace, Vec<GeneratedEvent>)> {
    config.validate()?;
    let rules = ArchiveRules::builtin();
    let weights: Vec<f64> = EventKind::DRAWN
        .iter()
        .map(|k| config.event_weights.get(k).copied().unwrap_or(0.0))
        .collect();
    let picker = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidConfig(format!("event weights: {e}")))?;

    let run = |i: usize| generate_resource(config, i, &rules, &picker);
    let results: Vec<(ObservationSeries, Vec<GeneratedEvent>)> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..config.n_resources).into_par_iter().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..config.n_resources).map(run).collect()
        }
    };
    let mut series = Vec::with_capacity(results.len());
    let mut events = Vec::new();
    for (s, e) in results {
        series.push(s);
        events.extend(e);
    }
    Ok((
        Trace {
            series,
            n_days: config.n_days,
        },
        events,
    ))
}

#[derive(Debug, Clone)]
struct Capture {
    archive: usize,
    captured: i64,
    generation: u32,
}

struct Resource<'a> {
    uri_r: Arc<str>,
    present: Vec<usize>,
    captures: Vec<Capture>,
    /// Archive index -> first day it is back.
    outages: BTreeMap<usize, u32>,
    config: &'a GeneratorConfig,
    rules: &'a ArchiveRules,
}

impl Resource<'_> {
    fn available(&self) -> Vec<usize> {
        self.present
            .iter()
            .copied()
            .filter(|a| !self.outages.contains_key(a))
            .collect()
    }

    fn visible(&self) -> impl Iterator<Item = (usize, &Capture)> {
        self.captures
            .iter()
            .enumerate()
            .filter(|(_, c)| !self.outages.contains_key(&c.archive))
    }

    fn add_capture(&mut self, archive: usize, captured: i64) -> bool {
        if self
            .captures
            .iter()
            .any(|c| c.archive == archive && c.captured == captured)
        {
            return false;
        }
        self.captures.push(Capture {
            archive,
            captured,
            generation: 0,
        });
        true
    }

    fn render(&self) -> Vec<MementoRecord> {
        self.visible()
            .map(|(_, c)| {
                let host = ARCHIVE_POOL[c.archive];
                let true_time = DateTime::from_timestamp(c.captured, 0).expect("in range");
                let stamp = true_time.format("%Y%m%d%H%M%S");
                let uri_m = if c.generation == 0 {
                    format!("http://{host}/memento/{stamp}/{}", self.uri_r)
                } else {
                    format!("http://{host}/archive/v{}/{stamp}/{}", c.generation, self.uri_r)
                };
                let reported = if self.config.datetime_truncation_archives.contains(host) {
                    DateTime::from_timestamp(c.captured - c.captured.rem_euclid(SECS_PER_DAY), 0)
                        .expect("in range")
                } else {
                    true_time
                };
                MementoRecord::new(&uri_m, reported, self.uri_r.clone(), self.rules)
                    .expect("synthetic URI-Ms are absolute")
            })
            .collect()
    }
}

fn generate_resource(
    config: &GeneratorConfig,
    index: usize,
    rules: &ArchiveRules,
    picker: &WeightedIndex<f64>,
) -> (ObservationSeries, Vec<GeneratedEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let start = config
        .start_date
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
        .timestamp();
    let uri_r: Arc<str> = Arc::from(format!("http://www.site{index:05}.example.org/"));

    let mut res = Resource {
        uri_r: uri_r.clone(),
        present: Vec::new(),
        captures: Vec::new(),
        outages: BTreeMap::new(),
        config,
        rules,
    };

    let mut pool: Vec<usize> = (0..ARCHIVE_POOL.len()).collect();
    pool.shuffle(&mut rng);
    let n_archives = rng.random_range(config.archive_count_range.0..=config.archive_count_range.1);
    for &archive in &pool[..n_archives] {
        res.present.push(archive);
        seed_history(&mut res, archive, start, &mut rng);
    }

    let p_change = config.change_probability();
    let mut events = Vec::new();
    let mut snapshots = Vec::with_capacity(config.n_days);
    let mut current: Arc<[MementoRecord]> = res.render().into();

    for day in 0..config.n_days as u32 {
        let mut changed = false;
        if day > 0 {
            let back: Vec<usize> = res
                .outages
                .iter()
                .filter(|(_, until)| **until <= day)
                .map(|(a, _)| *a)
                .collect();
            for archive in back {
                res.outages.remove(&archive);
                let restored = res.captures.iter().filter(|c| c.archive == archive).count();
                events.push(GeneratedEvent {
                    resource: index,
                    day,
                    kind: EventKind::OutageRecovery,
                    mementos: restored,
                });
                changed = true;
            }
            if p_change > 0.0 && rng.random_bool(p_change) {
                let kind = EventKind::DRAWN[picker.sample(&mut rng)];
                let day_start = start + i64::from(day) * SECS_PER_DAY;
                if let Some(n) = apply_event(&mut res, kind, day, day_start, &mut rng) {
                    events.push(GeneratedEvent {
                        resource: index,
                        day,
                        kind,
                        mementos: n,
                    });
                    changed = true;
                }
            }
        }
        if changed {
            current = res.render().into();
        }
        let http_status = if current.is_empty() { 404 } else { 200 };
        let observed_at = DateTime::<Utc>::from_timestamp(start + i64::from(day) * SECS_PER_DAY, 0)
            .expect("in range");
        snapshots.push(TimeMapSnapshot {
            uri_r: uri_r.clone(),
            day,
            observed_at: Some(observed_at),
            mementos: current.clone(),
            http_status,
            synthetic: false,
        });
    }
    (ObservationSeries::new(uri_r, snapshots), events)
}

fn seed_history(res: &mut Resource<'_>, archive: usize, start: i64, rng: &mut ChaCha8Rng) {
    let (lo, hi) = res.config.mementos_per_archive;
    let n = rng.random_range(lo..=hi);
    for _ in 0..n {
        let captured = start - rng.random_range(1..=HISTORY_DAYS * SECS_PER_DAY);
        res.add_capture(archive, captured);
    }
}

/// Applies one event; `None` when it had nothing to act on.
fn apply_event(
    res: &mut Resource<'_>,
    kind: EventKind,
    day: u32,
    day_start: i64,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let cfg = res.config;
    match kind {
        EventKind::Crawl => {
            let available = res.available();
            let archive = *available.get(rng.random_range(0..available.len().max(1)))?;
            let n = rng.random_range(1..=3);
            let added = (0..n)
                .filter(|_| res.add_capture(archive, day_start + rng.random_range(0..SECS_PER_DAY)))
                .count();
            (added > 0).then_some(added)
        }
        EventKind::ArchiveOutage => {
            let available: Vec<usize> = res
                .available()
                .into_iter()
                .filter(|a| res.captures.iter().any(|c| c.archive == *a))
                .collect();
            let archive = *available.get(rng.random_range(0..available.len().max(1)))?;
            let (lo, hi) = cfg.outage_duration_days;
            res.outages.insert(archive, day + rng.random_range(lo..=hi));
            Some(res.captures.iter().filter(|c| c.archive == archive).count())
        }
        EventKind::Redaction => {
            let visible: Vec<usize> = res.visible().map(|(i, _)| i).collect();
            if visible.is_empty() {
                return None;
            }
            let mut doomed: Vec<usize> = visible
                .iter()
                .copied()
                .filter(|_| rng.random_bool(cfg.redaction_rate))
                .collect();
            if doomed.is_empty() {
                doomed.push(visible[rng.random_range(0..visible.len())]);
            }
            for &i in doomed.iter().rev() {
                res.captures.remove(i);
            }
            Some(doomed.len())
        }
        EventKind::Migration => {
            let available: Vec<usize> = res
                .available()
                .into_iter()
                .filter(|a| res.captures.iter().any(|c| c.archive == *a))
                .collect();
            let archive = *available.get(rng.random_range(0..available.len().max(1)))?;
            let members: Vec<usize> = (0..res.captures.len())
                .filter(|&i| res.captures[i].archive == archive)
                .collect();
            let mut moved: Vec<usize> = members
                .iter()
                .copied()
                .filter(|_| rng.random_bool(cfg.migration_rate))
                .collect();
            if moved.is_empty() {
                moved.push(members[rng.random_range(0..members.len())]);
            }
            for &i in &moved {
                res.captures[i].generation += 1;
            }
            Some(moved.len())
        }
        EventKind::NewArchive => {
            let absent: Vec<usize> = (0..ARCHIVE_POOL.len())
                .filter(|a| !res.present.contains(a))
                .collect();
            let archive = *absent.get(rng.random_range(0..absent.len().max(1)))?;
            res.present.push(archive);
            let before = res.captures.len();
            let start = day_start - i64::from(day) * SECS_PER_DAY;
            seed_history(res, archive, start, rng);
            Some(res.captures.len() - before)
        }
        EventKind::OutageRecovery => None,
    }
}
