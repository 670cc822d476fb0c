//! Trace replay: MemDays, Q, missed updates and false 0-sized TimeMaps.
//!
//! Every resource is accessed once per day. A day whose lookup is not fresh
//! fetches that day's observed TimeMap and offers it to the cache. The
//! MemDays penalty for a day is `max(reference - cached, 0)`, where the
//! reference is by default the best cardinality observed so far.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::cache::{improves, Moment, PolicyKind, TimeMapCache, Ttl};
use crate::classify::{ChangeCase, ChangeDelta};
use crate::error::{Error, Result};
use crate::model::{IdentityPolicy, KeyedSnapshot, ObservationSeries, TimeMapSnapshot};

/// Observations for a set of resources over the same days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub series: Vec<ObservationSeries>,
    pub n_days: usize,
}

impl Trace {
    /// Day count is taken from the longest series.
    pub fn new(series: Vec<ObservationSeries>) -> Self {
        let n_days = series.iter().map(ObservationSeries::n_days).max().unwrap_or(0);
        Trace { series, n_days }
    }

    pub fn n_resources(&self) -> usize {
        self.series.len()
    }

    /// Gap-fills every series out to the trace length.
    pub fn filled(&self) -> Trace {
        Trace {
            series: self
                .series
                .iter()
                .map(|s| fill_gaps_to(s, self.n_days))
                .collect(),
            n_days: self.n_days,
        }
    }

    fn check(&self) -> Result<()> {
        if self.series.is_empty() || self.n_days == 0 {
            return Err(Error::EmptyTrace);
        }
        for s in &self.series {
            if s.snapshots.len() != self.n_days || !s.is_contiguous() {
                return Err(Error::RaggedTrace {
                    uri_r: s.uri_r.to_string(),
                    found: s.snapshots.len(),
                    expected: self.n_days,
                });
            }
        }
        Ok(())
    }
}

/// Substitutes the previous observation for each unobserved day.
pub fn fill_gaps(series: &ObservationSeries) -> ObservationSeries {
    fill_gaps_to(series, series.n_days())
}

/// [`fill_gaps`] out to `n_days`. Days before the first observation get an
/// empty snapshot flagged `synthetic`.
pub fn fill_gaps_to(series: &ObservationSeries, n_days: usize) -> ObservationSeries {
    let observed: BTreeMap<u32, &TimeMapSnapshot> = series
        .snapshots
        .iter()
        .filter(|s| !series.gaps.contains(&s.day))
        .map(|s| (s.day, s))
        .collect();
    let mut snapshots = Vec::with_capacity(n_days);
    let mut gaps = series.gaps.clone();
    let mut last: Option<&TimeMapSnapshot> = None;
    for day in 0..n_days as u32 {
        if let Some(s) = observed.get(&day) {
            snapshots.push((*s).clone());
            last = Some(s);
            continue;
        }
        gaps.insert(day);
        snapshots.push(match last {
            Some(prev) => prev.on_day(day),
            None => TimeMapSnapshot {
                synthetic: true,
                ..TimeMapSnapshot::empty(series.uri_r.clone(), day, 0)
            },
        });
    }
    ObservationSeries {
        uri_r: series.uri_r.clone(),
        snapshots,
        gaps,
    }
}

/// How the "live" side of the MemDays difference is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LiveReference {
    /// Best cardinality observed on any day up to and including t.
    #[default]
    RunningMax,
    /// Cardinality of the day-t observation only.
    Instantaneous,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplayOptions {
    pub identity: IdentityPolicy,
    pub reference: LiveReference,
}

impl ReplayOptions {
    pub fn new(identity: IdentityPolicy) -> Self {
        ReplayOptions {
            identity,
            reference: LiveReference::RunningMax,
        }
    }
}

/// Best single-snapshot cardinality over days `0..=t`.
pub fn reference_cardinality(series: &ObservationSeries, t: u32, policy: IdentityPolicy) -> usize {
    series
        .snapshots
        .iter()
        .filter(|s| s.day <= t)
        .map(|s| KeyedSnapshot::new(s, policy).cardinality())
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DayRecord {
    pub day: u32,
    pub fetches: u64,
    pub memdays_increment: u64,
    pub cache_cardinality: u64,
    pub reference_cardinality: u64,
    pub false_zero: u64,
    pub missed_updates: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationReport {
    pub policy: PolicyKind,
    pub ttl: Ttl,
    pub identity: IdentityPolicy,
    pub memdays: u64,
    pub q: u64,
    pub missed_updates: u64,
    pub false_zero_days: u64,
    /// Totals across resources for each day.
    pub per_day: Vec<DayRecord>,
}

impl SimulationReport {
    /// The metric fields, without the configuration that produced them.
    pub fn metrics(&self) -> (u64, u64, u64, u64, &[DayRecord]) {
        (
            self.memdays,
            self.q,
            self.missed_updates,
            self.false_zero_days,
            &self.per_day,
        )
    }
}

/// Keyed view per day, sharing work between days whose memento lists are
/// the same allocation.
fn keyed_views(series: &ObservationSeries, identity: IdentityPolicy) -> Vec<Arc<KeyedSnapshot>> {
    let mut out: Vec<Arc<KeyedSnapshot>> = Vec::with_capacity(series.snapshots.len());
    for (i, s) in series.snapshots.iter().enumerate() {
        let shared = i > 0 && Arc::ptr_eq(&series.snapshots[i - 1].mementos, &s.mementos);
        let view = if shared {
            out[i - 1].clone()
        } else {
            Arc::new(KeyedSnapshot::new(s, identity))
        };
        out.push(view);
    }
    out
}

fn replay_series(
    series: &ObservationSeries,
    policy: PolicyKind,
    ttl: Ttl,
    opts: &ReplayOptions,
) -> Result<Vec<DayRecord>> {
    let views = keyed_views(series, opts.identity);
    let mut cache: TimeMapCache = TimeMapCache::new(policy, ttl).with_identity(opts.identity);
    let uri_r = &*series.uri_r;
    let mut best = 0usize;
    let mut days = Vec::with_capacity(series.snapshots.len());

    for (t, (snap, live)) in series.snapshots.iter().zip(&views).enumerate() {
        let now = Moment::day(t as u32);
        let fetched = !cache.lookup(uri_r, now).is_fresh();
        if fetched {
            cache.offer_keyed(uri_r, Arc::new(snap.clone()), live.clone(), (), now)?;
        }
        best = best.max(live.cardinality());
        let reference = match opts.reference {
            LiveReference::RunningMax => best,
            LiveReference::Instantaneous => live.cardinality(),
        };
        let cached = cache.get(uri_r).map(|e| e.keyed.clone());
        let cached_card = cached.as_ref().map_or(0, |k| k.cardinality());
        let missed = !fetched
            && cached
                .as_ref()
                .is_some_and(|c| improves(c, live, opts.identity));
        days.push(DayRecord {
            day: t as u32,
            fetches: u64::from(fetched),
            memdays_increment: reference.saturating_sub(cached_card) as u64,
            cache_cardinality: cached_card as u64,
            reference_cardinality: reference as u64,
            false_zero: u64::from(cached_card == 0 && reference > 0),
            missed_updates: u64::from(missed),
        });
    }
    Ok(days)
}

/// Replays every resource of a gap-filled trace through a fresh cache.
pub fn replay(
    trace: &Trace,
    policy: PolicyKind,
    ttl: Ttl,
    identity: IdentityPolicy,
) -> Result<SimulationReport> {
    replay_with(trace, policy, ttl, &ReplayOptions::new(identity))
}

pub fn replay_with(
    trace: &Trace,
    policy: PolicyKind,
    ttl: Ttl,
    opts: &ReplayOptions,
) -> Result<SimulationReport> {
    trace.check()?;
    let per_resource: Vec<Vec<DayRecord>> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            trace
                .series
                .par_iter()
                .map(|s| replay_series(s, policy, ttl, opts))
                .collect::<Result<_>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            trace
                .series
                .iter()
                .map(|s| replay_series(s, policy, ttl, opts))
                .collect::<Result<_>>()?
        }
    };

    let mut per_day: Vec<DayRecord> = (0..trace.n_days as u32)
        .map(|day| DayRecord { day, ..DayRecord::default() })
        .collect();
    for days in &per_resource {
        for (total, d) in per_day.iter_mut().zip(days) {
            total.fetches += d.fetches;
            total.memdays_increment += d.memdays_increment;
            total.cache_cardinality += d.cache_cardinality;
            total.reference_cardinality += d.reference_cardinality;
            total.false_zero += d.false_zero;
            total.missed_updates += d.missed_updates;
        }
    }
    Ok(SimulationReport {
        policy,
        ttl,
        identity: opts.identity,
        memdays: per_day.iter().map(|d| d.memdays_increment).sum(),
        q: per_day.iter().map(|d| d.fetches).sum(),
        missed_updates: per_day.iter().map(|d| d.missed_updates).sum(),
        false_zero_days: per_day.iter().map(|d| d.false_zero).sum(),
        per_day,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub ttl: Ttl,
    pub memdays: u64,
    pub q: u64,
    pub missed_updates: u64,
    pub false_zero_days: u64,
}

impl From<&SimulationReport> for SweepPoint {
    fn from(r: &SimulationReport) -> Self {
        SweepPoint {
            ttl: r.ttl,
            memdays: r.memdays,
            q: r.q,
            missed_updates: r.missed_updates,
            false_zero_days: r.false_zero_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepCurve {
    pub policy: PolicyKind,
    /// Ordered by TTL.
    pub points: Vec<SweepPoint>,
}

/// `0..=max_days` as TTL values.
pub fn ttl_range(max_days: u32) -> Vec<Ttl> {
    (0..=max_days).map(Ttl::Days).collect()
}

/// One replay per TTL, returned in TTL order.
pub fn sweep(
    trace: &Trace,
    policy: PolicyKind,
    ttls: &[Ttl],
    identity: IdentityPolicy,
) -> Result<SweepCurve> {
    sweep_with(trace, policy, ttls, &ReplayOptions::new(identity))
}

pub fn sweep_with(
    trace: &Trace,
    policy: PolicyKind,
    ttls: &[Ttl],
    opts: &ReplayOptions,
) -> Result<SweepCurve> {
    if ttls.is_empty() {
        return Err(Error::ShortCurve(0));
    }
    let mut ttls = ttls.to_vec();
    ttls.sort_unstable();
    ttls.dedup();
    let points = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            ttls.par_iter()
                .map(|&ttl| replay_with(trace, policy, ttl, opts).map(|r| SweepPoint::from(&r)))
                .collect::<Result<Vec<_>>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            ttls.iter()
                .map(|&ttl| replay_with(trace, policy, ttl, opts).map(|r| SweepPoint::from(&r)))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(SweepCurve { policy, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimalTtl {
    pub ttl: Ttl,
    pub memdays: u64,
    pub q: u64,
    /// One of the metrics was constant, so the crossing was undefined and
    /// the TTL with the lowest MemDays was chosen instead.
    pub degenerate: bool,
}

/// The TTL where the min-max normalised MemDays line first reaches the
/// normalised Q line.
pub fn optimal_ttl(curve: &SweepCurve) -> Result<OptimalTtl> {
    let points = &curve.points;
    if points.len() < 2 {
        return Err(Error::ShortCurve(points.len()));
    }
    let span = |f: fn(&SweepPoint) -> u64| {
        let lo = points.iter().map(f).min().unwrap_or(0);
        let hi = points.iter().map(f).max().unwrap_or(0);
        (lo, hi)
    };
    let (m_lo, m_hi) = span(|p| p.memdays);
    let (q_lo, q_hi) = span(|p| p.q);
    let pick = |p: &SweepPoint, degenerate| OptimalTtl {
        ttl: p.ttl,
        memdays: p.memdays,
        q: p.q,
        degenerate,
    };

    if m_lo == m_hi || q_lo == q_hi {
        // Lowest MemDays; ties go to the larger TTL (fewer fetches).
        let best = points
            .iter()
            .min_by(|a, b| a.memdays.cmp(&b.memdays).then(b.ttl.cmp(&a.ttl)))
            .expect("non-empty");
        return Ok(pick(best, true));
    }

    let norm = |v: u64, lo: u64, hi: u64| (v - lo) as f64 / (hi - lo) as f64;
    let gap = |p: &SweepPoint| norm(p.memdays, m_lo, m_hi) - norm(p.q, q_lo, q_hi);
    let chosen = points.iter().find(|p| gap(p) >= 0.0).unwrap_or_else(|| {
        points
            .iter()
            .min_by(|a, b| gap(a).abs().total_cmp(&gap(b).abs()))
            .expect("non-empty")
    });
    Ok(pick(chosen, false))
}

/// Share of day-over-day transitions whose cardinality did not drop.
/// Transitions touching a synthetic (never observed) day are left out.
/// A trace without transitions scores 1.
pub fn monotone_fraction(trace: &Trace, identity: IdentityPolicy) -> f64 {
    let (mut steps, mut monotone) = (0u64, 0u64);
    for series in &trace.series {
        let views = keyed_views(series, identity);
        for i in 1..series.snapshots.len() {
            if series.snapshots[i - 1].synthetic || series.snapshots[i].synthetic {
                continue;
            }
            steps += 1;
            if views[i].cardinality() >= views[i - 1].cardinality() {
                monotone += 1;
            }
        }
    }
    if steps == 0 {
        1.0
    } else {
        monotone as f64 / steps as f64
    }
}

/// One classified day-over-day change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub uri_r: Arc<str>,
    /// Day of the later snapshot.
    pub day: u32,
    pub case: ChangeCase,
    pub delta: ChangeDelta,
}

/// Classifies every consecutive pair of observed days.
pub fn transitions(trace: &Trace, identity: IdentityPolicy) -> Vec<Transition> {
    let mut out = Vec::new();
    for series in &trace.series {
        let views = keyed_views(series, identity);
        for i in 1..series.snapshots.len() {
            if series.snapshots[i - 1].synthetic || series.snapshots[i].synthetic {
                continue;
            }
            let delta = ChangeDelta::between(&views[i - 1], &views[i], identity);
            out.push(Transition {
                uri_r: series.uri_r.clone(),
                day: series.snapshots[i].day,
                case: delta.case(),
                delta,
            });
        }
    }
    out
}

/// Occurrences of each case, indexed by case number minus one.
pub fn case_totals(transitions: &[Transition]) -> [u64; 7] {
    let mut totals = [0u64; 7];
    for t in transitions {
        totals[usize::from(t.case.number()) - 1] += 1;
    }
    totals
}

pub const REPORT_HEADER: &str =
    "day,fetches,memdays_increment,cache_cardinality,reference_cardinality,false_zero";
pub const SWEEP_HEADER: &str = "ttl,memdays,q,missed_updates,false_zero_days";

pub fn export_report(report: &SimulationReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for d in &report.per_day {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            d.day,
            d.fetches,
            d.memdays_increment,
            d.cache_cardinality,
            d.reference_cardinality,
            d.false_zero
        );
    }
    out
}

pub fn export_curve(curve: &SweepCurve) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.ttl, p.memdays, p.q, p.missed_updates, p.false_zero_days
        );
    }
    out
}
