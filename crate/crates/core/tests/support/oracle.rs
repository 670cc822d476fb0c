//! Brute-force replay written without the library's cache or classifier.
//! Shared by the core tests and the acceptance suite.

use std::collections::BTreeSet;

use timemap_core::model::{IdentityPolicy, ObservationSeries, TimeMapSnapshot};
use timemap_core::sim::{replay, Trace};
use timemap_core::{PolicyKind, Ttl};

pub fn keys(s: &TimeMapSnapshot, strict: bool) -> BTreeSet<String> {
    s.mementos
        .iter()
        .map(|m| {
            if strict {
                m.uri_m.to_string()
            } else {
                format!("{}|{}|{}", m.archive.as_str(), m.datetime.timestamp(), m.uri_r)
            }
        })
        .collect()
}

pub fn archives(s: &TimeMapSnapshot) -> BTreeSet<String> {
    s.mementos.iter().map(|m| m.archive.as_str().to_string()).collect()
}

pub fn case(prev: &TimeMapSnapshot, next: &TimeMapSnapshot, strict: bool) -> u8 {
    let (a, b) = (keys(prev, strict), keys(next, strict));
    let gained = b.difference(&a).count() > 0;
    let lost = a.difference(&b).count() > 0;
    let (aa, ab) = (archives(prev), archives(next));
    let arch_lost = aa.difference(&ab).count() > 0;
    let arch_gained = ab.difference(&aa).count() > 0;
    if !gained && !lost {
        1
    } else if gained && arch_lost {
        4
    } else if gained && lost {
        5
    } else if gained && arch_gained {
        3
    } else if gained {
        2
    } else if arch_lost {
        6
    } else {
        7
    }
}

pub fn better(cached: &TimeMapSnapshot, cand: &TimeMapSnapshot, strict: bool) -> bool {
    (2..=5).contains(&case(cached, cand, strict))
        && keys(cand, strict).len() >= keys(cached, strict).len()
}

#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct Day {
    pub fetches: u64,
    pub inc: u64,
    pub cache: u64,
    pub reference: u64,
    pub false_zero: u64,
    pub missed: u64,
}

pub fn oracle_series(s: &ObservationSeries, policy: PolicyKind, ttl: Option<u32>, strict: bool) -> Vec<Day> {
    let cards: Vec<u64> = s.snapshots.iter().map(|x| keys(x, strict).len() as u64).collect();
    let mut cached: Option<(&TimeMapSnapshot, u64)> = None;
    let mut last_fetch = 0u32;
    let mut out = Vec::new();
    for (t, live) in s.snapshots.iter().enumerate() {
        let t = t as u32;
        let ttl = if policy == PolicyKind::Current { None } else { ttl };
        let fresh = cached.is_some() && ttl.is_none_or(|n| t - last_fetch < n);
        if !fresh {
            let fetched = Some((live, cards[t as usize]));
            cached = match (cached, policy) {
                (None, _) => fetched,
                (Some(_), PolicyKind::Unconditional) => fetched,
                (Some((c, _)), PolicyKind::Conditional) if better(c, live, strict) => fetched,
                (c, _) => c,
            };
            last_fetch = t;
        }
        let reference = *cards[..=t as usize].iter().max().unwrap();
        let (c, card) = cached.unwrap();
        out.push(Day {
            fetches: u64::from(!fresh),
            inc: reference.saturating_sub(card),
            cache: card,
            reference,
            false_zero: u64::from(card == 0 && reference > 0),
            missed: u64::from(fresh && !std::sync::Arc::ptr_eq(&c.mementos, &live.mementos) && better(c, live, strict)),
        });
    }
    out
}

pub fn oracle(trace: &Trace, policy: PolicyKind, ttl: Option<u32>, strict: bool) -> Vec<Day> {
    let mut total = vec![Day::default(); trace.n_days];
    for s in &trace.series {
        for (acc, d) in total.iter_mut().zip(oracle_series(s, policy, ttl, strict)) {
            acc.fetches += d.fetches;
            acc.inc += d.inc;
            acc.cache += d.cache;
            acc.reference += d.reference;
            acc.false_zero += d.false_zero;
            acc.missed += d.missed;
        }
    }
    total
}

/// Replays `trace` with the library and the oracle; `Err` describes the
/// first disagreement.
pub fn compare(trace: &Trace, policy: PolicyKind, ttl: Option<u32>, strict: bool) -> Result<(), String> {
    let identity = if strict { IdentityPolicy::Strict } else { IdentityPolicy::Loose };
    let report = replay(trace, policy, ttl.map_or(Ttl::Infinite, Ttl::Days), identity)
        .map_err(|e| e.to_string())?;
    let want = oracle(trace, policy, ttl, strict);
    let got: Vec<Day> = report
        .per_day
        .iter()
        .map(|d| Day {
            fetches: d.fetches,
            inc: d.memdays_increment,
            cache: d.cache_cardinality,
            reference: d.reference_cardinality,
            false_zero: d.false_zero,
            missed: d.missed_updates,
        })
        .collect();
    let sum = |f: fn(&Day) -> u64| want.iter().map(f).sum::<u64>();
    let totals = (report.memdays, report.q, report.missed_updates, report.false_zero_days);
    let expected = (sum(|d| d.inc), sum(|d| d.fetches), sum(|d| d.missed), sum(|d| d.false_zero));
    if got != want {
        let day = got.iter().zip(&want).position(|(a, b)| a != b).unwrap_or(0);
        return Err(format!("day {day}: replay {:?} oracle {:?}", got.get(day), want.get(day)));
    }
    if totals != expected {
        return Err(format!("totals: replay {totals:?} oracle {expected:?}"));
    }
    Ok(())
}

/// TTLs worth checking for a trace of `n_days`: both endpoints and a few
/// in between.
pub fn probe_ttls(n_days: u32) -> Vec<Option<u32>> {
    let mut ttls: Vec<Option<u32>> = [0, 1, 2, 3, 7, n_days.saturating_sub(1), n_days]
        .into_iter()
        .map(Some)
        .collect();
    ttls.sort();
    ttls.dedup();
    ttls.push(None);
    ttls
}
