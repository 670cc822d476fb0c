//! TTL cache for TimeMaps with current, unconditional and conditional
//! replacement.
//!
//! Capacity is unbounded; entries leave only through [`TimeMapCache::purge`].
//! The freshness timer restarts on every upstream fetch, including fetches
//! whose TimeMap the conditional policy rejects.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::classify::{is_improvement, ChangeCase, ChangeDelta};
use crate::error::{Error, Result};
use crate::model::{IdentityPolicy, KeyedSnapshot, TimeMapSnapshot};

pub const SECONDS_PER_DAY: u64 = 86_400;

/// A point on the cache clock, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Moment(pub u64);

impl Moment {
    pub fn day(day: u32) -> Self {
        Moment(u64::from(day) * SECONDS_PER_DAY)
    }

    pub fn seconds(secs: u64) -> Self {
        Moment(secs)
    }

    pub fn as_secs(self) -> u64 {
        self.0
    }

    pub fn saturating_since(self, earlier: Moment) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ttl {
    Days(u32),
    Infinite,
}

impl Ttl {
    /// Fresh while the age is strictly below the TTL; TTL 0 is never fresh.
    pub fn is_fresh(self, age_secs: u64) -> bool {
        match self {
            Ttl::Days(d) => age_secs < u64::from(d) * SECONDS_PER_DAY,
            Ttl::Infinite => true,
        }
    }

    pub fn days(self) -> Option<u32> {
        match self {
            Ttl::Days(d) => Some(d),
            Ttl::Infinite => None,
        }
    }
}

impl FromStr for Ttl {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s == "∞" {
            return Ok(Ttl::Infinite);
        }
        s.parse::<u32>()
            .map(Ttl::Days)
            .map_err(|_| format!("invalid TTL `{s}` (non-negative days or `inf`)"))
    }
}

impl fmt::Display for Ttl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ttl::Days(d) => write!(f, "{d}"),
            Ttl::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Keep the first TimeMap seen until purged.
    Current,
    /// Replace on every fetch.
    Unconditional,
    /// Replace only when the fetched TimeMap improves on the cached one.
    #[default]
    Conditional,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::Current,
        PolicyKind::Unconditional,
        PolicyKind::Conditional,
    ];
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "current" => Ok(PolicyKind::Current),
            "unconditional" => Ok(PolicyKind::Unconditional),
            "conditional" => Ok(PolicyKind::Conditional),
            other => Err(format!(
                "unknown policy `{other}` (current|unconditional|conditional)"
            )),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Current => "current",
            PolicyKind::Unconditional => "unconditional",
            PolicyKind::Conditional => "conditional",
        })
    }
}

/// A cached TimeMap. `attachment` carries caller data stored alongside the
/// snapshot, such as the raw response body.
#[derive(Debug, Clone)]
pub struct CacheEntry<A = ()> {
    pub snapshot: Arc<TimeMapSnapshot>,
    pub keyed: Arc<KeyedSnapshot>,
    pub attachment: A,
    pub stored_at: Moment,
    pub last_fetch_at: Moment,
}

impl<A> CacheEntry<A> {
    pub fn cardinality(&self) -> usize {
        self.keyed.cardinality()
    }

    pub fn age_secs(&self, now: Moment) -> u64 {
        now.saturating_since(self.last_fetch_at)
    }
}

#[derive(Debug)]
pub enum Lookup<'a, A = ()> {
    Fresh(&'a CacheEntry<A>),
    /// Expired but still available for stale-if-error serving.
    Stale(&'a CacheEntry<A>),
    Absent,
}

impl<'a, A> Lookup<'a, A> {
    pub fn entry(&self) -> Option<&'a CacheEntry<A>> {
        match self {
            Lookup::Fresh(e) | Lookup::Stale(e) => Some(e),
            Lookup::Absent => None,
        }
    }

    pub fn is_fresh(&self) -> bool {
        matches!(self, Lookup::Fresh(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionOutcome {
    Stored,
    RejectedNotImprovement,
    RejectedFirstWriteWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheDecision {
    pub outcome: DecisionOutcome,
    /// Present when the fetched TimeMap was compared against a cached one.
    pub case: Option<ChangeCase>,
}

impl CacheDecision {
    pub fn stored(&self) -> bool {
        self.outcome == DecisionOutcome::Stored
    }
}

/// Classifies `candidate` against `cached` and reports whether conditional
/// replacement would accept it: the case must add mementos, and since a
/// case 4 or 5 transition can add mementos while shrinking the TimeMap,
/// the cardinality must not drop either.
pub fn judge(
    cached: &KeyedSnapshot,
    candidate: &KeyedSnapshot,
    identity: IdentityPolicy,
) -> (ChangeCase, bool) {
    let case = ChangeDelta::between(cached, candidate, identity).case();
    let better = is_improvement(case) && candidate.cardinality() >= cached.cardinality();
    (case, better)
}

pub fn improves(cached: &KeyedSnapshot, candidate: &KeyedSnapshot, identity: IdentityPolicy) -> bool {
    judge(cached, candidate, identity).1
}

#[derive(Debug, Clone)]
pub struct TimeMapCache<A = ()> {
    policy: PolicyKind,
    ttl: Ttl,
    identity: IdentityPolicy,
    entries: HashMap<Arc<str>, CacheEntry<A>>,
}

impl<A> TimeMapCache<A> {
    /// The current policy always runs with an infinite TTL.
    pub fn new(policy: PolicyKind, ttl: Ttl) -> Self {
        let ttl = if policy == PolicyKind::Current { Ttl::Infinite } else { ttl };
        TimeMapCache {
            policy,
            ttl,
            identity: IdentityPolicy::Loose,
            entries: HashMap::new(),
        }
    }

    pub fn with_identity(mut self, identity: IdentityPolicy) -> Self {
        self.identity = identity;
        self
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn ttl(&self) -> Ttl {
        self.ttl
    }

    pub fn identity(&self) -> IdentityPolicy {
        self.identity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, uri_r: &str) -> Option<&CacheEntry<A>> {
        self.entries.get(uri_r)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &CacheEntry<A>)> {
        self.entries.iter().map(|(k, v)| (&**k, v))
    }

    pub fn lookup(&self, uri_r: &str, now: Moment) -> Lookup<'_, A> {
        match self.entries.get(uri_r) {
            None => Lookup::Absent,
            Some(e) if self.ttl.is_fresh(e.age_secs(now)) => Lookup::Fresh(e),
            Some(e) => Lookup::Stale(e),
        }
    }

    /// Offers one upstream fetch. Call exactly once per fetch.
    pub fn offer(
        &mut self,
        uri_r: &str,
        fetched: TimeMapSnapshot,
        attachment: A,
        now: Moment,
    ) -> Result<CacheDecision> {
        let keyed = KeyedSnapshot::new(&fetched, self.identity);
        self.offer_keyed(uri_r, Arc::new(fetched), Arc::new(keyed), attachment, now)
    }

    /// [`offer`](Self::offer) with the fetched snapshot's keys precomputed
    /// under this cache's identity policy.
    pub fn offer_keyed(
        &mut self,
        uri_r: &str,
        fetched: Arc<TimeMapSnapshot>,
        keyed: Arc<KeyedSnapshot>,
        attachment: A,
        now: Moment,
    ) -> Result<CacheDecision> {
        if &*fetched.uri_r != uri_r {
            return Err(Error::MismatchedResource {
                left: uri_r.to_owned(),
                right: fetched.uri_r.to_string(),
            });
        }

        let Some(entry) = self.entries.get_mut(uri_r) else {
            self.entries.insert(
                fetched.uri_r.clone(),
                CacheEntry {
                    snapshot: fetched,
                    keyed,
                    attachment,
                    stored_at: now,
                    last_fetch_at: now,
                },
            );
            return Ok(CacheDecision {
                outcome: DecisionOutcome::Stored,
                case: None,
            });
        };

        if self.policy == PolicyKind::Current {
            return Ok(CacheDecision {
                outcome: DecisionOutcome::RejectedFirstWriteWins,
                case: None,
            });
        }

        entry.last_fetch_at = now;
        let (case, better) = judge(&entry.keyed, &keyed, self.identity);
        let replace = self.policy == PolicyKind::Unconditional || better;
        let outcome = if replace {
            entry.snapshot = fetched;
            entry.keyed = keyed;
            entry.attachment = attachment;
            entry.stored_at = now;
            DecisionOutcome::Stored
        } else {
            DecisionOutcome::RejectedNotImprovement
        };
        Ok(CacheDecision {
            outcome,
            case: Some(case),
        })
    }

    /// Removes one entry, or every entry when `uri_r` is `None`.
    pub fn purge(&mut self, uri_r: Option<&str>) -> usize {
        match uri_r {
            Some(u) => usize::from(self.entries.remove(u).is_some()),
            None => {
                let n = self.entries.len();
                self.entries.clear();
                n
            }
        }
    }

    /// Reinstates a persisted entry as-is.
    pub fn restore(&mut self, entry: CacheEntry<A>) {
        self.entries.insert(entry.snapshot.uri_r.clone(), entry);
    }
}
