//! Caching and evaluation toolkit for Memento TimeMaps.
//!
//! The crate is organised bottom-up:
//!
//! - [`linkformat`] parses and serializes `application/link-format` TimeMaps.
//! - [`model`] holds mementos, snapshots, archive identification and the
//!   Strict/Loose identity policies.
//! - [`classify`] assigns each day-over-day transition one of seven change cases.
//! - [`cache`] is the TTL cache with the current, unconditional and
//!   conditional replacement policies.
//! - [`sim`] replays observation traces through the cache and computes the
//!   MemDays and Q metrics, TTL sweeps and the optimal TTL.
//! - [`tracegen`] produces deterministic synthetic traces.
//! - [`store`] is the on-disk snapshot store shared by harvesting, trace
//!   files and proxy persistence.

pub mod cache;
pub mod classify;
pub mod error;
pub mod linkformat;
pub mod model;
pub mod sim;
pub mod store;
pub mod tracegen;

pub use cache::{CacheDecision, CacheEntry, DecisionOutcome, Lookup, Moment, PolicyKind, TimeMapCache, Ttl};
pub use classify::{classify, is_improvement, ChangeCase, ChangeDelta};
pub use error::{Error, Result};
pub use linkformat::{parse_timemap, serialize_timemap, LinkEntry, RawTimeMap};
pub use model::{
    ArchiveId, ArchiveRules, IdentityPolicy, KeyedSnapshot, MementoKey, MementoRecord,
    ObservationSeries, TimeMapSnapshot,
};
pub use sim::{SimulationReport, SweepCurve, Trace};
pub use store::{read_trace, write_trace, SnapshotRecord, SnapshotStore};
pub use tracegen::{EventKind, GeneratorConfig};
