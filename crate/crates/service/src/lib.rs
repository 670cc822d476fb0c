//! Network side of the TimeMap toolkit: a daily harvester that snapshots
//! aggregator TimeMaps into the on-disk store, a caching reverse proxy
//! that applies the conditional replacement policy to live traffic, and
//! the `timemap` command-line front end.

pub mod cli;
pub mod error;
pub mod harvest;
pub mod proxy;

pub use error::{Result, ServiceError};
