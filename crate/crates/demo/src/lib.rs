//! wasm-bindgen bindings behind `www/index.html`.
//!
//! Every export takes plain numbers and strings and returns a JSON document,
//! so the page needs no glue beyond `JSON.parse`.

use serde_json::{json, Value};
use timemap_core::sim::{case_totals, optimal_ttl, replay, sweep, transitions, ttl_range, SweepPoint};
use timemap_core::{
    classify, parse_timemap, ArchiveRules, GeneratorConfig, IdentityPolicy, PolicyKind, TimeMapSnapshot,
    Trace, Ttl,
};
use wasm_bindgen::prelude::wasm_bindgen;

/// Largest trace the page will build; keeps the tab responsive.
pub const MAX_RESOURCES: usize = 2000;
pub const MAX_DAYS: usize = 366;

fn trace(resources: usize, days: usize, seed: u64, change_interval: f64) -> Result<Trace, String> {
    if resources == 0 || resources > MAX_RESOURCES {
        return Err(format!("resources must be in 1..={MAX_RESOURCES}"));
    }
    if !(2..=MAX_DAYS).contains(&days) {
        return Err(format!("days must be in 2..={MAX_DAYS}"));
    }
    let cfg = GeneratorConfig {
        n_resources: resources,
        n_days: days,
        seed,
        mean_change_interval_days: change_interval,
        ..GeneratorConfig::default()
    };
    timemap_core::tracegen::generate(&cfg).map_err(|e| e.to_string())
}

fn point(p: &SweepPoint) -> Value {
    json!({
        "ttl": p.ttl.days(),
        "memdays": p.memdays,
        "q": p.q,
        "missed_updates": p.missed_updates,
        "false_zero_days": p.false_zero_days,
    })
}

/// TTL sweep over 0..=days for one policy, with the optimal TTL and the
/// change-case histogram of the generated trace.
#[wasm_bindgen]
pub fn sweep_curve(
    resources: usize,
    days: usize,
    seed: u64,
    change_interval: f64,
    policy: &str,
) -> Result<String, String> {
    let policy: PolicyKind = policy.parse()?;
    let trace = trace(resources, days, seed, change_interval)?;
    let curve = sweep(&trace, policy, &ttl_range(days as u32), IdentityPolicy::Loose).map_err(|e| e.to_string())?;
    let best = optimal_ttl(&curve).map_err(|e| e.to_string())?;
    let cases = case_totals(&transitions(&trace, IdentityPolicy::Loose));
    Ok(json!({
        "policy": policy.to_string(),
        "points": curve.points.iter().map(point).collect::<Vec<_>>(),
        "optimal": {
            "ttl": best.ttl.days(),
            "memdays": best.memdays,
            "q": best.q,
            "degenerate": best.degenerate,
        },
        "cases": cases,
    })
    .to_string())
}

/// Day-by-day replay of one (policy, TTL) pair. `ttl` is a day count or `inf`.
#[wasm_bindgen]
pub fn replay_series(
    resources: usize,
    days: usize,
    seed: u64,
    change_interval: f64,
    policy: &str,
    ttl: &str,
) -> Result<String, String> {
    let policy: PolicyKind = policy.parse()?;
    let ttl: Ttl = ttl.parse()?;
    let trace = trace(resources, days, seed, change_interval)?;
    let r = replay(&trace, policy, ttl, IdentityPolicy::Loose).map_err(|e| e.to_string())?;
    let per_day: Vec<Value> = r
        .per_day
        .iter()
        .map(|d| {
            json!({
                "day": d.day,
                "fetches": d.fetches,
                "memdays": d.memdays_increment,
                "cache": d.cache_cardinality,
                "reference": d.reference_cardinality,
                "false_zero": d.false_zero,
            })
        })
        .collect();
    Ok(json!({
        "policy": policy.to_string(),
        "ttl": ttl.days(),
        "memdays": r.memdays,
        "q": r.q,
        "missed_updates": r.missed_updates,
        "false_zero_days": r.false_zero_days,
        "per_day": per_day,
    })
    .to_string())
}

/// Classifies the change between two pasted link-format TimeMaps.
#[wasm_bindgen]
pub fn classify_pair(before: &str, after: &str, identity: &str) -> Result<String, String> {
    let identity: IdentityPolicy = identity.parse()?;
    let rules = ArchiveRules::builtin();
    let parse = |text: &str| -> Result<Option<_>, String> {
        if text.trim().is_empty() {
            return Ok(None);
        }
        parse_timemap(text, None).map(Some).map_err(|e| e.to_string())
    };
    let (before, after) = (parse(before)?, parse(after)?);
    let uri_r = [&before, &after]
        .into_iter()
        .flatten()
        .find_map(|raw| raw.original.clone())
        .unwrap_or_default();
    let snapshot = |raw: &Option<_>, day| match raw {
        Some(raw) => TimeMapSnapshot::from_raw(raw, uri_r.as_str(), day, 200, &rules),
        None => TimeMapSnapshot::empty(uri_r.as_str(), day, 404),
    };
    let (p, q) = (snapshot(&before, 0), snapshot(&after, 1));
    let d = timemap_core::classify::delta(&p, &q, identity).map_err(|e| e.to_string())?;
    let case = classify(&p, &q, identity).map_err(|e| e.to_string())?;
    Ok(json!({
        "case": case.number(),
        "description": case.to_string(),
        "improvement": timemap_core::is_improvement(case),
        "archives": [d.a, d.a_prime],
        "mementos": [d.m, d.m_prime],
        "gained": d.gained,
        "lost": d.lost,
        "archives_gained": d.archives_gained,
        "archives_lost": d.archives_lost,
    })
    .to_string())
}
