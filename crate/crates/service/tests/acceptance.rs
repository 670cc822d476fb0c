//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../core/tests/support/oracle.rs"]
mod brute;
mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timemap_core::classify::delta;
use timemap_core::linkformat::{parse_timemap, serialize_timemap};
use timemap_core::model::{
    archives_of, cardinality, cumulative_set, ArchiveId, ArchiveRules, IdentityPolicy, MementoRecord,
    ObservationSeries, TimeMapSnapshot,
};
use timemap_core::sim::{monotone_fraction, replay, sweep, transitions, Trace};
use timemap_core::tracegen::{generate, generate_with_events, EventKind, GeneratorConfig, ARCHIVE_POOL};
use timemap_core::{
    classify, is_improvement, ChangeCase, DecisionOutcome, Moment, PolicyKind, TimeMapCache, Ttl,
};
use timemap_service::proxy::{CacheStatus, Clock, ManualClock, Proxy, ProxyConfig, Served, Upstream, UpstreamFuture};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random generator configs shared by the property criteria.
fn corpus() -> Vec<(u64, Trace)> {
    (0..240u64)
        .map(|seed| (seed, generate(&GeneratorConfig::random(seed, 12, 60)).unwrap()))
        .collect()
}

fn q_endpoints(corpus: &[(u64, Trace)]) -> Outcome {
    for (seed, trace) in corpus {
        let (n, t) = (trace.n_resources() as u64, trace.n_days as u32);
        for policy in [PolicyKind::Conditional, PolicyKind::Unconditional] {
            for ttl in [Ttl::Days(t), Ttl::Days(t + 7), Ttl::Infinite] {
                let q = replay(trace, policy, ttl, IdentityPolicy::Loose).unwrap().q;
                ensure(q == n, || format!("seed {seed} {policy} {ttl}: Q={q}, want {n}"))?;
            }
            let q = replay(trace, policy, Ttl::Days(0), IdentityPolicy::Loose).unwrap().q;
            ensure(q == n * u64::from(t), || format!("seed {seed} {policy} TTL=0: Q={q}"))?;
        }
    }

    let cfg = GeneratorConfig {
        n_resources: 4000,
        n_days: 92,
        seed: 2012,
        ..GeneratorConfig::default()
    };
    let start = Instant::now();
    let trace = generate(&cfg).unwrap();
    let generated = start.elapsed();
    let timed = Instant::now();
    let zero = replay(&trace, PolicyKind::Conditional, Ttl::Days(0), IdentityPolicy::Loose).unwrap();
    let replay_time = timed.elapsed();
    let inf = replay(&trace, PolicyKind::Conditional, Ttl::Infinite, IdentityPolicy::Loose).unwrap();
    let total = start.elapsed();
    ensure(zero.q == 368_000, || format!("N=4000 T=92 TTL=0: Q={}", zero.q))?;
    ensure(inf.q == 4_000, || format!("N=4000 T=92 TTL=inf: Q={}", inf.q))?;
    ensure(generated + replay_time < Duration::from_secs(60), || {
        format!("generate {generated:?} + replay {replay_time:?} exceeds 60 s")
    })?;
    Ok(format!(
        "{} traces; N=4000 T=92: Q(0)=368000, Q(inf)=4000; generate {:.2?}, one replay {:.2?}, total {:.2?}",
        corpus.len(),
        generated,
        replay_time,
        total
    ))
}

fn conditional_zero_penalty(corpus: &[(u64, Trace)]) -> Outcome {
    for (seed, trace) in corpus {
        for identity in [IdentityPolicy::Loose, IdentityPolicy::Strict] {
            let r = replay(trace, PolicyKind::Conditional, Ttl::Days(0), identity).unwrap();
            ensure(r.memdays == 0, || format!("seed {seed} {identity}: MemDays={}", r.memdays))?;
        }
    }
    Ok(format!("MemDays=0 on all {} traces, both identity policies", corpus.len()))
}

fn infinite_ttl_equivalence(corpus: &[(u64, Trace)]) -> Outcome {
    for (seed, trace) in corpus {
        let c = replay(trace, PolicyKind::Conditional, Ttl::Infinite, IdentityPolicy::Loose).unwrap();
        let u = replay(trace, PolicyKind::Unconditional, Ttl::Infinite, IdentityPolicy::Loose).unwrap();
        ensure(c.metrics() == u.metrics(), || format!("seed {seed}: reports differ"))?;
    }
    Ok(format!("identical reports on {} traces", corpus.len()))
}

fn dominance(corpus: &[(u64, Trace)]) -> Outcome {
    let mut with_case6 = 0;
    for (seed, trace) in corpus {
        let ttls: Vec<Ttl> = (0..=trace.n_days as u32).map(Ttl::Days).collect();
        let c = sweep(trace, PolicyKind::Conditional, &ttls, IdentityPolicy::Loose).unwrap();
        let u = sweep(trace, PolicyKind::Unconditional, &ttls, IdentityPolicy::Loose).unwrap();
        let mut strict = false;
        for (pc, pu) in c.points.iter().zip(&u.points) {
            ensure(pc.memdays <= pu.memdays, || {
                format!("seed {seed} TTL {}: {} > {}", pc.ttl, pc.memdays, pu.memdays)
            })?;
            strict |= pc.memdays < pu.memdays;
        }
        let has_case6 = transitions(trace, IdentityPolicy::Loose)
            .iter()
            .any(|t| t.case == ChangeCase::Case6);
        if has_case6 {
            with_case6 += 1;
            ensure(strict, || format!("seed {seed}: Case 6 present but never strictly better"))?;
        }
    }
    Ok(format!(
        "MemDays(cond) <= MemDays(uncond) for every TTL on {} traces; strict on all {with_case6} with a Case-6 transition",
        corpus.len()
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut runs = 0;
    for seed in 0..100u64 {
        let trace = generate(&GeneratorConfig::random(50_000 + seed, 10, 30)).unwrap();
        for policy in PolicyKind::ALL {
            for strict in [false, true] {
                for ttl in brute::probe_ttls(trace.n_days as u32) {
                    brute::compare(&trace, policy, ttl, strict)
                        .map_err(|e| format!("seed {seed} {policy} {ttl:?} strict={strict}: {e}"))?;
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("100 traces, {runs} replays equal field-for-field"))
}

const URI_R: &str = "http://r.example/";

fn memento(archive: &str, id: i64, rules: &ArchiveRules) -> MementoRecord {
    MementoRecord::new(
        &format!("http://{archive}/m/{id}/{URI_R}"),
        chrono::DateTime::from_timestamp(1_200_000_000 + id * 3600, 0).unwrap(),
        Arc::from(URI_R),
        rules,
    )
    .unwrap()
}

fn classifier_totality() -> Outcome {
    let rules = ArchiveRules::empty();
    let universe: Vec<MementoRecord> = [("a.example", 0), ("a.example", 1), ("b.example", 2), ("b.example", 3), ("c.example", 4)]
        .iter()
        .map(|(a, id)| memento(a, *id, &rules))
        .collect();
    let subset = |bits: u32| -> TimeMapSnapshot {
        let ms = universe
            .iter()
            .enumerate()
            .filter(|(i, _)| bits & (1 << i) != 0)
            .map(|(_, m)| m.clone())
            .collect();
        TimeMapSnapshot::new(URI_R, 0, ms)
    };
    let n = 1u32 << universe.len();
    let mut pairs = 0;
    for x in 0..n {
        for y in 0..n {
            let (p, q) = (subset(x), subset(y));
            for policy in [IdentityPolicy::Strict, IdentityPolicy::Loose] {
                let d = delta(&p, &q, policy).unwrap();
                let (g, l, ag, al) = (d.gained > 0, d.lost > 0, d.archives_gained > 0, d.archives_lost > 0);
                let holds = [
                    !g && !l,
                    g && !l && !ag && !al,
                    g && !l && ag && !al,
                    g && al,
                    g && l && !al,
                    !g && l && al,
                    !g && l && !al,
                ];
                let matching: Vec<usize> = (0..7).filter(|i| holds[*i]).collect();
                ensure(matching.len() == 1, || format!("pair {x:b}->{y:b}: {} cases hold", matching.len()))?;
                let c = classify(&p, &q, policy).unwrap();
                ensure(usize::from(c.number()) == matching[0] + 1, || format!("pair {x:b}->{y:b}: {c}"))?;
                pairs += 1;
            }
        }
    }

    // Prose pins: unchanged, added mementos, lost an archive but gained
    // mementos, lost an archive and lost mementos (an empty 404 fetch).
    let m = |a: &str, id| memento(a, id, &rules);
    let tm = |v: Vec<MementoRecord>| TimeMapSnapshot::new(URI_R, 0, v);
    let base = vec![m("a.example", 0), m("b.example", 1)];
    let pins = [
        (tm(base.clone()), tm(base.clone()), ChangeCase::Case1),
        (tm(base.clone()), tm(vec![m("a.example", 0), m("b.example", 1), m("a.example", 5)]), ChangeCase::Case2),
        (tm(base.clone()), tm(vec![m("a.example", 0), m("a.example", 5)]), ChangeCase::Case4),
        (tm(base.clone()), TimeMapSnapshot::empty(URI_R, 0, 404), ChangeCase::Case6),
    ];
    for (p, q, want) in &pins {
        let got = classify(p, q, IdentityPolicy::Loose).unwrap();
        ensure(got == *want, || format!("pin expected {want}, got {got}"))?;
    }
    let improving: Vec<u8> = ChangeCase::ALL.into_iter().filter(|c| is_improvement(*c)).map(|c| c.number()).collect();
    ensure(improving == [2, 3, 4, 5], || format!("improvement set {improving:?}"))?;
    Ok(format!("{pairs} snapshot pairs map to exactly one case; pins 1/2/4/6 hold; improvements = {{2,3,4,5}}"))
}

fn strict_loose_divergence() -> Outcome {
    let cfg = GeneratorConfig {
        n_resources: 25,
        n_days: 30,
        seed: 43,
        mean_change_interval_days: 3.0,
        ..GeneratorConfig::only(EventKind::Migration)
    };
    let (trace, events) = generate_with_events(&cfg).unwrap();
    let mut migrated_total = 0;
    for (i, s) in trace.series.iter().enumerate() {
        let last = trace.n_days as u32 - 1;
        let moved: usize = events.iter().filter(|e| e.resource == i).map(|e| e.mementos).sum();
        migrated_total += moved;
        let s0 = cumulative_set(s, 0, IdentityPolicy::Strict).len();
        let s_end = cumulative_set(s, last, IdentityPolicy::Strict).len();
        ensure(s_end == s0 + moved, || format!("{}: strict {s0} -> {s_end}, migrated {moved}", s.uri_r))?;
        let l0 = cumulative_set(s, 0, IdentityPolicy::Loose);
        for t in 0..=last {
            ensure(cumulative_set(s, t, IdentityPolicy::Loose) == l0, || format!("{}: loose set changed on day {t}", s.uri_r))?;
        }
    }
    ensure(migrated_total > 0, || "no migrations generated".into())?;

    // An archive reporting midnight datetimes collapses same-day captures
    // under Loose identity, so URI-Ms outnumber distinct datetimes.
    let truncating = GeneratorConfig {
        n_resources: 25,
        n_days: 10,
        seed: 44,
        archive_count_range: (3, 4),
        mementos_per_archive: (30, 60),
        datetime_truncation_archives: ARCHIVE_POOL.iter().map(|s| s.to_string()).collect(),
        ..GeneratorConfig::default()
    };
    let exact = GeneratorConfig {
        datetime_truncation_archives: Default::default(),
        ..truncating.clone()
    };
    let day0 = |cfg: &GeneratorConfig| -> Vec<(usize, usize)> {
        generate(cfg)
            .unwrap()
            .series
            .iter()
            .map(|s| {
                let tm = &s.snapshots[0];
                (cardinality(tm, IdentityPolicy::Strict), cardinality(tm, IdentityPolicy::Loose))
            })
            .collect()
    };
    let truncated = day0(&truncating);
    let diverging = truncated.iter().filter(|(s, l)| s > l).count();
    ensure(diverging > 0, || "truncation produced no Strict/Loose gap".into())?;
    ensure(day0(&exact).iter().all(|(s, l)| s == l), || "untruncated Strict != Loose".into())?;
    Ok(format!(
        "migration-only: strict history +{migrated_total} = migrated count, loose constant; \
         truncated datetimes: {diverging}/{} TimeMaps list more URI-Ms than Loose mementos",
        truncated.len()
    ))
}

fn false_zero_suppression(corpus: &[(u64, Trace)]) -> Outcome {
    // (a) fuzz offer sequences that mix 404s into real TimeMaps.
    let rules = ArchiveRules::empty();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for run in 0..3000 {
        let ttl = rng.random_range(0..4);
        let mut cache: TimeMapCache = TimeMapCache::new(PolicyKind::Conditional, Ttl::Days(ttl));
        let mut seen_nonempty = false;
        for day in 0..rng.random_range(1..25u32) {
            let tm = if rng.random_bool(0.35) {
                TimeMapSnapshot::empty(URI_R, day, 404)
            } else {
                let n = rng.random_range(0..6);
                let ms = (0..n)
                    .map(|_| memento(["a.example", "b.example"][rng.random_range(0..2)], rng.random_range(0..8), &rules))
                    .collect::<Vec<_>>();
                let mut ms = ms;
                ms.sort_by(|a, b| a.uri_m.cmp(&b.uri_m));
                ms.dedup_by(|a, b| a.uri_m == b.uri_m);
                TimeMapSnapshot::new(URI_R, day, ms)
            };
            let was_empty = tm.is_empty();
            let d = cache.offer(URI_R, tm, (), Moment::day(day)).unwrap();
            let held = cache.get(URI_R).unwrap().cardinality();
            if seen_nonempty {
                ensure(held > 0, || format!("run {run} day {day}: cache emptied"))?;
                if was_empty {
                    ensure(d.outcome == DecisionOutcome::RejectedNotImprovement, || format!("run {run}: 404 stored"))?;
                }
            }
            seen_nonempty |= held > 0;
        }
    }

    // (b) where false 0-sized TimeMaps bottom out on a sweep of finite TTLs.
    let mut totals: HashMap<PolicyKind, Vec<u64>> = HashMap::new();
    let mut per_trace_violations = HashMap::<PolicyKind, usize>::new();
    let max_t = corpus.iter().map(|(_, t)| t.n_days).max().unwrap();
    for (_, trace) in corpus {
        let ttls: Vec<Ttl> = (0..trace.n_days as u32).map(Ttl::Days).collect();
        for policy in [PolicyKind::Unconditional, PolicyKind::Conditional] {
            let curve = sweep(trace, policy, &ttls, IdentityPolicy::Loose).unwrap();
            let fz: Vec<u64> = curve.points.iter().map(|p| p.false_zero_days).collect();
            let acc = totals.entry(policy).or_insert_with(|| vec![0; max_t]);
            for (i, v) in fz.iter().enumerate() {
                acc[i] += v;
            }
            if fz.iter().any(|v| *v < fz[0]) {
                *per_trace_violations.entry(policy).or_default() += 1;
            }
        }
    }
    let summary = |p: PolicyKind| {
        let t = &totals[&p];
        let (argmin, min) = t.iter().enumerate().min_by_key(|(i, v)| (**v, *i)).unwrap();
        (t[0], argmin, *min, per_trace_violations.get(&p).copied().unwrap_or(0))
    };
    let (u0, u_arg, u_min, u_bad) = summary(PolicyKind::Unconditional);
    let (c0, c_arg, c_min, c_bad) = summary(PolicyKind::Conditional);
    let detail = format!(
        "conditional: false-zero days at TTL=0 {c0}, minimum {c_min} at TTL={c_arg}, {c_bad} traces below TTL=0; \
         unconditional: at TTL=0 {u0}, minimum {u_min} at TTL={u_arg}, {u_bad}/{} traces have a finite TTL below TTL=0",
        corpus.len()
    );
    ensure(c0 == c_min && c_bad == 0, || format!("conditional not minimised at TTL=0: {detail}"))?;
    ensure(u0 == u_min && u_bad == 0, || format!("unconditional not minimised at TTL=0: {detail}"))?;
    Ok(format!("3000 fuzzed offer sequences never revert to empty; {detail}"))
}

fn parser_fixtures() -> Outcome {
    let rules = ArchiveRules::builtin();
    let fig1 = common::fixture("fig1_full.link");
    let map = parse_timemap(&fig1, None).map_err(|e| e.to_string())?;
    ensure(map.entries.len() == 9 && map.skipped == 1, || {
        format!("flare TimeMap: {} entries, {} skipped", map.entries.len(), map.skipped)
    })?;
    ensure(map.original.as_deref() == Some("http://flare.prefuse.org/"), || "flare TimeMap original".into())?;
    let first = map.mementos().next().unwrap();
    ensure(
        first.target == "http://api.wayback.archive.org/memento/20071213002102/http://flare.prefuse.org/"
            && first.datetime.map(|d| d.to_rfc3339()) == Some("2007-12-13T00:21:02+00:00".into())
            && first.rel_value() == "first memento",
        || format!("flare TimeMap first memento {first:?}"),
    )?;
    let snap = TimeMapSnapshot::from_raw(&map, "http://flare.prefuse.org/", 0, 200, &rules);
    let archives: Vec<ArchiveId> = archives_of(&snap).into_iter().collect();
    ensure(
        archives == [ArchiveId::new("api.wayback.archive.org"), ArchiveId::new("webarchive.nationalarchives.gov.uk")],
        || format!("flare TimeMap archives {archives:?}"),
    )?;
    ensure(snap.mementos.len() == 6, || "flare TimeMap memento count".into())?;
    let reparsed = parse_timemap(&serialize_timemap(&map), None).unwrap();
    ensure(reparsed.entries == map.entries, || "flare TimeMap round trip".into())?;

    let aarp_raw = parse_timemap(&common::fixture("aarp.link"), None).map_err(|e| e.to_string())?;
    let dts: std::collections::BTreeSet<_> = aarp_raw.entries.iter().map(|e| e.datetime).collect();
    let targets: std::collections::BTreeSet<_> = aarp_raw.entries.iter().map(|e| &e.target).collect();
    ensure(aarp_raw.entries.len() == 3 && dts.len() == 1 && targets.len() == 3, || "aarp entries".into())?;
    ensure(
        dts.iter().next().unwrap().map(|d| d.to_rfc3339()) == Some("2010-11-01T06:02:04+00:00".into()),
        || "aarp datetime".into(),
    )?;
    let aarp = TimeMapSnapshot::from_raw(&aarp_raw, "http://aarp.org/Health/", 0, 200, &rules);
    let (s, l) = (cardinality(&aarp, IdentityPolicy::Strict), cardinality(&aarp, IdentityPolicy::Loose));
    ensure((s, l) == (3, 1), || format!("aarp strict/loose {s}/{l}"))?;
    ensure(archives_of(&aarp).into_iter().collect::<Vec<_>>() == [ArchiveId::new("web.archive.org")], || "aarp archive".into())?;

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let mut docs = 0;
    for entry in std::fs::read_dir(golden).map_err(|e| e.to_string())? {
        let path = entry.unwrap().path();
        let doc = std::fs::read_to_string(&path).unwrap();
        let map = parse_timemap(&doc, None).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(serialize_timemap(&map) == doc, || format!("{} is not a fixed point", path.display()))?;
        docs += 1;
    }
    ensure(docs == 50, || format!("golden corpus has {docs} documents"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let alphabet: Vec<char> = "<>;,=\"\\ \n\tabcdehmtp:/0123456789GMTé".chars().collect();
    let mut fuzzed = 0;
    for _ in 0..20_000 {
        let len = rng.random_range(0..120);
        let text: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        catch_unwind(AssertUnwindSafe(|| {
            let _ = parse_timemap(&text, None);
        }))
        .map_err(|_| format!("parser panicked on {text:?}"))?;
        fuzzed += 1;
    }
    Ok(format!("flare TimeMap (9 entries, 1 skipped) and aarp (3 strict / 1 loose) pinned; 50 golden docs are fixed points; {fuzzed} fuzz inputs, no panic"))
}

struct TraceUpstream {
    series: HashMap<String, ObservationSeries>,
    clock: Arc<ManualClock>,
    fetched: Mutex<HashMap<String, Vec<usize>>>,
}

impl Upstream for TraceUpstream {
    fn fetch<'a>(&'a self, uri_r: &'a str) -> UpstreamFuture<'a> {
        let s = &self.series[uri_r];
        let day = (self.clock.now().as_secs() / 86_400) as usize;
        let tm = &s.snapshots[day.min(s.snapshots.len() - 1)];
        self.fetched
            .lock()
            .unwrap()
            .entry(uri_r.to_string())
            .or_default()
            .push(cardinality(tm, IdentityPolicy::Loose));
        let status = if tm.is_empty() { 404 } else { 200 };
        let body = serialize_timemap(&tm.to_raw());
        Box::pin(async move { Ok((status, body)) })
    }
}

fn proxy_behaviour() -> Outcome {
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let up = Arc::new(common::Scripted::new(vec![
            common::Scripted::ok(&common::fig1()),
            common::Scripted::not_found(),
        ]));
        let clock = Arc::new(ManualClock::at(Moment::day(0)));
        let p = Proxy::new(ProxyConfig::default(), up, clock.clone());
        let uri = "http://flare.prefuse.org/";
        let mut seen = Vec::new();
        for step in 0..3 {
            match step {
                1 => clock.advance(16 * 86_400),
                2 => clock.advance(10),
                _ => {}
            }
            match p.handle(uri).await {
                Served::Body { cache, body, age_secs, .. } => {
                    ensure(*body == common::fig1(), || format!("step {step}: body changed"))?;
                    seen.push((cache, age_secs));
                }
                other => return Err(format!("step {step}: {other:?}")),
            }
        }
        let want = [(CacheStatus::Miss, 0), (CacheStatus::RefreshRejected, 0), (CacheStatus::Hit, 10)];
        ensure(seen == want, || format!("headers {seen:?}"))?;

        // 92 simulated days of hourly traffic against generated TimeMaps.
        let trace = generate(&GeneratorConfig {
            n_resources: 12,
            n_days: 92,
            seed: 15,
            mean_change_interval_days: 4.0,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let clock = Arc::new(ManualClock::at(Moment::day(0)));
        let upstream = Arc::new(TraceUpstream {
            series: trace.series.iter().map(|s| (s.uri_r.to_string(), s.clone())).collect(),
            clock: clock.clone(),
            fetched: Mutex::new(HashMap::new()),
        });
        let p = Proxy::new(ProxyConfig::default(), upstream.clone(), clock.clone());
        let rules = ArchiveRules::builtin();
        for hour in 0..92 * 24u64 {
            clock.set(Moment::seconds(hour * 3600));
            for s in &trace.series {
                let Served::Body { body, .. } = p.handle(&s.uri_r).await else {
                    return Err(format!("{} hour {hour}: not served", s.uri_r));
                };
                let raw = parse_timemap(&body, Some(&s.uri_r)).unwrap();
                let served = cardinality(&TimeMapSnapshot::from_raw(&raw, &*s.uri_r, 0, 200, &rules), IdentityPolicy::Loose);
                let best = upstream.fetched.lock().unwrap()[&*s.uri_r].iter().copied().max().unwrap();
                ensure(served == best, || format!("{} hour {hour}: served {served}, best fetched {best}", s.uri_r))?;
            }
        }
        let fetched = upstream.fetched.lock().unwrap();
        let worst = fetched.values().map(Vec::len).max().unwrap();
        let bound = 92usize.div_ceil(15) + 1;
        ensure(worst <= bound, || format!("{worst} upstream fetches > {bound}"))?;
        Ok(format!(
            "MISS, REFRESH-REJECTED, HIT (Age 10); 92 days hourly: at most {worst} fetches per URI-R (bound {bound}), served = best fetched"
        ))
    })
}

fn monotone_sanity() -> Outcome {
    let loss_heavy = GeneratorConfig {
        n_resources: 200,
        n_days: 92,
        seed: 802,
        mean_change_interval_days: 10.0,
        ..GeneratorConfig::default()
    };
    let f = monotone_fraction(&generate(&loss_heavy).unwrap(), IdentityPolicy::Loose);
    ensure(f > 0.0 && f < 1.0, || format!("loss-weighted fraction {f}"))?;

    let rules = ArchiveRules::empty();
    let series = |uri: &str, cards: [usize; 5]| {
        let snaps = cards
            .iter()
            .enumerate()
            .map(|(day, n)| {
                let ms = (0..*n)
                    .map(|i| {
                        MementoRecord::new(
                            &format!("http://a.example/m/{i}/{uri}"),
                            chrono::DateTime::from_timestamp(1_000_000 + i as i64, 0).unwrap(),
                            Arc::from(uri),
                            &rules,
                        )
                        .unwrap()
                    })
                    .collect();
                TimeMapSnapshot::new(uri, day as u32, ms)
            })
            .collect();
        ObservationSeries::new(uri, snaps)
    };
    // 3->3 3->2 2->4 4->4 and 2->1 1->0 0->1 1->1: 5 of 8 steps keep or grow.
    let fixture = Trace::new(vec![series("http://a.example/", [3, 3, 2, 4, 4]), series("http://b.example/", [2, 1, 0, 1, 1])]);
    let exact = monotone_fraction(&fixture, IdentityPolicy::Loose);
    ensure(exact == 5.0 / 8.0, || format!("fixture fraction {exact}"))?;
    Ok(format!("loss-weighted generator: {f:.3}; 5-day fixture: {exact} = 5/8"))
}

fn main() {
    let corpus = corpus();
    let criteria: Vec<Criterion> = vec![
        ("1 Q endpoints", Box::new(|| q_endpoints(&corpus))),
        ("2 conditional zero penalty", Box::new(|| conditional_zero_penalty(&corpus))),
        ("3 TTL=inf equivalence", Box::new(|| infinite_ttl_equivalence(&corpus))),
        ("4 conditional dominance", Box::new(|| dominance(&corpus))),
        ("5 oracle equivalence", Box::new(oracle_equivalence)),
        ("6 classifier totality", Box::new(classifier_totality)),
        ("7 strict/loose divergence", Box::new(strict_loose_divergence)),
        ("8 false-zero suppression", Box::new(|| false_zero_suppression(&corpus))),
        ("9 parser fixtures", Box::new(parser_fixtures)),
        ("10 proxy behaviour", Box::new(proxy_behaviour)),
        ("11 monotone fraction", Box::new(monotone_sanity)),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
