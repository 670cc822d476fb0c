//! `timemap` subcommands. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use timemap_core::sim::{
    case_totals, export_curve, export_report, monotone_fraction, optimal_ttl, replay_with,
    sweep_with, transitions, LiveReference, ReplayOptions, Trace,
};
use timemap_core::store::{read_trace, write_trace};
use timemap_core::tracegen::{generate, GeneratorConfig};
use timemap_core::{ChangeCase, IdentityPolicy, PolicyKind, Ttl};

use crate::error::ServiceError;
use crate::harvest::{harvest, HarvestJob};
use crate::proxy::{serve, ProxyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "timemap", version, about = "TimeMap change analysis, cache simulation and caching proxy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic trace store.
    Gen(GenArgs),
    /// Fetch one day of TimeMaps from an aggregator into a store.
    Harvest(HarvestArgs),
    /// Classify every day-over-day change and count the cases.
    Classify(ClassifyArgs),
    /// Replay a trace through one cache configuration.
    Replay(ReplayArgs),
    /// Replay a trace over a range of TTLs.
    Sweep(SweepArgs),
    /// Share of day-over-day changes that did not lose mementos.
    Monotone(TraceArgs),
    /// Run the caching proxy until interrupted.
    Serve(ServeArgs),
    /// Ask a running proxy to drop cache entries.
    Purge(PurgeArgs),
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// Trace store directory.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value = "loose")]
    identity: IdentityPolicy,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output store directory.
    #[arg(long)]
    out: PathBuf,
    /// Generator config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resources: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    /// Mean days between change events, or `inf`.
    #[arg(long)]
    change_interval: Option<String>,
}

#[derive(Debug, Args)]
struct HarvestArgs {
    /// File with one URI-R per line.
    #[arg(long)]
    uris: PathBuf,
    /// Aggregator URI with a `{uri_r}` slot.
    #[arg(long)]
    template: String,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    day: u32,
    #[arg(long, default_value_t = 45)]
    timeout: u64,
    #[arg(long, default_value_t = 11)]
    workers: usize,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    trace: TraceArgs,
    /// Also write every transition as CSV (`-` for stdout).
    #[arg(long)]
    transitions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Reference {
    RunningMax,
    Instantaneous,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long, default_value = "conditional")]
    policy: PolicyKind,
    #[arg(long, value_enum, default_value = "running-max")]
    reference: Reference,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Days, or `inf`.
    #[arg(long)]
    ttl: Ttl,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated TTLs and inclusive ranges, e.g. `0..92` or `0..30,inf`.
    #[arg(long, value_parser = parse_ttl_list)]
    ttl: TtlList,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    upstream: Option<String>,
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    ttl: Option<Ttl>,
    #[arg(long)]
    identity: Option<IdentityPolicy>,
    #[arg(long)]
    timeout: Option<u64>,
    /// Directory the cache is saved to on shutdown and loaded from on boot.
    #[arg(long)]
    persist: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PurgeArgs {
    /// Proxy base URL, e.g. `http://127.0.0.1:8080`.
    #[arg(long)]
    proxy: String,
    /// Entry to drop; every entry when absent.
    #[arg(long)]
    uri_r: Option<String>,
}

#[derive(Debug, Clone)]
struct TtlList(Vec<Ttl>);

/// `a..b` (inclusive), single values and `inf`, comma separated.
fn parse_ttl_list(text: &str) -> Result<TtlList, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| format!("bad range start in `{part}`"))?;
            let b: u32 = b.trim().parse().map_err(|_| format!("bad range end in `{part}`"))?;
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend((a..=b).map(Ttl::Days));
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        return Err("no TTLs given".into());
    }
    Ok(TtlList(out))
}

type CmdResult = Result<(), ServiceError>;

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Harvest(a) => cmd_harvest(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Monotone(a) => cmd_monotone(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Purge(a) => cmd_purge(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, ServiceError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) if p != Path::new("-") => fs::write(p, text)?,
        _ => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load(path: &Path) -> Result<Trace, ServiceError> {
    Ok(read_trace(path)?.filled())
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => GeneratorConfig::parse(&fs::read_to_string(p)?)?,
        None => GeneratorConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.resources {
        cfg.n_resources = n;
    }
    if let Some(n) = a.days {
        cfg.n_days = n;
    }
    if let Some(ci) = &a.change_interval {
        cfg = GeneratorConfig::parse(&format!("{}mean_change_interval_days = {ci}\n", cfg.to_text()))?;
    }
    let trace = generate(&cfg)?;
    write_trace(&trace, &a.out)?;
    fs::write(a.out.join("generator.conf"), cfg.to_text())?;
    eprintln!(
        "wrote {} resources x {} days to {}",
        trace.n_resources(),
        trace.n_days,
        a.out.display()
    );
    Ok(())
}

fn cmd_harvest(a: HarvestArgs) -> CmdResult {
    let uri_rs = fs::read_to_string(&a.uris)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    let mut job = HarvestJob::new(uri_rs, a.template, a.store);
    job.timeout = Duration::from_secs(a.timeout);
    job.concurrency = a.workers;
    let summary = runtime()?.block_on(harvest(&job, a.day))?;
    println!(
        "ok={} http_error={} transport_failure={}",
        summary.ok, summary.http_error, summary.transport_failure
    );
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> CmdResult {
    let trace = read_trace(&a.trace.trace)?;
    let all = transitions(&trace, a.trace.identity);
    if let Some(path) = &a.transitions {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "uri_r", "day", "case", "gained", "lost", "archives_gained", "archives_lost",
        ])
        .map_err(csv_err)?;
        for t in &all {
            let d = &t.delta;
            w.write_record([
                t.uri_r.to_string(),
                t.day.to_string(),
                t.case.to_string(),
                d.gained.to_string(),
                d.lost.to_string(),
                d.archives_gained.to_string(),
                d.archives_lost.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| ServiceError::Client(e.to_string()))?;
        emit(Some(path), &String::from_utf8_lossy(&bytes))?;
    }
    let totals = case_totals(&all);
    let mut out = String::from("case,count\n");
    for (case, n) in ChangeCase::ALL.iter().zip(totals) {
        out.push_str(&format!("{case},{n}\n"));
    }
    if a.transitions.as_deref() == Some(Path::new("-")) {
        eprint!("{out}");
    } else {
        print!("{out}");
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> ServiceError {
    ServiceError::Io(std::io::Error::other(e.to_string()))
}

fn options(sim: &SimArgs) -> ReplayOptions {
    ReplayOptions {
        identity: sim.trace.identity,
        reference: match sim.reference {
            Reference::RunningMax => LiveReference::RunningMax,
            Reference::Instantaneous => LiveReference::Instantaneous,
        },
    }
}

fn cmd_replay(a: ReplayArgs) -> CmdResult {
    let trace = load(&a.sim.trace.trace)?;
    let report = replay_with(&trace, a.sim.policy, a.ttl, &options(&a.sim))?;
    emit(a.sim.out.as_deref(), &export_report(&report))?;
    eprintln!(
        "policy={} ttl={} memdays={} q={} missed_updates={} false_zero_days={}",
        report.policy, report.ttl, report.memdays, report.q, report.missed_updates, report.false_zero_days
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let trace = load(&a.sim.trace.trace)?;
    let curve = sweep_with(&trace, a.sim.policy, &a.ttl.0, &options(&a.sim))?;
    emit(a.sim.out.as_deref(), &export_curve(&curve))?;
    if let Ok(best) = optimal_ttl(&curve) {
        eprintln!(
            "optimal_ttl={} memdays={} q={} degenerate={}",
            best.ttl, best.memdays, best.q, best.degenerate
        );
    }
    Ok(())
}

fn cmd_monotone(a: TraceArgs) -> CmdResult {
    let trace = read_trace(&a.trace)?;
    println!("{:.3}", monotone_fraction(&trace, a.identity));
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => ProxyConfig::parse(&fs::read_to_string(p)?)?,
        None => ProxyConfig::default(),
    };
    cfg.apply_env()?;
    let set = |cfg: &mut ProxyConfig, k: &str, v: &str| {
        cfg.set(k, v).map_err(ServiceError::InvalidConfig)
    };
    if let Some(v) = &a.listen {
        set(&mut cfg, "listen", v)?;
    }
    if let Some(v) = &a.upstream {
        set(&mut cfg, "upstream", v)?;
    }
    if let Some(v) = a.policy {
        cfg.policy = v;
    }
    if let Some(v) = a.ttl {
        cfg.ttl = v;
    }
    if let Some(v) = a.identity {
        cfg.identity = v;
    }
    if let Some(v) = a.timeout {
        cfg.upstream_timeout = Duration::from_secs(v);
    }
    if a.persist.is_some() {
        cfg.persistence = a.persist;
    }
    cfg.validate()?;
    eprintln!(
        "serving on {} (policy={} ttl={} identity={})",
        cfg.listen, cfg.policy, cfg.ttl, cfg.identity
    );
    runtime()?.block_on(serve(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
}

fn cmd_purge(a: PurgeArgs) -> CmdResult {
    let mut url = url::Url::parse(&a.proxy)
        .map_err(|e| ServiceError::InvalidConfig(format!("--proxy: {e}")))?
        .join("/admin/purge")
        .map_err(|e| ServiceError::InvalidConfig(format!("--proxy: {e}")))?;
    if let Some(u) = &a.uri_r {
        url.query_pairs_mut().append_pair("uri_r", u);
    }
    let body = runtime()?.block_on(async {
        let resp = reqwest::Client::new()
            .post(url)
            .send()
            .await
            .map_err(|e| ServiceError::Client(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ServiceError::Client(format!("proxy answered {}", resp.status())));
        }
        resp.text().await.map_err(|e| ServiceError::Client(e.to_string()))
    })?;
    print!("{body}");
    Ok(())
}
