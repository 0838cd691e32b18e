use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use sama_core::cpabe::{attribute_set, parse_policy};
use sama_core::harness::bench::{overflow_possible, run_bench, BenchConfig, DEFAULT_REPEATS};
use sama_core::harness::report::{emit_report, Format};
use sama_core::harness::tables::{verify_tables, TablesConfig};
use sama_core::harness::CostReport;
use sama_core::protocol::{AggregationRequest, Deployment, DeploymentConfig, RequestKind};

#[derive(Parser)]
#[command(name = "sama", version, about = "Privacy-preserving aggregation simulator and benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure operation counts, traffic and timing for one or more configurations.
    Bench(BenchArgs),
    /// Execute a JSON scenario and print one outcome per request.
    Run(RunArgs),
    /// Check measured counters and traffic against the closed-form cost tables.
    VerifyTables(VerifyArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_kind)]
    use_case: RequestKind,
    /// Modulus sizes; comma-separated for a sweep.
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    n_bits: Vec<u64>,
    /// Message count (DO-DO, DRs-DO) or owner count (DRs-DOs); comma-separated for a sweep.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    count: Vec<usize>,
    /// Policy leaf counts; comma-separated for a sweep.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    attrs: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report zero wall time so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output file for the JSON-lines outcomes; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// CSV file receiving one line per check.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1024)]
    n_bits: u64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,10,100")]
    counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    leaves: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn parse_kind(s: &str) -> Result<RequestKind, String> {
    s.parse().map_err(|e: sama_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: sama_core::Error| e.to_string())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn bench(args: BenchArgs) -> Result<bool> {
    let mut rows = Vec::new();
    for &n_bits in &args.n_bits {
        for &count in &args.count {
            for &attrs in &args.attrs {
                let config = BenchConfig {
                    use_case: args.use_case,
                    n_bits,
                    count,
                    attrs,
                    seed: args.seed,
                    repeats: args.repeats,
                    timing: !args.no_timing,
                };
                eprintln!("bench {} n_bits={n_bits} N={count} attrs={attrs}", args.use_case);
                rows.extend(run_bench(&config)?);
            }
        }
    }
    let mut out = open_output(args.out.as_deref())?;
    emit_report(&rows, args.format, &mut out)?;
    out.flush()?;
    Ok(true)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    #[serde(default = "default_bits")]
    n_bits: u64,
    #[serde(default)]
    seed: u64,
    universe: Vec<String>,
    /// Declared upper bound on any single plaintext, used for overflow warnings.
    plaintext_bound: Option<u64>,
    owners: Vec<ScenarioOwner>,
    #[serde(default)]
    requesters: Vec<ScenarioRequester>,
    requests: Vec<ScenarioRequest>,
}

fn default_bits() -> u64 {
    1024
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioOwner {
    id: u64,
    data: Vec<u64>,
    ap_s: String,
    ap_m: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRequester {
    id: u64,
    attributes: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRequest {
    kind: String,
    requester: u64,
    owner: Option<u64>,
    start: Option<u64>,
    end: Option<u64>,
    /// Claimed attributes for DRs-DOs; the requester's key attributes when omitted.
    attributes: Option<Vec<String>>,
    slot: Option<u64>,
    /// Expected decimal result or error text; a mismatch fails the run.
    expect: Option<String>,
}

#[derive(Debug, Serialize)]
struct ScenarioOutcome {
    request_id: u64,
    kind: String,
    requester: String,
    result: Option<String>,
    error: Option<String>,
    messages: usize,
    payload_bits: u64,
    framing_bits: u64,
    expectation_met: Option<bool>,
}

fn run(args: RunArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&args.scenario).with_context(|| format!("reading {}", args.scenario.display()))?;
    let scenario: Scenario = serde_json::from_str(&text).context("parsing scenario")?;
    let universe: Vec<&str> = scenario.universe.iter().map(String::as_str).collect();
    let config = DeploymentConfig::new(scenario.n_bits, &universe, scenario.seed).with_owner_capacity(scenario.owners.len());
    let mut dep = Deployment::new(config)?;

    for owner in &scenario.owners {
        dep.enroll_owner(owner.id)?;
        dep.register_policy(owner.id, parse_policy(&owner.ap_s)?, parse_policy(&owner.ap_m)?)?;
        for m in &owner.data {
            dep.upload(owner.id, &BigUint::from(*m))?;
        }
    }
    for dr in &scenario.requesters {
        dep.enroll_requester(dr.id, &attribute_set(dr.attributes.iter()))?;
    }
    if let Some(bound) = scenario.plaintext_bound {
        let total: usize = scenario.owners.iter().map(|o| o.data.len()).sum();
        let bits = 64 - bound.leading_zeros();
        if overflow_possible(dep.modulus(), total, bits) {
            eprintln!("warning: {total} plaintexts below {bound} may exceed the modulus; sums are reduced mod n");
        }
    }

    let mut out = open_output(args.out.as_deref())?;
    let mut all_met = true;
    for entry in &scenario.requests {
        let kind: RequestKind = entry.kind.parse()?;
        let request_id = dep.next_request_id();
        let range = || -> Result<(u64, u64, u64)> {
            let owner = entry.owner.context("request needs `owner`")?;
            let start = entry.start.unwrap_or(0);
            let end = match entry.end {
                Some(e) => e,
                None => dep.sp().store().len(owner) as u64,
            };
            Ok((owner, start, end))
        };
        let mut request = match kind {
            RequestKind::DoDo => {
                let (owner, start, end) = range()?;
                if owner != entry.requester {
                    bail!("a do-do request must name the requesting owner");
                }
                AggregationRequest::do_do(request_id, owner, start, end)
            }
            RequestKind::DrsDo => {
                let (owner, start, end) = range()?;
                AggregationRequest::drs_do(request_id, entry.requester, owner, start, end)
            }
            RequestKind::DrsDos => {
                let claimed = match &entry.attributes {
                    Some(a) => attribute_set(a.iter()),
                    None => dep
                        .requester(entry.requester)
                        .map(|dr| dr.attributes().clone())
                        .with_context(|| format!("unknown requester {}", entry.requester))?,
                };
                AggregationRequest::drs_dos(request_id, entry.requester, claimed)
            }
        };
        request.slot = entry.slot;
        let outcome = dep.run_use_case(&request);
        let cost = CostReport::from_outcome(&outcome);
        let (result, error) = match &outcome.result {
            Ok(v) => (Some(v.to_string()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let expectation_met = entry.expect.as_ref().map(|want| result.as_ref().or(error.as_ref()) == Some(want));
        all_met &= expectation_met.unwrap_or(true);
        let line = ScenarioOutcome {
            request_id,
            kind: kind.to_string(),
            requester: request.requester().to_string(),
            result,
            error,
            messages: outcome.transcript.len(),
            payload_bits: cost.links.values().map(|b| b.payload()).sum(),
            framing_bits: cost.links.values().map(|b| b.framing).sum(),
            expectation_met,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(all_met)
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let config = TablesConfig { n_bits: args.n_bits, counts: args.counts, leaves: args.leaves, seed: args.seed };
    let checks = verify_tables(&config)?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut writer = csv::Writer::from_writer(file);
    for check in &checks {
        writer.serialize(check)?;
    }
    writer.flush()?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    eprintln!("{} checks, {} failed", checks.len(), failed);
    for c in checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {} {} {}: expected {}, measured {}", c.table, c.case, c.subject, c.expected, c.measured);
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bench(args) => bench(args),
        Command::Run(args) => run(args),
        Command::VerifyTables(args) => verify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
