//! Benchmark sweeps: one deployment per configuration, the flow repeated
//! `repeats` times with counters checked for equality across repeats.

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::bus::Role;
use super::report::ReportRow;
use super::{measure_communication, role_traffic, CostReport};
use crate::arith::OpCounts;
use crate::cpabe::{attribute_set, AccessTree};
use crate::error::{Error, Result};
use crate::protocol::{AggregationRequest, Deployment, DeploymentConfig, RequestKind};
use crate::vphe::SUPPORTED_BITS;

pub const MAX_ATTRIBUTES: usize = 10;
pub const DEFAULT_REPEATS: usize = 20;
/// Uploaded plaintexts are drawn below `2^PLAINTEXT_BITS`.
pub const PLAINTEXT_BITS: u32 = 16;

const DATA_STREAM: u64 = 0xda7a;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub use_case: RequestKind,
    pub n_bits: u64,
    /// Messages aggregated (DO-DO, DRs-DO) or owners aggregated (DRs-DOs).
    pub count: usize,
    /// Leaves of the AND policy the result key is sealed under.
    pub attrs: usize,
    pub seed: u64,
    pub repeats: usize,
    /// Record wall time; disabled runs report zero and are byte-reproducible.
    pub timing: bool,
}

impl BenchConfig {
    pub fn new(use_case: RequestKind, n_bits: u64, count: usize, attrs: usize) -> Self {
        Self { use_case, n_bits, count, attrs, seed: 1, repeats: DEFAULT_REPEATS, timing: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_BITS.contains(&self.n_bits) {
            return Err(Error::Parameter(format!("n_bits must be one of {SUPPORTED_BITS:?}")));
        }
        if self.count == 0 {
            return Err(Error::Parameter("count must be positive".into()));
        }
        if !(1..=MAX_ATTRIBUTES).contains(&self.attrs) {
            return Err(Error::Parameter(format!("attrs must be in 1..={MAX_ATTRIBUTES}")));
        }
        if self.repeats == 0 {
            return Err(Error::Parameter("repeats must be positive".into()));
        }
        Ok(())
    }
}

/// Attribute universe shared by benchmark deployments.
pub fn bench_universe() -> Vec<String> {
    (0..MAX_ATTRIBUTES).map(|i| format!("attr{i}")).collect()
}

/// AND over the first `attrs` universe attributes (a single leaf for one).
pub fn bench_policy(attrs: usize) -> Result<AccessTree> {
    let leaves: Vec<AccessTree> = bench_universe().into_iter().take(attrs).map(AccessTree::leaf).collect();
    match leaves.len() {
        1 => Ok(leaves.into_iter().next().expect("one leaf")),
        _ => AccessTree::and(leaves),
    }
}

/// Whether `count` plaintexts below `2^bits` could wrap modulo `n`.
pub fn overflow_possible(n: &BigUint, count: usize, plaintext_bits: u32) -> bool {
    BigUint::from(count) << plaintext_bits >= *n
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

struct Prepared {
    deployment: Deployment,
    expected: BigUint,
    upload_ops: OpCounts,
    upload_bits: u64,
    upload_time: Duration,
}

fn prepare(config: &BenchConfig) -> Result<Prepared> {
    let owners = if config.use_case == RequestKind::DrsDos { config.count } else { 1 };
    let universe = bench_universe();
    let universe_refs: Vec<&str> = universe.iter().map(String::as_str).collect();
    let dep_config = DeploymentConfig::new(config.n_bits, &universe_refs, config.seed).with_owner_capacity(owners);
    let mut deployment = Deployment::new(dep_config)?;
    let policy = bench_policy(config.attrs)?;
    for id in 1..=owners as u64 {
        deployment.enroll_owner(id)?;
        deployment.register_policy(id, policy.clone(), policy.clone())?;
    }
    deployment.enroll_requester(1, &attribute_set(universe.iter().take(config.attrs)))?;

    let mut data_rng = ChaCha20Rng::seed_from_u64(config.seed);
    data_rng.set_stream(DATA_STREAM);
    let seq = deployment.bus().next_seq();
    let sp_wall = deployment.wall().get(&Role::ServiceProvider).copied().unwrap_or_default();
    let started = Instant::now();
    let mut expected = BigUint::default();
    let uploads: Vec<u64> = match config.use_case {
        RequestKind::DrsDos => (1..=owners as u64).collect(),
        _ => vec![1; config.count],
    };
    for do_id in uploads {
        let m = BigUint::from(data_rng.gen_range(0..1u64 << PLAINTEXT_BITS));
        expected += &m;
        deployment.upload(do_id, &m)?;
    }
    let sp_after = deployment.wall().get(&Role::ServiceProvider).copied().unwrap_or_default();
    let upload_time = started.elapsed().saturating_sub(sp_after - sp_wall);
    let links = measure_communication(&deployment.transcript().since(seq));
    let upload_bits = role_traffic(&links, Role::DataOwner).1;
    let upload_ops = deployment
        .owner_ids()
        .iter()
        .filter_map(|id| deployment.owner(*id))
        .fold(OpCounts::default(), |acc, o| acc + o.ops);
    expected %= deployment.modulus();
    Ok(Prepared { deployment, expected, upload_ops, upload_bits, upload_time })
}

fn request_for(config: &BenchConfig, request_id: u64) -> AggregationRequest {
    let count = config.count as u64;
    match config.use_case {
        RequestKind::DoDo => AggregationRequest::do_do(request_id, 1, 0, count),
        RequestKind::DrsDo => AggregationRequest::drs_do(request_id, 1, 1, 0, count),
        RequestKind::DrsDos => {
            AggregationRequest::drs_dos(request_id, 1, attribute_set(bench_universe().iter().take(config.attrs)))
        }
    }
}

/// Runs one configuration and returns one row per role (DO, SP, CP, DR).
///
/// The DO row covers the owner's uploads (per owner for DRs-DOs) plus, for
/// DO-DO, opening the result; every other row covers one request run.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let Prepared { mut deployment, expected, upload_ops, upload_bits, upload_time } = prepare(config)?;

    let mut reference: Option<CostReport> = None;
    let mut wall_sum = std::collections::BTreeMap::<Role, Duration>::new();
    for _ in 0..config.repeats {
        let request_id = deployment.next_request_id();
        let outcome = deployment.run_use_case(&request_for(config, request_id));
        let value = outcome.result.clone()?;
        if value != expected {
            return Err(Error::Domain(format!("aggregate {value} differs from expected {expected}")));
        }
        let report = CostReport::from_outcome(&outcome);
        for (role, d) in &report.wall {
            *wall_sum.entry(*role).or_default() += *d;
        }
        match &reference {
            None => reference = Some(report),
            Some(first) if first.counters != report.counters => {
                return Err(Error::Parameter("operation counters differ across repeats".into()));
            }
            Some(_) => {}
        }
    }
    let report = reference.expect("at least one repeat");
    let repeats = config.repeats as f64;
    let avg_ms = |role: Role| -> f64 {
        if config.timing {
            millis(wall_sum.get(&role).copied().unwrap_or_default()) / repeats
        } else {
            0.0
        }
    };

    let owners = if config.use_case == RequestKind::DrsDos { config.count as u64 } else { 1 };
    let row = |role: Role, ops: OpCounts, bits_in: u64, bits_out: u64, time_ms: f64| ReportRow {
        use_case: config.use_case.to_string(),
        role: role.short().to_string(),
        n_bits: config.n_bits,
        count: config.count as u64,
        attrs: config.attrs as u64,
        modexp: ops.mod_exp,
        modmul: ops.mod_mul,
        exp: ops.exp,
        bipair: ops.bi_pair,
        bits_in,
        bits_out,
        time_ms,
    };

    let (do_in, do_out) = role_traffic(&report.links, Role::DataOwner);
    let do_ops = OpCounts {
        mod_exp: upload_ops.mod_exp / owners,
        mod_mul: upload_ops.mod_mul / owners,
        exp: upload_ops.exp / owners,
        bi_pair: upload_ops.bi_pair / owners,
        mod_inverse: upload_ops.mod_inverse / owners,
    } + report.counter(Role::DataOwner);
    let upload_ms = if config.timing { millis(upload_time) / owners as f64 } else { 0.0 };
    let mut rows = vec![row(Role::DataOwner, do_ops, do_in, upload_bits / owners + do_out, upload_ms + avg_ms(Role::DataOwner))];
    for role in [Role::ServiceProvider, Role::ComputationalParty, Role::DataRequester] {
        let (bits_in, bits_out) = role_traffic(&report.links, role);
        rows.push(row(role, report.counter(role), bits_in, bits_out, avg_ms(role)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(use_case: RequestKind, count: usize, attrs: usize, seed: u64) -> Vec<ReportRow> {
        let config = BenchConfig { seed, repeats: 2, timing: false, ..BenchConfig::new(use_case, 512, count, attrs) };
        run_bench(&config).unwrap()
    }

    #[test]
    fn do_do_rows_follow_cost_formulas() {
        let rows = quick(RequestKind::DoDo, 10, 2, 3);
        assert_eq!(rows.len(), 4);
        let owner = &rows[0];
        assert_eq!((owner.modexp, owner.modmul), (10 * 2 + 1, 10 + 1));
        let sp = &rows[1];
        assert_eq!((sp.modexp, sp.modmul), (0, 9));
        assert!(rows[2..].iter().all(|r| r.modexp == 0 && r.modmul == 0));
    }

    #[test]
    fn counters_do_not_depend_on_seed() {
        let strip = |rows: Vec<ReportRow>| rows.into_iter().map(|r| (r.role, r.modexp, r.modmul, r.exp, r.bipair)).collect::<Vec<_>>();
        assert_eq!(strip(quick(RequestKind::DrsDos, 3, 2, 1)), strip(quick(RequestKind::DrsDos, 3, 2, 2)));
    }

    #[test]
    fn untimed_runs_are_reproducible() {
        assert_eq!(quick(RequestKind::DrsDo, 4, 3, 9), quick(RequestKind::DrsDo, 4, 3, 9));
    }

    #[test]
    fn rejects_bad_config() {
        let mut config = BenchConfig::new(RequestKind::DoDo, 1000, 1, 1);
        assert!(config.validate().is_err());
        config.n_bits = 512;
        config.attrs = 11;
        assert!(config.validate().is_err());
    }

    #[test]
    fn overflow_warning_threshold() {
        let n = BigUint::from(1u64 << 20);
        assert!(!overflow_possible(&n, 15, 16));
        assert!(overflow_possible(&n, 16, 16));
    }
}
