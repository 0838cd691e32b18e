//! Conformance suite for the computation-cost and communication tables.

use std::fmt::Write as _;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::bench::{bench_policy, bench_universe};
use super::bus::Role;
use super::{CostReport, Link};
use crate::arith::OpCounts;
use crate::cpabe::{attribute_set, LEAF_COMPONENT_BITS};
use crate::error::Result;
use crate::protocol::{AggregationRequest, Deployment, DeploymentConfig, Outcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCheck {
    pub table: String,
    pub case: String,
    pub subject: String,
    pub expected: String,
    pub measured: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablesConfig {
    pub n_bits: u64,
    pub counts: Vec<usize>,
    pub leaves: Vec<usize>,
    pub seed: u64,
}

impl Default for TablesConfig {
    fn default() -> Self {
        Self { n_bits: 1024, counts: vec![1, 2, 10, 100], leaves: vec![1, 5, 10], seed: 7 }
    }
}

fn describe(ops: &OpCounts) -> String {
    let mut s = format!("{} ModExp + {} ModMul", ops.mod_exp, ops.mod_mul);
    if ops.exp > 0 {
        let _ = write!(s, " + {} Exp", ops.exp);
    }
    if ops.bi_pair > 0 {
        let _ = write!(s, " + {} BiPair", ops.bi_pair);
    }
    if ops.mod_inverse > 0 {
        let _ = write!(s, " + {} ModInverse", ops.mod_inverse);
    }
    s
}

struct Checks(Vec<TableCheck>);

impl Checks {
    fn ops(&mut self, case: &str, role: Role, expected: OpCounts, measured: OpCounts) {
        self.0.push(TableCheck {
            table: "computation".into(),
            case: case.into(),
            subject: role.short().into(),
            expected: describe(&expected),
            measured: describe(&measured),
            pass: expected == measured,
        });
    }

    fn bits(&mut self, case: &str, subject: &str, expected: u64, measured: u64) {
        self.0.push(TableCheck {
            table: "communication".into(),
            case: case.into(),
            subject: subject.into(),
            expected: expected.to_string(),
            measured: measured.to_string(),
            pass: expected == measured,
        });
    }

    fn value(&mut self, case: &str, expected: &BigUint, outcome: &Outcome) {
        let measured = match &outcome.result {
            Ok(v) => v.to_string(),
            Err(e) => format!("error: {e}"),
        };
        self.0.push(TableCheck {
            table: "result".into(),
            case: case.into(),
            subject: "requester".into(),
            expected: expected.to_string(),
            pass: measured == expected.to_string(),
            measured,
        });
    }
}

const fn ops(mod_exp: u64, mod_mul: u64, exp: u64, bi_pair: u64) -> OpCounts {
    OpCounts::new(mod_exp, mod_mul, exp, bi_pair)
}

/// Runs every flow for each `N` and leaf count and compares counters and
/// link payloads against the closed-form table entries.
pub fn verify_tables(config: &TablesConfig) -> Result<Vec<TableCheck>> {
    let mut checks = Checks(Vec::new());
    let b = config.n_bits;
    let universe = bench_universe();
    let universe_refs: Vec<&str> = universe.iter().map(String::as_str).collect();
    for &count in &config.counts {
        let n = count as u64;
        let dep_config = DeploymentConfig::new(b, &universe_refs, config.seed ^ n).with_owner_capacity(count);
        let mut dep = Deployment::new(dep_config)?;
        let everything = attribute_set(universe.iter());
        dep.enroll_requester(1, &everything)?;
        for id in 1..=n {
            dep.enroll_owner(id)?;
        }

        // Owner 1 uploads N messages, every other owner one.
        let seq = dep.bus().next_seq();
        let mut own_sum = BigUint::default();
        let mut latest_sum = BigUint::default();
        for i in 0..n {
            let m = BigUint::from(1000 + 17 * i);
            own_sum += &m;
            dep.upload(1, &m)?;
        }
        latest_sum += BigUint::from(1000 + 17 * (n - 1));
        for id in 2..=n {
            let m = BigUint::from(500 + id);
            latest_sum += &m;
            dep.upload(id, &m)?;
        }
        let upload_ops = dep.owner_ids().iter().filter_map(|id| dep.owner(*id)).fold(OpCounts::default(), |a, o| a + o.ops);
        let uploads = 2 * n - 1;
        let case = format!("upload N={uploads}");
        checks.ops(&case, Role::DataOwner, ops(2 * uploads, uploads, 0, 0), upload_ops);
        let upload_links = super::measure_communication(&dep.transcript().since(seq));
        checks.bits(&case, "DO->SP homomorphic", 2 * uploads * b, upload_links.get(&Link::DO_SP).map_or(0, |l| l.homomorphic));

        let rid = dep.next_request_id();
        let outcome = dep.run_use_case(&AggregationRequest::do_do(rid, 1, 0, n));
        let case = format!("do-do N={n}");
        checks.value(&case, &own_sum, &outcome);
        let report = CostReport::from_outcome(&outcome);
        checks.ops(&case, Role::DataOwner, ops(1, 1, 0, 0), report.counter(Role::DataOwner));
        checks.ops(&case, Role::ServiceProvider, ops(0, n - 1, 0, 0), report.counter(Role::ServiceProvider));
        checks.ops(&case, Role::ComputationalParty, OpCounts::default(), report.counter(Role::ComputationalParty));
        checks.bits(&case, "SP->CP total", 0, report.link(Link::SP_CP).total());

        for &leaves in &config.leaves {
            let l = leaves as u64;
            let policy = bench_policy(leaves)?;
            for id in 1..=n {
                dep.register_policy(id, policy.clone(), policy.clone())?;
            }

            let rid = dep.next_request_id();
            let outcome = dep.run_use_case(&AggregationRequest::drs_do(rid, 1, 1, 0, n));
            let case = format!("drs-do N={n} leaves={l}");
            checks.value(&case, &own_sum, &outcome);
            let report = CostReport::from_outcome(&outcome);
            checks.ops(&case, Role::DataOwner, OpCounts::default(), report.counter(Role::DataOwner));
            checks.ops(&case, Role::ServiceProvider, ops(4, n + 3, 0, 0), report.counter(Role::ServiceProvider));
            checks.ops(&case, Role::ComputationalParty, ops(3, 2, l, 0), report.counter(Role::ComputationalParty));
            checks.ops(&case, Role::DataRequester, ops(1, 1, 0, l), report.counter(Role::DataRequester));
            let sp_cp = report.link(Link::SP_CP);
            let cp_sp = report.link(Link::CP_SP);
            checks.bits(&case, "SP<->CP homomorphic", 4 * b, sp_cp.homomorphic + cp_sp.homomorphic);
            checks.bits(&case, "CP->SP ABE components", l * LEAF_COMPONENT_BITS, cp_sp.abe_components);
            checks.bits(&case, "SP->DR homomorphic", 2 * b, report.link(Link::SP_DR).homomorphic);

            let rid = dep.next_request_id();
            let outcome = dep.run_use_case(&AggregationRequest::drs_dos(rid, 1, everything.clone()));
            let case = format!("drs-dos N={n} leaves={l}");
            checks.value(&case, &latest_sum, &outcome);
            let report = CostReport::from_outcome(&outcome);
            checks.ops(&case, Role::DataOwner, OpCounts::default(), report.counter(Role::DataOwner));
            checks.ops(&case, Role::ServiceProvider, ops(2 * n + 2, 2 * n + 2, 0, 0), report.counter(Role::ServiceProvider));
            checks.ops(&case, Role::ComputationalParty, ops(n + 2, n + 1, l, 0), report.counter(Role::ComputationalParty));
            checks.ops(&case, Role::DataRequester, ops(1, 1, 0, l), report.counter(Role::DataRequester));
            let sp_cp = report.link(Link::SP_CP);
            let cp_sp = report.link(Link::CP_SP);
            checks.bits(&case, "SP<->CP homomorphic", 2 * (n + 1) * b, sp_cp.homomorphic + cp_sp.homomorphic);
            checks.bits(&case, "SP->CP homomorphic", 2 * n * b, sp_cp.homomorphic);
            checks.bits(&case, "CP->SP ABE components", l * LEAF_COMPONENT_BITS, cp_sp.abe_components);
            checks.bits(&case, "SP->DR homomorphic", 2 * b, report.link(Link::SP_DR).homomorphic);
        }
    }
    Ok(checks.0)
}
