//! Simulated network, cost accounting and the benchmark/conformance drivers.

pub mod bench;
pub mod bus;
pub mod report;
pub mod tables;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::arith::wire::Breakdown;
use crate::arith::OpCounts;
use crate::protocol::Outcome;
use bus::{Role, Transcript, ENVELOPE_HEADER_BITS};

/// Directed link between two roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub from: Role,
    pub to: Role,
}

impl Link {
    pub const DO_SP: Link = Link { from: Role::DataOwner, to: Role::ServiceProvider };
    pub const SP_CP: Link = Link { from: Role::ServiceProvider, to: Role::ComputationalParty };
    pub const CP_SP: Link = Link { from: Role::ComputationalParty, to: Role::ServiceProvider };
    pub const SP_DR: Link = Link { from: Role::ServiceProvider, to: Role::DataRequester };

    pub const fn new(from: Role, to: Role) -> Self {
        Link { from, to }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Per-link bit totals; envelope headers are added to the framing section.
pub fn measure_communication(transcript: &Transcript) -> BTreeMap<Link, Breakdown> {
    let mut links: BTreeMap<Link, Breakdown> = BTreeMap::new();
    for entry in &transcript.entries {
        let slot = links.entry(Link::new(entry.sender.role, entry.receiver.role)).or_default();
        *slot += entry.breakdown;
        slot.framing += ENVELOPE_HEADER_BITS;
    }
    links
}

/// Payload bits a role sent and received (framing excluded).
pub fn role_traffic(links: &BTreeMap<Link, Breakdown>, role: Role) -> (u64, u64) {
    links.iter().fold((0, 0), |(bits_in, bits_out), (link, b)| {
        let incoming = if link.to == role { b.payload() } else { 0 };
        let outgoing = if link.from == role { b.payload() } else { 0 };
        (bits_in + incoming, bits_out + outgoing)
    })
}

/// Counters, link totals and handler wall time of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostReport {
    pub counters: BTreeMap<Role, OpCounts>,
    pub links: BTreeMap<Link, Breakdown>,
    pub wall: BTreeMap<Role, Duration>,
}

impl CostReport {
    pub fn from_outcome(outcome: &Outcome) -> Self {
        Self {
            counters: outcome.costs.clone(),
            links: measure_communication(&outcome.transcript),
            wall: outcome.wall.clone(),
        }
    }

    pub fn counter(&self, role: Role) -> OpCounts {
        self.counters.get(&role).copied().unwrap_or_default()
    }

    pub fn link(&self, link: Link) -> Breakdown {
        self.links.get(&link).copied().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::bus::{Bus, Endpoint, Envelope};

    #[test]
    fn link_totals_match_transcript() {
        let mut bus = Bus::new();
        for ep in [Endpoint::SP, Endpoint::CP, Endpoint::owner(1), Endpoint::owner(2)] {
            bus.register(ep);
        }
        let b = Breakdown { framing: 16, homomorphic: 2048, abe_components: 0, auxiliary: 0 };
        for sender in [Endpoint::owner(1), Endpoint::owner(2)] {
            let env = Envelope {
                tag: 1,
                request_id: 0,
                sender,
                receiver: Endpoint::SP,
                payload: vec![0; 258],
                breakdown: b,
            };
            bus.send(env).unwrap();
        }
        let links = measure_communication(bus.transcript());
        let do_sp = links[&Link::DO_SP];
        assert_eq!(do_sp.homomorphic, 4096);
        assert_eq!(do_sp.framing, 32 + 2 * ENVELOPE_HEADER_BITS);
        assert_eq!(do_sp.homomorphic + do_sp.framing - 2 * ENVELOPE_HEADER_BITS, 2 * 258 * 8);
        assert_eq!(role_traffic(&links, Role::ServiceProvider), (4096, 0));
        assert!(!links.contains_key(&Link::SP_CP));
    }
}
