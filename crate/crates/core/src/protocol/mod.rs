//! Five-role aggregation protocol: data owners (DO), service provider (SP),
//! computational party (CP), data requesters (DR) and the key authority (KA).
//!
//! Three request kinds are supported:
//!
//! * **DO-DO**: a DO asks the SP to aggregate a range of its own uploads and
//!   opens the result with its weak key.
//! * **DRs-DO**: a DR asks for the sum of a range of one DO's uploads. The SP
//!   masks the aggregate, the CP strong-decrypts the masked value and
//!   re-encrypts it under a fresh Paillier key whose private half is sealed
//!   under the DO's single-owner policy, and the SP removes the mask.
//! * **DRs-DOs**: a DR asks for the sum of the latest upload of every DO
//!   whose multi-owner policy the DR's claimed attributes satisfy.
//!
//! Masks live in `Z_n` of the system modulus, while demasking happens under
//! the result key's modulus `n_j > n`. The SP therefore folds in `n − R`
//! (with `R` the mask total mod `n`) instead of `−R`, so the demasked value
//! is `(Σm mod n) + n` or `Σm mod n` and never wraps mod `n_j`; the DR
//! reduces modulo `n`.

pub mod deployment;
pub mod messages;
pub mod roles;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::cpabe::{AbeCiphertext, AccessTree, AttributeSet};
use crate::error::{Error, Result};
use crate::harness::bus::Endpoint;
use crate::paillier::{PaillierCiphertext, PaillierPublicKey};
use crate::vphe::VpheCiphertext;

pub use deployment::{Deployment, DeploymentConfig, Outcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRecord {
    pub do_id: u64,
    pub ap_s: AccessTree,
    pub ap_m: AccessTree,
    pub version: u64,
}

/// Append-only per-owner ciphertext slots.
#[derive(Debug, Clone, Default)]
pub struct CipherStore {
    slots: BTreeMap<u64, Vec<VpheCiphertext>>,
}

impl CipherStore {
    /// Appends and returns the slot index.
    pub fn append(&mut self, do_id: u64, ct: VpheCiphertext) -> Result<usize> {
        if ct.key_id != do_id {
            return Err(Error::KeyMismatch { expected: do_id, found: ct.key_id });
        }
        let slots = self.slots.entry(do_id).or_default();
        slots.push(ct);
        Ok(slots.len() - 1)
    }

    pub fn len(&self, do_id: u64) -> usize {
        self.slots.get(&do_id).map_or(0, Vec::len)
    }

    pub fn range(&self, do_id: u64, start: u64, end: u64) -> Result<&[VpheCiphertext]> {
        let slots = self.slots.get(&do_id).map_or(&[][..], Vec::as_slice);
        if start >= end || end > slots.len() as u64 {
            return Err(Error::EmptyRange);
        }
        Ok(&slots[start as usize..end as usize])
    }

    pub fn slot(&self, do_id: u64, slot: Option<u64>) -> Result<&VpheCiphertext> {
        let slots = self.slots.get(&do_id).ok_or(Error::NoData(do_id))?;
        match slot {
            None => slots.last(),
            Some(i) => slots.get(i as usize),
        }
        .ok_or(Error::NoData(do_id))
    }
}

/// Masks applied for one request, keyed by DO.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRecord {
    pub request_id: u64,
    pub entries: BTreeMap<u64, BigUint>,
}

impl MaskRecord {
    pub fn total(&self, modulus: &BigUint) -> BigUint {
        self.entries.values().fold(BigUint::default(), |acc, r| (acc + r) % modulus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequestKind {
    DoDo,
    DrsDo,
    DrsDos,
}

impl RequestKind {
    pub const ALL: [RequestKind; 3] = [RequestKind::DoDo, RequestKind::DrsDo, RequestKind::DrsDos];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::DoDo => "do-do",
            RequestKind::DrsDo => "drs-do",
            RequestKind::DrsDos => "drs-dos",
        }
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RequestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RequestKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown use case `{s}`")))
    }
}

/// Half-open slot range of one DO's uploads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub do_id: u64,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationRequest {
    pub request_id: u64,
    pub kind: RequestKind,
    pub requester_id: u64,
    /// Attributes the requester claims (matched against AP_M in DRs-DOs).
    pub requester_attributes: AttributeSet,
    pub target: Option<Target>,
    /// Upload slot used per DO in DRs-DOs; `None` is the latest.
    pub slot: Option<u64>,
}

impl AggregationRequest {
    pub fn do_do(request_id: u64, do_id: u64, start: u64, end: u64) -> Self {
        Self {
            request_id,
            kind: RequestKind::DoDo,
            requester_id: do_id,
            requester_attributes: AttributeSet::new(),
            target: Some(Target { do_id, start, end }),
            slot: None,
        }
    }

    pub fn drs_do(request_id: u64, dr_id: u64, do_id: u64, start: u64, end: u64) -> Self {
        Self {
            request_id,
            kind: RequestKind::DrsDo,
            requester_id: dr_id,
            requester_attributes: AttributeSet::new(),
            target: Some(Target { do_id, start, end }),
            slot: None,
        }
    }

    pub fn drs_dos(request_id: u64, dr_id: u64, claimed: AttributeSet) -> Self {
        Self {
            request_id,
            kind: RequestKind::DrsDos,
            requester_id: dr_id,
            requester_attributes: claimed,
            target: None,
            slot: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.target) {
            (RequestKind::DoDo | RequestKind::DrsDo, None) => {
                Err(Error::Parameter(format!("{} request needs a target range", self.kind)))
            }
            (RequestKind::DrsDos, Some(_)) => {
                Err(Error::Parameter("drs-dos request takes no target".into()))
            }
            (RequestKind::DoDo, Some(t)) if t.do_id != self.requester_id => {
                Err(Error::Parameter("a data owner may only aggregate its own uploads".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn requester(&self) -> Endpoint {
        match self.kind {
            RequestKind::DoDo => Endpoint::owner(self.requester_id),
            _ => Endpoint::requester(self.requester_id),
        }
    }
}

/// Result delivered to a DR: masked-then-demasked Paillier ciphertext and
/// the sealed private key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultBundle {
    pub request_id: u64,
    pub paillier_ct: PaillierCiphertext,
    pub public: PaillierPublicKey,
    pub abe_ct: AbeCiphertext,
}

/// SP-side record of which owners' data fed which request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEvent {
    pub request_id: u64,
    pub kind: RequestKind,
    pub requester: Endpoint,
    pub owners: Vec<u64>,
}
