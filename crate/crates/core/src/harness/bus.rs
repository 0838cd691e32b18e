//! In-process message bus with a transcript of every send.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arith::wire::{Breakdown, Decoder, Encoder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    KeyAuthority,
    DataOwner,
    ServiceProvider,
    ComputationalParty,
    DataRequester,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::KeyAuthority,
        Role::DataOwner,
        Role::ServiceProvider,
        Role::ComputationalParty,
        Role::DataRequester,
    ];

    pub fn code(self) -> u8 {
        match self {
            Role::KeyAuthority => 1,
            Role::DataOwner => 2,
            Role::ServiceProvider => 3,
            Role::ComputationalParty => 4,
            Role::DataRequester => 5,
        }
    }

    pub fn from_code(code: u8) -> Result<Role> {
        Role::ALL
            .into_iter()
            .find(|r| r.code() == code)
            .ok_or_else(|| Error::Decode(format!("unknown role byte {code}")))
    }

    pub fn short(self) -> &'static str {
        match self {
            Role::KeyAuthority => "KA",
            Role::DataOwner => "DO",
            Role::ServiceProvider => "SP",
            Role::ComputationalParty => "CP",
            Role::DataRequester => "DR",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub role: Role,
    pub id: u64,
}

impl Endpoint {
    pub const KA: Endpoint = Endpoint { role: Role::KeyAuthority, id: 0 };
    pub const SP: Endpoint = Endpoint { role: Role::ServiceProvider, id: 0 };
    pub const CP: Endpoint = Endpoint { role: Role::ComputationalParty, id: 0 };

    pub const fn owner(id: u64) -> Self {
        Endpoint { role: Role::DataOwner, id }
    }

    pub const fn requester(id: u64) -> Self {
        Endpoint { role: Role::DataRequester, id }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::DataOwner | Role::DataRequester => write!(f, "{}#{}", self.role, self.id),
            _ => write!(f, "{}", self.role),
        }
    }
}

/// Envelope header: tag, request id, sender and receiver role bytes, payload length.
pub const ENVELOPE_HEADER_BITS: u64 = 8 * (2 + 8 + 1 + 1 + 4);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub tag: u16,
    pub request_id: u64,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub payload: Vec<u8>,
    /// Payload bits per accounting section.
    pub breakdown: Breakdown,
}

impl Envelope {
    /// Wire form: header followed by the length-prefixed payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_u16(self.tag);
        enc.put_u64(self.request_id);
        enc.put_u8(self.sender.role.code());
        enc.put_u8(self.receiver.role.code());
        enc.put_bytes(&self.payload, crate::arith::wire::Section::Auxiliary);
        enc.into_bytes()
    }

    /// Parses the header; endpoint ids are not carried on the wire.
    pub fn parse_header(bytes: &[u8]) -> Result<(u16, u64, Role, Role, Vec<u8>)> {
        let mut dec = Decoder::new(bytes);
        let tag = dec.u16()?;
        let request_id = dec.u64()?;
        let sender = Role::from_code(dec.u8()?)?;
        let receiver = Role::from_code(dec.u8()?)?;
        let payload = dec.bytes()?.to_vec();
        dec.finish()?;
        Ok((tag, request_id, sender, receiver, payload))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub tag: u16,
    pub request_id: u64,
    pub payload: Vec<u8>,
    /// `8 ·` payload length.
    pub bits: u64,
    pub breakdown: Breakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn for_request(&self, request_id: u64) -> Transcript {
        Transcript {
            entries: self.entries.iter().filter(|e| e.request_id == request_id).cloned().collect(),
        }
    }

    pub fn since(&self, seq: u64) -> Transcript {
        Transcript { entries: self.entries.iter().filter(|e| e.seq >= seq).cloned().collect() }
    }

    pub fn between(&self, sender: Role, receiver: Role) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.iter().filter(move |e| e.sender.role == sender && e.receiver.role == receiver)
    }

    pub fn tags(&self) -> Vec<u16> {
        self.entries.iter().map(|e| e.tag).collect()
    }

    /// Canonical byte form used for replay comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        for e in &self.entries {
            enc.put_u64(e.seq);
            for ep in [e.sender, e.receiver] {
                enc.put_u8(ep.role.code());
                enc.put_u64(ep.id);
            }
            enc.put_u16(e.tag);
            enc.put_u64(e.request_id);
            enc.put_bytes(&e.payload, crate::arith::wire::Section::Auxiliary);
        }
        enc.into_bytes()
    }
}

/// FIFO per ordered endpoint pair; every send is recorded before it is queued.
#[derive(Debug, Default)]
pub struct Bus {
    endpoints: BTreeSet<Endpoint>,
    queues: BTreeMap<(Endpoint, Endpoint), VecDeque<(u64, Envelope)>>,
    transcript: Transcript,
    next_seq: u64,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, endpoint: Endpoint) {
        self.endpoints.insert(endpoint);
    }

    pub fn is_registered(&self, endpoint: &Endpoint) -> bool {
        self.endpoints.contains(endpoint)
    }

    pub fn send(&mut self, envelope: Envelope) -> Result<u64> {
        for ep in [&envelope.sender, &envelope.receiver] {
            if !self.endpoints.contains(ep) {
                return Err(Error::UnknownEndpoint(ep.to_string()));
            }
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.transcript.entries.push(TranscriptEntry {
            seq,
            sender: envelope.sender,
            receiver: envelope.receiver,
            tag: envelope.tag,
            request_id: envelope.request_id,
            bits: 8 * envelope.payload.len() as u64,
            payload: envelope.payload.clone(),
            breakdown: envelope.breakdown,
        });
        self.queues.entry((envelope.sender, envelope.receiver)).or_default().push_back((seq, envelope));
        Ok(seq)
    }

    /// Next message on one link.
    pub fn deliver(&mut self, sender: Endpoint, receiver: Endpoint) -> Result<Option<Envelope>> {
        if !self.endpoints.contains(&receiver) {
            return Err(Error::UnknownEndpoint(receiver.to_string()));
        }
        Ok(self.queues.get_mut(&(sender, receiver)).and_then(|q| q.pop_front()).map(|(_, e)| e))
    }

    /// Oldest undelivered message on any link.
    pub fn deliver_next(&mut self) -> Option<Envelope> {
        let key = self
            .queues
            .iter()
            .filter_map(|(k, q)| q.front().map(|(seq, _)| (*seq, *k)))
            .min()?
            .1;
        self.queues.get_mut(&key).and_then(|q| q.pop_front()).map(|(_, e)| e)
    }

    pub fn pending(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    /// Drops undelivered messages (after a failed run).
    pub fn clear_pending(&mut self) {
        self.queues.clear();
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn envelope(sender: Endpoint, receiver: Endpoint, payload: &[u8]) -> Envelope {
        Envelope { tag: 7, request_id: 1, sender, receiver, payload: payload.to_vec(), breakdown: Breakdown::default() }
    }

    fn bus() -> Bus {
        let mut bus = Bus::new();
        for ep in [Endpoint::SP, Endpoint::CP, Endpoint::owner(1)] {
            bus.register(ep);
        }
        bus
    }

    #[test]
    fn send_then_deliver_preserves_bytes() {
        let mut bus = bus();
        bus.send(envelope(Endpoint::SP, Endpoint::CP, &[1, 2, 3])).unwrap();
        let got = bus.deliver(Endpoint::SP, Endpoint::CP).unwrap().unwrap();
        assert_eq!(got.payload, vec![1, 2, 3]);
        assert_eq!(bus.transcript().entries[0].bits, 24);
        assert!(bus.deliver(Endpoint::SP, Endpoint::CP).unwrap().is_none());
    }

    #[test]
    fn same_link_is_fifo() {
        let mut bus = bus();
        bus.send(envelope(Endpoint::SP, Endpoint::CP, &[1])).unwrap();
        bus.send(envelope(Endpoint::owner(1), Endpoint::SP, &[9])).unwrap();
        bus.send(envelope(Endpoint::SP, Endpoint::CP, &[2])).unwrap();
        assert_eq!(bus.deliver(Endpoint::SP, Endpoint::CP).unwrap().unwrap().payload, vec![1]);
        assert_eq!(bus.deliver_next().unwrap().payload, vec![9]);
        assert_eq!(bus.deliver_next().unwrap().payload, vec![2]);
        assert_eq!(bus.pending(), 0);
        let seqs: Vec<u64> = bus.transcript().entries.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
    }

    #[test]
    fn unknown_endpoint_rejected() {
        let mut bus = bus();
        let err = bus.send(envelope(Endpoint::SP, Endpoint::requester(5), &[])).unwrap_err();
        assert_eq!(err, Error::UnknownEndpoint("DR#5".into()));
        assert!(bus.transcript().is_empty());
    }

    #[test]
    fn envelope_header_round_trip() {
        let env = envelope(Endpoint::SP, Endpoint::CP, &[4, 5]);
        let bytes = env.to_bytes();
        assert_eq!(8 * (bytes.len() - 2) as u64, ENVELOPE_HEADER_BITS);
        let (tag, req, s, r, payload) = Envelope::parse_header(&bytes).unwrap();
        assert_eq!((tag, req, s, r, payload), (7, 1, Role::ServiceProvider, Role::ComputationalParty, vec![4, 5]));
    }
}
