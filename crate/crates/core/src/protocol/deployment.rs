//! Wires the five roles to one bus and drives request flows to completion.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::messages::Message;
use super::roles::{ComputationalParty, DataOwner, DataRequester, KeyAuthority, Outgoing, ServiceProvider};
use super::{AggregationRequest, RequestKind};
use crate::arith::OpCounts;
use crate::cpabe::{self, AccessTree, AttributeSet};
use crate::error::{Error, Result};
use crate::harness::bus::{Bus, Endpoint, Envelope, Role, Transcript};
use crate::vphe::{self, VpheCiphertext};

/// Request id used for uploads and policy registration.
pub const SETUP_REQUEST_ID: u64 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentConfig {
    pub n_bits: u64,
    /// Number of small primes in the weak-key pool; supports `2^k − 1` owners.
    pub pool_size: usize,
    /// Bit size of the pool primes; `None` picks the largest that fits.
    pub pool_prime_bits: Option<u32>,
    pub universe: Vec<String>,
    pub seed: u64,
}

impl DeploymentConfig {
    pub fn new(n_bits: u64, universe: &[&str], seed: u64) -> Self {
        Self {
            n_bits,
            pool_size: vphe::DEFAULT_POOL_SIZE,
            pool_prime_bits: None,
            universe: universe.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    }

    /// Smallest pool (at least the default) with room for `owners` weak keys.
    pub fn with_owner_capacity(mut self, owners: usize) -> Self {
        let needed = (usize::BITS - owners.leading_zeros()) as usize;
        self.pool_size = self.pool_size.max(needed);
        self
    }

    fn rng(&self, role: Role, id: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(((role.code() as u64) << 56) | id);
        rng
    }
}

/// Result of one request run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub request_id: u64,
    pub kind: RequestKind,
    /// What the requester ended up with.
    pub result: Result<BigUint>,
    /// Messages sent during the run.
    pub transcript: Transcript,
    /// Operation counts per role accrued during the run.
    pub costs: BTreeMap<Role, OpCounts>,
    /// Handler wall time per role.
    pub wall: BTreeMap<Role, Duration>,
}

impl Outcome {
    pub fn cost(&self, role: Role) -> OpCounts {
        self.costs.get(&role).copied().unwrap_or_default()
    }
}

pub struct Deployment {
    config: DeploymentConfig,
    bus: Bus,
    ka: KeyAuthority,
    sp: ServiceProvider,
    cp: ComputationalParty,
    owners: BTreeMap<u64, DataOwner>,
    requesters: BTreeMap<u64, DataRequester>,
    wall: BTreeMap<Role, Duration>,
    next_request: u64,
}

impl Deployment {
    pub fn new(config: DeploymentConfig) -> Result<Self> {
        let mut ka_rng = config.rng(Role::KeyAuthority, 0);
        let prime_bits = config
            .pool_prime_bits
            .unwrap_or_else(|| vphe::pool_prime_bits_for(config.n_bits, config.pool_size));
        let (params, strong) = vphe::system_setup_with(config.n_bits, config.pool_size, prime_bits, &mut ka_rng)?;
        let mut setup_ops = OpCounts::default();
        let (abe_public, abe_master) = cpabe::setup(&config.universe, &mut ka_rng, &mut setup_ops)?;
        let n = params.n.clone();
        let cp = ComputationalParty::new(
            strong.clone(),
            n.clone(),
            abe_public.clone(),
            config.rng(Role::ComputationalParty, 0),
        );
        let sp = ServiceProvider::new(n, &config.universe, config.rng(Role::ServiceProvider, 0));
        let ka = KeyAuthority::new(config.n_bits, params, strong, abe_public, abe_master, ka_rng);
        let mut bus = Bus::new();
        for ep in [Endpoint::KA, Endpoint::SP, Endpoint::CP] {
            bus.register(ep);
        }
        Ok(Self {
            config,
            bus,
            ka,
            sp,
            cp,
            owners: BTreeMap::new(),
            requesters: BTreeMap::new(),
            wall: BTreeMap::new(),
            next_request: 1,
        })
    }

    pub fn config(&self) -> &DeploymentConfig {
        &self.config
    }

    /// System modulus `n`.
    pub fn modulus(&self) -> &BigUint {
        &self.ka.params().n
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn transcript(&self) -> &Transcript {
        self.bus.transcript()
    }

    /// Cumulative handler wall time per role.
    pub fn wall(&self) -> &BTreeMap<Role, Duration> {
        &self.wall
    }

    pub fn ka(&self) -> &KeyAuthority {
        &self.ka
    }

    pub fn sp(&self) -> &ServiceProvider {
        &self.sp
    }

    pub fn sp_mut(&mut self) -> &mut ServiceProvider {
        &mut self.sp
    }

    pub fn cp(&self) -> &ComputationalParty {
        &self.cp
    }

    pub fn owner(&self, id: u64) -> Option<&DataOwner> {
        self.owners.get(&id)
    }

    pub fn owner_ids(&self) -> Vec<u64> {
        self.owners.keys().copied().collect()
    }

    pub fn requester(&self, id: u64) -> Option<&DataRequester> {
        self.requesters.get(&id)
    }

    /// Fresh request id, skipping ids already handed out.
    pub fn next_request_id(&mut self) -> u64 {
        let id = self.next_request;
        self.next_request += 1;
        id
    }

    pub fn enroll_owner(&mut self, do_id: u64) -> Result<()> {
        if self.owners.contains_key(&do_id) {
            return Err(Error::Parameter(format!("data owner {do_id} is already enrolled")));
        }
        let (vpk, wsk) = self.ka.enroll_owner(do_id)?;
        self.cp.add_owner(vpk.clone())?;
        self.sp.add_owner(vpk.clone());
        self.owners.insert(do_id, DataOwner::new(vpk, wsk, self.config.rng(Role::DataOwner, do_id)));
        self.bus.register(Endpoint::owner(do_id));
        Ok(())
    }

    pub fn enroll_requester(&mut self, dr_id: u64, attributes: &AttributeSet) -> Result<()> {
        if self.requesters.contains_key(&dr_id) {
            return Err(Error::Parameter(format!("data requester {dr_id} is already enrolled")));
        }
        let key = self.ka.issue_abe_key(dr_id, attributes)?;
        let dr = DataRequester::new(key, self.ka.abe_public().clone(), self.modulus().clone());
        self.requesters.insert(dr_id, dr);
        self.sp.add_requester(dr_id);
        self.bus.register(Endpoint::requester(dr_id));
        Ok(())
    }

    /// Sends the DO's policies to the SP; returns the new version.
    pub fn register_policy(&mut self, do_id: u64, ap_s: AccessTree, ap_m: AccessTree) -> Result<u64> {
        if !self.owners.contains_key(&do_id) {
            return Err(Error::UnknownDataOwner(do_id));
        }
        self.send(Endpoint::owner(do_id), Endpoint::SP, SETUP_REQUEST_ID, Message::RegisterPolicy { do_id, ap_s, ap_m })?;
        self.pump()?;
        Ok(self.sp.policy(do_id).map_or(0, |p| p.version))
    }

    /// Encrypts `m` at the DO and stores it at the SP.
    pub fn upload(&mut self, do_id: u64, m: &BigUint) -> Result<VpheCiphertext> {
        let owner = self.owners.get_mut(&do_id).ok_or(Error::UnknownDataOwner(do_id))?;
        let ciphertext = owner.encrypt(m)?;
        let msg = Message::Upload { do_id, ciphertext: ciphertext.clone() };
        self.send(Endpoint::owner(do_id), Endpoint::SP, SETUP_REQUEST_ID, msg)?;
        self.pump()?;
        Ok(ciphertext)
    }

    fn send(&mut self, sender: Endpoint, receiver: Endpoint, request_id: u64, message: Message) -> Result<u64> {
        let (payload, breakdown) = message.encode(self.ka.params().residue_width());
        self.bus.send(Envelope { tag: message.tag(), request_id, sender, receiver, payload, breakdown })
    }

    /// Sends a prepared envelope and processes everything it triggers.
    pub fn inject(&mut self, envelope: Envelope) -> Result<()> {
        self.bus.send(envelope)?;
        self.pump()
    }

    fn dispatch(&mut self, env: &Envelope) -> Result<Vec<Outgoing>> {
        let msg = Message::decode(env.tag, &env.payload)?;
        match env.receiver.role {
            Role::KeyAuthority => self.ka.handle(env, msg),
            Role::ServiceProvider => self.sp.handle(env, msg),
            Role::ComputationalParty => self.cp.handle(env, msg),
            Role::DataOwner => self
                .owners
                .get_mut(&env.receiver.id)
                .ok_or(Error::UnknownDataOwner(env.receiver.id))?
                .handle(env, msg),
            Role::DataRequester => self
                .requesters
                .get_mut(&env.receiver.id)
                .ok_or(Error::UnknownDataRequester(env.receiver.id))?
                .handle(env, msg),
        }
    }

    /// Delivers queued messages until the bus is idle.
    fn pump(&mut self) -> Result<()> {
        while let Some(env) = self.bus.deliver_next() {
            let started = Instant::now();
            let handled = self.dispatch(&env);
            *self.wall.entry(env.receiver.role).or_default() += started.elapsed();
            let outgoing = match handled {
                Ok(out) => out,
                Err(e) => {
                    self.bus.clear_pending();
                    return Err(e);
                }
            };
            for out in outgoing {
                self.send(env.receiver, out.to, env.request_id, out.message)?;
            }
        }
        Ok(())
    }

    fn role_ops(&self) -> BTreeMap<Role, OpCounts> {
        let mut costs = BTreeMap::new();
        costs.insert(Role::KeyAuthority, self.ka.ops);
        costs.insert(Role::ServiceProvider, self.sp.ops);
        costs.insert(Role::ComputationalParty, self.cp.ops);
        costs.insert(Role::DataOwner, self.owners.values().fold(OpCounts::default(), |acc, o| acc + o.ops));
        costs.insert(Role::DataRequester, self.requesters.values().fold(OpCounts::default(), |acc, r| acc + r.ops));
        costs
    }

    fn opening_message(request: &AggregationRequest) -> Message {
        let target = request.target.expect("validated");
        match request.kind {
            RequestKind::DoDo => Message::DoDoRequest { do_id: target.do_id, start: target.start, end: target.end },
            RequestKind::DrsDo => Message::DrsDoRequest {
                dr_id: request.requester_id,
                do_id: target.do_id,
                start: target.start,
                end: target.end,
            },
            RequestKind::DrsDos => unreachable!(),
        }
    }

    fn take_result(&mut self, requester: Endpoint, request_id: u64) -> Option<Result<BigUint>> {
        match requester.role {
            Role::DataOwner => self.owners.get_mut(&requester.id)?.take_result(request_id),
            _ => self.requesters.get_mut(&requester.id)?.take_result(request_id),
        }
    }

    /// Runs one request to completion over the bus.
    pub fn run_use_case(&mut self, request: &AggregationRequest) -> Outcome {
        let ops_before = self.role_ops();
        let wall_before = self.wall.clone();
        let seq_before = self.bus.next_seq();
        self.next_request = self.next_request.max(request.request_id + 1);
        let requester = request.requester();

        let result = request.validate().and_then(|()| {
            let message = match request.kind {
                RequestKind::DrsDos => Message::DrsDosRequest {
                    dr_id: request.requester_id,
                    attributes: request.requester_attributes.clone(),
                    slot: request.slot,
                },
                _ => Self::opening_message(request),
            };
            self.send(requester, Endpoint::SP, request.request_id, message)?;
            self.pump()?;
            self.take_result(requester, request.request_id).unwrap_or_else(|| {
                Err(Error::UnexpectedMessage(format!("request {} finished without a result", request.request_id)))
            })
        });

        let ops_after = self.role_ops();
        let costs = ops_after.iter().map(|(role, after)| (*role, *after - ops_before[role])).collect();
        let wall = self
            .wall
            .iter()
            .map(|(role, total)| (*role, *total - wall_before.get(role).copied().unwrap_or_default()))
            .collect();
        Outcome {
            request_id: request.request_id,
            kind: request.kind,
            result,
            transcript: self.bus.transcript().since(seq_before),
            costs,
            wall,
        }
    }
}
