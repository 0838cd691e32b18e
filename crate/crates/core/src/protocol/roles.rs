//! Role state machines. Each role consumes one decoded message at a time and
//! returns the messages it wants sent.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand_chacha::ChaCha20Rng;

use super::messages::Message;
use super::{AccessEvent, CipherStore, MaskRecord, PolicyRecord, RequestKind};
use crate::arith::{random_below, OpCounts};
use crate::cpabe::{self, AbeMasterKey, AbePublicParams, AbeUserKey, AccessTree, AttributeSet};
use crate::error::{Error, Result};
use crate::harness::bus::{Endpoint, Envelope, Role};
use crate::paillier::{self, PaillierPrivateKey, PaillierPublicKey};
use crate::vphe::{
    self, StrongDecryptionKey, StrongKey, UserPublicKey, UserWeakKey, VpheCiphertext, VpheSystemParams,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Endpoint,
    pub message: Message,
}

impl Outgoing {
    fn new(to: Endpoint, message: Message) -> Self {
        Self { to, message }
    }
}

fn unexpected(role: Role, msg: &Message) -> Error {
    Error::UnexpectedMessage(format!("{role} cannot handle tag {:#06x}", msg.tag()))
}

/// How the SP samples masks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum MaskMode {
    #[default]
    Random,
    /// Every mask equals the given value (test hook; zero is non-private).
    Fixed(BigUint),
}

pub struct KeyAuthority {
    params: VpheSystemParams,
    strong: StrongKey,
    abe_public: AbePublicParams,
    abe_master: AbeMasterKey,
    security_bits: u64,
    result_floor: BigUint,
    rng: ChaCha20Rng,
    pub ops: OpCounts,
}

impl KeyAuthority {
    pub fn new(
        security_bits: u64,
        params: VpheSystemParams,
        strong: StrongKey,
        abe_public: AbePublicParams,
        abe_master: AbeMasterKey,
        rng: ChaCha20Rng,
    ) -> Self {
        let result_floor = &params.n + (BigUint::from(1u8) << (security_bits - 4));
        Self { params, strong, abe_public, abe_master, security_bits, result_floor, rng, ops: OpCounts::default() }
    }

    pub fn params(&self) -> &VpheSystemParams {
        &self.params
    }

    pub fn abe_public(&self) -> &AbePublicParams {
        &self.abe_public
    }

    /// Strong key handed to the CP at deployment time.
    pub fn strong_key(&self) -> &StrongKey {
        &self.strong
    }

    /// Smallest admissible result-key modulus.
    pub fn result_floor(&self) -> &BigUint {
        &self.result_floor
    }

    pub fn enroll_owner(&mut self, do_id: u64) -> Result<(UserPublicKey, UserWeakKey)> {
        vphe::user_keygen(&mut self.params, &self.strong, do_id, &mut self.rng)
    }

    pub fn issue_abe_key(&mut self, holder_id: u64, attributes: &AttributeSet) -> Result<AbeUserKey> {
        cpabe::keygen(&self.abe_public, &self.abe_master, holder_id, attributes, &mut self.rng, &mut self.ops)
    }

    /// Fresh Paillier pair for one request, keyed by the request id.
    pub fn mint_result_key(&mut self, request_id: u64) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
        paillier::keygen_above(self.security_bits, request_id, &self.result_floor, &mut self.rng)
    }

    pub fn handle(&mut self, env: &Envelope, msg: Message) -> Result<Vec<Outgoing>> {
        match msg {
            Message::ResultKeyRequest if env.sender.role == Role::ComputationalParty => {
                let (public, private) = self.mint_result_key(env.request_id)?;
                Ok(vec![Outgoing::new(env.sender, Message::ResultKeyIssue { public, private })])
            }
            other => Err(unexpected(Role::KeyAuthority, &other)),
        }
    }
}

pub struct DataOwner {
    pub id: u64,
    vpk: UserPublicKey,
    wsk: UserWeakKey,
    rng: ChaCha20Rng,
    pub ops: OpCounts,
    results: BTreeMap<u64, Result<BigUint>>,
}

impl DataOwner {
    pub fn new(vpk: UserPublicKey, wsk: UserWeakKey, rng: ChaCha20Rng) -> Self {
        Self { id: vpk.user_id, vpk, wsk, rng, ops: OpCounts::default(), results: BTreeMap::new() }
    }

    pub fn public_key(&self) -> &UserPublicKey {
        &self.vpk
    }

    pub fn encrypt(&mut self, m: &BigUint) -> Result<VpheCiphertext> {
        vphe::encrypt(&self.vpk, m, &mut self.rng, &mut self.ops)
    }

    pub fn take_result(&mut self, request_id: u64) -> Option<Result<BigUint>> {
        self.results.remove(&request_id)
    }

    pub fn handle(&mut self, env: &Envelope, msg: Message) -> Result<Vec<Outgoing>> {
        match msg {
            Message::DoDoResult { ciphertext, .. } => {
                let opened = vphe::weak_decrypt(&self.wsk, &self.vpk, &ciphertext, &mut self.ops);
                self.results.insert(env.request_id, opened);
                Ok(Vec::new())
            }
            Message::Denied { reason } => {
                self.results.insert(env.request_id, Err(reason));
                Ok(Vec::new())
            }
            other => Err(unexpected(Role::DataOwner, &other)),
        }
    }
}

#[derive(Debug, Clone)]
struct PendingMask {
    requester: Endpoint,
    kind: RequestKind,
    masks: MaskRecord,
}

pub struct ServiceProvider {
    n: BigUint,
    universe: BTreeSet<String>,
    owners: Vec<u64>,
    vpks: BTreeMap<u64, UserPublicKey>,
    requesters: BTreeSet<u64>,
    policies: BTreeMap<u64, PolicyRecord>,
    store: CipherStore,
    pending: BTreeMap<u64, PendingMask>,
    consumed: BTreeSet<u64>,
    seen: BTreeSet<u64>,
    access_log: Vec<AccessEvent>,
    pub mask_mode: MaskMode,
    rng: ChaCha20Rng,
    pub ops: OpCounts,
}

impl ServiceProvider {
    pub fn new(n: BigUint, universe: &[String], rng: ChaCha20Rng) -> Self {
        Self {
            n,
            universe: universe.iter().cloned().collect(),
            owners: Vec::new(),
            vpks: BTreeMap::new(),
            requesters: BTreeSet::new(),
            policies: BTreeMap::new(),
            store: CipherStore::default(),
            pending: BTreeMap::new(),
            consumed: BTreeSet::new(),
            seen: BTreeSet::new(),
            access_log: Vec::new(),
            mask_mode: MaskMode::Random,
            rng,
            ops: OpCounts::default(),
        }
    }

    pub fn add_owner(&mut self, vpk: UserPublicKey) {
        if !self.vpks.contains_key(&vpk.user_id) {
            self.owners.push(vpk.user_id);
        }
        self.vpks.insert(vpk.user_id, vpk);
    }

    pub fn add_requester(&mut self, dr_id: u64) {
        self.requesters.insert(dr_id);
    }

    pub fn store(&self) -> &CipherStore {
        &self.store
    }

    pub fn policy(&self, do_id: u64) -> Option<&PolicyRecord> {
        self.policies.get(&do_id)
    }

    /// Mask record of an in-flight request.
    pub fn pending_masks(&self, request_id: u64) -> Option<&MaskRecord> {
        self.pending.get(&request_id).map(|p| &p.masks)
    }

    pub fn access_log(&self) -> &[AccessEvent] {
        &self.access_log
    }

    /// Completed requests that used `do_id`'s data.
    pub fn notifications(&self, do_id: u64) -> Vec<&AccessEvent> {
        self.access_log.iter().filter(|e| e.owners.contains(&do_id)).collect()
    }

    pub fn register_policy(&mut self, do_id: u64, ap_s: AccessTree, ap_m: AccessTree) -> Result<u64> {
        if !self.vpks.contains_key(&do_id) {
            return Err(Error::UnknownDataOwner(do_id));
        }
        for tree in [&ap_s, &ap_m] {
            tree.validate()?;
            if let Some(attr) = tree.leaves().into_iter().find(|a| !self.universe.contains(*a)) {
                return Err(Error::UnknownAttribute(attr.to_string()));
            }
        }
        let version = self.policies.get(&do_id).map_or(1, |r| r.version + 1);
        self.policies.insert(do_id, PolicyRecord { do_id, ap_s, ap_m, version });
        Ok(version)
    }

    /// Product of the stored ciphertexts in `[start, end)`: `N − 1` ModMul.
    pub fn aggregate(&mut self, do_id: u64, start: u64, end: u64) -> Result<VpheCiphertext> {
        let vpk = self.vpks.get(&do_id).ok_or(Error::UnknownDataOwner(do_id))?;
        let range = self.store.range(do_id, start, end)?;
        let mut acc = range[0].clone();
        for ct in &range[1..] {
            acc = vphe::hom_add(vpk, &acc, ct, &mut self.ops)?;
        }
        Ok(acc)
    }

    /// Owners whose AP_M the claimed attributes satisfy, in enrollment order.
    pub fn select_dos(&self, attributes: &AttributeSet) -> Vec<u64> {
        self.owners
            .iter()
            .copied()
            .filter(|id| self.policies.get(id).is_some_and(|p| p.ap_m.satisfies(attributes)))
            .collect()
    }

    fn next_mask(&mut self) -> BigUint {
        match &self.mask_mode {
            MaskMode::Random => random_below(&self.n, &mut self.rng),
            MaskMode::Fixed(r) => r % &self.n,
        }
    }

    /// `c · Enc(vpk, r)` with a fresh mask: 2 ModExp + 2 ModMul.
    fn mask(&mut self, do_id: u64, ct: &VpheCiphertext, masks: &mut MaskRecord) -> Result<VpheCiphertext> {
        let r = self.next_mask();
        let vpk = &self.vpks[&do_id];
        let enc_r = vphe::encrypt(vpk, &r, &mut self.rng, &mut self.ops)?;
        let masked = vphe::hom_add(vpk, ct, &enc_r, &mut self.ops)?;
        masks.entries.insert(do_id, r);
        Ok(masked)
    }

    fn begin(&mut self, request_id: u64) -> Result<()> {
        if !self.seen.insert(request_id) {
            return Err(Error::DuplicateRequest(request_id));
        }
        Ok(())
    }

    fn check_requester(&self, dr_id: u64) -> Result<()> {
        if self.requesters.contains(&dr_id) {
            Ok(())
        } else {
            Err(Error::UnknownDataRequester(dr_id))
        }
    }

    fn do_do(&mut self, env: &Envelope, do_id: u64, start: u64, end: u64) -> Result<Vec<Outgoing>> {
        if env.sender != Endpoint::owner(do_id) {
            return Err(Error::UnknownDataOwner(do_id));
        }
        self.begin(env.request_id)?;
        let ciphertext = self.aggregate(do_id, start, end)?;
        self.access_log.push(AccessEvent {
            request_id: env.request_id,
            kind: RequestKind::DoDo,
            requester: env.sender,
            owners: vec![do_id],
        });
        Ok(vec![Outgoing::new(env.sender, Message::DoDoResult { do_id, ciphertext })])
    }

    fn drs_do(&mut self, env: &Envelope, dr_id: u64, do_id: u64, start: u64, end: u64) -> Result<Vec<Outgoing>> {
        self.check_requester(dr_id)?;
        let policy = self.policies.get(&do_id).ok_or(Error::UnknownDataOwner(do_id))?.ap_s.clone();
        self.begin(env.request_id)?;
        let aggregate = self.aggregate(do_id, start, end)?;
        let mut masks = MaskRecord { request_id: env.request_id, entries: BTreeMap::new() };
        let ciphertext = self.mask(do_id, &aggregate, &mut masks)?;
        self.pending.insert(env.request_id, PendingMask { requester: env.sender, kind: RequestKind::DrsDo, masks });
        Ok(vec![Outgoing::new(Endpoint::CP, Message::MaskedSingle { do_id, ciphertext, policy })])
    }

    fn drs_dos(
        &mut self,
        env: &Envelope,
        dr_id: u64,
        attributes: &AttributeSet,
        slot: Option<u64>,
    ) -> Result<Vec<Outgoing>> {
        self.check_requester(dr_id)?;
        let selected = self.select_dos(attributes);
        if selected.is_empty() {
            return Err(Error::NoMatchingOwners);
        }
        let sources =
            selected.iter().map(|&id| self.store.slot(id, slot).cloned().map(|c| (id, c))).collect::<Result<Vec<_>>>()?;
        self.begin(env.request_id)?;
        let mut distinct: Vec<&AccessTree> = Vec::new();
        for id in &selected {
            let tree = &self.policies[id].ap_m;
            if !distinct.contains(&tree) {
                distinct.push(tree);
            }
        }
        let policy = match distinct.as_slice() {
            [single] => (*single).clone(),
            many => AccessTree::and(many.iter().map(|t| (*t).clone()).collect())?.canonical(),
        };
        let mut masks = MaskRecord { request_id: env.request_id, entries: BTreeMap::new() };
        let mut entries = Vec::with_capacity(sources.len());
        for (id, ct) in sources {
            entries.push((id, self.mask(id, &ct, &mut masks)?));
        }
        self.pending.insert(env.request_id, PendingMask { requester: env.sender, kind: RequestKind::DrsDos, masks });
        Ok(vec![Outgoing::new(Endpoint::CP, Message::MaskedMulti { entries, policy })])
    }

    /// Folds `Enc(n − R)` into the CP's result, `R` the mask total mod `n`:
    /// 2 ModExp + 2 ModMul. Each mask record is usable once.
    pub fn demask(
        &mut self,
        request_id: u64,
        ciphertext: &paillier::PaillierCiphertext,
        public: &PaillierPublicKey,
    ) -> Result<(Endpoint, paillier::PaillierCiphertext)> {
        let Some(pending) = self.pending.remove(&request_id) else {
            return Err(if self.consumed.contains(&request_id) {
                Error::MaskAlreadyConsumed(request_id)
            } else {
                Error::UnknownRequest(request_id)
            });
        };
        self.consumed.insert(request_id);
        if public.n <= self.n {
            return Err(Error::Parameter("result key modulus must exceed the system modulus".into()));
        }
        let total = pending.masks.total(&self.n);
        let lifted = total + &public.n - &self.n;
        let negated = paillier::encrypt_negated(public, &lifted, &mut self.rng, &mut self.ops)?;
        let result = paillier::hom_add(public, ciphertext, &negated, &mut self.ops)?;
        self.access_log.push(AccessEvent {
            request_id,
            kind: pending.kind,
            requester: pending.requester,
            owners: pending.masks.entries.keys().copied().collect(),
        });
        Ok((pending.requester, result))
    }

    fn request(&mut self, env: &Envelope, msg: &Message) -> Result<Vec<Outgoing>> {
        match msg {
            Message::DoDoRequest { do_id, start, end } => self.do_do(env, *do_id, *start, *end),
            Message::DrsDoRequest { dr_id, do_id, start, end } => self.drs_do(env, *dr_id, *do_id, *start, *end),
            Message::DrsDosRequest { dr_id, attributes, slot } => self.drs_dos(env, *dr_id, attributes, *slot),
            _ => unreachable!("only request messages are routed here"),
        }
    }

    pub fn handle(&mut self, env: &Envelope, msg: Message) -> Result<Vec<Outgoing>> {
        match msg {
            Message::RegisterPolicy { do_id, ap_s, ap_m } => {
                if env.sender != Endpoint::owner(do_id) {
                    return Err(Error::UnknownDataOwner(do_id));
                }
                self.register_policy(do_id, ap_s, ap_m)?;
                Ok(Vec::new())
            }
            Message::Upload { do_id, ciphertext } => {
                if env.sender != Endpoint::owner(do_id) || !self.vpks.contains_key(&do_id) {
                    return Err(Error::UnknownDataOwner(do_id));
                }
                self.store.append(do_id, ciphertext)?;
                Ok(Vec::new())
            }
            Message::DoDoRequest { .. } | Message::DrsDoRequest { .. } | Message::DrsDosRequest { .. } => {
                match self.request(env, &msg) {
                    Ok(out) => Ok(out),
                    Err(reason) => Ok(vec![Outgoing::new(env.sender, Message::Denied { reason })]),
                }
            }
            Message::MaskedResult { ciphertext, public, sealed_key } if env.sender == Endpoint::CP => {
                let (requester, ciphertext) = self.demask(env.request_id, &ciphertext, &public)?;
                Ok(vec![Outgoing::new(requester, Message::ResultDelivery { ciphertext, public, sealed_key })])
            }
            other => Err(unexpected(Role::ServiceProvider, &other)),
        }
    }
}

struct PendingResult {
    value: BigUint,
    policy: AccessTree,
}

pub struct ComputationalParty {
    n: BigUint,
    strong: StrongKey,
    keys: BTreeMap<u64, (UserPublicKey, StrongDecryptionKey)>,
    abe_public: AbePublicParams,
    pending: BTreeMap<u64, PendingResult>,
    observed: Vec<(u64, u64, BigUint)>,
    rng: ChaCha20Rng,
    pub ops: OpCounts,
    /// Cost of deriving per-user decryption factors at enrollment.
    pub setup_ops: OpCounts,
}

impl ComputationalParty {
    pub fn new(strong: StrongKey, n: BigUint, abe_public: AbePublicParams, rng: ChaCha20Rng) -> Self {
        Self {
            n,
            strong,
            keys: BTreeMap::new(),
            abe_public,
            pending: BTreeMap::new(),
            observed: Vec::new(),
            rng,
            ops: OpCounts::default(),
            setup_ops: OpCounts::default(),
        }
    }

    pub fn add_owner(&mut self, vpk: UserPublicKey) -> Result<()> {
        let dk = self.strong.decryption_key(&vpk, &mut self.setup_ops)?;
        self.keys.insert(vpk.user_id, (vpk, dk));
        Ok(())
    }

    /// Every `(request_id, do_id, plaintext)` the CP has strong-decrypted.
    pub fn observed(&self) -> &[(u64, u64, BigUint)] {
        &self.observed
    }

    fn open(&mut self, request_id: u64, do_id: u64, ct: &VpheCiphertext) -> Result<BigUint> {
        let (vpk, dk) = self.keys.get(&do_id).ok_or(Error::UnknownDataOwner(do_id))?;
        let value = dk.decrypt(&self.strong, vpk, ct, &mut self.ops)?;
        self.observed.push((request_id, do_id, value.clone()));
        Ok(value)
    }

    fn await_key(&mut self, request_id: u64, value: BigUint, policy: AccessTree) -> Result<Vec<Outgoing>> {
        policy.validate()?;
        if self.pending.insert(request_id, PendingResult { value, policy }).is_some() {
            return Err(Error::DuplicateRequest(request_id));
        }
        Ok(vec![Outgoing::new(Endpoint::KA, Message::ResultKeyRequest)])
    }

    pub fn handle(&mut self, env: &Envelope, msg: Message) -> Result<Vec<Outgoing>> {
        match msg {
            Message::MaskedSingle { do_id, ciphertext, policy } if env.sender == Endpoint::SP => {
                let value = self.open(env.request_id, do_id, &ciphertext)?;
                self.await_key(env.request_id, value, policy)
            }
            Message::MaskedMulti { entries, policy } if env.sender == Endpoint::SP => {
                if entries.is_empty() {
                    return Err(Error::NoMatchingOwners);
                }
                let mut sum = BigUint::default();
                for (do_id, ct) in &entries {
                    sum = (sum + self.open(env.request_id, *do_id, ct)?) % &self.n;
                }
                self.await_key(env.request_id, sum, policy)
            }
            Message::ResultKeyIssue { public, private } if env.sender == Endpoint::KA => {
                let pending = self.pending.remove(&env.request_id).ok_or(Error::UnknownRequest(env.request_id))?;
                let ciphertext = paillier::encrypt(&public, &pending.value, &mut self.rng, &mut self.ops)?;
                let sealed_key = cpabe::encrypt(
                    &self.abe_public,
                    &private.to_bytes(),
                    &pending.policy,
                    &mut self.rng,
                    &mut self.ops,
                )?;
                Ok(vec![Outgoing::new(Endpoint::SP, Message::MaskedResult { ciphertext, public, sealed_key })])
            }
            other => Err(unexpected(Role::ComputationalParty, &other)),
        }
    }
}

pub struct DataRequester {
    pub id: u64,
    key: AbeUserKey,
    abe_public: AbePublicParams,
    n: BigUint,
    pub ops: OpCounts,
    results: BTreeMap<u64, Result<BigUint>>,
}

impl DataRequester {
    pub fn new(key: AbeUserKey, abe_public: AbePublicParams, n: BigUint) -> Self {
        Self { id: key.holder_id, key, abe_public, n, ops: OpCounts::default(), results: BTreeMap::new() }
    }

    pub fn attributes(&self) -> &AttributeSet {
        &self.key.attributes
    }

    pub fn take_result(&mut self, request_id: u64) -> Option<Result<BigUint>> {
        self.results.remove(&request_id)
    }

    /// Unseals the result key, then decrypts: 1 ModExp + 1 ModMul + ϑ BiPair.
    pub fn open(
        &mut self,
        ciphertext: &paillier::PaillierCiphertext,
        public: &PaillierPublicKey,
        sealed_key: &cpabe::AbeCiphertext,
    ) -> Result<BigUint> {
        let bytes = cpabe::decrypt(&self.abe_public, sealed_key, &self.key, &mut self.ops)?;
        let private = PaillierPrivateKey::from_bytes(&bytes)?;
        let value = paillier::decrypt(&private, public, ciphertext, &mut self.ops)?;
        Ok(value % &self.n)
    }

    pub fn handle(&mut self, env: &Envelope, msg: Message) -> Result<Vec<Outgoing>> {
        match msg {
            Message::ResultDelivery { ciphertext, public, sealed_key } => {
                let opened = self.open(&ciphertext, &public, &sealed_key);
                self.results.insert(env.request_id, opened);
                Ok(Vec::new())
            }
            Message::Denied { reason } => {
                self.results.insert(env.request_id, Err(reason));
                Ok(Vec::new())
            }
            other => Err(unexpected(Role::DataRequester, &other)),
        }
    }
}
