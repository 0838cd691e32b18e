//! Multi-key variant-Paillier encryption.
//!
//! One system modulus `n = p·q` is shared by every user. The strong key
//! `λ = lcm(p−1, q−1)` decrypts any user's ciphertext; each user's weak key
//! `t` (a product of pool primes dividing `λ`) decrypts only ciphertexts made
//! under that user's public key `(n, g, h)`.
//!
//! Key generation picks `g = a^(λ/t) mod n²`, which pins the `Z*_n` component
//! of `g` inside the order-`t` subgroup, and `h = g^(n·λ/t)`, which has order
//! exactly `t`. Encryption is `c = g^m · h^r`; raising to `t` (or `λ`)
//! removes the `h^r` blinding.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use crate::arith::wire::{Decoder, Encoder, Section};
use crate::arith::{
    gen_structured_prime, l_function, lcm, mod_exp, mod_exp_counted, mod_inverse,
    mod_inverse_counted, mod_mul_counted, random_below, random_unit, OddPrimePool, OpCounts,
    StructuredPrime, DEFAULT_MAX_CANDIDATES,
};
use crate::error::{Error, Result};

pub const SCHEME_TAG: u8 = 0x01;
pub const SUPPORTED_BITS: [u64; 5] = [512, 1024, 2048, 3072, 4096];
pub const DEFAULT_POOL_SIZE: usize = 8;
pub const POOL_PRIME_BITS: u32 = 16;

/// Hands out factor subsets: singletons first, then larger subsets in
/// lexicographic order of factor indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetAllocator {
    k: usize,
    cursor: Option<Vec<usize>>,
    allocated: BTreeMap<u64, Vec<usize>>,
}

impl SubsetAllocator {
    pub fn new(k: usize) -> Self {
        Self { k, cursor: None, allocated: BTreeMap::new() }
    }

    fn advance(&self) -> Option<Vec<usize>> {
        let Some(current) = &self.cursor else {
            return (self.k > 0).then(|| vec![0]);
        };
        let size = current.len();
        let mut next = current.clone();
        // Rightmost position that can still move.
        for i in (0..size).rev() {
            if next[i] < self.k - size + i {
                next[i] += 1;
                for j in i + 1..size {
                    next[j] = next[j - 1] + 1;
                }
                return Some(next);
            }
        }
        (size < self.k).then(|| (0..=size).collect())
    }

    pub fn allocate(&mut self, user_id: u64) -> Result<Vec<usize>> {
        if self.allocated.contains_key(&user_id) {
            return Err(Error::Parameter(format!("user {user_id} already holds a weak key")));
        }
        let subset = self.advance().ok_or(Error::PoolExhausted)?;
        self.cursor = Some(subset.clone());
        self.allocated.insert(user_id, subset.clone());
        Ok(subset)
    }

    pub fn subset_of(&self, user_id: u64) -> Option<&[usize]> {
        self.allocated.get(&user_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.allocated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocated.is_empty()
    }

    /// Number of subsets still available.
    pub fn remaining(&self) -> u64 {
        ((1u64 << self.k) - 1) - self.allocated.len() as u64
    }
}

/// Key-authority view of the system: modulus, structured primes and the
/// weak-key allocation table (the single mutation point).
#[derive(Debug, Clone)]
pub struct VpheSystemParams {
    pub n: BigUint,
    pub n_sq: BigUint,
    pub pool: OddPrimePool,
    pub p: StructuredPrime,
    pub q: StructuredPrime,
    pub phi_n: BigUint,
    allocator: SubsetAllocator,
}

/// Strong secret key `λ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrongKey {
    pub lambda: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPublicKey {
    pub user_id: u64,
    pub n: BigUint,
    pub n_sq: BigUint,
    pub g: BigUint,
    pub h: BigUint,
}

/// Weak secret key `t` plus the precomputed factor `L(g^t mod n²)⁻¹ mod n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserWeakKey {
    pub user_id: u64,
    pub t: BigUint,
    mu: BigUint,
}

/// Per-user strong decryption factor `L(g^λ mod n²)⁻¹ mod n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrongDecryptionKey {
    pub user_id: u64,
    mu: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VpheCiphertext {
    pub value: BigUint,
    pub key_id: u64,
}

/// Byte width of a residue modulo `n²`.
pub fn residue_width(n: &BigUint) -> usize {
    (2 * n.bits() as usize).div_ceil(8)
}

/// Generates the pool, both structured primes and the strong key.
pub fn system_setup(
    security_bits: u64,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<(VpheSystemParams, StrongKey)> {
    system_setup_with(security_bits, k, POOL_PRIME_BITS, rng)
}

/// [`system_setup`] with an explicit bit size for the pool primes.
///
/// The modulus is kept below `3·2^(bits−2)` so that result keys minted with
/// a strictly larger modulus always exist.
pub fn system_setup_with(
    security_bits: u64,
    k: usize,
    prime_bits: u32,
    rng: &mut dyn RngCore,
) -> Result<(VpheSystemParams, StrongKey)> {
    if !SUPPORTED_BITS.contains(&security_bits) {
        return Err(Error::Parameter(format!(
            "security parameter must be one of {SUPPORTED_BITS:?}, got {security_bits}"
        )));
    }
    if k < 2 {
        return Err(Error::Parameter(format!("pool size k must be at least 2, got {k}")));
    }
    let pool = OddPrimePool::generate(k, prime_bits, rng)?;
    let half = security_bits / 2;
    let budget = DEFAULT_MAX_CANDIDATES * (security_bits / 1024).max(1);
    let ceiling = BigUint::from(3u8) << (security_bits - 2);
    loop {
        let p = gen_structured_prime(&pool, half, rng, budget)?;
        for _ in 0..4 {
            let q = gen_structured_prime(&pool, half, rng, budget)?;
            if q.p != p.p && &p.p * &q.p < ceiling {
                return VpheSystemParams::from_structured(pool, p, q);
            }
        }
    }
}

/// Smallest pool-prime size (at most [`POOL_PRIME_BITS`]) that leaves room
/// for a `k`-factor pool inside primes of `security_bits / 2` bits.
pub fn pool_prime_bits_for(security_bits: u64, k: usize) -> u32 {
    let half = security_bits / 2;
    let room = half.saturating_sub(33) / (k as u64 + 1);
    (room as u32).clamp(4, POOL_PRIME_BITS)
}

impl VpheSystemParams {
    /// Assembles a system from two structured primes over the same pool.
    pub fn from_structured(
        pool: OddPrimePool,
        p: StructuredPrime,
        q: StructuredPrime,
    ) -> Result<(Self, StrongKey)> {
        let base = pool.base();
        for prime in [&p, &q] {
            if prime.p != &base * &prime.cofactor + 1u8 {
                return Err(Error::Parameter("prime does not have the pool's structure".into()));
            }
        }
        if p.p == q.p {
            return Err(Error::Parameter("p and q must differ".into()));
        }
        let n = &p.p * &q.p;
        let p1 = &p.p - 1u8;
        let q1 = &q.p - 1u8;
        let phi_n = &p1 * &q1;
        if !n.gcd(&phi_n).is_one() {
            return Err(Error::Parameter("gcd(n, φ(n)) ≠ 1".into()));
        }
        let lambda = lcm(&p1, &q1);
        let allocator = SubsetAllocator::new(pool.k());
        let n_sq = &n * &n;
        Ok((Self { n, n_sq, pool, p, q, phi_n, allocator }, StrongKey { lambda }))
    }

    pub fn allocator(&self) -> &SubsetAllocator {
        &self.allocator
    }

    pub fn residue_width(&self) -> usize {
        residue_width(&self.n)
    }
}

/// Issues a distinct `(vpk, wsk)` pair for `user_id`.
pub fn user_keygen(
    params: &mut VpheSystemParams,
    strong: &StrongKey,
    user_id: u64,
    rng: &mut dyn RngCore,
) -> Result<(UserPublicKey, UserWeakKey)> {
    let subset = params.allocator.allocate(user_id)?;
    let primes: Vec<u64> = subset.iter().map(|&i| params.pool.factors()[i]).collect();
    let t = primes.iter().fold(BigUint::one(), |acc, &v| acc * v);
    debug_assert!(strong.lambda.is_multiple_of(&t));

    let n = &params.n;
    let n_sq = &params.n_sq;
    let lambda = &strong.lambda;
    let g_exponent = lambda / &t;
    let h_exponent = n * lambda / &t;
    let ut_n = &t * params.pool.u() * n;

    loop {
        let a = random_unit(n_sq, rng);
        let g = mod_exp(&a, &g_exponent, n_sq);
        let Ok(l_value) = l_function(&mod_exp(&g, lambda, n_sq), n) else { continue };
        if !l_value.gcd(n).is_one() {
            continue;
        }
        let h = mod_exp(&g, &h_exponent, n_sq);
        let full_order = !h.is_one()
            && primes.iter().all(|&v| !mod_exp(&h, &(&t / v), n_sq).is_one());
        if !full_order {
            continue;
        }
        debug_assert!(mod_exp(&g, &ut_n, n_sq).is_one());
        let Ok(l_weak) = l_function(&mod_exp(&g, &t, n_sq), n) else { continue };
        let Ok(mu) = mod_inverse(&l_weak, n) else { continue };
        let vpk = UserPublicKey { user_id, n: n.clone(), n_sq: n_sq.clone(), g, h };
        let wsk = UserWeakKey { user_id, t, mu };
        return Ok((vpk, wsk));
    }
}

fn check_residue(vpk: &UserPublicKey, c: &VpheCiphertext) -> Result<()> {
    if c.value.is_zero() || c.value >= vpk.n_sq {
        return Err(Error::Domain("ciphertext is not a residue mod n²".into()));
    }
    Ok(())
}

/// `c = g^m · h^r mod n²` with fresh `r ∈ Z_n`.
pub fn encrypt(
    vpk: &UserPublicKey,
    m: &BigUint,
    rng: &mut dyn RngCore,
    ops: &mut OpCounts,
) -> Result<VpheCiphertext> {
    if *m >= vpk.n {
        return Err(Error::PlaintextOutOfRange);
    }
    let r = random_below(&vpk.n, rng);
    encrypt_with_randomness(vpk, m, &r, ops)
}

/// Deterministic encryption with caller-chosen `r`.
pub fn encrypt_with_randomness(
    vpk: &UserPublicKey,
    m: &BigUint,
    r: &BigUint,
    ops: &mut OpCounts,
) -> Result<VpheCiphertext> {
    if *m >= vpk.n {
        return Err(Error::PlaintextOutOfRange);
    }
    let gm = mod_exp_counted(&vpk.g, m, &vpk.n_sq, ops);
    let hr = mod_exp_counted(&vpk.h, r, &vpk.n_sq, ops);
    let value = mod_mul_counted(&gm, &hr, &vpk.n_sq, ops);
    Ok(VpheCiphertext { value, key_id: vpk.user_id })
}

fn ensure_same(expected: u64, found: u64) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::KeyMismatch { expected, found })
    }
}

/// Weak decryption: `L(c^t mod n²) · L(g^t mod n²)⁻¹ mod n`.
pub fn weak_decrypt(
    wsk: &UserWeakKey,
    vpk: &UserPublicKey,
    c: &VpheCiphertext,
    ops: &mut OpCounts,
) -> Result<BigUint> {
    ensure_same(wsk.user_id, vpk.user_id)?;
    ensure_same(wsk.user_id, c.key_id)?;
    weak_decrypt_unchecked(wsk, vpk, c, ops)
}

/// [`weak_decrypt`] without the key-identity checks.
pub fn weak_decrypt_unchecked(
    wsk: &UserWeakKey,
    vpk: &UserPublicKey,
    c: &VpheCiphertext,
    ops: &mut OpCounts,
) -> Result<BigUint> {
    check_residue(vpk, c)?;
    let ct = mod_exp_counted(&c.value, &wsk.t, &vpk.n_sq, ops);
    let l_value = l_function(&ct, &vpk.n)?;
    Ok(mod_mul_counted(&l_value, &wsk.mu, &vpk.n, ops))
}

impl StrongKey {
    /// Derives `L(g^λ mod n²)⁻¹ mod n` for one user (1 ModExp + 1 ModInverse).
    pub fn decryption_key(&self, vpk: &UserPublicKey, ops: &mut OpCounts) -> Result<StrongDecryptionKey> {
        let gl = mod_exp_counted(&vpk.g, &self.lambda, &vpk.n_sq, ops);
        let l_value = l_function(&gl, &vpk.n)?;
        let mu = mod_inverse_counted(&l_value, &vpk.n, ops)?;
        Ok(StrongDecryptionKey { user_id: vpk.user_id, mu })
    }
}

impl StrongDecryptionKey {
    /// Strong decryption with a precomputed factor: 1 ModExp + 1 ModMul.
    pub fn decrypt(
        &self,
        ssk: &StrongKey,
        vpk: &UserPublicKey,
        c: &VpheCiphertext,
        ops: &mut OpCounts,
    ) -> Result<BigUint> {
        ensure_same(self.user_id, vpk.user_id)?;
        ensure_same(vpk.user_id, c.key_id)?;
        check_residue(vpk, c)?;
        let cl = mod_exp_counted(&c.value, &ssk.lambda, &vpk.n_sq, ops);
        let l_value = l_function(&cl, &vpk.n)?;
        Ok(mod_mul_counted(&l_value, &self.mu, &vpk.n, ops))
    }
}

/// Strong decryption of any user's ciphertext: `L(c^λ) · L(g^λ)⁻¹ mod n`,
/// deriving the per-user factor on the fly.
pub fn strong_decrypt(
    ssk: &StrongKey,
    vpk: &UserPublicKey,
    c: &VpheCiphertext,
    ops: &mut OpCounts,
) -> Result<BigUint> {
    ssk.decryption_key(vpk, ops)?.decrypt(ssk, vpk, c, ops)
}

/// Homomorphic addition: `c1 · c2 mod n²`.
pub fn hom_add(
    vpk: &UserPublicKey,
    c1: &VpheCiphertext,
    c2: &VpheCiphertext,
    ops: &mut OpCounts,
) -> Result<VpheCiphertext> {
    ensure_same(c1.key_id, c2.key_id)?;
    ensure_same(vpk.user_id, c1.key_id)?;
    Ok(VpheCiphertext { value: mod_mul_counted(&c1.value, &c2.value, &vpk.n_sq, ops), key_id: c1.key_id })
}

impl UserPublicKey {
    pub fn residue_width(&self) -> usize {
        residue_width(&self.n)
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(SCHEME_TAG);
        enc.put_u64(self.user_id);
        enc.put_uint(&self.n, Section::Auxiliary);
        enc.put_uint(&self.g, Section::Auxiliary);
        enc.put_uint(&self.h, Section::Auxiliary);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        expect_tag(dec.u8()?)?;
        let user_id = dec.u64()?;
        let n = dec.uint()?;
        let g = dec.uint()?;
        let h = dec.uint()?;
        let n_sq = &n * &n;
        Ok(Self { user_id, n, n_sq, g, h })
    }
}

impl VpheCiphertext {
    /// Tag and key id are framing; the residue is `width` bytes of payload.
    pub fn encode(&self, width: usize, enc: &mut Encoder) {
        enc.put_u8(SCHEME_TAG);
        enc.put_u64(self.key_id);
        enc.put_residue(&self.value, width, Section::Homomorphic);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        expect_tag(dec.u8()?)?;
        let key_id = dec.u64()?;
        let value = dec.uint()?;
        Ok(Self { value, key_id })
    }
}

fn expect_tag(tag: u8) -> Result<()> {
    if tag == SCHEME_TAG {
        Ok(())
    } else {
        Err(Error::Decode(format!("expected VP-HE scheme tag, found {tag:#04x}")))
    }
}
