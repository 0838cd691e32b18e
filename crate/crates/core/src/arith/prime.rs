//! Primality testing and the structured-prime search used by variant-Paillier
//! key generation (`p = 2·u·v_1···v_k·v_p + 1`).

use std::collections::BTreeSet;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::random_below;
use crate::error::{Error, Result};

/// Candidate bound for prime searches.
pub const DEFAULT_MAX_CANDIDATES: u64 = 1_000_000;
/// Miller–Rabin rounds applied to accepted primes.
pub const DEFAULT_MR_ROUNDS: usize = 64;

const SIEVE_LIMIT: u32 = 4096;
const DETERMINISTIC_BASES: [u32; 13] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
// The first 13 prime bases are a deterministic witness set below this bound.
const DETERMINISTIC_BOUND: u128 = 3_317_044_064_679_887_385_961_981;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = SIEVE_LIMIT as usize;
        let mut composite = vec![false; limit];
        let mut primes = Vec::new();
        for i in 2..limit {
            if !composite[i] {
                primes.push(i as u32);
                let mut j = i * i;
                while j < limit {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

fn mod_small(x: &BigUint, s: u32) -> u32 {
    (x % s).to_u32().expect("remainder below a u32 modulus")
}

fn miller_rabin_witness(n: &BigUint, n_minus_one: &BigUint, d: &BigUint, s: u64, a: &BigUint) -> bool {
    let mut x = a.modpow(d, n);
    if x.is_one() || x == *n_minus_one {
        return false;
    }
    for _ in 1..s {
        x = (&x * &x) % n;
        if x == *n_minus_one {
            return false;
        }
        if x.is_one() {
            return true;
        }
    }
    true
}

/// Miller–Rabin test. Below ~3.3·10²⁴ the verdict is exact (fixed witness set);
/// above it `rounds` bases are used, derived deterministically from `x`.
pub fn is_probable_prime(x: &BigUint, rounds: usize) -> bool {
    if *x < BigUint::from(2u8) {
        return false;
    }
    for &s in small_primes() {
        if *x == BigUint::from(s) {
            return true;
        }
        if mod_small(x, s) == 0 {
            return false;
        }
    }
    let n_minus_one = x - 1u8;
    let s = n_minus_one.trailing_zeros().expect("x - 1 is nonzero");
    let d = &n_minus_one >> s;

    let small = x.to_u128().is_some_and(|v| v < DETERMINISTIC_BOUND);
    let fixed = if small { DETERMINISTIC_BASES.len() } else { rounds.min(DETERMINISTIC_BASES.len()) };
    for &base in &DETERMINISTIC_BASES[..fixed] {
        if miller_rabin_witness(x, &n_minus_one, &d, s, &BigUint::from(base)) {
            return false;
        }
    }
    if small {
        return true;
    }

    let mut seed = [0u8; 32];
    let bytes = x.to_bytes_le();
    for (i, b) in bytes.iter().enumerate() {
        seed[i % 32] ^= b.rotate_left((i / 32) as u32 % 8);
    }
    let mut rng = ChaCha20Rng::from_seed(seed);
    let span = x - 3u8;
    for _ in fixed..rounds {
        let base = random_below(&span, &mut rng) + 2u8;
        if miller_rabin_witness(x, &n_minus_one, &d, s, &base) {
            return false;
        }
    }
    true
}

/// The small odd primes `u, v_1..v_k` shared by both structured primes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OddPrimePool {
    u: u64,
    factors: Vec<u64>,
}

impl OddPrimePool {
    pub fn new(u: u64, factors: Vec<u64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidPool("at least one factor is required".into()));
        }
        let mut seen = BTreeSet::new();
        for &value in std::iter::once(&u).chain(&factors) {
            if value % 2 == 0 {
                return Err(Error::InvalidPool(format!("{value} is even")));
            }
            if !is_probable_prime(&BigUint::from(value), DEFAULT_MR_ROUNDS) {
                return Err(Error::InvalidPool(format!("{value} is not prime")));
            }
            if !seen.insert(value) {
                return Err(Error::InvalidPool(format!("{value} appears more than once")));
            }
        }
        Ok(Self { u, factors })
    }

    /// Draws `k + 1` distinct odd primes of exactly `bits` bits.
    pub fn generate(k: usize, bits: u32, rng: &mut dyn RngCore) -> Result<Self> {
        if !(3..=32).contains(&bits) {
            return Err(Error::Parameter(format!("pool prime size {bits} bits unsupported")));
        }
        let lo = 1u64 << (bits - 1);
        let available = lo / (bits as u64).max(1);
        if (k as u64 + 1) > available {
            return Err(Error::Parameter(format!("cannot draw {} distinct {bits}-bit primes", k + 1)));
        }
        let mut chosen = BTreeSet::new();
        let mut ordered = Vec::with_capacity(k + 1);
        while ordered.len() < k + 1 {
            let candidate = (lo + rng.next_u64() % lo) | 1;
            if is_probable_prime(&BigUint::from(candidate), DEFAULT_MR_ROUNDS) && chosen.insert(candidate) {
                ordered.push(candidate);
            }
        }
        let u = ordered.remove(0);
        Self::new(u, ordered)
    }

    pub fn u(&self) -> u64 {
        self.u
    }

    pub fn factors(&self) -> &[u64] {
        &self.factors
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    /// `2·u·v_1···v_k`.
    pub fn base(&self) -> BigUint {
        self.factors.iter().fold(BigUint::from(2 * self.u), |acc, &v| acc * v)
    }
}

/// A prime of the form `p = 2·u·(Πv_i)·v_p + 1` with prime cofactor `v_p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredPrime {
    pub p: BigUint,
    pub cofactor: BigUint,
}

impl StructuredPrime {
    /// Builds and validates `p` from a known cofactor.
    pub fn from_cofactor(pool: &OddPrimePool, cofactor: BigUint) -> Result<Self> {
        if !is_probable_prime(&cofactor, DEFAULT_MR_ROUNDS) {
            return Err(Error::Parameter("cofactor is not prime".into()));
        }
        if cofactor.is_even() {
            return Err(Error::Parameter("cofactor must be odd".into()));
        }
        if let Some(v) = cofactor.to_u64() {
            if v == pool.u() || pool.factors().contains(&v) {
                return Err(Error::Parameter("cofactor collides with a pool prime".into()));
            }
        }
        let p = pool.base() * &cofactor + 1u8;
        if !is_probable_prime(&p, DEFAULT_MR_ROUNDS) {
            return Err(Error::Parameter("2·u·Πv·v_p + 1 is not prime".into()));
        }
        Ok(Self { p, cofactor })
    }
}

/// Incrementally maintained residues of a search value modulo the sieve primes.
struct Residues {
    values: Vec<u32>,
}

impl Residues {
    fn of(x: &BigUint) -> Self {
        Self { values: small_primes().iter().skip(1).map(|&s| mod_small(x, s)).collect() }
    }

    fn advance(&mut self, step: u32) {
        for (r, &s) in self.values.iter_mut().zip(small_primes().iter().skip(1)) {
            *r = (*r + step % s) % s;
        }
    }
}

fn pick_odd_start(lo: &BigUint, hi: &BigUint, rng: &mut dyn RngCore) -> BigUint {
    let mut start = lo + random_below(&(hi - lo + 1u8), rng);
    if start.is_even() {
        start += 1u8;
    }
    if start > *hi {
        start = lo | BigUint::one();
    }
    start
}

/// Searches for a structured prime of exactly `target_bits` bits whose two top
/// bits are set, so that the product of two such primes has exactly
/// `2·target_bits` bits.
pub fn gen_structured_prime(
    pool: &OddPrimePool,
    target_bits: u64,
    rng: &mut dyn RngCore,
    max_candidates: u64,
) -> Result<StructuredPrime> {
    let base = pool.base();
    if target_bits < base.bits() + 32 {
        return Err(Error::Parameter(format!(
            "target of {target_bits} bits leaves fewer than 32 bits for the cofactor (base has {} bits)",
            base.bits()
        )));
    }
    let floor = BigUint::from(3u8) << (target_bits - 2);
    let ceiling = (BigUint::one() << target_bits) - 2u8;
    let lo = (&floor - 1u8).div_ceil(&base);
    let hi = &ceiling / &base;

    let base_residues: Vec<u32> = small_primes().iter().skip(1).map(|&s| mod_small(&base, s)).collect();
    let mut cofactor = pick_odd_start(&lo, &hi, rng);
    let mut residues = Residues::of(&cofactor);
    let two = BigUint::from(2u8);

    for _ in 0..max_candidates {
        let sieved = residues
            .values
            .iter()
            .zip(&base_residues)
            .zip(small_primes().iter().skip(1))
            .all(|((&v, &a), &s)| v != 0 && (a as u64 * v as u64 + 1) % s as u64 != 0);
        if sieved {
            let p = &base * &cofactor + 1u8;
            // One cheap base-2 round before the full tests.
            let quick = two.modpow(&(&p - 1u8), &p).is_one();
            if quick
                && is_probable_prime(&cofactor, DEFAULT_MR_ROUNDS)
                && is_probable_prime(&p, DEFAULT_MR_ROUNDS)
            {
                return Ok(StructuredPrime { p, cofactor });
            }
        }
        cofactor += 2u8;
        if cofactor > hi {
            cofactor = &lo | BigUint::one();
            residues = Residues::of(&cofactor);
        } else {
            residues.advance(2);
        }
    }
    Err(Error::SearchExhausted(max_candidates))
}

/// Random prime of exactly `bits` bits with the two top bits set.
pub fn gen_random_prime(bits: u64, rng: &mut dyn RngCore, max_candidates: u64) -> Result<BigUint> {
    if bits < 8 {
        return Err(Error::Parameter(format!("{bits}-bit primes are not supported")));
    }
    let lo = BigUint::from(3u8) << (bits - 2);
    let hi = (BigUint::one() << bits) - 1u8;
    let mut candidate = pick_odd_start(&lo, &hi, rng);
    let mut residues = Residues::of(&candidate);
    let two = BigUint::from(2u8);
    for _ in 0..max_candidates {
        if residues.values.iter().all(|&r| r != 0)
            && two.modpow(&(&candidate - 1u8), &candidate).is_one()
            && is_probable_prime(&candidate, DEFAULT_MR_ROUNDS)
        {
            return Ok(candidate);
        }
        candidate += 2u8;
        if candidate > hi {
            candidate = &lo | BigUint::one();
            residues = Residues::of(&candidate);
        } else {
            residues.advance(2);
        }
    }
    Err(Error::SearchExhausted(max_candidates))
}
