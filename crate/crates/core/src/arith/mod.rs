//! Arbitrary-precision modular arithmetic shared by both homomorphic schemes.
//!
//! Every cost-relevant primitive comes in a counted form that takes an
//! [`OpCounts`] owned by the caller. There is no global counter: each role
//! (or test) owns its tally and passes it down explicitly.

mod prime;
pub mod wire;

pub use prime::{
    gen_random_prime, gen_structured_prime, is_probable_prime, OddPrimePool, StructuredPrime,
    DEFAULT_MAX_CANDIDATES, DEFAULT_MR_ROUNDS,
};

use std::ops::{Add, AddAssign, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tally of the expensive operations the cost tables are expressed in.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounts {
    pub mod_exp: u64,
    pub mod_mul: u64,
    /// Group exponentiations inside the attribute-based layer.
    pub exp: u64,
    /// Pairing-equivalents inside the attribute-based layer.
    pub bi_pair: u64,
    pub mod_inverse: u64,
}

impl OpCounts {
    pub const fn new(mod_exp: u64, mod_mul: u64, exp: u64, bi_pair: u64) -> Self {
        Self { mod_exp, mod_mul, exp, bi_pair, mod_inverse: 0 }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(mut self, rhs: OpCounts) -> OpCounts {
        self += rhs;
        self
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: OpCounts) {
        self.mod_exp += rhs.mod_exp;
        self.mod_mul += rhs.mod_mul;
        self.exp += rhs.exp;
        self.bi_pair += rhs.bi_pair;
        self.mod_inverse += rhs.mod_inverse;
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            mod_exp: self.mod_exp - rhs.mod_exp,
            mod_mul: self.mod_mul - rhs.mod_mul,
            exp: self.exp - rhs.exp,
            bi_pair: self.bi_pair - rhs.bi_pair,
            mod_inverse: self.mod_inverse - rhs.mod_inverse,
        }
    }
}

/// `base^exponent mod modulus`. Panics if `modulus < 2`.
pub fn mod_exp(base: &BigUint, exponent: &BigUint, modulus: &BigUint) -> BigUint {
    assert!(*modulus >= BigUint::from(2u8), "modulus must be at least 2");
    match modulus.to_u64() {
        Some(m) => BigUint::from(word_mod_pow(base, exponent, m)),
        None => base.modpow(exponent, modulus),
    }
}

/// Square-and-multiply for moduli that fit in one word.
fn word_mod_pow(base: &BigUint, exponent: &BigUint, m: u64) -> u64 {
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % m as u128) as u64;
    let mut b = (base % m).to_u64().expect("reduced below a u64 modulus");
    let mut acc = 1 % m;
    for i in 0..exponent.bits() {
        if exponent.bit(i) {
            acc = mul(acc, b);
        }
        b = mul(b, b);
    }
    acc
}

/// Counted [`mod_exp`]: records one ModExp.
pub fn mod_exp_counted(
    base: &BigUint,
    exponent: &BigUint,
    modulus: &BigUint,
    ops: &mut OpCounts,
) -> BigUint {
    ops.mod_exp += 1;
    mod_exp(base, exponent, modulus)
}

/// Counted modular multiplication: records one ModMul.
pub fn mod_mul_counted(a: &BigUint, b: &BigUint, modulus: &BigUint, ops: &mut OpCounts) -> BigUint {
    ops.mod_mul += 1;
    (a * b) % modulus
}

/// `L(x) = (x - 1) / n`, defined only when `x ≡ 1 (mod n)`.
pub fn l_function(x: &BigUint, n: &BigUint) -> Result<BigUint> {
    if x.is_zero() {
        return Err(Error::Domain("L(0) is undefined".into()));
    }
    let (quotient, remainder) = (x - 1u8).div_rem(n);
    if !remainder.is_zero() {
        return Err(Error::Domain("argument of L is not congruent to 1 mod n".into()));
    }
    Ok(quotient)
}

pub fn lcm(a: &BigUint, b: &BigUint) -> BigUint {
    a.lcm(b)
}

/// Inverse of `a` modulo `m` via the extended Euclidean algorithm.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Result<BigUint> {
    if m.is_zero() {
        return Err(Error::NotInvertible);
    }
    if m.is_one() {
        return Ok(BigUint::zero());
    }
    let modulus = BigInt::from_biguint(Sign::Plus, m.clone());
    let value = BigInt::from_biguint(Sign::Plus, a % m);
    let egcd = value.extended_gcd(&modulus);
    if !egcd.gcd.is_one() {
        return Err(Error::NotInvertible);
    }
    let inverse = egcd.x.mod_floor(&modulus);
    Ok(inverse.to_biguint().expect("mod_floor of a positive modulus is nonnegative"))
}

/// Counted [`mod_inverse`]: records one ModInverse.
pub fn mod_inverse_counted(a: &BigUint, m: &BigUint, ops: &mut OpCounts) -> Result<BigUint> {
    ops.mod_inverse += 1;
    mod_inverse(a, m)
}

/// Uniform sample from `[0, bound)` by rejection on the bit length of `bound`.
pub fn random_below(bound: &BigUint, rng: &mut dyn RngCore) -> BigUint {
    assert!(!bound.is_zero(), "empty sampling range");
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64) * 8 - bits;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if candidate < *bound {
            return candidate;
        }
    }
}

/// Uniform sample from the units of `Z_m`.
pub fn random_unit(m: &BigUint, rng: &mut dyn RngCore) -> BigUint {
    loop {
        let candidate = random_below(m, rng);
        if !candidate.is_zero() && candidate.gcd(m).is_one() {
            return candidate;
        }
    }
}

/// Uniform sample of exactly `bits` bits (top bit set).
pub fn random_bits(bits: u64, rng: &mut dyn RngCore) -> BigUint {
    assert!(bits > 0);
    let mut value = random_below(&(BigUint::one() << bits), rng);
    value.set_bit(bits - 1, true);
    value
}
