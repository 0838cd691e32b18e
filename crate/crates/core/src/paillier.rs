//! Single-key Paillier with `g = n + 1`, used for result delivery.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use crate::arith::wire::{Decoder, Encoder, Section};
use crate::arith::{
    gen_random_prime, l_function, lcm, mod_exp, mod_exp_counted, mod_inverse, mod_mul_counted,
    random_unit, OpCounts, DEFAULT_MAX_CANDIDATES,
};
use crate::error::{Error, Result};

pub const SCHEME_TAG: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    pub key_id: u64,
    pub n: BigUint,
    pub n_sq: BigUint,
    pub g: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierPrivateKey {
    pub key_id: u64,
    pub lambda: BigUint,
    pub mu: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierCiphertext {
    pub value: BigUint,
    pub key_id: u64,
}

pub fn keygen(
    bits: u64,
    key_id: u64,
    rng: &mut dyn RngCore,
) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
    if bits < 64 || bits % 2 != 0 {
        return Err(Error::Parameter(format!("modulus size must be even and at least 64, got {bits}")));
    }
    let budget = DEFAULT_MAX_CANDIDATES;
    loop {
        let p = gen_random_prime(bits / 2, rng, budget)?;
        let q = gen_random_prime(bits / 2, rng, budget)?;
        match keygen_from_primes(&p, &q, key_id) {
            Ok(keys) => return Ok(keys),
            Err(Error::NotInvertible | Error::Parameter(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Key pair whose modulus is at least `floor`.
pub fn keygen_above(
    bits: u64,
    key_id: u64,
    floor: &BigUint,
    rng: &mut dyn RngCore,
) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
    if bits < 64 || bits % 2 != 0 {
        return Err(Error::Parameter(format!("modulus size must be even and at least 64, got {bits}")));
    }
    if floor.bits() > bits {
        return Err(Error::Parameter("floor exceeds the modulus size".into()));
    }
    loop {
        let p = gen_random_prime(bits / 2, rng, DEFAULT_MAX_CANDIDATES)?;
        for _ in 0..8 {
            let q = gen_random_prime(bits / 2, rng, DEFAULT_MAX_CANDIDATES)?;
            if &p * &q < *floor {
                continue;
            }
            match keygen_from_primes(&p, &q, key_id) {
                Ok(keys) => return Ok(keys),
                Err(Error::NotInvertible | Error::Parameter(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
}

/// Builds a key pair from explicit primes with `g = n + 1`.
pub fn keygen_from_primes(
    p: &BigUint,
    q: &BigUint,
    key_id: u64,
) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
    if p == q {
        return Err(Error::Parameter("p and q must differ".into()));
    }
    let n = p * q;
    let n_sq = &n * &n;
    let g = &n + 1u8;
    let lambda = lcm(&(p - 1u8), &(q - 1u8));
    let l_value = l_function(&mod_exp(&g, &lambda, &n_sq), &n)?;
    let mu = mod_inverse(&l_value, &n)?;
    Ok((PaillierPublicKey { key_id, n, n_sq, g }, PaillierPrivateKey { key_id, lambda, mu }))
}

fn ensure_same(expected: u64, found: u64) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::KeyMismatch { expected, found })
    }
}

/// `c = g^m · r^n mod n²` with a fresh unit `r`.
pub fn encrypt(
    ppk: &PaillierPublicKey,
    m: &BigUint,
    rng: &mut dyn RngCore,
    ops: &mut OpCounts,
) -> Result<PaillierCiphertext> {
    if *m >= ppk.n {
        return Err(Error::PlaintextOutOfRange);
    }
    let r = random_unit(&ppk.n, rng);
    encrypt_with_randomness(ppk, m, &r, ops)
}

pub fn encrypt_with_randomness(
    ppk: &PaillierPublicKey,
    m: &BigUint,
    r: &BigUint,
    ops: &mut OpCounts,
) -> Result<PaillierCiphertext> {
    if *m >= ppk.n {
        return Err(Error::PlaintextOutOfRange);
    }
    let gm = mod_exp_counted(&ppk.g, m, &ppk.n_sq, ops);
    let rn = mod_exp_counted(r, &ppk.n, &ppk.n_sq, ops);
    Ok(PaillierCiphertext { value: mod_mul_counted(&gm, &rn, &ppk.n_sq, ops), key_id: ppk.key_id })
}

/// Encryption of `−m` equal to `hom_neg(encrypt(m))` under the same
/// randomness, computed as `g^(m(n−1)) · r^(n(n−1))` in 2 ModExp + 1 ModMul.
pub fn encrypt_negated(
    ppk: &PaillierPublicKey,
    m: &BigUint,
    rng: &mut dyn RngCore,
    ops: &mut OpCounts,
) -> Result<PaillierCiphertext> {
    if *m >= ppk.n {
        return Err(Error::PlaintextOutOfRange);
    }
    let r = random_unit(&ppk.n, rng);
    encrypt_negated_with_randomness(ppk, m, &r, ops)
}

pub fn encrypt_negated_with_randomness(
    ppk: &PaillierPublicKey,
    m: &BigUint,
    r: &BigUint,
    ops: &mut OpCounts,
) -> Result<PaillierCiphertext> {
    if *m >= ppk.n {
        return Err(Error::PlaintextOutOfRange);
    }
    let n_minus_one = &ppk.n - 1u8;
    let gm = mod_exp_counted(&ppk.g, &(m * &n_minus_one), &ppk.n_sq, ops);
    let rn = mod_exp_counted(r, &(&ppk.n * &n_minus_one), &ppk.n_sq, ops);
    Ok(PaillierCiphertext { value: mod_mul_counted(&gm, &rn, &ppk.n_sq, ops), key_id: ppk.key_id })
}

/// `L(c^λ mod n²) · μ mod n`.
pub fn decrypt(
    psk: &PaillierPrivateKey,
    ppk: &PaillierPublicKey,
    c: &PaillierCiphertext,
    ops: &mut OpCounts,
) -> Result<BigUint> {
    ensure_same(psk.key_id, ppk.key_id)?;
    ensure_same(ppk.key_id, c.key_id)?;
    if c.value.is_zero() || c.value >= ppk.n_sq || !c.value.gcd(&ppk.n).is_one() {
        return Err(Error::Domain("ciphertext is not a unit mod n²".into()));
    }
    let cl = mod_exp_counted(&c.value, &psk.lambda, &ppk.n_sq, ops);
    let l_value = l_function(&cl, &ppk.n)?;
    Ok(mod_mul_counted(&l_value, &psk.mu, &ppk.n, ops))
}

pub fn hom_add(
    ppk: &PaillierPublicKey,
    c1: &PaillierCiphertext,
    c2: &PaillierCiphertext,
    ops: &mut OpCounts,
) -> Result<PaillierCiphertext> {
    ensure_same(c1.key_id, c2.key_id)?;
    ensure_same(ppk.key_id, c1.key_id)?;
    Ok(PaillierCiphertext { value: mod_mul_counted(&c1.value, &c2.value, &ppk.n_sq, ops), key_id: c1.key_id })
}

/// Additive inverse: `c^(n−1) mod n²`.
pub fn hom_neg(ppk: &PaillierPublicKey, c: &PaillierCiphertext, ops: &mut OpCounts) -> Result<PaillierCiphertext> {
    ensure_same(ppk.key_id, c.key_id)?;
    let value = mod_exp_counted(&c.value, &(&ppk.n - 1u8), &ppk.n_sq, ops);
    Ok(PaillierCiphertext { value, key_id: c.key_id })
}

fn expect_tag(tag: u8) -> Result<()> {
    if tag == SCHEME_TAG {
        Ok(())
    } else {
        Err(Error::Decode(format!("expected Paillier scheme tag, found {tag:#04x}")))
    }
}

impl PaillierPublicKey {
    pub fn residue_width(&self) -> usize {
        crate::vphe::residue_width(&self.n)
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(SCHEME_TAG);
        enc.put_u64(self.key_id);
        enc.put_uint(&self.n, Section::Auxiliary);
        enc.put_uint(&self.g, Section::Auxiliary);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        expect_tag(dec.u8()?)?;
        let key_id = dec.u64()?;
        let n = dec.uint()?;
        let g = dec.uint()?;
        if n < BigUint::from(2u8) {
            return Err(Error::Decode("Paillier modulus below 2".into()));
        }
        let n_sq = &n * &n;
        Ok(Self { key_id, n, n_sq, g })
    }
}

impl PaillierPrivateKey {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(SCHEME_TAG);
        enc.put_u64(self.key_id);
        enc.put_uint(&self.lambda, Section::Auxiliary);
        enc.put_uint(&self.mu, Section::Auxiliary);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        expect_tag(dec.u8()?)?;
        let key_id = dec.u64()?;
        let lambda = dec.uint()?;
        let mu = dec.uint()?;
        Ok(Self { key_id, lambda, mu })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes);
        let key = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(key)
    }
}

impl PaillierCiphertext {
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
