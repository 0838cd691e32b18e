//! Ciphertext-policy attribute-based encryption over BLS12-381.
//!
//! Top-down secret sharing in the style of Bethencourt–Sahai–Waters: every
//! gate splits its share with a random degree-`k−1` polynomial, each leaf
//! carries `(g1^{q_y(0)}, H(attr)^{q_y(0)})`, and decryption recombines the
//! leaf pairings with Lagrange coefficients. The recovered `e(g1,g2)^{αs}`
//! keys an AEAD envelope around the payload.
//!
//! Counters follow the cost tables: setup records `|U|+1` Exp and one
//! BiPair, keygen `2` Exp per attribute, encryption one Exp per leaf and
//! decryption one BiPair per leaf of the chosen satisfying subtree.

pub mod policy;
pub mod shamir;

use std::collections::{BTreeMap, BTreeSet};

use bls12_381::hash_to_curve::{ExpandMsgXmd, HashToCurve};
use bls12_381::{pairing, G1Affine, G1Projective, G2Affine, G2Projective, Gt, Scalar};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ff::Field;
use rand::RngCore;
use sha2::{Digest, Sha256};

pub use policy::{attribute_set, parse_policy, satisfies, AccessTree, AttributeSet, SatisfyingPlan};

use crate::arith::wire::{Decoder, Encoder, Section};
use crate::arith::OpCounts;
use crate::error::{Error, Result};

const HASH_DST: &[u8] = b"ATTRIBUTE-ABE-V01-BLS12381G2_XMD:SHA-256_SSWU_RO_";
const KDF_LABEL: &[u8] = b"abe-envelope-key-v1";
const NONCE_LEN: usize = 12;
const G1_BYTES: usize = 48;
const G2_BYTES: usize = 96;

/// Bits of one leaf component `(C_y ∈ G1, C'_y ∈ G2)`.
pub const LEAF_COMPONENT_BITS: u64 = 8 * (G1_BYTES + G2_BYTES) as u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbePublicParams {
    pub universe: Vec<String>,
    attr_points: BTreeMap<String, G2Affine>,
    /// `h = g1^β`.
    h: G1Affine,
    /// `e(g1, g2)^α`.
    egg_alpha: Gt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbeMasterKey {
    beta: Scalar,
    g2_alpha: G2Affine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbeUserKey {
    pub holder_id: u64,
    pub attributes: AttributeSet,
    d: G2Affine,
    /// Per attribute: `(g2^r · H(j)^{r_j}, g1^{r_j})`.
    components: BTreeMap<String, (G2Affine, G1Affine)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbeCiphertext {
    pub tree: AccessTree,
    c: G1Affine,
    leaves: Vec<(G1Affine, G2Affine)>,
    nonce: [u8; NONCE_LEN],
    sealed: Vec<u8>,
}

fn hash_attribute(attr: &str) -> G2Affine {
    let point = <G2Projective as HashToCurve<ExpandMsgXmd<Sha256>>>::hash_to_curve(attr.as_bytes(), HASH_DST);
    G2Affine::from(point)
}

fn envelope_key(secret: &Gt) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(KDF_LABEL);
    hasher.update(secret.to_string().as_bytes());
    hasher.finalize().into()
}

pub fn setup(
    universe: &[String],
    rng: &mut dyn RngCore,
    ops: &mut OpCounts,
) -> Result<(AbePublicParams, AbeMasterKey)> {
    if universe.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    let mut seen = BTreeSet::new();
    for attr in universe {
        if attr.is_empty() {
            return Err(Error::MalformedTree("empty attribute name".into()));
        }
        if !seen.insert(attr.as_str()) {
            return Err(Error::DuplicateAttribute(attr.clone()));
        }
    }
    let alpha = Scalar::random(&mut *rng);
    let beta = Scalar::random(&mut *rng);
    let attr_points = universe.iter().map(|a| (a.clone(), hash_attribute(a))).collect();
    let h = G1Affine::from(G1Affine::generator() * beta);
    let egg_alpha = pairing(&G1Affine::generator(), &G2Affine::generator()) * alpha;
    let g2_alpha = G2Affine::from(G2Affine::generator() * alpha);
    ops.exp += universe.len() as u64 + 1;
    ops.bi_pair += 1;
    let params = AbePublicParams { universe: universe.to_vec(), attr_points, h, egg_alpha };
    Ok((params, AbeMasterKey { beta, g2_alpha }))
}

impl AbePublicParams {
    /// Bit length ℒ of one leaf component.
    pub fn element_bits(&self) -> u64 {
        LEAF_COMPONENT_BITS
    }

    fn point(&self, attr: &str) -> Result<&G2Affine> {
        self.attr_points.get(attr).ok_or_else(|| Error::UnknownAttribute(attr.to_string()))
    }
}

pub fn keygen(
    params: &AbePublicParams,
    mk: &AbeMasterKey,
    holder_id: u64,
    attributes: &AttributeSet,
    rng: &mut dyn RngCore,
    ops: &mut OpCounts,
) -> Result<AbeUserKey> {
    let points: Vec<(&String, &G2Affine)> =
        attributes.iter().map(|a| params.point(a).map(|p| (a, p))).collect::<Result<_>>()?;
    let r = Scalar::random(&mut *rng);
    let g2r = G2Affine::generator() * r;
    let beta_inv = mk.beta.invert().expect("β is nonzero");
    let d = G2Affine::from((G2Projective::from(mk.g2_alpha) + g2r) * beta_inv);
    let components = points
        .into_iter()
        .map(|(attr, point)| {
            let rj = Scalar::random(&mut *rng);
            let dj = G2Affine::from(g2r + point * rj);
            let dj_prime = G1Affine::from(G1Affine::generator() * rj);
            (attr.clone(), (dj, dj_prime))
        })
        .collect();
    ops.exp += 2 * attributes.len() as u64;
    Ok(AbeUserKey { holder_id, attributes: attributes.clone(), d, components })
}

fn share_down(node: &AccessTree, secret: Scalar, rng: &mut dyn RngCore, out: &mut Vec<Scalar>) {
    match node {
        AccessTree::Leaf(_) => out.push(secret),
        AccessTree::Gate { k, children } => {
            let poly = shamir::Polynomial::random(secret, *k, rng);
            for (i, child) in children.iter().enumerate() {
                share_down(child, poly.evaluate(i as u64 + 1), rng, out);
            }
        }
    }
}

pub fn encrypt(
    params: &AbePublicParams,
    payload: &[u8],
    tree: &AccessTree,
    rng: &mut dyn RngCore,
    ops: &mut OpCounts,
) -> Result<AbeCiphertext> {
    tree.validate()?;
    let leaves = tree.leaves();
    let points: Vec<&G2Affine> = leaves.iter().map(|a| params.point(a)).collect::<Result<_>>()?;
    let s = Scalar::random(&mut *rng);
    let mut shares = Vec::with_capacity(leaves.len());
    share_down(tree, s, rng, &mut shares);
    let components = shares
        .iter()
        .zip(points)
        .map(|(q, point)| (G1Affine::from(G1Affine::generator() * q), G2Affine::from(point * q)))
        .collect();
    let c = G1Affine::from(G1Projective::from(params.h) * s);
    let key = envelope_key(&(params.egg_alpha * s));
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let aad = tree.to_string();
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let sealed = cipher
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: payload, aad: aad.as_bytes() })
        .map_err(|_| Error::Integrity)?;
    ops.exp += tree.leaf_count() as u64;
    Ok(AbeCiphertext { tree: tree.clone(), c, leaves: components, nonce, sealed })
}

fn combine(plan: &SatisfyingPlan, leaf_value: &dyn Fn(usize) -> Result<Gt>) -> Result<Gt> {
    match plan {
        SatisfyingPlan::Leaf(i) => leaf_value(*i),
        SatisfyingPlan::Gate(chosen) => {
            let xs: Vec<u64> = chosen.iter().map(|(pos, _)| *pos as u64).collect();
            chosen.iter().try_fold(Gt::identity(), |acc, (pos, sub)| {
                Ok(acc + combine(sub, leaf_value)? * shamir::lagrange_at_zero(&xs, *pos as u64))
            })
        }
    }
}

/// Returns the payload iff the key's attributes satisfy the embedded tree.
pub fn decrypt(
    _params: &AbePublicParams,
    ct: &AbeCiphertext,
    sk: &AbeUserKey,
    ops: &mut OpCounts,
) -> Result<Vec<u8>> {
    let leaves = ct.tree.leaves();
    if ct.leaves.len() != leaves.len() {
        return Err(Error::Integrity);
    }
    let plan = ct.tree.satisfying_plan(&sk.attributes).ok_or(Error::PolicyNotSatisfied)?;
    let leaf_value = |i: usize| -> Result<Gt> {
        let (dj, dj_prime) = sk.components.get(leaves[i]).ok_or(Error::PolicyNotSatisfied)?;
        let (cy, cy_prime) = &ct.leaves[i];
        Ok(pairing(cy, dj) - pairing(dj_prime, cy_prime))
    };
    let blinding = combine(&plan, &leaf_value)?;
    let secret = pairing(&ct.c, &sk.d) - blinding;
    ops.bi_pair += plan.size() as u64;
    let key = envelope_key(&secret);
    let aad = ct.tree.to_string();
    ChaCha20Poly1305::new(Key::from_slice(&key))
        .decrypt(Nonce::from_slice(&ct.nonce), Payload { msg: &ct.sealed, aad: aad.as_bytes() })
        .map_err(|_| Error::Integrity)
}

/// Number of leaves the key would use to decrypt, if it can.
pub fn decryption_leaves(tree: &AccessTree, attrs: &AttributeSet) -> Option<usize> {
    tree.satisfying_plan(attrs).map(|p| p.size())
}

impl AbeCiphertext {
    pub fn component_count(&self) -> usize {
        self.leaves.len()
    }

    /// Tree text, `C`, the per-leaf components and the envelope.
    pub fn encode(&self, enc: &mut Encoder) {
        enc.put_str(&self.tree.to_string(), Section::Auxiliary);
        enc.put_raw(&self.c.to_compressed(), Section::Auxiliary);
        enc.put_u32(self.leaves.len() as u32);
        for (cy, cy_prime) in &self.leaves {
            enc.put_raw(&cy.to_compressed(), Section::AbeComponents);
            enc.put_raw(&cy_prime.to_compressed(), Section::AbeComponents);
        }
        enc.put_raw(&self.nonce, Section::Auxiliary);
        enc.put_bytes(&self.sealed, Section::Auxiliary);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        let tree = parse_policy(&dec.string()?)?;
        let c = decode_g1(dec.raw(G1_BYTES)?)?;
        let count = dec.u32()? as usize;
        if count != tree.leaf_count() {
            return Err(Error::Decode(format!("{count} components for {} leaves", tree.leaf_count())));
        }
        let leaves = (0..count)
            .map(|_| Ok((decode_g1(dec.raw(G1_BYTES)?)?, decode_g2(dec.raw(G2_BYTES)?)?)))
            .collect::<Result<_>>()?;
        let nonce = dec.raw(NONCE_LEN)?.try_into().unwrap();
        let sealed = dec.bytes()?.to_vec();
        Ok(Self { tree, c, leaves, nonce, sealed })
    }
}

fn decode_g1(bytes: &[u8]) -> Result<G1Affine> {
    Option::from(G1Affine::from_compressed(bytes.try_into().unwrap()))
        .ok_or_else(|| Error::Decode("invalid G1 point".into()))
}

fn decode_g2(bytes: &[u8]) -> Result<G2Affine> {
    Option::from(G2Affine::from_compressed(bytes.try_into().unwrap()))
        .ok_or_else(|| Error::Decode("invalid G2 point".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use policy::tests::arb_tree;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn universe(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn hospital() -> (AbePublicParams, AbeMasterKey, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let u = universe(&["doctor", "nurse", "hospitalA", "hospitalB"]);
        let (pk, mk) = setup(&u, &mut rng, &mut OpCounts::default()).unwrap();
        (pk, mk, rng)
    }

    #[test]
    fn setup_counts_and_checks() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let u: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
        let mut ops = OpCounts::default();
        setup(&u, &mut rng, &mut ops).unwrap();
        assert_eq!(ops, OpCounts::new(0, 0, 11, 1));
        assert_eq!(setup(&[], &mut rng, &mut ops).unwrap_err(), Error::EmptyUniverse);
        let dup = universe(&["a", "b", "a"]);
        assert_eq!(setup(&dup, &mut rng, &mut ops).unwrap_err(), Error::DuplicateAttribute("a".into()));
    }

    #[test]
    fn setup_is_deterministic() {
        let u = universe(&["x", "y"]);
        let a = setup(&u, &mut ChaCha20Rng::seed_from_u64(3), &mut OpCounts::default()).unwrap();
        let b = setup(&u, &mut ChaCha20Rng::seed_from_u64(3), &mut OpCounts::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn keygen_counts_two_per_attribute() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let u: Vec<String> = (0..8).map(|i| format!("a{i}")).collect();
        let (pk, mk) = setup(&u, &mut rng, &mut OpCounts::default()).unwrap();
        let mut ops = OpCounts::default();
        let attrs = attribute_set((0..6).map(|i| format!("a{i}")));
        keygen(&pk, &mk, 1, &attrs, &mut rng, &mut ops).unwrap();
        assert_eq!(ops, OpCounts::new(0, 0, 12, 0));
        let bad = attribute_set(["zz"]);
        assert_eq!(keygen(&pk, &mk, 1, &bad, &mut rng, &mut ops).unwrap_err(), Error::UnknownAttribute("zz".into()));
    }

    #[test]
    fn hospital_policy_examples() {
        let (pk, mk, mut rng) = hospital();
        let tree = parse_policy("(doctor OR nurse) AND hospitalA").unwrap();
        let mut ops = OpCounts::default();
        let ct = encrypt(&pk, b"secret", &tree, &mut rng, &mut ops).unwrap();
        assert_eq!(ops.exp, 3);
        assert_eq!(ct.component_count(), 3);
        let ok = keygen(&pk, &mk, 1, &attribute_set(["doctor", "hospitalA"]), &mut rng, &mut ops).unwrap();
        let ok2 = keygen(&pk, &mk, 2, &attribute_set(["nurse", "hospitalA"]), &mut rng, &mut ops).unwrap();
        let bad = keygen(&pk, &mk, 3, &attribute_set(["doctor"]), &mut rng, &mut ops).unwrap();
        let empty = keygen(&pk, &mk, 4, &AttributeSet::new(), &mut rng, &mut ops).unwrap();
        let mut dec_ops = OpCounts::default();
        assert_eq!(decrypt(&pk, &ct, &ok, &mut dec_ops).unwrap(), b"secret");
        assert_eq!(dec_ops, OpCounts::new(0, 0, 0, 2));
        assert_eq!(decrypt(&pk, &ct, &ok2, &mut ops).unwrap(), b"secret");
        let mut bad_ops = OpCounts::default();
        assert_eq!(decrypt(&pk, &ct, &bad, &mut bad_ops).unwrap_err(), Error::PolicyNotSatisfied);
        assert!(bad_ops.is_zero());
        assert_eq!(decrypt(&pk, &ct, &empty, &mut ops).unwrap_err(), Error::PolicyNotSatisfied);
    }

    #[test]
    fn single_leaf_and_errors() {
        let (pk, mk, mut rng) = hospital();
        let tree = AccessTree::leaf("nurse");
        let mut ops = OpCounts::default();
        let ct = encrypt(&pk, b"x", &tree, &mut rng, &mut ops).unwrap();
        assert_eq!(ops.exp, 1);
        let key = keygen(&pk, &mk, 1, &attribute_set(["nurse"]), &mut rng, &mut ops).unwrap();
        assert_eq!(decrypt(&pk, &ct, &key, &mut ops).unwrap(), b"x");
        let malformed = AccessTree::Gate { k: 3, children: vec![AccessTree::leaf("nurse"), AccessTree::leaf("doctor")] };
        assert!(matches!(encrypt(&pk, b"x", &malformed, &mut rng, &mut ops), Err(Error::MalformedTree(_))));
        let unknown = AccessTree::leaf("pilot");
        assert_eq!(encrypt(&pk, b"x", &unknown, &mut rng, &mut ops).unwrap_err(), Error::UnknownAttribute("pilot".into()));
    }

    #[test]
    fn tampering_is_an_integrity_error() {
        let (pk, mk, mut rng) = hospital();
        let tree = AccessTree::leaf("doctor");
        let mut ops = OpCounts::default();
        let mut ct = encrypt(&pk, b"payload", &tree, &mut rng, &mut ops).unwrap();
        let key = keygen(&pk, &mk, 1, &attribute_set(["doctor"]), &mut rng, &mut ops).unwrap();
        ct.sealed[0] ^= 1;
        assert_eq!(decrypt(&pk, &ct, &key, &mut ops).unwrap_err(), Error::Integrity);
    }

    #[test]
    fn threshold_gate_decrypts_with_minimal_pairings() {
        let (pk, mk, mut rng) = hospital();
        let tree = parse_policy("2 of (doctor, nurse, hospitalA, hospitalB)").unwrap();
        let mut ops = OpCounts::default();
        let ct = encrypt(&pk, b"t", &tree, &mut rng, &mut ops).unwrap();
        let key = keygen(&pk, &mk, 1, &attribute_set(["nurse", "hospitalA", "hospitalB"]), &mut rng, &mut ops).unwrap();
        let mut dec_ops = OpCounts::default();
        assert_eq!(decrypt(&pk, &ct, &key, &mut dec_ops).unwrap(), b"t");
        assert_eq!(dec_ops.bi_pair, 2);
    }

    #[test]
    fn wire_encoding_round_trip() {
        let (pk, mk, mut rng) = hospital();
        let tree = parse_policy("(doctor OR nurse) AND hospitalA").unwrap();
        let ct = encrypt(&pk, b"abc", &tree, &mut rng, &mut OpCounts::default()).unwrap();
        let mut enc = Encoder::new();
        ct.encode(&mut enc);
        assert_eq!(enc.breakdown().abe_components, 3 * LEAF_COMPONENT_BITS);
        let bytes = enc.into_bytes();
        let mut dec = Decoder::new(&bytes);
        let back = AbeCiphertext::decode(&mut dec).unwrap();
        dec.finish().unwrap();
        assert_eq!(back, ct);
        let key = keygen(&pk, &mk, 1, &attribute_set(["nurse", "hospitalA"]), &mut rng, &mut OpCounts::default()).unwrap();
        assert_eq!(decrypt(&pk, &back, &key, &mut OpCounts::default()).unwrap(), b"abc");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gating_matches_satisfaction(tree in arb_tree(4, 10), mask in any::<u8>(), seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let u: Vec<String> = (0..8).map(|i| format!("attr{i}")).collect();
            let (pk, mk) = setup(&u, &mut rng, &mut OpCounts::default()).unwrap();
            let attrs: AttributeSet = (0..8).filter(|i| mask >> i & 1 == 1).map(|i| format!("attr{i}")).collect();
            let key = keygen(&pk, &mk, 0, &attrs, &mut rng, &mut OpCounts::default()).unwrap();
            let ct = encrypt(&pk, b"m", &tree, &mut rng, &mut OpCounts::default()).unwrap();
            prop_assert_eq!(ct.component_count(), tree.leaf_count());
            let mut ops = OpCounts::default();
            match decrypt(&pk, &ct, &key, &mut ops) {
                Ok(m) => {
                    prop_assert!(tree.satisfies(&attrs));
                    prop_assert_eq!(m, b"m".to_vec());
                    prop_assert_eq!(Some(ops.bi_pair as usize), decryption_leaves(&tree, &attrs));
                }
                Err(e) => {
                    prop_assert_eq!(e, Error::PolicyNotSatisfied);
                    prop_assert!(!tree.satisfies(&attrs));
                }
            }
        }
    }
}
