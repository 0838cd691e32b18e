use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use sama_core::arith::OpCounts;
use sama_core::cpabe::{attribute_set, parse_policy, AttributeSet};
use sama_core::harness::bus::{Endpoint, Envelope, Role};
use sama_core::harness::{measure_communication, Link};
use sama_core::paillier::PaillierPublicKey;
use sama_core::protocol::messages::{tag, Message};
use sama_core::protocol::roles::MaskMode;
use sama_core::protocol::{AggregationRequest, Deployment, DeploymentConfig, RequestKind};
use sama_core::Error;

const UNIVERSE: [&str; 6] = ["doctor", "nurse", "cardiology", "oncology", "researcher", "insurer"];

fn deployment(seed: u64) -> Deployment {
    Deployment::new(DeploymentConfig::new(512, &UNIVERSE, seed)).unwrap()
}

/// Three owners with hospital-style policies and two requesters.
fn fixture(seed: u64) -> Deployment {
    let mut dep = deployment(seed);
    for id in 1..=3 {
        dep.enroll_owner(id).unwrap();
    }
    dep.register_policy(1, parse_policy("doctor AND cardiology").unwrap(), parse_policy("researcher").unwrap()).unwrap();
    dep.register_policy(2, parse_policy("doctor OR nurse").unwrap(), parse_policy("researcher OR doctor").unwrap()).unwrap();
    dep.register_policy(3, parse_policy("oncology").unwrap(), parse_policy("insurer").unwrap()).unwrap();
    dep.enroll_requester(1, &attribute_set(["doctor", "cardiology", "researcher"])).unwrap();
    dep.enroll_requester(2, &attribute_set(["nurse"])).unwrap();
    dep
}

fn upload_all(dep: &mut Deployment, do_id: u64, values: &[u64]) {
    for v in values {
        dep.upload(do_id, &BigUint::from(*v)).unwrap();
    }
}

fn result_public_key(outcome: &sama_core::protocol::Outcome) -> PaillierPublicKey {
    let entry = outcome.transcript.entries.iter().find(|e| e.tag == tag::RESULT_DELIVERY).unwrap();
    match Message::decode(entry.tag, &entry.payload).unwrap() {
        Message::ResultDelivery { public, .. } => public,
        _ => unreachable!(),
    }
}

#[test]
fn policy_versions_increase() {
    let mut dep = deployment(1);
    dep.enroll_owner(4).unwrap();
    let p = parse_policy("doctor").unwrap();
    assert_eq!(dep.register_policy(4, p.clone(), p.clone()).unwrap(), 1);
    assert_eq!(dep.register_policy(4, p.clone(), parse_policy("nurse").unwrap()).unwrap(), 2);
    assert_eq!(dep.sp().policy(4).unwrap().ap_m, parse_policy("nurse").unwrap());
    assert_eq!(dep.register_policy(9, p.clone(), p), Err(Error::UnknownDataOwner(9)));
}

#[test]
fn policy_with_unknown_attribute_rejected() {
    let mut dep = deployment(1);
    dep.enroll_owner(1).unwrap();
    let err = dep.register_policy(1, parse_policy("astronaut").unwrap(), parse_policy("doctor").unwrap()).unwrap_err();
    assert_eq!(err, Error::UnknownAttribute("astronaut".into()));
}

#[test]
fn uploads_append_one_ciphertext_each() {
    let mut dep = fixture(2);
    upload_all(&mut dep, 1, &[5, 6]);
    assert_eq!(dep.sp().store().len(1), 2);
    assert_eq!(dep.owner(1).unwrap().ops, OpCounts::new(4, 2, 0, 0));
    let too_big = dep.modulus().clone();
    assert_eq!(dep.upload(1, &too_big).unwrap_err(), Error::PlaintextOutOfRange);
}

#[test]
fn do_do_single_item_is_unchanged() {
    let mut dep = fixture(3);
    let stored = dep.upload(2, &BigUint::from(77u8)).unwrap();
    let outcome = dep.run_use_case(&AggregationRequest::do_do(1, 2, 0, 1));
    assert_eq!(outcome.result, Ok(BigUint::from(77u8)));
    assert_eq!(outcome.cost(Role::ServiceProvider), OpCounts::default());
    let entry = outcome.transcript.entries.iter().find(|e| e.tag == tag::DO_DO_RESULT).unwrap();
    match Message::decode(entry.tag, &entry.payload).unwrap() {
        Message::DoDoResult { ciphertext, .. } => assert_eq!(ciphertext, stored),
        _ => unreachable!(),
    }
}

#[test]
fn do_do_sums_random_messages() {
    let mut dep = fixture(4);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let values: Vec<u64> = (0..10).map(|_| rng.gen_range(0..1 << 30)).collect();
    upload_all(&mut dep, 3, &values);
    let outcome = dep.run_use_case(&AggregationRequest::do_do(1, 3, 0, 10));
    assert_eq!(outcome.result, Ok(BigUint::from(values.iter().sum::<u64>())));
    assert_eq!(outcome.cost(Role::ServiceProvider), OpCounts::new(0, 9, 0, 0));
    assert_eq!(outcome.cost(Role::DataOwner), OpCounts::new(1, 1, 0, 0));
    assert!(outcome.transcript.between(Role::ServiceProvider, Role::ComputationalParty).next().is_none());
    assert_eq!(outcome.transcript.tags(), vec![tag::DO_DO_REQUEST, tag::DO_DO_RESULT]);
}

#[test]
fn do_do_range_errors_are_denied() {
    let mut dep = fixture(5);
    upload_all(&mut dep, 1, &[1, 2]);
    for (start, end) in [(0, 0), (1, 3), (2, 2)] {
        let rid = dep.next_request_id();
        let outcome = dep.run_use_case(&AggregationRequest::do_do(rid, 1, start, end));
        assert_eq!(outcome.result, Err(Error::EmptyRange));
    }
}

#[test]
fn owner_cannot_aggregate_someone_else() {
    let mut dep = fixture(5);
    upload_all(&mut dep, 1, &[1]);
    let mut request = AggregationRequest::do_do(1, 1, 0, 1);
    request.requester_id = 2;
    assert!(matches!(dep.run_use_case(&request).result, Err(Error::Parameter(_))));
}

#[test]
fn drs_do_end_to_end_and_costs() {
    let mut dep = fixture(6);
    let values = [11u64, 22, 33, 44];
    upload_all(&mut dep, 1, &values);
    let outcome = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 1, 0, 4));
    assert_eq!(outcome.result, Ok(BigUint::from(110u8)));
    assert_eq!(outcome.cost(Role::ServiceProvider), OpCounts::new(4, 4 + 3, 0, 0));
    assert_eq!(outcome.cost(Role::ComputationalParty), OpCounts::new(3, 2, 2, 0));
    assert_eq!(outcome.cost(Role::DataRequester), OpCounts::new(1, 1, 0, 2));
    assert_eq!(outcome.cost(Role::DataOwner), OpCounts::default());
    assert_eq!(
        outcome.transcript.tags(),
        vec![
            tag::DRS_DO_REQUEST,
            tag::MASKED_SINGLE,
            tag::RESULT_KEY_REQUEST,
            tag::RESULT_KEY_ISSUE,
            tag::MASKED_RESULT,
            tag::RESULT_DELIVERY
        ]
    );
}

#[test]
fn drs_do_fixed_mask_is_visible_to_cp() {
    let mut dep = fixture(7);
    upload_all(&mut dep, 2, &[100, 200]);
    let r = BigUint::from(123_456u32);
    dep.sp_mut().mask_mode = MaskMode::Fixed(r.clone());
    let outcome = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 2, 0, 2));
    assert_eq!(outcome.result, Ok(BigUint::from(300u16)));
    assert_eq!(dep.cp().observed(), &[(1, 2, BigUint::from(300u16) + &r)]);

    dep.sp_mut().mask_mode = MaskMode::Fixed(BigUint::default());
    let outcome = dep.run_use_case(&AggregationRequest::drs_do(2, 1, 2, 0, 2));
    assert_eq!(outcome.result, Ok(BigUint::from(300u16)));
    assert_eq!(dep.cp().observed()[1], (2, 2, BigUint::from(300u16)));
}

#[test]
fn largest_mask_does_not_wrap() {
    let mut dep = fixture(8);
    upload_all(&mut dep, 2, &[9, 10]);
    let n_minus_one = dep.modulus() - 1u8;
    dep.sp_mut().mask_mode = MaskMode::Fixed(n_minus_one);
    let outcome = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 2, 0, 2));
    assert_eq!(outcome.result, Ok(BigUint::from(19u8)));
    assert_eq!(dep.cp().observed()[0].2, BigUint::from(18u8));
}

#[test]
fn zero_sum_opens_to_zero() {
    let mut dep = fixture(9);
    upload_all(&mut dep, 1, &[0, 0, 0]);
    let outcome = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 1, 0, 3));
    assert_eq!(outcome.result, Ok(BigUint::default()));
}

#[test]
fn result_keys_are_fresh_per_request() {
    let mut dep = fixture(10);
    upload_all(&mut dep, 2, &[1]);
    let a = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 2, 0, 1));
    let b = dep.run_use_case(&AggregationRequest::drs_do(2, 1, 2, 0, 1));
    let (ka, kb) = (result_public_key(&a), result_public_key(&b));
    assert_ne!(ka.n, kb.n);
    assert!(ka.n > *dep.modulus() && kb.n > *dep.modulus());
}

#[test]
fn replayed_masked_result_fails_closed() {
    let mut dep = fixture(11);
    upload_all(&mut dep, 2, &[5]);
    let outcome = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 2, 0, 1));
    assert!(outcome.result.is_ok());
    let entry = outcome.transcript.entries.iter().find(|e| e.tag == tag::MASKED_RESULT).unwrap().clone();
    let replay = Envelope {
        tag: entry.tag,
        request_id: entry.request_id,
        sender: entry.sender,
        receiver: entry.receiver,
        payload: entry.payload,
        breakdown: entry.breakdown,
    };
    assert_eq!(dep.inject(replay.clone()), Err(Error::MaskAlreadyConsumed(1)));
    let mut unknown = replay;
    unknown.request_id = 99;
    assert_eq!(dep.inject(unknown), Err(Error::UnknownRequest(99)));
}

#[test]
fn unknown_tag_is_rejected() {
    let mut dep = fixture(11);
    let env = Envelope {
        tag: 0x7e7e,
        request_id: 5,
        sender: Endpoint::owner(1),
        receiver: Endpoint::SP,
        payload: Vec::new(),
        breakdown: Default::default(),
    };
    assert_eq!(dep.inject(env), Err(Error::UnknownMessageType(0x7e7e)));
}

#[test]
fn unsatisfying_requester_never_opens() {
    let mut dep = fixture(12);
    upload_all(&mut dep, 1, &[42]);
    for rid in 1..=5 {
        let outcome = dep.run_use_case(&AggregationRequest::drs_do(rid, 2, 1, 0, 1));
        assert_eq!(outcome.result, Err(Error::PolicyNotSatisfied));
        assert_eq!(outcome.cost(Role::DataRequester), OpCounts::default());
    }
}

#[test]
fn unknown_requester_and_duplicate_ids_are_denied() {
    let mut dep = fixture(13);
    upload_all(&mut dep, 1, &[1]);
    let mut request = AggregationRequest::drs_do(1, 1, 1, 0, 1);
    assert!(dep.run_use_case(&request).result.is_ok());
    assert_eq!(dep.run_use_case(&request).result, Err(Error::DuplicateRequest(1)));
    request.request_id = 2;
    request.target.as_mut().unwrap().do_id = 8;
    assert_eq!(dep.run_use_case(&request).result, Err(Error::UnknownDataOwner(8)));
}

#[test]
fn select_dos_matches_brute_force() {
    let dep = fixture(14);
    let claims: [&[&str]; 5] = [&[], &["researcher"], &["doctor"], &["insurer", "researcher"], &["nurse"]];
    for claim in claims {
        let attrs: AttributeSet = attribute_set(claim.iter().copied());
        let expected: Vec<u64> = (1..=3).filter(|id| dep.sp().policy(*id).unwrap().ap_m.satisfies(&attrs)).collect();
        assert_eq!(dep.sp().select_dos(&attrs), expected);
    }
    assert!(dep.sp().select_dos(&attribute_set(["nurse"])).is_empty());
    assert_eq!(dep.sp().select_dos(&attribute_set(["researcher", "insurer"])), vec![1, 2, 3]);
}

#[test]
fn drs_dos_fixed_masks_and_sum() {
    let mut dep = fixture(15);
    upload_all(&mut dep, 1, &[1000, 7]);
    upload_all(&mut dep, 2, &[20]);
    let r = BigUint::from(5u8);
    dep.sp_mut().mask_mode = MaskMode::Fixed(r.clone());
    let outcome = dep.run_use_case(&AggregationRequest::drs_dos(1, 1, attribute_set(["researcher"])));
    assert_eq!(outcome.result, Ok(BigUint::from(27u8)));
    assert_eq!(dep.cp().observed(), &[(1, 1, BigUint::from(12u8)), (1, 2, BigUint::from(25u8))]);
    assert_eq!(outcome.cost(Role::ServiceProvider), OpCounts::new(6, 6, 0, 0));
    // Distinct AP_M trees are joined by AND: 1 + 2 leaves.
    assert_eq!(outcome.cost(Role::ComputationalParty), OpCounts::new(4, 3, 3, 0));
    assert_eq!(outcome.cost(Role::DataOwner), OpCounts::default());
}

#[test]
fn drs_dos_other_slot() {
    let mut dep = fixture(15);
    upload_all(&mut dep, 1, &[1000, 7]);
    upload_all(&mut dep, 2, &[20, 30]);
    let mut request = AggregationRequest::drs_dos(1, 1, attribute_set(["researcher"]));
    request.slot = Some(0);
    assert_eq!(dep.run_use_case(&request).result, Ok(BigUint::from(1020u16)));
    request.request_id = 2;
    request.slot = Some(5);
    assert_eq!(dep.run_use_case(&request).result, Err(Error::NoData(1)));
}

#[test]
fn drs_dos_without_matching_owner_is_denied() {
    let mut dep = fixture(16);
    upload_all(&mut dep, 1, &[1]);
    let outcome = dep.run_use_case(&AggregationRequest::drs_dos(1, 2, attribute_set(["nurse"])));
    assert_eq!(outcome.result, Err(Error::NoMatchingOwners));
    assert!(outcome.transcript.between(Role::ServiceProvider, Role::ComputationalParty).next().is_none());
}

#[test]
fn drs_dos_overclaiming_requester_is_gated() {
    let mut dep = fixture(17);
    upload_all(&mut dep, 3, &[8]);
    let outcome = dep.run_use_case(&AggregationRequest::drs_dos(1, 2, attribute_set(["insurer"])));
    assert_eq!(outcome.result, Err(Error::PolicyNotSatisfied));
}

#[test]
fn drs_dos_random_data() {
    for n in [2u64, 10] {
        let mut dep = deployment(18 + n);
        let policy = parse_policy("researcher").unwrap();
        for id in 1..=n {
            dep.enroll_owner(id).unwrap();
            dep.register_policy(id, policy.clone(), policy.clone()).unwrap();
        }
        dep.enroll_requester(1, &attribute_set(["researcher"])).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(n);
        let mut sum = 0u64;
        for id in 1..=n {
            let m = rng.gen_range(0..1u64 << 40);
            sum += m;
            dep.upload(id, &BigUint::from(m)).unwrap();
        }
        let outcome = dep.run_use_case(&AggregationRequest::drs_dos(1, 1, attribute_set(["researcher"])));
        assert_eq!(outcome.result, Ok(BigUint::from(sum)));
        assert_eq!(outcome.cost(Role::ServiceProvider), OpCounts::new(2 * n + 2, 2 * n + 2, 0, 0));
        assert_eq!(outcome.cost(Role::ComputationalParty), OpCounts::new(n + 2, n + 1, 1, 0));
        let links = measure_communication(&outcome.transcript);
        assert_eq!(links[&Link::SP_CP].homomorphic, 2 * n * 512);
    }
}

#[test]
fn mixed_multi_policies_are_combined() {
    let mut dep = fixture(19);
    upload_all(&mut dep, 1, &[1]);
    upload_all(&mut dep, 2, &[2]);
    upload_all(&mut dep, 3, &[4]);
    dep.enroll_requester(3, &attribute_set(["researcher", "insurer"])).unwrap();
    dep.enroll_requester(4, &attribute_set(["researcher", "doctor"])).unwrap();
    let claim = attribute_set(["researcher", "insurer"]);
    let ok = dep.run_use_case(&AggregationRequest::drs_dos(1, 3, claim.clone()));
    assert_eq!(ok.result, Ok(BigUint::from(7u8)));
    let gated = dep.run_use_case(&AggregationRequest::drs_dos(2, 4, claim));
    assert_eq!(gated.result, Err(Error::PolicyNotSatisfied));
}

#[test]
fn blindness_of_sp_and_cp() {
    let mut dep = fixture(20);
    let values = [3u64, 5, 8];
    upload_all(&mut dep, 2, &values);
    let partial_sums: Vec<BigUint> = (1..=values.len()).map(|k| BigUint::from(values[..k].iter().sum::<u64>())).collect();
    let outcome = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 2, 0, 3));
    assert_eq!(outcome.result, Ok(BigUint::from(16u8)));

    // Every value the SP sees in a message is a ciphertext residue or key.
    for entry in &dep.transcript().entries {
        if entry.sender.role == Role::ServiceProvider || entry.receiver.role == Role::ServiceProvider {
            let v = BigUint::from_bytes_be(&entry.payload);
            assert!(!partial_sums.contains(&v) && !values.iter().any(|m| v == BigUint::from(*m)));
        }
    }
    // The CP only ever sees the masked sum.
    let (_, _, seen) = &dep.cp().observed()[0];
    assert!(!partial_sums.contains(seen));
    assert!(dep.sp().pending_masks(1).is_none());
}

#[test]
fn single_upload_serves_every_request_kind() {
    let mut dep = fixture(21);
    upload_all(&mut dep, 2, &[40]);
    let before = dep.owner(2).unwrap().ops;
    let a = dep.run_use_case(&AggregationRequest::drs_do(1, 1, 2, 0, 1));
    let b = dep.run_use_case(&AggregationRequest::drs_dos(2, 1, attribute_set(["doctor"])));
    let c = dep.run_use_case(&AggregationRequest::do_do(3, 2, 0, 1));
    assert_eq!(a.result, Ok(BigUint::from(40u8)));
    assert_eq!(b.result, Ok(BigUint::from(40u8)));
    assert_eq!(c.result, Ok(BigUint::from(40u8)));
    assert_eq!(dep.owner(2).unwrap().ops - before, OpCounts::new(1, 1, 0, 0));
    assert_eq!(dep.sp().store().len(2), 1);
}

#[test]
fn notifications_list_requests_touching_owner() {
    let mut dep = fixture(22);
    upload_all(&mut dep, 1, &[1]);
    upload_all(&mut dep, 2, &[2]);
    dep.run_use_case(&AggregationRequest::drs_do(1, 1, 2, 0, 1)).result.unwrap();
    dep.run_use_case(&AggregationRequest::drs_dos(2, 1, attribute_set(["researcher"]))).result.unwrap();
    let kinds: Vec<RequestKind> = dep.sp().notifications(2).iter().map(|e| e.kind).collect();
    assert_eq!(kinds, vec![RequestKind::DrsDo, RequestKind::DrsDos]);
    assert_eq!(dep.sp().notifications(1).len(), 1);
    assert!(dep.sp().notifications(3).is_empty());
}

#[test]
fn three_kinds_have_distinct_shapes() {
    let mut dep = fixture(23);
    upload_all(&mut dep, 1, &[1, 2]);
    let shapes: Vec<Vec<u16>> = [
        AggregationRequest::do_do(1, 1, 0, 2),
        AggregationRequest::drs_do(2, 1, 1, 0, 2),
        AggregationRequest::drs_dos(3, 1, attribute_set(["researcher"])),
    ]
    .iter()
    .map(|r| dep.run_use_case(r).transcript.tags())
    .collect();
    assert_ne!(shapes[0], shapes[1]);
    assert_ne!(shapes[1], shapes[2]);
    assert_ne!(shapes[0], shapes[2]);
}

fn scripted_run(seed: u64) -> Vec<u8> {
    let mut dep = fixture(seed);
    upload_all(&mut dep, 1, &[3, 4]);
    upload_all(&mut dep, 2, &[5]);
    dep.run_use_case(&AggregationRequest::do_do(1, 1, 0, 2)).result.unwrap();
    dep.run_use_case(&AggregationRequest::drs_do(2, 1, 1, 0, 2)).result.unwrap();
    dep.run_use_case(&AggregationRequest::drs_dos(3, 1, attribute_set(["researcher"]))).result.unwrap();
    dep.transcript().to_bytes()
}

#[test]
fn same_seed_replays_identical_transcript() {
    assert_eq!(scripted_run(24), scripted_run(24));
    assert_ne!(scripted_run(24), scripted_run(25));
}
