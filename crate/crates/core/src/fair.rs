//! The committed-key agreement protocol built to close the early-derivation
//! window of the Bell-pair design.
//!
//! Each party commits to a private key up front by transmitting, behind
//! decoys, both the key qubits (in a secret random order, each bit in a
//! secret random basis) and a hash of the key. Nothing about bases or
//! ordering is disclosed until the decoy check has confirmed the channel is
//! clean, so neither party can derive the final key during public
//! discussion. After disclosure, each side recovers the peer's key, checks
//! it against the transmitted hash, XORs the two private keys into a raw
//! key, and compresses that with a seeded Toeplitz matrix.
//!
//! A party who lies in the disclosure (for example announcing a fake
//! ordering to steer the outcome) corrupts what the peer recovers, and the
//! hash check attributes that corruption to them: manipulation is either
//! ineffective or detected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::amplify::{amplified_len, ToeplitzMatrix};
use crate::bits::{BitString, Permutation};
use crate::channel::{
    check_passes, extract_decoys, interleave_decoys, measure_slots, payload, random_decoys,
    AbortReason, Channel, DecoyCheckDetail, DecoyRecord, MessageKind, Party, ParticleSlot, Phase,
    ProtocolOutcome, QuantumTap, SequenceId, Transcript,
};
use crate::hash::{hash_key, HashKind};
use crate::quantum::{Basis, PolarizationState};
use crate::RunRng;

#[derive(Clone, Debug)]
pub struct FairConfig {
    /// Private key length in bits.
    pub n: usize,
    /// Hash commitment length in bits.
    pub m: usize,
    /// Decoys inserted into each transmitted sequence.
    pub l: usize,
    /// Maximum tolerated decoy error rate.
    pub threshold: f64,
    /// Fraction of the raw key surviving privacy amplification.
    pub ratio: f64,
    pub hash: HashKind,
}

impl FairConfig {
    pub fn new(n: usize, m: usize, l: usize) -> FairConfig {
        FairConfig {
            n,
            m,
            l,
            threshold: 0.0,
            ratio: 0.8,
            hash: HashKind::default(),
        }
    }
}

/// Bob's behavior in a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FairBob {
    Honest,
    /// Measures one random qubit of Alice's reordered key sequence in a
    /// random basis immediately after public discussion, then stops the
    /// run: the probe is the whole experiment.
    ProbeOneSlot,
    /// Announces a fake ordering during key negotiation, after learning
    /// Alice's key from her (earlier) announcement.
    FakeOrder(FakeOrderMode),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FakeOrderMode {
    /// Uniform over all orderings other than the true one.
    Uniform,
    /// The true ordering with two entries swapped; the smallest possible lie.
    Transposition,
    /// An arbitrary announced vector, not necessarily a permutation at all.
    Raw(Vec<usize>),
}

/// One party's secret material, fixed at Step 1 and disclosed piecewise.
#[derive(Clone, Debug)]
pub struct PrivateKeyMaterial {
    pub key: BitString,
    pub hash: BitString,
    /// Encoding basis of each key bit, indexed by original key position.
    pub key_bases: Vec<Basis>,
    /// Encoding basis of each hash bit.
    pub hash_bases: Vec<Basis>,
    /// Secret reordering applied to the key qubits before transmission.
    pub order: Permutation,
}

/// Draws fresh private material: uniform key, its hash, uniform per-bit
/// bases, and a uniform secret ordering.
pub fn generate_private(
    n: usize,
    m: usize,
    hash: HashKind,
    rng: &mut RunRng,
) -> PrivateKeyMaterial {
    assert!(n >= 1 && m >= 1);
    let key = BitString::random(n, rng);
    let hash = hash_key(&key, m, hash);
    let key_bases = (0..n).map(|_| Basis::random(rng)).collect();
    let hash_bases = (0..m).map(|_| Basis::random(rng)).collect();
    let order = Permutation::random(n, rng);
    PrivateKeyMaterial {
        key,
        hash,
        key_bases,
        hash_bases,
        order,
    }
}

/// True iff the recovered key hashes to the received commitment.
pub fn verify_hash(recovered: &BitString, received_hash: &BitString, kind: HashKind) -> bool {
    hash_key(recovered, received_hash.len(), kind) == *received_hash
}

/// The raw shared key: bitwise XOR of the two private keys, so each party's
/// key flips exactly the bits it chooses and neither controls the result.
pub fn combine_keys(a: &BitString, b: &BitString) -> BitString {
    a.xor(b)
}

/// Outcome of the single-qubit probe experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Which transit-order slot of Alice's key sequence Bob measured.
    pub slot: usize,
    pub guessed_basis: Basis,
    pub guessed_bit: u8,
    /// Ground truth the analysis compares against; the prober has neither.
    pub true_position: usize,
    pub true_bit: u8,
    pub correct: bool,
}

/// Everything observable about one run.
#[derive(Clone, Debug)]
pub struct FairReport {
    pub outcome: ProtocolOutcome,
    pub transcript: Transcript,
    /// Per-decoy comparison results for all four transmitted sequences.
    pub decoy_checks: Vec<DecoyCheckDetail>,
    pub probe: Option<ProbeResult>,
    /// For fake-order runs: whether the announced lie actually changed the
    /// key Alice recovered. An unchanged key means the manipulation was
    /// ineffective and the run legitimately completes.
    pub manipulation_effective: Option<bool>,
}

/// Executes one run of the protocol.
pub fn run_fair(
    cfg: &FairConfig,
    bob: &FairBob,
    tap: Option<&mut dyn QuantumTap>,
    rng: &mut RunRng,
) -> FairReport {
    let alice = generate_private(cfg.n, cfg.m, cfg.hash, rng);
    let bob_material = generate_private(cfg.n, cfg.m, cfg.hash, rng);
    run_with_materials(cfg, bob, tap, alice, bob_material, rng)
}

fn prepare_sequence(bits: &BitString, bases: &[Basis]) -> Vec<ParticleSlot> {
    bits.bits()
        .iter()
        .zip(bases)
        .map(|(&bit, &basis)| ParticleSlot::data(PolarizationState::encode(bit, basis)))
        .collect()
}

fn with_decoys(
    slots: Vec<ParticleSlot>,
    l: usize,
    rng: &mut RunRng,
) -> (Vec<ParticleSlot>, Vec<DecoyRecord>) {
    let decoys = random_decoys(l, rng);
    interleave_decoys(slots, &decoys, rng)
}

fn run_with_materials(
    cfg: &FairConfig,
    bob: &FairBob,
    tap: Option<&mut dyn QuantumTap>,
    alice: PrivateKeyMaterial,
    bob_material: PrivateKeyMaterial,
    rng: &mut RunRng,
) -> FairReport {
    assert!(cfg.n >= 1 && cfg.m >= 1, "key and hash need at least a bit");
    let mut channel = Channel::new(tap);

    // Step 2: encode, reorder the key qubits, hide both sequences behind
    // decoys, and transmit. Alice sends first, then Bob.
    let alice_hash_slots = prepare_sequence(&alice.hash, &alice.hash_bases);
    let alice_key_slots = prepare_sequence(&alice.key, &alice.key_bases);
    let alice_key_permuted = alice.order.apply(&alice_key_slots);
    let (a_hash_seq, a_hash_record) = with_decoys(alice_hash_slots, cfg.l, rng);
    let (a_key_seq, a_key_record) = with_decoys(alice_key_permuted, cfg.l, rng);

    let bob_hash_slots = prepare_sequence(&bob_material.hash, &bob_material.hash_bases);
    let bob_key_slots = prepare_sequence(&bob_material.key, &bob_material.key_bases);
    let bob_key_permuted = bob_material.order.apply(&bob_key_slots);
    let (b_hash_seq, b_hash_record) = with_decoys(bob_hash_slots, cfg.l, rng);
    let (b_key_seq, b_key_record) = with_decoys(bob_key_permuted, cfg.l, rng);

    let to_bob_hash = channel.quantum_send(Party::Alice, SequenceId::AliceHash, a_hash_seq, rng);
    let to_bob_key = channel.quantum_send(Party::Alice, SequenceId::AliceKey, a_key_seq, rng);
    let to_alice_hash = channel.quantum_send(Party::Bob, SequenceId::BobHash, b_hash_seq, rng);
    let to_alice_key = channel.quantum_send(Party::Bob, SequenceId::BobKey, b_key_seq, rng);

    // Step 3: acknowledgements, decoy disclosure, measurement, comparison.
    channel.enter(Phase::PublicDiscussion);
    channel.classical_send(Party::Bob, MessageKind::Ack, Vec::new());
    channel.classical_send(Party::Alice, MessageKind::Ack, Vec::new());

    let mut decoy_checks = Vec::with_capacity(4);

    let discuss_direction =
        |channel: &mut Channel<'_>,
         sender: Party,
         pairs: Vec<(SequenceId, &[DecoyRecord], Vec<ParticleSlot>)>,
         rng: &mut RunRng|
         -> (bool, Vec<Vec<ParticleSlot>>, Vec<DecoyCheckDetail>) {
            let mut retained = Vec::new();
            let mut details = Vec::new();
            let mut mismatches = 0usize;
            let mut checked = 0usize;
            for (id, record, received) in pairs {
                let positions: Vec<usize> = record.iter().map(|r| r.position).collect();
                let bases: Vec<Basis> = record.iter().map(|r| r.prepared.basis()).collect();
                channel.classical_send(
                    sender,
                    MessageKind::DecoyPositions,
                    payload::encode(&payload::DecoyPositions {
                        sequence: id,
                        positions,
                    }),
                );
                channel.classical_send(
                    sender,
                    MessageKind::DecoyBases,
                    payload::encode(&payload::DecoyBases {
                        sequence: id,
                        bases: bases.clone(),
                        states: None,
                    }),
                );

                let (data, decoys) = extract_decoys(received, record)
                    .expect("sender's own record is well-formed");
                let results: Vec<u8> = decoys
                    .iter()
                    .zip(&bases)
                    .map(|(slot, &basis)| slot.measure(basis, rng).bit)
                    .collect();
                channel.classical_send(
                    sender.other(),
                    MessageKind::DecoyResults,
                    payload::encode(&payload::DecoyResults {
                        sequence: id,
                        bits: results.clone(),
                    }),
                );

                let detail = DecoyCheckDetail {
                    sequence: id,
                    results: record
                        .iter()
                        .zip(&results)
                        .map(|(r, &bit)| (r.prepared.basis(), bit == r.prepared.bit()))
                        .collect(),
                };
                mismatches += detail.results.iter().filter(|(_, ok)| !ok).count();
                checked += detail.results.len();
                details.push(detail);
                retained.push(data);
            }
            let pass = check_passes(mismatches, checked, cfg.threshold);
            channel.classical_send(
                sender,
                MessageKind::ComparisonVerdict,
                payload::encode(&payload::ComparisonVerdict {
                    mismatches,
                    checked,
                    pass,
                }),
            );
            (pass, retained, details)
        };

    let (alice_pass, mut bob_retained, mut details) = discuss_direction(
        &mut channel,
        Party::Alice,
        vec![
            (SequenceId::AliceHash, a_hash_record.as_slice(), to_bob_hash),
            (SequenceId::AliceKey, a_key_record.as_slice(), to_bob_key),
        ],
        rng,
    );
    decoy_checks.append(&mut details);
    if !alice_pass {
        return FairReport {
            outcome: ProtocolOutcome::Aborted {
                phase: Phase::PublicDiscussion,
                reason: AbortReason::EavesdroppingDetected {
                    verdict_by: Party::Alice,
                },
            },
            transcript: channel.into_transcript(),
            decoy_checks,
            probe: None,
            manipulation_effective: None,
        };
    }

    let (bob_pass, mut alice_retained, mut details) = discuss_direction(
        &mut channel,
        Party::Bob,
        vec![
            (SequenceId::BobHash, b_hash_record.as_slice(), to_alice_hash),
            (SequenceId::BobKey, b_key_record.as_slice(), to_alice_key),
        ],
        rng,
    );
    decoy_checks.append(&mut details);
    if !bob_pass {
        return FairReport {
            outcome: ProtocolOutcome::Aborted {
                phase: Phase::PublicDiscussion,
                reason: AbortReason::EavesdroppingDetected {
                    verdict_by: Party::Bob,
                },
            },
            transcript: channel.into_transcript(),
            decoy_checks,
            probe: None,
            manipulation_effective: None,
        };
    }

    // Receiver-side retained data slots, in transit order.
    let bob_holds_key = bob_retained.pop().expect("key sequence retained");
    let bob_holds_hash = bob_retained.pop().expect("hash sequence retained");
    let alice_holds_key = alice_retained.pop().expect("key sequence retained");
    let alice_holds_hash = alice_retained.pop().expect("hash sequence retained");

    // An insider probe happens exactly here: discussion is complete, nothing
    // has been disclosed, and Bob measures one slot blind.
    if *bob == FairBob::ProbeOneSlot {
        let slot = rng.random_range(0..cfg.n);
        let guessed_basis = Basis::random(rng);
        let outcome = bob_holds_key[slot].measure(guessed_basis, rng);
        let true_position = alice.order.as_slice()[slot];
        let true_bit = alice.key.get(true_position);
        let probe = ProbeResult {
            slot,
            guessed_basis,
            guessed_bit: outcome.bit,
            true_position,
            true_bit,
            correct: outcome.bit == true_bit,
        };
        return FairReport {
            outcome: ProtocolOutcome::Aborted {
                phase: Phase::PublicDiscussion,
                reason: AbortReason::ProbeTruncated,
            },
            transcript: channel.into_transcript(),
            decoy_checks,
            probe: Some(probe),
            manipulation_effective: None,
        };
    }

    // Step 4: disclosure, Alice first. Bases for the key sequence travel in
    // transit order; the ordering announcement lets the peer undo the
    // reordering.
    channel.enter(Phase::KeyNegotiation);

    let alice_key_bases_transit = alice.order.apply(&alice.key_bases);
    channel.classical_send(
        Party::Alice,
        MessageKind::DataBases,
        payload::encode(&payload::DataBases {
            sequence: SequenceId::AliceHash,
            bases: alice.hash_bases.clone(),
        }),
    );
    channel.classical_send(
        Party::Alice,
        MessageKind::DataBases,
        payload::encode(&payload::DataBases {
            sequence: SequenceId::AliceKey,
            bases: alice_key_bases_transit.clone(),
        }),
    );
    channel.classical_send(
        Party::Alice,
        MessageKind::Permutation,
        payload::encode(&payload::AnnouncedOrder {
            order: alice.order.as_slice().to_vec(),
        }),
    );

    // Bob recovers Alice's hash and key; from here he could already compute
    // the shared key, which is fine: discussion is over.
    let bob_view_hash_a = measure_slots(&bob_holds_hash, &alice.hash_bases, rng);
    let bob_view_key_a_transit = measure_slots(&bob_holds_key, &alice_key_bases_transit, rng);
    let bob_view_key_a = alice.order.unapply_bits(&bob_view_key_a_transit);
    channel.note_key_derivation(Party::Bob);

    // Bob's disclosure; a manipulating Bob announces true bases but lies
    // about the ordering.
    let bob_key_bases_transit = bob_material.order.apply(&bob_material.key_bases);
    channel.classical_send(
        Party::Bob,
        MessageKind::DataBases,
        payload::encode(&payload::DataBases {
            sequence: SequenceId::BobHash,
            bases: bob_material.hash_bases.clone(),
        }),
    );
    channel.classical_send(
        Party::Bob,
        MessageKind::DataBases,
        payload::encode(&payload::DataBases {
            sequence: SequenceId::BobKey,
            bases: bob_key_bases_transit.clone(),
        }),
    );
    let announced_order: Vec<usize> = match bob {
        FairBob::Honest | FairBob::ProbeOneSlot => bob_material.order.as_slice().to_vec(),
        FairBob::FakeOrder(mode) => match mode {
            FakeOrderMode::Uniform => {
                Permutation::random_not_equal(cfg.n, &bob_material.order, rng)
                    .as_slice()
                    .to_vec()
            }
            FakeOrderMode::Transposition => {
                assert!(cfg.n >= 2, "a transposition needs two positions");
                let i = rng.random_range(0..cfg.n);
                let j = loop {
                    let j = rng.random_range(0..cfg.n);
                    if j != i {
                        break j;
                    }
                };
                let mut order = bob_material.order.as_slice().to_vec();
                order.swap(i, j);
                order
            }
            FakeOrderMode::Raw(order) => order.clone(),
        },
    };
    channel.classical_send(
        Party::Bob,
        MessageKind::Permutation,
        payload::encode(&payload::AnnouncedOrder {
            order: announced_order.clone(),
        }),
    );

    // Alice validates the announced ordering before using it.
    let bob_announced_order = match Permutation::from_vec(announced_order) {
        Ok(order) if order.len() == cfg.n => order,
        Ok(_) | Err(_) => {
            let detail = "announced ordering is not a permutation of the key positions";
            channel.classical_send(Party::Alice, MessageKind::Abort, detail.as_bytes().to_vec());
            return FairReport {
                outcome: ProtocolOutcome::Aborted {
                    phase: Phase::KeyNegotiation,
                    reason: AbortReason::MalformedAnnouncement {
                        offender: Party::Bob,
                        detail: detail.to_string(),
                    },
                },
                transcript: channel.into_transcript(),
                decoy_checks,
                probe: None,
                manipulation_effective: None,
            };
        }
    };

    let alice_view_hash_b = measure_slots(&alice_holds_hash, &bob_material.hash_bases, rng);
    let alice_view_key_b_transit = measure_slots(&alice_holds_key, &bob_key_bases_transit, rng);
    let alice_view_key_b = bob_announced_order.unapply_bits(&alice_view_key_b_transit);
    channel.note_key_derivation(Party::Alice);

    let manipulation_effective = match bob {
        FairBob::FakeOrder(_) => Some(alice_view_key_b != bob_material.key),
        _ => None,
    };

    // Step 5: hash verification, each side checking what it recovered.
    if !verify_hash(&alice_view_key_b, &alice_view_hash_b, cfg.hash) {
        let detail = "recovered key does not match its hash commitment";
        channel.classical_send(Party::Alice, MessageKind::Abort, detail.as_bytes().to_vec());
        return FairReport {
            outcome: ProtocolOutcome::Aborted {
                phase: Phase::KeyNegotiation,
                reason: AbortReason::ManipulationDetected {
                    detected_by: Party::Alice,
                    accused: Party::Bob,
                },
            },
            transcript: channel.into_transcript(),
            decoy_checks,
            probe: None,
            manipulation_effective,
        };
    }
    if !verify_hash(&bob_view_key_a, &bob_view_hash_a, cfg.hash) {
        let detail = "recovered key does not match its hash commitment";
        channel.classical_send(Party::Bob, MessageKind::Abort, detail.as_bytes().to_vec());
        return FairReport {
            outcome: ProtocolOutcome::Aborted {
                phase: Phase::KeyNegotiation,
                reason: AbortReason::ManipulationDetected {
                    detected_by: Party::Bob,
                    accused: Party::Alice,
                },
            },
            transcript: channel.into_transcript(),
            decoy_checks,
            probe: None,
            manipulation_effective,
        };
    }

    // Steps 6 and 7: raw key and privacy amplification under a public seed.
    let pa_seed: u64 = rng.random();
    channel.classical_send(
        Party::Alice,
        MessageKind::PaSeed,
        payload::encode(&payload::PaSeed { seed: pa_seed }),
    );
    let r = amplified_len(cfg.n, cfg.ratio);
    let matrix = ToeplitzMatrix::from_seed(pa_seed, r, cfg.n);
    let alice_key = matrix.apply(&combine_keys(&alice.key, &alice_view_key_b));
    let bob_key = matrix.apply(&combine_keys(&bob_view_key_a, &bob_material.key));

    FairReport {
        outcome: ProtocolOutcome::Completed { alice_key, bob_key },
        transcript: channel.into_transcript(),
        decoy_checks,
        probe: None,
        manipulation_effective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{phase_gate_violations, TranscriptEvent};
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn honest_run_completes_with_equal_keys() {
        let mut rng = RunRng::seed_from_u64(31);
        for n in [1, 2, 10, 128] {
            let cfg = FairConfig::new(n, 16, 8);
            let report = run_fair(&cfg, &FairBob::Honest, None, &mut rng);
            match report.outcome {
                ProtocolOutcome::Completed { alice_key, bob_key } => {
                    assert_eq!(alice_key, bob_key);
                    assert_eq!(alice_key.len(), amplified_len(n, cfg.ratio));
                }
                other => panic!("honest run aborted: {other:?}"),
            }
            assert!(phase_gate_violations(&report.transcript, 2).is_empty());
        }
    }

    #[test]
    fn each_party_transmits_n_plus_m_plus_2l_qubits() {
        let mut rng = RunRng::seed_from_u64(32);
        let cfg = FairConfig::new(10, 6, 4);
        let report = run_fair(&cfg, &FairBob::Honest, None, &mut rng);
        let mut per_party = std::collections::BTreeMap::new();
        for event in report.transcript.events() {
            if let TranscriptEvent::QuantumSend {
                sender, num_slots, ..
            } = event
            {
                *per_party.entry(*sender).or_insert(0usize) += num_slots;
            }
        }
        assert_eq!(per_party[&Party::Alice], 10 + 6 + 2 * 4);
        assert_eq!(per_party[&Party::Bob], 10 + 6 + 2 * 4);
    }

    #[test]
    fn flipping_one_private_key_bit_flips_one_raw_key_bit() {
        let mut rng = RunRng::seed_from_u64(33);
        let a = BitString::random(64, &mut rng);
        let b = BitString::random(64, &mut rng);
        let raw = combine_keys(&a, &b);
        for i in 0..64 {
            let mut a_flipped = a.clone();
            a_flipped.flip(i);
            let raw_flipped = combine_keys(&a_flipped, &b);
            assert_eq!(raw.hamming_distance(&raw_flipped), 1);
            assert_ne!(raw.get(i), raw_flipped.get(i));
        }
    }

    #[test]
    fn fake_order_is_detected_or_ineffective() {
        let mut rng = RunRng::seed_from_u64(34);
        let cfg = FairConfig::new(16, 32, 4);
        let mut detected = 0;
        let mut ineffective = 0;
        for _ in 0..300 {
            let report = run_fair(&cfg, &FairBob::FakeOrder(FakeOrderMode::Uniform), None, &mut rng);
            let effective = report.manipulation_effective.expect("fake-order run");
            match (&report.outcome, effective) {
                (ProtocolOutcome::Aborted { phase, reason }, true) => {
                    assert_eq!(*phase, Phase::KeyNegotiation);
                    assert_eq!(
                        *reason,
                        AbortReason::ManipulationDetected {
                            detected_by: Party::Alice,
                            accused: Party::Bob,
                        }
                    );
                    detected += 1;
                }
                (ProtocolOutcome::Completed { .. }, false) => ineffective += 1,
                (outcome, effective) =>

                    panic!("effective={effective} with outcome {outcome:?}"),
            }
        }
        assert!(detected > 250, "uniform fake orders should almost always bite");
        let _ = ineffective;
    }

    #[test]
    fn transposition_lie_is_caught_when_it_changes_the_key() {
        let mut rng = RunRng::seed_from_u64(35);
        let cfg = FairConfig::new(8, 32, 4);
        for _ in 0..200 {
            let report = run_fair(
                &cfg,
                &FairBob::FakeOrder(FakeOrderMode::Transposition),
                None,
                &mut rng,
            );
            let effective = report.manipulation_effective.expect("fake-order run");
            assert_eq!(report.outcome.is_completed(), !effective);
        }
    }

    #[test]
    fn non_permutation_announcement_aborts_as_malformed() {
        let mut rng = RunRng::seed_from_u64(36);
        let cfg = FairConfig::new(4, 8, 2);
        for raw in [vec![0, 0, 1, 2], vec![0, 1, 2, 9], vec![0, 1]] {
            let report = run_fair(
                &cfg,
                &FairBob::FakeOrder(FakeOrderMode::Raw(raw)),
                None,
                &mut rng,
            );
            match report.outcome {
                ProtocolOutcome::Aborted { phase, reason } => {
                    assert_eq!(phase, Phase::KeyNegotiation);
                    assert!(matches!(
                        reason,
                        AbortReason::MalformedAnnouncement {
                            offender: Party::Bob,
                            ..
                        }
                    ));
                }
                other => panic!("malformed announcement accepted: {other:?}"),
            }
        }
    }

    #[test]
    fn constant_key_makes_every_fake_order_ineffective() {
        // Exhaustive at n=4: any announced ordering recovers a constant key
        // unchanged, so the hash always verifies and nothing is detected.
        let zeros = BitString::zeros(4);
        for true_order in (0..4).permutations(4) {
            let true_perm = Permutation::from_vec(true_order).unwrap();
            let transit = true_perm.apply_bits(&zeros);
            for announced in (0..4).permutations(4) {
                let announced = Permutation::from_vec(announced).unwrap();
                let recovered = announced.unapply_bits(&transit);
                assert_eq!(recovered, zeros);
            }
        }
    }

    #[test]
    fn varied_key_has_some_order_that_changes_it() {
        // Complement of the constant-key case: for a non-constant key, some
        // announced ordering changes the recovered key.
        let key = BitString::parse("0101").unwrap();
        let true_perm = Permutation::identity(4);
        let transit = true_perm.apply_bits(&key);
        let changed = (0..4)
            .permutations(4)
            .map(|v| Permutation::from_vec(v).unwrap())
            .any(|announced| announced.unapply_bits(&transit) != key);
        assert!(changed);
    }

    #[test]
    fn probe_truncates_with_ground_truth_attached() {
        let mut rng = RunRng::seed_from_u64(37);
        let cfg = FairConfig::new(6, 8, 3);
        let report = run_fair(&cfg, &FairBob::ProbeOneSlot, None, &mut rng);
        assert_eq!(
            report.outcome,
            ProtocolOutcome::Aborted {
                phase: Phase::PublicDiscussion,
                reason: AbortReason::ProbeTruncated,
            }
        );
        let probe = report.probe.expect("probe result");
        assert!(probe.slot < 6);
        assert!(probe.true_position < 6);
        assert_eq!(probe.correct, probe.guessed_bit == probe.true_bit);
        // No disclosure happened: the transcript must still pass the gate.
        assert!(phase_gate_violations(&report.transcript, 2).is_empty());
    }

    #[test]
    fn probed_slot_position_is_uniform_over_orderings() {
        // The prober sees a slot index; its original position is the secret
        // ordering evaluated there. Over all orderings of n elements each
        // position appears equally often: (n-1)! times.
        for n in 2usize..=6 {
            let slot = 1 % n;
            let mut counts = vec![0usize; n];
            for order in (0..n).permutations(n) {
                counts[order[slot]] += 1;
            }
            let expected = (1..n).product::<usize>();
            assert!(counts.iter().all(|&c| c == expected), "n={n}: {counts:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn honest_completion_across_sizes(seed in 0u64..10_000, n in 1usize..48, m in 1usize..48) {
            let mut rng = RunRng::seed_from_u64(seed);
            let cfg = FairConfig::new(n, m, 3);
            let report = run_fair(&cfg, &FairBob::Honest, None, &mut rng);
            match report.outcome {
                ProtocolOutcome::Completed { alice_key, bob_key } => {
                    prop_assert_eq!(&alice_key, &bob_key);
                    prop_assert_eq!(alice_key.len(), amplified_len(n, 0.8));
                }
                other => prop_assert!(false, "aborted: {:?}", other),
            }
        }
    }
}
