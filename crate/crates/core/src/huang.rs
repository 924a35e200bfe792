//! The Bell-pair key agreement protocol this laboratory uses as its attack
//! target.
//!
//! Alice prepares n copies of |Φ+⟩, keeps one half of each and sends the
//! other halves to Bob behind decoy qubits. After the decoy check, Bob picks
//! a basis string and both parties measure their halves in those bases; the
//! perfectly correlated outcomes become the shared key.
//!
//! The design has a structural flaw: once the decoy positions are announced,
//! Bob can set the decoys aside, measure his data halves immediately, and
//! learn the entire key *before* any check verdict is issued. A malicious
//! Bob who dislikes the key simply declares the check failed (or, in the
//! variant where Alice judges, returns fabricated decoy results), forcing a
//! restart that looks exactly like channel noise. [`HuangBob::KeyManipulator`]
//! implements that behavior; the abort-retry driver in [`crate::adversary`]
//! loops it until the key comes out as desired.

use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::channel::{
    check_passes, extract_decoys, interleave_decoys, measure_qubits, measure_slots, payload,
    random_decoys, AbortReason, Channel, DecoyCheckDetail, MessageKind, Party, ParticleSlot,
    Phase, ProtocolOutcome, QuantumTap, SequenceId, SharedRegister, Transcript, TransitQubit,
};
use crate::quantum::{Basis, PolarizationState, QubitRegister};
use crate::RunRng;

/// Who issues the decoy-check verdict.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HuangVariant {
    /// Bob measures the decoys against Alice's announced initial states and
    /// declares the verdict himself.
    Original,
    /// Bob returns his decoy measurement results and Alice declares the
    /// verdict. Moving the verdict does not close the early-derivation
    /// window, which is the point this variant exists to demonstrate.
    Star3,
}

/// Bob's behavior in a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HuangBob {
    Honest,
    /// Measures the key during public discussion, before any verdict, and
    /// forces an abort unless `key[target_bit] == desired`.
    KeyManipulator { target_bit: usize, desired: u8 },
}

#[derive(Clone, Debug)]
pub struct HuangConfig {
    pub n: usize,
    /// Decoys inserted into the transmitted sequence.
    pub l: usize,
    /// Maximum tolerated decoy error rate.
    pub threshold: f64,
    pub variant: HuangVariant,
}

impl HuangConfig {
    pub fn new(n: usize, l: usize) -> HuangConfig {
        HuangConfig {
            n,
            l,
            threshold: 0.0,
            variant: HuangVariant::Original,
        }
    }
}

/// Everything observable about one run.
#[derive(Clone, Debug)]
pub struct HuangReport {
    pub outcome: ProtocolOutcome,
    pub transcript: Transcript,
    /// Per-decoy comparison results, as seen by whoever compared.
    pub decoy_checks: Vec<DecoyCheckDetail>,
}

/// Executes one run of the protocol.
pub fn run_huang(
    cfg: &HuangConfig,
    bob: &HuangBob,
    tap: Option<&mut dyn QuantumTap>,
    rng: &mut RunRng,
) -> HuangReport {
    assert!(cfg.n >= 1, "key length must be at least one bit");
    if let HuangBob::KeyManipulator { target_bit, .. } = bob {
        assert!(*target_bit < cfg.n, "target bit out of key range");
    }

    let mut channel = Channel::new(tap);

    // Step 1: n Bell pairs; Alice keeps qubit 0 of each, qubit 1 goes to Bob.
    let registers: Vec<SharedRegister> = (0..cfg.n)
        .map(|_| Rc::new(RefCell::new(QubitRegister::bell_phi_plus())))
        .collect();
    let alice_halves: Vec<TransitQubit> = registers
        .iter()
        .map(|reg| TransitQubit::shared(reg.clone(), 0))
        .collect();
    let bob_halves: Vec<ParticleSlot> = registers
        .iter()
        .map(|reg| ParticleSlot::data_shared(reg.clone(), 1))
        .collect();

    // Step 2: interleave decoys and transmit.
    let decoy_states = random_decoys(cfg.l, rng);
    let (sequence, decoy_record) = interleave_decoys(bob_halves, &decoy_states, rng);
    let received = channel.quantum_send(Party::Alice, SequenceId::BellHalves, sequence, rng);

    // Step 3: decoy disclosure and comparison.
    channel.enter(Phase::PublicDiscussion);
    channel.classical_send(Party::Bob, MessageKind::Ack, Vec::new());

    let positions: Vec<usize> = decoy_record.iter().map(|r| r.position).collect();
    let prepared: Vec<PolarizationState> = decoy_record.iter().map(|r| r.prepared).collect();
    let bases: Vec<Basis> = prepared.iter().map(|s| s.basis()).collect();
    channel.classical_send(
        Party::Alice,
        MessageKind::DecoyPositions,
        payload::encode(&payload::DecoyPositions {
            sequence: SequenceId::BellHalves,
            positions,
        }),
    );
    channel.classical_send(
        Party::Alice,
        MessageKind::DecoyBases,
        payload::encode(&payload::DecoyBases {
            sequence: SequenceId::BellHalves,
            bases: bases.clone(),
            states: match cfg.variant {
                HuangVariant::Original => Some(prepared.clone()),
                HuangVariant::Star3 => None,
            },
        }),
    );

    let (bob_data, bob_decoys) =
        extract_decoys(received, &decoy_record).expect("sender's own record is well-formed");
    let measured: Vec<u8> = bob_decoys
        .iter()
        .zip(&bases)
        .map(|(slot, &basis)| slot.measure(basis, rng).bit)
        .collect();

    // A manipulating Bob derives the key right now, before any verdict: he
    // has the decoy positions, so the data halves are his to measure.
    let mut early: Option<(Vec<Basis>, BitString)> = None;
    let mut force_abort = false;
    if let HuangBob::KeyManipulator {
        target_bit,
        desired,
    } = bob
    {
        let chosen: Vec<Basis> = (0..cfg.n).map(|_| Basis::random(rng)).collect();
        let key = measure_slots(&bob_data, &chosen, rng);
        channel.note_key_derivation(Party::Bob);
        force_abort = key.get(*target_bit) != *desired;
        early = Some((chosen, key));
    }

    let detail = DecoyCheckDetail {
        sequence: SequenceId::BellHalves,
        results: match cfg.variant {
            // Bob compares his honest measurements against the states.
            HuangVariant::Original => prepared
                .iter()
                .zip(&measured)
                .map(|(state, &bit)| (state.basis(), bit == state.bit()))
                .collect(),
            // Alice compares whatever Bob reported against the states.
            HuangVariant::Star3 => {
                let reported: Vec<u8> = if force_abort {
                    measured.iter().map(|&b| b ^ 1).collect()
                } else {
                    measured.clone()
                };
                channel.classical_send(
                    Party::Bob,
                    MessageKind::DecoyResults,
                    payload::encode(&payload::DecoyResults {
                        sequence: SequenceId::BellHalves,
                        bits: reported.clone(),
                    }),
                );
                prepared
                    .iter()
                    .zip(&reported)
                    .map(|(state, &bit)| (state.basis(), bit == state.bit()))
                    .collect()
            }
        },
    };

    let mismatches = detail.results.iter().filter(|(_, ok)| !ok).count();
    let (verdict_by, pass) = match cfg.variant {
        HuangVariant::Original => {
            // A manipulating Bob lies outright; his fabricated count claims
            // every decoy failed.
            let (claimed, pass) = if force_abort {
                (cfg.l, false)
            } else {
                (mismatches, check_passes(mismatches, cfg.l, cfg.threshold))
            };
            channel.classical_send(
                Party::Bob,
                MessageKind::ComparisonVerdict,
                payload::encode(&payload::ComparisonVerdict {
                    mismatches: claimed,
                    checked: cfg.l,
                    pass,
                }),
            );
            (Party::Bob, pass)
        }
        HuangVariant::Star3 => {
            let pass = check_passes(mismatches, cfg.l, cfg.threshold);
            channel.classical_send(
                Party::Alice,
                MessageKind::ComparisonVerdict,
                payload::encode(&payload::ComparisonVerdict {
                    mismatches,
                    checked: cfg.l,
                    pass,
                }),
            );
            (Party::Alice, pass)
        }
    };

    if !pass {
        return HuangReport {
            outcome: ProtocolOutcome::Aborted {
                phase: Phase::PublicDiscussion,
                reason: AbortReason::EavesdroppingDetected { verdict_by },
            },
            transcript: channel.into_transcript(),
            decoy_checks: vec![detail],
        };
    }

    // Step 4: Bob announces the basis string; both parties measure.
    channel.enter(Phase::KeyNegotiation);
    let (chosen, bob_key) = match early {
        Some((chosen, key)) => (chosen, Some(key)),
        None => (
            (0..cfg.n).map(|_| Basis::random(rng)).collect(),
            None,
        ),
    };
    channel.classical_send(
        Party::Bob,
        MessageKind::DataBases,
        payload::encode(&payload::DataBases {
            sequence: SequenceId::BellHalves,
            bases: chosen.clone(),
        }),
    );

    let bob_key = match bob_key {
        Some(key) => key,
        None => {
            let key = measure_slots(&bob_data, &chosen, rng);
            channel.note_key_derivation(Party::Bob);
            key
        }
    };
    let alice_key = measure_qubits(&alice_halves, &chosen, rng);
    channel.note_key_derivation(Party::Alice);

    HuangReport {
        outcome: ProtocolOutcome::Completed { alice_key, bob_key },
        transcript: channel.into_transcript(),
        decoy_checks: vec![detail],
    }
}
