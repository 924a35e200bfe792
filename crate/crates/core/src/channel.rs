//! Simulated quantum and authenticated-classical channels between Alice and
//! Bob, with decoy interleaving, an adversary tap point, and full transcript
//! recording.
//!
//! The classical channel is authenticated and lossless: an adversary may read
//! every message but can never alter one. The quantum channel is noiseless;
//! the only disturbance comes from an attached [`QuantumTap`].

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::quantum::{Basis, MeasurementOutcome, PolarizationState, QubitRegister};
use crate::RunRng;

/// A protocol participant. Outside eavesdroppers never author transcript
/// events, so they need no variant here.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Protocol stage. The ordering is load-bearing: a transcript's events must
/// be monotone non-decreasing in phase, and key material may only be
/// disclosed in the final stage.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    ParticleExchange,
    PublicDiscussion,
    KeyNegotiation,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::ParticleExchange => "particle-exchange",
            Phase::PublicDiscussion => "public-discussion",
            Phase::KeyNegotiation => "key-negotiation",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Label for one logical quantum transmission. Taps use these to decide
/// coverage, and per-decoy detection statistics are keyed by them.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceId {
    /// The entangled-pair halves a Bell-state protocol sends to Bob.
    BellHalves,
    /// Alice's hash-carrying sequence.
    AliceHash,
    /// Alice's reordered key-carrying sequence.
    AliceKey,
    /// Bob's hash-carrying sequence.
    BobHash,
    /// Bob's reordered key-carrying sequence.
    BobKey,
}

impl SequenceId {
    pub fn sender(self) -> Party {
        match self {
            SequenceId::BellHalves | SequenceId::AliceHash | SequenceId::AliceKey => Party::Alice,
            SequenceId::BobHash | SequenceId::BobKey => Party::Bob,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SequenceId::BellHalves => "bell-halves",
            SequenceId::AliceHash => "alice-hash",
            SequenceId::AliceKey => "alice-key",
            SequenceId::BobHash => "bob-hash",
            SequenceId::BobKey => "bob-key",
        }
    }
}

/// Kind tag for classical announcements.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    Ack,
    DecoyPositions,
    DecoyBases,
    DecoyResults,
    ComparisonVerdict,
    DataBases,
    Permutation,
    /// Public seed for the privacy-amplification matrix.
    PaSeed,
    Abort,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Ack => "ack",
            MessageKind::DecoyPositions => "decoy-positions",
            MessageKind::DecoyBases => "decoy-bases",
            MessageKind::DecoyResults => "decoy-results",
            MessageKind::ComparisonVerdict => "comparison-verdict",
            MessageKind::DataBases => "data-bases",
            MessageKind::Permutation => "permutation",
            MessageKind::PaSeed => "pa-seed",
            MessageKind::Abort => "abort",
        }
    }
}

/// One announcement over the authenticated classical channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalMessage {
    pub sender: Party,
    pub phase: Phase,
    pub kind: MessageKind,
    /// Serialized announcement payload (see [`payload`]).
    pub body: Vec<u8>,
}

/// One transcript entry: a classical message, a quantum transmission record,
/// or an instrumentation note that a party has computed the full shared key.
///
/// The key-derivation note is not a protocol message. It exists so the
/// transcript linter can flag a party that derives the key before public
/// discussion has concluded, which is invisible in message traffic alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TranscriptEvent {
    Classical(ClassicalMessage),
    QuantumSend {
        sender: Party,
        phase: Phase,
        sequence: SequenceId,
        num_slots: usize,
    },
    KeyDerivation {
        party: Party,
        phase: Phase,
    },
}

impl TranscriptEvent {
    pub fn phase(&self) -> Phase {
        match self {
            TranscriptEvent::Classical(m) => m.phase,
            TranscriptEvent::QuantumSend { phase, .. } => *phase,
            TranscriptEvent::KeyDerivation { phase, .. } => *phase,
        }
    }

    pub fn sender(&self) -> Party {
        match self {
            TranscriptEvent::Classical(m) => m.sender,
            TranscriptEvent::QuantumSend { sender, .. } => *sender,
            TranscriptEvent::KeyDerivation { party, .. } => *party,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TranscriptEvent::Classical(m) => m.kind.name(),
            TranscriptEvent::QuantumSend { .. } => "quantum-send",
            TranscriptEvent::KeyDerivation { .. } => "key-derivation",
        }
    }

    fn body_hex(&self) -> String {
        match self {
            TranscriptEvent::Classical(m) => hex::encode(&m.body),
            TranscriptEvent::QuantumSend {
                sequence,
                num_slots,
                ..
            } => hex::encode(format!("{}:{num_slots}", sequence.name())),
            TranscriptEvent::KeyDerivation { .. } => String::new(),
        }
    }
}

/// Ordered log of every event in one protocol run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    /// Appends an event, enforcing monotone phase ordering. A regression in
    /// phase is a protocol-logic bug, never a legitimate run, so it panics.
    fn push(&mut self, event: TranscriptEvent) {
        if let Some(last) = self.events.last() {
            assert!(
                last.phase() <= event.phase(),
                "transcript phase went backwards: {} after {}",
                event.phase(),
                last.phase(),
            );
        }
        self.events.push(event);
    }

    /// Line-delimited JSON, one event per line:
    /// `{"seq":…,"phase":…,"sender":…,"kind":…,"body_hex":…}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (seq, event) in self.events.iter().enumerate() {
            let line = serde_json::json!({
                "seq": seq,
                "phase": event.phase().name(),
                "sender": event.sender().name(),
                "kind": event.kind_name(),
                "body_hex": event.body_hex(),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Indices of transcript events that disclose key material before public
/// discussion has finished.
///
/// Discussion is finished once `required_verdicts` comparison-verdict
/// messages have been recorded (two in the committed-key protocol, one in
/// the Bell-pair protocol). Any data-bases or permutation announcement, or
/// any key-derivation note, seen earlier is a violation of the rule that the
/// final key must not be derivable before the channel check concludes.
pub fn phase_gate_violations(transcript: &Transcript, required_verdicts: usize) -> Vec<usize> {
    let mut verdicts = 0usize;
    let mut violations = Vec::new();
    for (i, event) in transcript.events().iter().enumerate() {
        if verdicts >= required_verdicts {
            break;
        }
        match event {
            TranscriptEvent::Classical(m) if m.kind == MessageKind::ComparisonVerdict => {
                verdicts += 1;
            }
            TranscriptEvent::Classical(m)
                if m.kind == MessageKind::DataBases || m.kind == MessageKind::Permutation =>
            {
                violations.push(i);
            }
            TranscriptEvent::KeyDerivation { .. } => violations.push(i),
            _ => {}
        }
    }
    violations
}

/// Why a run stopped before completing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum AbortReason {
    /// A decoy comparison exceeded the error threshold. The blame goes to an
    /// unnamed channel eavesdropper; `verdict_by` is only who declared it.
    EavesdroppingDetected { verdict_by: Party },
    /// A recovered key failed its hash check; the checker accuses the peer.
    ManipulationDetected { detected_by: Party, accused: Party },
    /// An announcement failed validation (for example a claimed ordering
    /// that is not a permutation).
    MalformedAnnouncement { offender: Party, detail: String },
    /// The run was cut short by an instrumented single-particle probe
    /// experiment; not a protocol-level detection.
    ProbeTruncated,
}

impl AbortReason {
    /// Compact label used as a statistics key; excludes free-form detail.
    pub fn label(&self) -> String {
        match self {
            AbortReason::EavesdroppingDetected { verdict_by } => {
                format!("eavesdropping-detected(verdict-by={verdict_by})")
            }
            AbortReason::ManipulationDetected {
                detected_by,
                accused,
            } => format!("manipulation-detected(by={detected_by},accused={accused})"),
            AbortReason::MalformedAnnouncement { offender, .. } => {
                format!("malformed-announcement(offender={offender})")
            }
            AbortReason::ProbeTruncated => "probe-truncated".to_string(),
        }
    }
}

/// Terminal state of a protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum ProtocolOutcome {
    Completed {
        alice_key: BitString,
        bob_key: BitString,
    },
    Aborted {
        phase: Phase,
        #[serde(flatten)]
        reason: AbortReason,
    },
}

impl ProtocolOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, ProtocolOutcome::Completed { .. })
    }

    /// "phase/reason" label for aborted runs, used as a statistics key.
    pub fn abort_label(&self) -> Option<String> {
        match self {
            ProtocolOutcome::Completed { .. } => None,
            ProtocolOutcome::Aborted { phase, reason } => {
                Some(format!("{}/{}", phase.name(), reason.label()))
            }
        }
    }
}

/// Per-decoy comparison results for one transmitted sequence: the basis each
/// decoy was prepared in and whether the returned measurement matched.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoyCheckDetail {
    pub sequence: SequenceId,
    pub results: Vec<(Basis, bool)>,
}

/// A qubit in flight: a handle into a (possibly shared, possibly entangled)
/// register plus the index of this qubit within it.
pub type SharedRegister = Rc<RefCell<QubitRegister>>;

#[derive(Clone, Debug)]
pub struct TransitQubit {
    pub register: SharedRegister,
    pub qubit: usize,
}

impl TransitQubit {
    /// A fresh single qubit in the given state, in its own register.
    pub fn fresh(state: PolarizationState) -> TransitQubit {
        TransitQubit {
            register: Rc::new(RefCell::new(QubitRegister::single(state))),
            qubit: 0,
        }
    }

    /// A handle to one qubit of an existing shared register.
    pub fn shared(register: SharedRegister, qubit: usize) -> TransitQubit {
        assert!(qubit < register.borrow().num_qubits());
        TransitQubit { register, qubit }
    }

    pub fn measure(&self, basis: Basis, rng: &mut RunRng) -> MeasurementOutcome {
        self.register.borrow_mut().measure(self.qubit, basis, rng)
    }

    /// The register this handle lives in.
    pub fn register(&self) -> &SharedRegister {
        &self.register
    }

    /// Index of this qubit within its register.
    pub fn index(&self) -> usize {
        self.qubit
    }
}

/// Whether a slot carries payload data or a decoy. Private to the channel:
/// receiving parties learn decoy positions only from announcements, never
/// from the slots themselves.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum SlotOrigin {
    Data,
    Decoy,
}

/// One position in a transmitted sequence.
///
/// Taps see only the qubit payload; the origin tag is bookkeeping that rides
/// along with the position so the sender's decoy record stays meaningful
/// even when an adversary substitutes fresh qubits.
#[derive(Clone, Debug)]
pub struct ParticleSlot {
    payload: TransitQubit,
    origin: SlotOrigin,
}

impl ParticleSlot {
    /// A data slot carrying a freshly prepared single qubit.
    pub fn data(state: PolarizationState) -> ParticleSlot {
        ParticleSlot {
            payload: TransitQubit::fresh(state),
            origin: SlotOrigin::Data,
        }
    }

    /// A data slot referencing one qubit of a shared entangled register.
    pub fn data_shared(register: SharedRegister, qubit: usize) -> ParticleSlot {
        ParticleSlot {
            payload: TransitQubit::shared(register, qubit),
            origin: SlotOrigin::Data,
        }
    }

    fn decoy(state: PolarizationState) -> ParticleSlot {
        ParticleSlot {
            payload: TransitQubit::fresh(state),
            origin: SlotOrigin::Decoy,
        }
    }

    pub fn measure(&self, basis: Basis, rng: &mut RunRng) -> MeasurementOutcome {
        self.payload.measure(basis, rng)
    }

    pub fn qubit(&self) -> &TransitQubit {
        &self.payload
    }

    /// Pointer identity of the underlying register; used by tests to verify
    /// untapped delivery forwards the very same qubits.
    pub fn same_register(&self, other: &ParticleSlot) -> bool {
        Rc::ptr_eq(&self.payload.register, &other.payload.register)
    }
}

/// Measures each slot in its announced basis and decodes the key bits.
pub fn measure_slots(slots: &[ParticleSlot], bases: &[Basis], rng: &mut RunRng) -> BitString {
    assert_eq!(slots.len(), bases.len(), "one basis per slot");
    let mut out = BitString::zeros(0);
    for (slot, &basis) in slots.iter().zip(bases) {
        out.push(crate::quantum::decode(&slot.measure(basis, rng)));
    }
    out
}

/// [`measure_slots`] for locally retained qubit handles.
pub fn measure_qubits(qubits: &[TransitQubit], bases: &[Basis], rng: &mut RunRng) -> BitString {
    assert_eq!(qubits.len(), bases.len(), "one basis per qubit");
    let mut out = BitString::zeros(0);
    for (qubit, &basis) in qubits.iter().zip(bases) {
        out.push(crate::quantum::decode(&qubit.measure(basis, rng)));
    }
    out
}

/// Position and prepared state of one decoy, kept by the sender until the
/// public discussion discloses it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoyRecord {
    pub position: usize,
    pub prepared: PolarizationState,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("malformed decoy record: {0}")]
    MalformedRecord(String),
}

/// Draws `l` decoy states uniformly from {|0⟩, |1⟩, |+⟩, |−⟩}.
pub fn random_decoys(l: usize, rng: &mut RunRng) -> Vec<PolarizationState> {
    (0..l)
        .map(|_| PolarizationState::encode(rng.random_range(0..2), Basis::random(rng)))
        .collect()
}

/// Inserts decoy qubits at uniformly random positions among the data slots,
/// preserving the data's relative order. Returns the interleaved sequence
/// and the sender's record of where each decoy went (positions strictly
/// increasing).
pub fn interleave_decoys(
    data: Vec<ParticleSlot>,
    decoys: &[PolarizationState],
    rng: &mut RunRng,
) -> (Vec<ParticleSlot>, Vec<DecoyRecord>) {
    let total = data.len() + decoys.len();
    let mut positions: Vec<usize> = rand::seq::index::sample(rng, total, decoys.len()).into_vec();
    positions.sort_unstable();

    let mut record = Vec::with_capacity(decoys.len());
    let mut out = Vec::with_capacity(total);
    let mut data_iter = data.into_iter();
    let mut next_decoy = 0usize;
    for position in 0..total {
        if next_decoy < positions.len() && positions[next_decoy] == position {
            let state = decoys[next_decoy];
            out.push(ParticleSlot::decoy(state));
            record.push(DecoyRecord {
                position,
                prepared: state,
            });
            next_decoy += 1;
        } else {
            out.push(data_iter.next().expect("data slots exhausted"));
        }
    }
    (out, record)
}

/// Splits an interleaved sequence back into data (original relative order)
/// and decoy slots, given the announced decoy record. Inverse of
/// [`interleave_decoys`].
pub fn extract_decoys(
    interleaved: Vec<ParticleSlot>,
    record: &[DecoyRecord],
) -> Result<(Vec<ParticleSlot>, Vec<ParticleSlot>), ChannelError> {
    let total = interleaved.len();
    let mut last: Option<usize> = None;
    for r in record {
        if r.position >= total {
            return Err(ChannelError::MalformedRecord(format!(
                "position {} out of range 0..{total}",
                r.position
            )));
        }
        if let Some(prev) = last {
            if r.position <= prev {
                return Err(ChannelError::MalformedRecord(format!(
                    "positions not strictly increasing at {}",
                    r.position
                )));
            }
        }
        last = Some(r.position);
    }

    let mut data = Vec::with_capacity(total - record.len());
    let mut decoys = Vec::with_capacity(record.len());
    let mut next = 0usize;
    for (position, slot) in interleaved.into_iter().enumerate() {
        if next < record.len() && record[next].position == position {
            decoys.push(slot);
            next += 1;
        } else {
            data.push(slot);
        }
    }
    Ok((data, decoys))
}

/// Threshold rule for the decoy comparison: the run continues iff the error
/// rate does not exceed the threshold. An empty check trivially passes.
pub fn check_passes(mismatches: usize, checked: usize, threshold: f64) -> bool {
    if checked == 0 {
        return true;
    }
    (mismatches as f64) / (checked as f64) <= threshold
}

/// An adversary attached to the quantum channel.
///
/// For each transmission the channel first asks `covers`; if true, the tap
/// receives the in-flight qubits and returns what gets delivered, one qubit
/// per slot. Returning the inputs unchanged models a passive presence.
pub trait QuantumTap {
    fn covers(&self, sequence: SequenceId) -> bool;

    fn intercept(
        &mut self,
        sequence: SequenceId,
        qubits: Vec<TransitQubit>,
        rng: &mut RunRng,
    ) -> Vec<TransitQubit>;
}

/// The channel pair for one run: records the transcript, tracks the current
/// phase, and routes quantum transmissions through an optional tap.
pub struct Channel<'t> {
    transcript: Transcript,
    tap: Option<&'t mut dyn QuantumTap>,
    phase: Phase,
}

impl<'t> Channel<'t> {
    pub fn new(tap: Option<&'t mut dyn QuantumTap>) -> Channel<'t> {
        Channel {
            transcript: Transcript::default(),
            tap,
            phase: Phase::ParticleExchange,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Advances the run to a later phase. Going backwards is a protocol bug.
    pub fn enter(&mut self, phase: Phase) {
        assert!(self.phase <= phase, "cannot re-enter an earlier phase");
        self.phase = phase;
    }

    /// Transmits a sequence of qubits, recording the event and applying the
    /// tap if one covers this sequence. Untapped delivery is the identity.
    pub fn quantum_send(
        &mut self,
        sender: Party,
        sequence: SequenceId,
        slots: Vec<ParticleSlot>,
        rng: &mut RunRng,
    ) -> Vec<ParticleSlot> {
        self.transcript.push(TranscriptEvent::QuantumSend {
            sender,
            phase: self.phase,
            sequence,
            num_slots: slots.len(),
        });
        match self.tap.as_deref_mut() {
            Some(tap) if tap.covers(sequence) => {
                let (qubits, origins): (Vec<_>, Vec<_>) = slots
                    .into_iter()
                    .map(|slot| (slot.payload, slot.origin))
                    .unzip();
                let delivered = tap.intercept(sequence, qubits, rng);
                assert_eq!(
                    delivered.len(),
                    origins.len(),
                    "tap must deliver exactly one qubit per slot"
                );
                delivered
                    .into_iter()
                    .zip(origins)
                    .map(|(payload, origin)| ParticleSlot { payload, origin })
                    .collect()
            }
            _ => slots,
        }
    }

    /// Sends a classical announcement. The channel is authenticated: the
    /// message is recorded and delivered exactly as sent.
    pub fn classical_send(&mut self, sender: Party, kind: MessageKind, body: Vec<u8>) {
        self.transcript
            .push(TranscriptEvent::Classical(ClassicalMessage {
                sender,
                phase: self.phase,
                kind,
                body,
            }));
    }

    /// Records that `party` has just computed the full shared key. Pure
    /// instrumentation for the phase-gate linter; sends nothing.
    pub fn note_key_derivation(&mut self, party: Party) {
        self.transcript.push(TranscriptEvent::KeyDerivation {
            party,
            phase: self.phase,
        });
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}

/// Announcement payload schemas. Bodies travel as serialized JSON so that
/// transcript logs stay self-describing.
pub mod payload {
    use serde::{Deserialize, Serialize};

    use super::SequenceId;
    use crate::quantum::{Basis, PolarizationState};

    #[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
    pub struct DecoyPositions {
        pub sequence: SequenceId,
        pub positions: Vec<usize>,
    }

    /// Decoy measurement bases; `states` is populated by protocols whose
    /// sender additionally discloses the full prepared states.
    #[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
    pub struct DecoyBases {
        pub sequence: SequenceId,
        pub bases: Vec<Basis>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub states: Option<Vec<PolarizationState>>,
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
    pub struct DecoyResults {
        pub sequence: SequenceId,
        pub bits: Vec<u8>,
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
    pub struct ComparisonVerdict {
        pub mismatches: usize,
        pub checked: usize,
        pub pass: bool,
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
    pub struct DataBases {
        pub sequence: SequenceId,
        pub bases: Vec<Basis>,
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
    pub struct AnnouncedOrder {
        pub order: Vec<usize>,
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
    pub struct PaSeed {
        pub seed: u64,
    }

    pub fn encode<T: Serialize>(value: &T) -> Vec<u8> {
        serde_json::to_vec(value).expect("payload serialization cannot fail")
    }
}
