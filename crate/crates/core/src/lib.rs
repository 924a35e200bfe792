//! Simulation laboratory for two-party quantum key agreement (QKA).
//!
//! The crate models two protocols over an ideal (noiseless, authenticated)
//! channel pair:
//!
//! * [`huang`] is an EPR-pair protocol in which both parties measure Bell-state
//!   halves in bases chosen after the eavesdropping check. It is included as
//!   the key-manipulation-vulnerable baseline: an insider can derive the key
//!   before issuing the channel verdict and abort at will.
//! * [`fair`] is a committed-key protocol: each party encodes a private key and
//!   its hash into single particles, reorders the key particles, and discloses
//!   bases and ordering only after the eavesdropping check, so a manipulated
//!   disclosure is caught by the hash comparison.
//!
//! [`quantum`] is the minimal state-vector core (one or two qubits, Z/X
//! preparation, projective measurement, CNOT), [`channel`] carries particle
//! sequences and classical announcements while recording a transcript,
//! [`adversary`] implements the outsider taps and insider behaviours, and
//! [`analysis`] is the seeded Monte-Carlo harness with the matching
//! closed-form expressions.
//!
//! All randomness flows through explicitly injected [`RunRng`] streams, so
//! every run and every experiment is reproducible from its seed.

pub mod adversary;
pub mod amplify;
pub mod analysis;
pub mod bits;
pub mod channel;
pub mod fair;
pub mod hash;
pub mod huang;
pub mod quantum;

/// The RNG used by every protocol run, tap, and experiment.
///
/// A concrete type rather than a generic keeps tap objects dyn-compatible;
/// ChaCha12 is fast, splittable by construction (differently keyed instances
/// are independent), and stable across platforms.
pub type RunRng = rand_chacha::ChaCha12Rng;

pub use adversary::{AdversaryConfig, TapCoverage};
pub use analysis::{run_monte_carlo, ProtocolKind, ScenarioConfig, ScenarioStats};
pub use bits::{BitString, Permutation};
pub use channel::{
    AbortReason, Channel, ClassicalMessage, Party, Phase, ProtocolOutcome, QuantumTap,
    SequenceId, Transcript, TransitQubit,
};
pub use quantum::{Basis, MeasurementOutcome, PolarizationState, QubitRegister};
