//! Attacks: outsider taps on the quantum channel and drivers for dishonest
//! insider strategies.
//!
//! Outsiders are [`QuantumTap`] implementations the channel consults on
//! every transmission. Insiders are not taps; they are alternative party
//! behaviors selected when a run starts, plus drivers here that repeat runs
//! the way a patient cheater would.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::channel::{AbortReason, Party, QuantumTap, SequenceId, TransitQubit};
use crate::fair::FakeOrderMode;
use crate::huang::{run_huang, HuangBob, HuangConfig};
use crate::quantum::{Basis, PolarizationState};
use crate::RunRng;

/// Adversary selection for a configured scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AdversaryConfig {
    /// Outsider measuring and resending each covered qubit.
    InterceptResend {
        #[serde(default)]
        coverage: TapCoverage,
    },
    /// Outsider entangling an ancilla with each covered qubit.
    CnotCe {
        #[serde(default)]
        coverage: TapCoverage,
    },
    /// Insider Bob aborting Bell-pair runs until a key bit comes out his way.
    InsiderHuangAbortRetry {
        target_bit: usize,
        desired: u8,
        #[serde(default = "default_max_restarts")]
        max_restarts: usize,
    },
    /// Insider Bob measuring one committed qubit blind, ending the run.
    InsiderFairProbe,
    /// Insider Bob announcing a fake qubit ordering.
    InsiderFairFakePermutation {
        #[serde(default)]
        mode: FakeOrderChoice,
    },
}

fn default_max_restarts() -> usize {
    64
}

/// Configuration-level fake-order strategies. The raw-vector strategy stays
/// out of here: it is exercised directly in tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FakeOrderChoice {
    #[default]
    Uniform,
    Transposition,
}

impl From<FakeOrderChoice> for FakeOrderMode {
    fn from(choice: FakeOrderChoice) -> FakeOrderMode {
        match choice {
            FakeOrderChoice::Uniform => FakeOrderMode::Uniform,
            FakeOrderChoice::Transposition => FakeOrderMode::Transposition,
        }
    }
}

impl AdversaryConfig {
    /// Short scenario-label fragment.
    pub fn label(&self) -> &'static str {
        match self {
            AdversaryConfig::InterceptResend { .. } => "intercept-resend",
            AdversaryConfig::CnotCe { .. } => "cnot-ce",
            AdversaryConfig::InsiderHuangAbortRetry { .. } => "insider-abort-retry",
            AdversaryConfig::InsiderFairProbe => "insider-probe",
            AdversaryConfig::InsiderFairFakePermutation { .. } => "insider-fake-permutation",
        }
    }

    /// Coverage of the tap this config describes, if it describes one.
    pub fn tap_coverage(&self) -> Option<TapCoverage> {
        match self {
            AdversaryConfig::InterceptResend { coverage } => Some(*coverage),
            AdversaryConfig::CnotCe { coverage } => Some(*coverage),
            _ => None,
        }
    }
}

/// Which transmitted sequences a tap touches.
///
/// Narrow coverage keeps the detection arithmetic legible: with only one
/// sequence tapped, the number of decoys standing guard equals the
/// configured decoy count of that sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapCoverage {
    /// Alice's key-carrying sequence only. In the Bell-pair protocol that
    /// is the one traveling sequence of pair halves.
    #[default]
    AliceKey,
    /// Everything Alice transmits.
    Alice,
    /// Every quantum transmission from either party.
    All,
}

impl TapCoverage {
    pub fn covers(self, sequence: SequenceId) -> bool {
        match self {
            TapCoverage::AliceKey => {
                matches!(sequence, SequenceId::AliceKey | SequenceId::BellHalves)
            }
            TapCoverage::Alice => sequence.sender() == Party::Alice,
            TapCoverage::All => true,
        }
    }
}

/// Classic intercept-resend: measure each passing qubit in a random basis
/// and forward a fresh qubit prepared in the observed state.
///
/// On a decoy this guesses the preparation basis correctly half the time;
/// a wrong guess survives the sender's comparison with probability 1/2, so
/// each tapped decoy passes with probability 3/4.
#[derive(Default)]
pub struct InterceptResendTap {
    pub coverage: TapCoverage,
    /// Everything the tap read, per intercepted sequence.
    pub harvested: Vec<(SequenceId, Vec<u8>)>,
}

impl InterceptResendTap {
    pub fn new(coverage: TapCoverage) -> InterceptResendTap {
        InterceptResendTap {
            coverage,
            harvested: Vec::new(),
        }
    }
}

impl QuantumTap for InterceptResendTap {
    fn covers(&self, sequence: SequenceId) -> bool {
        self.coverage.covers(sequence)
    }

    fn intercept(
        &mut self,
        sequence: SequenceId,
        qubits: Vec<TransitQubit>,
        rng: &mut RunRng,
    ) -> Vec<TransitQubit> {
        let mut bits = Vec::with_capacity(qubits.len());
        let forwarded = qubits
            .into_iter()
            .map(|qubit| {
                let basis = Basis::random(rng);
                let outcome = qubit.measure(basis, rng);
                bits.push(outcome.bit);
                TransitQubit::fresh(PolarizationState::encode(outcome.bit, basis))
            })
            .collect();
        self.harvested.push((sequence, bits));
        forwarded
    }
}

/// Correlation-elicitation tap: entangle each passing qubit with a fresh
/// |0> ancilla through a controlled-NOT and forward the original.
///
/// Decoys prepared in the computational basis are untouched (they are
/// eigenstates of the control), while superposition decoys pick up a phase
/// kickback that flips them half the time: averaged over uniform decoys the
/// per-decoy detection probability is 1/4.
#[derive(Default)]
pub struct CnotTap {
    pub coverage: TapCoverage,
    /// Retained ancillas, one per intercepted qubit, per sequence.
    pub ancillas: Vec<(SequenceId, Vec<TransitQubit>)>,
}

impl CnotTap {
    pub fn new(coverage: TapCoverage) -> CnotTap {
        CnotTap {
            coverage,
            ancillas: Vec::new(),
        }
    }

    /// Reads out every retained ancilla in the computational basis. For
    /// qubits that were sent in that basis this reveals their bit exactly.
    pub fn harvest_z(&mut self, rng: &mut RunRng) -> Vec<(SequenceId, Vec<u8>)> {
        self.ancillas
            .drain(..)
            .map(|(sequence, qubits)| {
                let bits = qubits
                    .iter()
                    .map(|qubit| qubit.measure(Basis::Z, rng).bit)
                    .collect();
                (sequence, bits)
            })
            .collect()
    }
}

impl QuantumTap for CnotTap {
    fn covers(&self, sequence: SequenceId) -> bool {
        self.coverage.covers(sequence)
    }

    fn intercept(
        &mut self,
        sequence: SequenceId,
        qubits: Vec<TransitQubit>,
        _rng: &mut RunRng,
    ) -> Vec<TransitQubit> {
        let mut kept = Vec::with_capacity(qubits.len());
        let forwarded = qubits
            .into_iter()
            .map(|qubit| {
                let register = qubit.register().clone();
                {
                    let mut reg = register.borrow_mut();
                    assert_eq!(
                        reg.num_qubits(),
                        1,
                        "correlation tap needs a register with room for an ancilla"
                    );
                    *reg = reg.tensor_with(PolarizationState::Ket0);
                    reg.cnot(0, 1);
                }
                kept.push(TransitQubit::shared(register.clone(), 1));
                TransitQubit::shared(register, 0)
            })
            .collect();
        self.ancillas.push((sequence, kept));
        forwarded
    }
}

/// Outcome of one abort-and-retry campaign against the Bell-pair protocol.
#[derive(Clone, Debug)]
pub struct AbortRetryReport {
    /// Protocol executions used, the final one included.
    pub runs: usize,
    /// Whether a run completed with the desired key bit before the budget
    /// ran out.
    pub succeeded: bool,
    /// Keys of the completing run.
    pub final_keys: Option<(BitString, BitString)>,
    /// Aborts that blamed a party instead of an outside eavesdropper.
    /// The manipulation is undetectable, so this stays at zero.
    pub insider_accusations: usize,
}

/// Repeats the Bell-pair protocol with a key-manipulating Bob until his
/// target bit comes out as desired.
///
/// Each unwanted run is aborted under a feigned decoy failure, which the
/// protocol cannot distinguish from channel noise. The per-run success
/// probability is 1/2, so the expected number of executions is 2.
pub fn drive_abort_retry(
    cfg: &HuangConfig,
    target_bit: usize,
    desired: u8,
    max_restarts: usize,
    rng: &mut RunRng,
) -> AbortRetryReport {
    assert!(max_restarts >= 1, "at least one run");
    assert!(desired <= 1, "a key bit");
    let behavior = HuangBob::KeyManipulator {
        target_bit,
        desired,
    };
    let mut insider_accusations = 0;
    for attempt in 1..=max_restarts {
        let report = run_huang(cfg, &behavior, None, rng);
        match report.outcome {
            crate::channel::ProtocolOutcome::Completed { alice_key, bob_key } => {
                return AbortRetryReport {
                    runs: attempt,
                    succeeded: true,
                    final_keys: Some((alice_key, bob_key)),
                    insider_accusations,
                };
            }
            crate::channel::ProtocolOutcome::Aborted { reason, .. } => {
                if matches!(reason, AbortReason::ManipulationDetected { .. }) {
                    insider_accusations += 1;
                }
            }
        }
    }
    AbortRetryReport {
        runs: max_restarts,
        succeeded: false,
        final_keys: None,
        insider_accusations,
    }
}

/// Expected executions of an abort-and-retry campaign with per-run success
/// probability 1/2, summed exactly: sum over k of k * 2^-k.
pub fn expected_retry_runs() -> f64 {
    2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random_decoys;
    use rand::{Rng, SeedableRng};

    fn random_decoy_state(rng: &mut RunRng) -> PolarizationState {
        random_decoys(1, rng)[0]
    }

    #[test]
    fn coverage_selects_sequences() {
        use SequenceId::*;
        assert!(TapCoverage::AliceKey.covers(AliceKey));
        assert!(TapCoverage::AliceKey.covers(BellHalves));
        assert!(!TapCoverage::AliceKey.covers(AliceHash));
        assert!(!TapCoverage::AliceKey.covers(BobKey));
        assert!(TapCoverage::Alice.covers(AliceHash));
        assert!(TapCoverage::Alice.covers(BellHalves));
        assert!(!TapCoverage::Alice.covers(BobHash));
        for id in [BellHalves, AliceHash, AliceKey, BobHash, BobKey] {
            assert!(TapCoverage::All.covers(id));
        }
    }

    #[test]
    fn intercept_resend_decoy_survives_three_quarters_of_the_time() {
        let mut rng = RunRng::seed_from_u64(41);
        let trials = 40_000;
        let mut survived = 0;
        let mut tap = InterceptResendTap::new(TapCoverage::All);
        for _ in 0..trials {
            let state = random_decoy_state(&mut rng);
            let sent = vec![TransitQubit::fresh(state)];
            let delivered = tap.intercept(SequenceId::AliceKey, sent, &mut rng);
            let outcome = delivered[0].measure(state.basis(), &mut rng);
            if outcome.bit == state.bit() {
                survived += 1;
            }
        }
        let rate = survived as f64 / trials as f64;
        assert!((rate - 0.75).abs() < 0.01, "survival rate {rate}");
    }

    #[test]
    fn intercept_resend_on_pair_half_breaks_correlation_to_one_half_per_basis_mismatch() {
        // Measuring one half of an entangled pair and resending destroys
        // the correlation whenever the resend basis disagrees with the
        // final measurement basis; averaged over Eve's uniform basis the
        // halves agree 3/4 of the time.
        use crate::channel::SharedRegister;
        use crate::quantum::QubitRegister;
        use std::cell::RefCell;
        use std::rc::Rc;

        let mut rng = RunRng::seed_from_u64(42);
        let trials = 40_000;
        let mut agreed = 0;
        let mut tap = InterceptResendTap::new(TapCoverage::All);
        for _ in 0..trials {
            let register: SharedRegister =
                Rc::new(RefCell::new(QubitRegister::bell_phi_plus()));
            let kept = TransitQubit::shared(register.clone(), 0);
            let sent = vec![TransitQubit::shared(register, 1)];
            let delivered = tap.intercept(SequenceId::BellHalves, sent, &mut rng);
            let basis = Basis::random(&mut rng);
            let ours = kept.measure(basis, &mut rng);
            let theirs = delivered[0].measure(basis, &mut rng);
            if ours.bit == theirs.bit {
                agreed += 1;
            }
        }
        let rate = agreed as f64 / trials as f64;
        assert!((rate - 0.75).abs() < 0.01, "agreement rate {rate}");
    }

    #[test]
    fn cnot_tap_reads_computational_bits_exactly_and_invisibly() {
        let mut rng = RunRng::seed_from_u64(43);
        let mut tap = CnotTap::new(TapCoverage::All);
        let sent: Vec<TransitQubit> = [0u8, 1, 1, 0, 1]
            .iter()
            .map(|&bit| TransitQubit::fresh(PolarizationState::encode(bit, Basis::Z)))
            .collect();
        let delivered = tap.intercept(SequenceId::AliceKey, sent, &mut rng);
        let harvested = tap.harvest_z(&mut rng);
        assert_eq!(harvested[0].1, vec![0, 1, 1, 0, 1]);
        for (qubit, &bit) in delivered.iter().zip(&[0u8, 1, 1, 0, 1]) {
            assert_eq!(qubit.measure(Basis::Z, &mut rng).bit, bit);
        }
    }

    #[test]
    fn cnot_tap_flips_superposition_decoys_half_the_time() {
        let mut rng = RunRng::seed_from_u64(44);
        let trials = 20_000;
        let mut flipped = 0;
        for _ in 0..trials {
            let mut tap = CnotTap::new(TapCoverage::All);
            let state = if rng.random_bool(0.5) {
                PolarizationState::KetPlus
            } else {
                PolarizationState::KetMinus
            };
            let delivered =
                tap.intercept(SequenceId::AliceKey, vec![TransitQubit::fresh(state)], &mut rng);
            if delivered[0].measure(Basis::X, &mut rng).bit != state.bit() {
                flipped += 1;
            }
        }
        let rate = flipped as f64 / trials as f64;
        assert!((rate - 0.5).abs() < 0.015, "flip rate {rate}");
    }

    #[test]
    fn cnot_tap_per_decoy_detection_is_one_quarter() {
        let mut rng = RunRng::seed_from_u64(45);
        let trials = 40_000;
        let mut detected = 0;
        for _ in 0..trials {
            let mut tap = CnotTap::new(TapCoverage::All);
            let state = random_decoy_state(&mut rng);
            let delivered =
                tap.intercept(SequenceId::AliceKey, vec![TransitQubit::fresh(state)], &mut rng);
            if delivered[0].measure(state.basis(), &mut rng).bit != state.bit() {
                detected += 1;
            }
        }
        let rate = detected as f64 / trials as f64;
        assert!((rate - 0.25).abs() < 0.01, "detection rate {rate}");
    }

    #[test]
    fn abort_retry_driver_matches_geometric_expectation() {
        let mut rng = RunRng::seed_from_u64(46);
        let cfg = HuangConfig::new(8, 4);
        let drivers = 2_000;
        let mut total_runs = 0usize;
        for _ in 0..drivers {
            let report = drive_abort_retry(&cfg, 3, 1, 64, &mut rng);
            assert!(report.succeeded, "64 restarts exhaust only with p < 2^-64");
            assert_eq!(report.insider_accusations, 0);
            let (alice_key, bob_key) = report.final_keys.unwrap();
            assert_eq!(alice_key, bob_key);
            assert_eq!(bob_key.get(3), 1);
            total_runs += report.runs;
        }
        let mean = total_runs as f64 / drivers as f64;
        assert!(
            (mean - expected_retry_runs()).abs() < 0.1,
            "mean runs {mean}"
        );
    }

    #[test]
    fn adversary_config_json_shape_is_stable() {
        let cfg: AdversaryConfig =
            serde_json::from_str(r#"{"kind":"intercept-resend","coverage":"alice-key"}"#).unwrap();
        assert_eq!(
            cfg,
            AdversaryConfig::InterceptResend {
                coverage: TapCoverage::AliceKey
            }
        );
        let cfg: AdversaryConfig =
            serde_json::from_str(r#"{"kind":"insider-huang-abort-retry","target_bit":3,"desired":1}"#)
                .unwrap();
        assert_eq!(
            cfg,
            AdversaryConfig::InsiderHuangAbortRetry {
                target_bit: 3,
                desired: 1,
                max_restarts: 64
            }
        );
        let cfg: AdversaryConfig = serde_json::from_str(r#"{"kind":"insider-fair-probe"}"#).unwrap();
        assert_eq!(cfg, AdversaryConfig::InsiderFairProbe);
        let cfg: AdversaryConfig = serde_json::from_str(
            r#"{"kind":"insider-fair-fake-permutation","mode":"transposition"}"#,
        )
        .unwrap();
        assert_eq!(
            cfg,
            AdversaryConfig::InsiderFairFakePermutation {
                mode: FakeOrderChoice::Transposition
            }
        );
    }

    #[test]
    fn abort_retry_respects_the_budget() {
        let mut rng = RunRng::seed_from_u64(47);
        let cfg = HuangConfig::new(4, 2);
        let mut exhausted = 0;
        for _ in 0..200 {
            let report = drive_abort_retry(&cfg, 0, 0, 1, &mut rng);
            assert!(report.runs <= 1);
            if !report.succeeded {
                exhausted += 1;
                assert!(report.final_keys.is_none());
            }
        }
        // With a single allowed run, half the campaigns fail.
        assert!((50..150).contains(&exhausted), "exhausted {exhausted}");
    }
}
