//! Minimal state-vector simulator for one- and two-qubit registers.
//!
//! The protocols only ever need single polarized photons in the Z or X basis,
//! the |Φ+⟩ Bell pair, a CNOT, and projective measurement, so the simulator
//! supports exactly that. Amplitudes are complex for generality, though every
//! state reachable here happens to have real coordinates.
//!
//! Qubit order is big-endian: qubit 0 is the most significant bit of a basis
//! state's index, so for a two-qubit register the amplitude layout is
//! `[|00⟩, |01⟩, |10⟩, |11⟩]` with qubit 0 as the left bit.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::RunRng;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Probabilities within this distance of 0 or 1 are treated as exact, so a
/// deterministic measurement never renormalizes a numerically-zero branch.
const PROB_EPS: f64 = 1e-12;

/// Allowed drift of the squared norm from 1 before we declare the register
/// corrupted. Every supported operation is unitary or a projection followed
/// by renormalization, so larger drift means an internal bug.
const NORM_EPS: f64 = 1e-6;

/// Measurement basis for a single qubit.
///
/// `Z` is the computational basis {|0⟩, |1⟩}; `X` is the Hadamard basis
/// {|+⟩, |−⟩}.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    /// Uniform random basis choice.
    pub fn random(rng: &mut RunRng) -> Basis {
        if rng.random_range(0..2) == 0 {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn other(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }
}

/// The four photon polarization states the protocols transmit.
///
/// Encoding convention: |0⟩ and |+⟩ carry bit 0, |1⟩ and |−⟩ carry bit 1.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, Serialize, Deserialize)]
pub enum PolarizationState {
    Ket0,
    Ket1,
    KetPlus,
    KetMinus,
}

impl PolarizationState {
    /// The state encoding `bit` in `basis`.
    pub fn encode(bit: u8, basis: Basis) -> PolarizationState {
        assert!(bit <= 1, "bit values must be 0 or 1");
        match (basis, bit) {
            (Basis::Z, 0) => PolarizationState::Ket0,
            (Basis::Z, _) => PolarizationState::Ket1,
            (Basis::X, 0) => PolarizationState::KetPlus,
            (Basis::X, _) => PolarizationState::KetMinus,
        }
    }

    /// The basis this state is an eigenstate of.
    pub fn basis(self) -> Basis {
        match self {
            PolarizationState::Ket0 | PolarizationState::Ket1 => Basis::Z,
            PolarizationState::KetPlus | PolarizationState::KetMinus => Basis::X,
        }
    }

    /// The bit this state encodes under the fixed convention.
    pub fn bit(self) -> u8 {
        match self {
            PolarizationState::Ket0 | PolarizationState::KetPlus => 0,
            PolarizationState::Ket1 | PolarizationState::KetMinus => 1,
        }
    }

    /// Single-qubit amplitudes `[⟨0|ψ⟩, ⟨1|ψ⟩]`.
    pub fn amplitudes(self) -> [Complex64; 2] {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self {
            PolarizationState::Ket0 => [one, zero],
            PolarizationState::Ket1 => [zero, one],
            PolarizationState::KetPlus => [h, h],
            PolarizationState::KetMinus => [h, -h],
        }
    }
}

/// Result of a projective measurement: the observed bit, the basis it was
/// measured in, and the probability the Born rule assigned to it at the
/// moment of measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementOutcome {
    pub bit: u8,
    pub basis: Basis,
    pub probability: f64,
}

/// The key bit an outcome encodes: |0⟩ and |+⟩ carry 0, |1⟩ and |−⟩ carry 1.
///
/// Under the fixed encoding the eigenstate index equals the encoded bit, so
/// this is the identity on `bit`; it exists so protocol code states intent.
pub fn decode(outcome: &MeasurementOutcome) -> u8 {
    PolarizationState::encode(outcome.bit, outcome.basis).bit()
}

/// A register of one or two qubits with full state-vector amplitudes.
#[derive(Clone, Debug)]
pub struct QubitRegister {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl QubitRegister {
    /// Fresh single qubit in the given polarization state.
    pub fn single(state: PolarizationState) -> QubitRegister {
        QubitRegister {
            num_qubits: 1,
            amps: state.amplitudes().to_vec(),
        }
    }

    /// The Bell state |Φ+⟩ = (|00⟩ + |11⟩)/√2.
    pub fn bell_phi_plus() -> QubitRegister {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        QubitRegister {
            num_qubits: 2,
            amps: vec![h, zero, zero, h],
        }
    }

    /// Two-qubit product state `a ⊗ b` (qubit 0 is `a`).
    pub fn product(a: PolarizationState, b: PolarizationState) -> QubitRegister {
        let aa = a.amplitudes();
        let bb = b.amplitudes();
        let mut amps = Vec::with_capacity(4);
        for &x in &aa {
            for &y in &bb {
                amps.push(x * y);
            }
        }
        QubitRegister {
            num_qubits: 2,
            amps,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Born-rule probability of observing `bit` on `qubit` in `basis`,
    /// without disturbing the state.
    pub fn outcome_probability(&self, qubit: usize, basis: Basis, bit: u8) -> f64 {
        let mut probe = self.clone();
        if basis == Basis::X {
            probe.hadamard(qubit);
        }
        probe.z_outcome_probability(qubit, bit)
    }

    /// Measures `qubit` in `basis`, collapsing the register state.
    pub fn measure(&mut self, qubit: usize, basis: Basis, rng: &mut RunRng) -> MeasurementOutcome {
        // An X measurement is a Z measurement conjugated by Hadamard: rotate
        // the X eigenbasis onto the computational one, project, rotate back.
        if basis == Basis::X {
            self.hadamard(qubit);
        }
        let mut outcome = self.measure_z(qubit, rng);
        if basis == Basis::X {
            self.hadamard(qubit);
            outcome.basis = Basis::X;
        }
        outcome
    }

    /// CNOT with the given control and target qubits.
    pub fn cnot(&mut self, control: usize, target: usize) {
        assert_eq!(self.num_qubits, 2, "cnot needs a two-qubit register");
        assert!(control < 2 && target < 2 && control != target);
        let cmask = self.mask(control);
        let tmask = self.mask(target);
        // Swap amplitudes of |c=1, t=0⟩ and |c=1, t=1⟩.
        let i0 = cmask;
        let i1 = cmask | tmask;
        self.amps.swap(i0, i1);
    }

    /// Hadamard on one qubit. Used internally for X-basis measurement and by
    /// attack code that rotates a probe qubit.
    pub fn hadamard(&mut self, qubit: usize) {
        let mask = self.mask(qubit);
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let j = i | mask;
                let a = self.amps[i];
                let b = self.amps[j];
                self.amps[i] = h * (a + b);
                self.amps[j] = h * (a - b);
            }
        }
    }

    /// Extends a single-qubit register with a fresh qubit in `state`,
    /// producing `self ⊗ state` (the new qubit becomes qubit 1).
    pub fn tensor_with(&self, state: PolarizationState) -> QubitRegister {
        assert_eq!(
            self.num_qubits, 1,
            "register capacity is two qubits; cannot extend further"
        );
        let extra = state.amplitudes();
        let mut amps = Vec::with_capacity(4);
        for &x in &self.amps {
            for &y in &extra {
                amps.push(x * y);
            }
        }
        QubitRegister {
            num_qubits: 2,
            amps,
        }
    }

    /// Basis-state index bit mask for `qubit` (qubit 0 is most significant).
    fn mask(&self, qubit: usize) -> usize {
        assert!(qubit < self.num_qubits, "qubit index out of range");
        1 << (self.num_qubits - 1 - qubit)
    }

    fn z_outcome_probability(&self, qubit: usize, bit: u8) -> f64 {
        let mask = self.mask(qubit);
        let want = if bit == 1 { mask } else { 0 };
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    fn measure_z(&mut self, qubit: usize, rng: &mut RunRng) -> MeasurementOutcome {
        let norm: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        assert!(
            (norm - 1.0).abs() < NORM_EPS,
            "register norm drifted to {norm}; simulator bug"
        );

        let p1 = self.z_outcome_probability(qubit, 1);
        // Clamp numerically-deterministic outcomes so we never renormalize a
        // branch whose amplitude is pure rounding error.
        let bit = if p1 < PROB_EPS {
            0
        } else if p1 > 1.0 - PROB_EPS {
            1
        } else if rng.random_bool(p1) {
            1
        } else {
            0
        };
        let probability = if bit == 1 { p1 } else { 1.0 - p1 };

        // Project onto the observed branch and renormalize.
        let mask = self.mask(qubit);
        let want = if bit == 1 { mask } else { 0 };
        let scale = 1.0 / probability.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask == want {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        MeasurementOutcome {
            bit,
            basis: Basis::Z,
            probability,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-9, "{a} != {b}");
    }

    #[test]
    fn eigenstate_measurement_is_deterministic() {
        let mut rng = RunRng::seed_from_u64(1);
        for state in [
            PolarizationState::Ket0,
            PolarizationState::Ket1,
            PolarizationState::KetPlus,
            PolarizationState::KetMinus,
        ] {
            for _ in 0..20 {
                let mut reg = QubitRegister::single(state);
                let out = reg.measure(0, state.basis(), &mut rng);
                assert_eq!(out.bit, state.bit());
                assert_close(out.probability, 1.0);
            }
        }
    }

    #[test]
    fn wrong_basis_measurement_is_uniform() {
        // |+⟩ measured in Z yields 0 with probability exactly 1/2.
        let reg = QubitRegister::single(PolarizationState::KetPlus);
        assert_close(reg.outcome_probability(0, Basis::Z, 0), 0.5);
        let reg = QubitRegister::single(PolarizationState::Ket0);
        assert_close(reg.outcome_probability(0, Basis::X, 1), 0.5);
    }

    #[test]
    fn repeated_measurement_is_stable() {
        // Collapse is real: measuring again in the same basis repeats the
        // first outcome with certainty.
        let mut rng = RunRng::seed_from_u64(7);
        for trial in 0..50 {
            let mut reg = QubitRegister::single(PolarizationState::KetPlus);
            let first = reg.measure(0, Basis::Z, &mut rng);
            let second = reg.measure(0, Basis::Z, &mut rng);
            assert_eq!(first.bit, second.bit, "trial {trial}");
            assert_close(second.probability, 1.0);
        }
    }

    #[test]
    fn bell_pair_correlates_perfectly_in_z() {
        let mut rng = RunRng::seed_from_u64(3);
        let mut saw = [false, false];
        for _ in 0..100 {
            let mut reg = QubitRegister::bell_phi_plus();
            let a = reg.measure(0, Basis::Z, &mut rng);
            let b = reg.measure(1, Basis::Z, &mut rng);
            assert_close(a.probability, 0.5);
            assert_eq!(a.bit, b.bit);
            saw[a.bit as usize] = true;
        }
        assert!(saw[0] && saw[1], "both outcomes should occur in 100 draws");
    }

    #[test]
    fn bell_pair_correlates_perfectly_in_x() {
        // |Φ+⟩ = (|++⟩ + |−−⟩)/√2, so X measurements agree too.
        let mut rng = RunRng::seed_from_u64(4);
        for _ in 0..100 {
            let mut reg = QubitRegister::bell_phi_plus();
            let a = reg.measure(0, Basis::X, &mut rng);
            let b = reg.measure(1, Basis::X, &mut rng);
            assert_eq!(a.bit, b.bit);
        }
    }

    #[test]
    fn cnot_entangles_plus_zero_into_bell() {
        let mut reg = QubitRegister::product(PolarizationState::KetPlus, PolarizationState::Ket0);
        reg.cnot(0, 1);
        let bell = QubitRegister::bell_phi_plus();
        for (a, b) in reg.amplitudes().iter().zip(bell.amplitudes()) {
            assert_close((a - b).norm(), 0.0);
        }
    }

    #[test]
    fn cnot_flips_target_only_when_control_set() {
        let mut rng = RunRng::seed_from_u64(5);
        for (control_in, expect_target) in [(0u8, 0u8), (1, 1)] {
            let c = PolarizationState::encode(control_in, Basis::Z);
            let mut reg = QubitRegister::product(c, PolarizationState::Ket0);
            reg.cnot(0, 1);
            let t = reg.measure(1, Basis::Z, &mut rng);
            assert_eq!(t.bit, expect_target);
            let c_out = reg.measure(0, Basis::Z, &mut rng);
            assert_eq!(c_out.bit, control_in);
        }
    }

    #[test]
    fn cnot_on_x_eigenstates_leaves_control_product() {
        // |+⟩|+⟩ and |−⟩|+⟩ are CNOT eigenvectors: the target stays |+⟩ and
        // the control is undisturbed. This underpins the correlation
        // elicitation attack's invisibility on half the X decoys.
        let mut rng = RunRng::seed_from_u64(6);
        for control in [PolarizationState::KetPlus, PolarizationState::KetMinus] {
            let mut reg = QubitRegister::product(control, PolarizationState::KetPlus);
            reg.cnot(0, 1);
            let c = reg.measure(0, Basis::X, &mut rng);
            assert_eq!(c.bit, control.bit());
            assert_close(c.probability, 1.0);
        }
    }

    #[test]
    fn cnot_on_minus_target_phase_kicks_control() {
        // |+⟩|−⟩ → |−⟩|−⟩ under CNOT: the phase kickback flips the control
        // in the X basis, which is what the attack's X-decoy detection sees.
        let mut rng = RunRng::seed_from_u64(8);
        let mut reg =
            QubitRegister::product(PolarizationState::KetPlus, PolarizationState::KetMinus);
        reg.cnot(0, 1);
        let c = reg.measure(0, Basis::X, &mut rng);
        assert_eq!(c.bit, 1);
        assert_close(c.probability, 1.0);
    }

    #[test]
    fn big_endian_layout() {
        // qubit 0 is the most significant index bit: |+⟩⊗|0⟩ has support on
        // |00⟩ and |10⟩, i.e. amplitude indices 0 and 2.
        let reg = QubitRegister::product(PolarizationState::KetPlus, PolarizationState::Ket0);
        let a = reg.amplitudes();
        assert_close(a[0].re, FRAC_1_SQRT_2);
        assert_close(a[1].re, 0.0);
        assert_close(a[2].re, FRAC_1_SQRT_2);
        assert_close(a[3].re, 0.0);
    }

    #[test]
    fn tensor_with_places_new_qubit_last() {
        let reg = QubitRegister::single(PolarizationState::Ket1);
        let ext = reg.tensor_with(PolarizationState::Ket0);
        // |1⟩⊗|0⟩ = |10⟩ = index 2
        assert_close(ext.amplitudes()[2].re, 1.0);
        assert_eq!(ext.num_qubits(), 2);
    }

    #[test]
    fn decode_follows_the_encoding_map() {
        let mut rng = RunRng::seed_from_u64(9);
        for state in [
            PolarizationState::Ket0,
            PolarizationState::Ket1,
            PolarizationState::KetPlus,
            PolarizationState::KetMinus,
        ] {
            let mut reg = QubitRegister::single(state);
            let out = reg.measure(0, state.basis(), &mut rng);
            assert_eq!(out.basis, state.basis());
            assert_eq!(decode(&out), state.bit());
        }
    }

    proptest! {
        #[test]
        fn measurement_preserves_normalization(
            seed in 0u64..500,
            basis_bits in 0u8..4,
        ) {
            let mut rng = RunRng::seed_from_u64(seed);
            let mut reg = QubitRegister::bell_phi_plus();
            let b0 = if basis_bits & 1 == 0 { Basis::Z } else { Basis::X };
            let b1 = if basis_bits & 2 == 0 { Basis::Z } else { Basis::X };
            reg.measure(0, b0, &mut rng);
            reg.measure(1, b1, &mut rng);
            let norm: f64 = reg.amplitudes().iter().map(|a| a.norm_sqr()).sum();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }

        #[test]
        fn encode_decode_round_trip(bit in 0u8..2, x_basis in proptest::bool::ANY) {
            let basis = if x_basis { Basis::X } else { Basis::Z };
            let state = PolarizationState::encode(bit, basis);
            prop_assert_eq!(state.bit(), bit);
            prop_assert_eq!(state.basis(), basis);
        }
    }
}
