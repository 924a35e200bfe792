//! Acceptance suite: one test per claim the laboratory is expected to
//! reproduce, each printing a PASS line with the measured numbers (run with
//! `--nocapture` to see them on success).
//!
//! Statistical gates are 3-sigma unless a tighter bound is stated; seeds
//! are pinned so every run checks the same arithmetic.

use itertools::Itertools;
use qka_core::adversary::{AdversaryConfig, FakeOrderChoice, TapCoverage};
use qka_core::analysis::{
    analytic_pass_probability, eavesdropper_information_per_qubit, run_monte_carlo,
    trial_rng, ProtocolKind, ScenarioConfig,
};
use qka_core::channel::phase_gate_violations;
use qka_core::fair::{run_fair, FairBob, FairConfig};
use qka_core::huang::{run_huang, HuangBob, HuangConfig};
use std::time::Instant;

fn scenario(protocol: ProtocolKind, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(protocol);
    cfg.master_seed = seed;
    cfg
}

#[test]
fn criterion_1_honest_runs_complete_with_identical_full_length_keys() {
    let mut cfg = scenario(ProtocolKind::Fair, 101);
    cfg.trials = 10_000;
    // Defaults pinned on purpose: n = 128, m = 32, l = n, ratio = 0.8.
    assert_eq!((cfg.n, cfg.m, cfg.effective_l(), cfg.ratio), (128, 32, 128, 0.8));
    let started = Instant::now();
    let stats = run_monte_carlo(&cfg).unwrap();
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "10^4 honest runs took {elapsed:?}, budget is 60s"
    );
    assert_eq!(stats.trials, 10_000);
    assert_eq!(stats.completions, 10_000, "every honest run completes");
    assert_eq!(stats.key_equal_rate, 1.0, "both parties end with the same key");
    assert!(stats.abort_counts.is_empty());

    // Final key length: ceil(0.8 * 128) = 103 bits.
    let mut rng = trial_rng(101, 0);
    let report = run_fair(&FairConfig::new(128, 32, 128), &FairBob::Honest, None, &mut rng);
    match report.outcome {
        qka_core::ProtocolOutcome::Completed { alice_key, .. } => {
            assert_eq!(alice_key.len(), 103)
        }
        other => panic!("honest run aborted: {other:?}"),
    }
    println!(
        "PASS criterion 1: 10^4 honest runs completed with equal 103-bit keys in {:.1}s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_2_intercept_resend_pass_rate_follows_the_power_law() {
    for (point, l) in [1usize, 2, 4, 8, 16].into_iter().enumerate() {
        let mut cfg = scenario(ProtocolKind::Huang, 200 + point as u64);
        cfg.n = 4;
        cfg.l = Some(l);
        cfg.trials = 100_000;
        cfg.adversary = Some(AdversaryConfig::InterceptResend {
            coverage: TapCoverage::AliceKey,
        });
        let stats = run_monte_carlo(&cfg).unwrap();
        let expected = analytic_pass_probability(l as u32);
        let sigma = (expected * (1.0 - expected) / cfg.trials as f64).sqrt();
        assert!(
            (stats.pass_rate - expected).abs() <= 3.0 * sigma,
            "l={l}: pass rate {} vs (3/4)^{l} = {expected} (3 sigma = {})",
            stats.pass_rate,
            3.0 * sigma
        );
        println!(
            "PASS criterion 2 (l={l}): pass rate {:.5} within 3 sigma of {:.5}",
            stats.pass_rate, expected
        );
    }
}

#[test]
fn criterion_3_cnot_tap_detection_splits_by_decoy_basis() {
    let mut cfg = scenario(ProtocolKind::Fair, 300);
    cfg.n = 8;
    cfg.m = 8;
    cfg.l = Some(20);
    cfg.trials = 5_000;
    cfg.adversary = Some(AdversaryConfig::CnotCe {
        coverage: TapCoverage::AliceKey,
    });
    let stats = run_monte_carlo(&cfg).unwrap();
    let detection = stats.decoy_detection.expect("tap present");
    assert!(
        detection.tapped_decoys >= 100_000,
        "need at least 10^5 tapped decoys, got {}",
        detection.tapped_decoys
    );
    assert!(
        (detection.error_rate - 0.25).abs() < 0.005,
        "overall detection {} should be 0.25 +- 0.005",
        detection.error_rate
    );
    assert_eq!(
        detection.z_errors, 0,
        "computational-basis decoys are eigenstates of the tap"
    );
    assert!(
        (detection.x_error_rate - 0.5).abs() < 0.01,
        "superposition decoys flip half the time, got {}",
        detection.x_error_rate
    );
    println!(
        "PASS criterion 3: {} tapped decoys, detection {:.4} overall, {} in Z, {:.4} in X",
        detection.tapped_decoys, detection.error_rate, detection.z_error_rate, detection.x_error_rate
    );
}

#[test]
fn criterion_4_abort_retry_succeeds_in_two_runs_on_average_unblamed() {
    let mut cfg = scenario(ProtocolKind::Huang, 400);
    cfg.n = 8;
    cfg.l = Some(4);
    cfg.trials = 10_000;
    cfg.adversary = Some(AdversaryConfig::InsiderHuangAbortRetry {
        target_bit: 3,
        desired: 1,
        max_restarts: 128,
    });
    let stats = run_monte_carlo(&cfg).unwrap();
    let insider = stats.insider.expect("campaign stats");
    assert_eq!(insider.campaigns, 10_000);
    assert_eq!(insider.succeeded, 10_000, "every campaign forces its bit");
    assert_eq!(insider.desired_bit_matches, 10_000);
    assert_eq!(stats.key_equal_rate, 1.0, "the forced key still agrees");
    assert!(
        (insider.mean_runs - 2.0).abs() < 0.05,
        "mean executions {} should be 2.0 +- 0.05",
        insider.mean_runs
    );
    assert_eq!(
        insider.accusations, 0,
        "every abort is imputed to an outside eavesdropper"
    );
    println!(
        "PASS criterion 4: 10^4 campaigns, mean {:.3} runs, 0 insider accusations",
        insider.mean_runs
    );
}

#[test]
fn criterion_5_fake_ordering_is_always_detected_or_ineffective() {
    let mut cfg = scenario(ProtocolKind::Fair, 500);
    cfg.n = 16;
    cfg.m = 32;
    cfg.l = Some(4);
    cfg.trials = 100_000;
    cfg.adversary = Some(AdversaryConfig::InsiderFairFakePermutation {
        mode: FakeOrderChoice::Uniform,
    });
    let stats = run_monte_carlo(&cfg).unwrap();
    let manipulation = stats.manipulation.expect("manipulation stats");
    assert_eq!(
        manipulation.false_accepts, 0,
        "an effective manipulation must never complete"
    );
    assert_eq!(
        manipulation.detected, manipulation.effective,
        "every effective manipulation is detected and attributed"
    );
    assert_eq!(
        manipulation.effective + manipulation.ineffective,
        stats.trials,
        "every trial is classified"
    );
    assert_eq!(stats.completions, manipulation.ineffective);
    println!(
        "PASS criterion 5: 10^5 fake orderings, {} effective all detected, {} ineffective, 0 false accepts",
        manipulation.effective, manipulation.ineffective
    );
}

#[test]
fn criterion_6_leakage_bound_and_blind_probe_accuracy() {
    let leakage = eavesdropper_information_per_qubit();
    assert!(
        (leakage - 0.1887).abs() < 1e-4,
        "per-qubit leakage {leakage} should be 0.1887 +- 10^-4"
    );

    let mut cfg = scenario(ProtocolKind::Fair, 600);
    cfg.n = 8;
    cfg.m = 8;
    cfg.l = Some(4);
    cfg.trials = 100_000;
    cfg.adversary = Some(AdversaryConfig::InsiderFairProbe);
    let stats = run_monte_carlo(&cfg).unwrap();
    assert_eq!(stats.completions, 0, "a probed run never completes");
    let probe = stats.probe.expect("probe stats");
    assert_eq!(probe.attempts, 100_000);
    assert!(
        (probe.correct_rate - 0.75).abs() < 0.01,
        "blind probe guesses the bit at 3/4, got {}",
        probe.correct_rate
    );

    // The probed slot tells the prober nothing about the original position:
    // over all secret orderings of n elements, a fixed slot maps to each
    // position exactly (n-1)! times.
    for n in 2usize..=6 {
        let slot = n / 2;
        let mut counts = vec![0usize; n];
        for order in (0..n).permutations(n) {
            counts[order[slot]] += 1;
        }
        let expected = (1..n).product::<usize>();
        assert!(
            counts.iter().all(|&c| c == expected),
            "n={n}: position counts {counts:?}"
        );
    }
    println!(
        "PASS criterion 6: leakage {:.6} bits/qubit, probe correct rate {:.4}, positions uniform for n <= 6",
        leakage, probe.correct_rate
    );
}

/// Amplitude arithmetic written from scratch: 2- and 4-dimensional complex
/// vectors, inner products, and the controlled-NOT as an index swap. The
/// simulator under test is not involved.
mod oracle {
    use num_complex::Complex64;

    pub type Ket2 = [Complex64; 2];

    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    /// The four preparation states, as (label, ket, basis-is-z, bit).
    pub fn states() -> [(&'static str, Ket2, bool, u8); 4] {
        [
            ("0", [c(1.0), c(0.0)], true, 0),
            ("1", [c(0.0), c(1.0)], true, 1),
            ("+", [c(R), c(R)], false, 0),
            ("-", [c(R), c(-R)], false, 1),
        ]
    }

    /// Basis kets: z-basis {|0>,|1>} or x-basis {|+>,|->}, indexed by bit.
    pub fn basis_ket(z: bool, bit: u8) -> Ket2 {
        match (z, bit) {
            (true, 0) => [c(1.0), c(0.0)],
            (true, _) => [c(0.0), c(1.0)],
            (false, 0) => [c(R), c(R)],
            (false, _) => [c(R), c(-R)],
        }
    }

    fn inner2(a: &Ket2, b: &Ket2) -> Complex64 {
        a[0].conj() * b[0] + a[1].conj() * b[1]
    }

    /// Probability that measuring `state` in the given basis yields `bit`.
    pub fn born(state: &Ket2, z: bool, bit: u8) -> f64 {
        inner2(&basis_ket(z, bit), state).norm_sqr()
    }

    /// Intercept-resend survival for one prepared state: Eve picks a basis
    /// uniformly, measures, resends her outcome; the checker then measures
    /// in the preparation basis and compares.
    pub fn intercept_resend_survival(state: &Ket2, z: bool, bit: u8) -> f64 {
        let mut survival = 0.0;
        for eve_z in [true, false] {
            for eve_bit in [0u8, 1] {
                let p_eve = born(state, eve_z, eve_bit);
                let resent = basis_ket(eve_z, eve_bit);
                survival += 0.5 * p_eve * born(&resent, z, bit);
            }
        }
        survival
    }

    /// Controlled-NOT survival: |state>|0>, control the traveling qubit,
    /// then measure the control in the preparation basis. Indexing is
    /// control-major: amplitude index = 2*control + ancilla.
    pub fn cnot_survival(state: &Ket2, z: bool, bit: u8) -> f64 {
        let zero = c(0.0);
        let mut amps = [state[0], zero, state[1], zero];
        amps.swap(2, 3);
        // Project the control onto the expected outcome, ancilla summed out
        // in the computational basis.
        let expected = basis_ket(z, bit);
        let mut survival = 0.0;
        for ancilla in 0..2 {
            let overlap =
                expected[0].conj() * amps[ancilla] + expected[1].conj() * amps[2 + ancilla];
            survival += overlap.norm_sqr();
        }
        survival
    }
}

#[test]
fn criterion_7_monte_carlo_frequencies_match_the_amplitude_oracle() {
    // Oracle predictions, averaged over uniform decoy states.
    let mut ir_survival = 0.0;
    let mut cnot_survival = 0.0;
    let mut cnot_survival_z = 0.0;
    let mut cnot_survival_x = 0.0;
    for (_, state, z, bit) in oracle::states() {
        ir_survival += oracle::intercept_resend_survival(&state, z, bit) / 4.0;
        let s = oracle::cnot_survival(&state, z, bit);
        cnot_survival += s / 4.0;
        if z {
            cnot_survival_z += s / 2.0;
        } else {
            cnot_survival_x += s / 2.0;
        }
    }
    assert!((ir_survival - 0.75).abs() < 1e-12);
    assert!((cnot_survival - 0.75).abs() < 1e-12);
    assert!((cnot_survival_z - 1.0).abs() < 1e-12);
    assert!((cnot_survival_x - 0.5).abs() < 1e-12);

    let three_sigma = |p: f64, trials: f64| 3.0 * (p * (1.0 - p) / trials).sqrt();

    // Intercept-resend: per-decoy survival and whole-run pass rate.
    let mut cfg = scenario(ProtocolKind::Huang, 700);
    cfg.n = 4;
    cfg.l = Some(4);
    cfg.trials = 25_000;
    cfg.adversary = Some(AdversaryConfig::InterceptResend {
        coverage: TapCoverage::AliceKey,
    });
    let stats = run_monte_carlo(&cfg).unwrap();
    let detection = stats.decoy_detection.expect("tap present");
    let measured_survival = 1.0 - detection.error_rate;
    assert!(
        (measured_survival - ir_survival).abs()
            <= three_sigma(ir_survival, detection.tapped_decoys as f64),
        "per-decoy survival {measured_survival} vs oracle {ir_survival}"
    );
    let run_pass = ir_survival.powi(4);
    assert!(
        (stats.pass_rate - run_pass).abs() <= three_sigma(run_pass, 25_000.0),
        "run pass rate {} vs oracle {run_pass}",
        stats.pass_rate
    );

    // Controlled-NOT tap: overall and per-basis survival.
    let mut cfg = scenario(ProtocolKind::Fair, 701);
    cfg.n = 8;
    cfg.m = 8;
    cfg.l = Some(8);
    cfg.trials = 5_000;
    cfg.adversary = Some(AdversaryConfig::CnotCe {
        coverage: TapCoverage::AliceKey,
    });
    let stats = run_monte_carlo(&cfg).unwrap();
    let detection = stats.decoy_detection.expect("tap present");
    assert_eq!(
        1.0 - detection.z_error_rate,
        cnot_survival_z,
        "computational survival is exact"
    );
    assert!(
        ((1.0 - detection.x_error_rate) - cnot_survival_x).abs()
            <= three_sigma(cnot_survival_x, detection.x_checked as f64),
        "superposition survival {} vs oracle {cnot_survival_x}",
        1.0 - detection.x_error_rate
    );
    assert!(
        ((1.0 - detection.error_rate) - cnot_survival).abs()
            <= three_sigma(cnot_survival, detection.tapped_decoys as f64),
        "overall survival {} vs oracle {cnot_survival}",
        1.0 - detection.error_rate
    );
    println!(
        "PASS criterion 7: simulated frequencies match the amplitude oracle \
         (intercept-resend {:.4}/{:.4}, tap {:.4}/{:.4})",
        measured_survival,
        ir_survival,
        1.0 - detection.error_rate,
        cnot_survival
    );
}

#[test]
fn criterion_8_transcript_linter_separates_honest_from_early_derivation() {
    // Honest runs of the committed-key protocol never disclose key
    // material before both verdicts.
    let mut violations = 0usize;
    for trial in 0..200u64 {
        let mut rng = trial_rng(800, trial);
        let report = run_fair(&FairConfig::new(16, 8, 4), &FairBob::Honest, None, &mut rng);
        violations += phase_gate_violations(&report.transcript, 2).len();
    }
    assert_eq!(violations, 0, "honest committed-key transcripts are clean");

    // A key-manipulating receiver in the Bell-pair protocol derives the key
    // during public discussion; the linter flags every such transcript.
    let mut flagged = 0usize;
    for trial in 0..200u64 {
        let mut rng = trial_rng(801, trial);
        let report = run_huang(
            &HuangConfig::new(8, 4),
            &HuangBob::KeyManipulator {
                target_bit: 0,
                desired: 1,
            },
            None,
            &mut rng,
        );
        if !phase_gate_violations(&report.transcript, 1).is_empty() {
            flagged += 1;
        }
    }
    assert_eq!(flagged, 200, "every early-derivation transcript is flagged");

    // Honest Bell-pair runs stay clean under the same lint.
    for trial in 0..200u64 {
        let mut rng = trial_rng(802, trial);
        let report = run_huang(&HuangConfig::new(8, 4), &HuangBob::Honest, None, &mut rng);
        assert!(phase_gate_violations(&report.transcript, 1).is_empty());
    }
    println!(
        "PASS criterion 8: 200 honest transcripts clean, 200 early-derivation transcripts flagged"
    );
}
