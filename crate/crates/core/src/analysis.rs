//! Monte-Carlo harness and the closed-form quantities the simulations are
//! checked against.
//!
//! A scenario is a protocol, an optional adversary, and trial parameters.
//! Trials are independent: trial `i` runs on its own deterministic stream
//! derived from the master seed, so results are reproducible bit for bit
//! regardless of how the trials are scheduled across threads. Aggregation
//! sticks to integer tallies for the same reason; rates are computed once
//! at the end.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    drive_abort_retry, AdversaryConfig, CnotTap, InterceptResendTap, TapCoverage,
};
use crate::channel::{
    AbortReason, DecoyCheckDetail, Phase, ProtocolOutcome, QuantumTap,
};
use crate::fair::{run_fair, FairBob, FairConfig, FairReport};
use crate::hash::HashKind;
use crate::huang::{run_huang, HuangBob, HuangConfig, HuangReport, HuangVariant};
use crate::quantum::Basis;
use crate::RunRng;

/// Which protocol a scenario exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Bell-pair protocol, receiver-announced comparison verdict.
    Huang,
    /// Bell-pair protocol variant where the receiver returns measurement
    /// results and the sender issues the verdict.
    HuangStar3,
    /// The committed-key protocol.
    Fair,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Huang => "huang",
            ProtocolKind::HuangStar3 => "huang-star3",
            ProtocolKind::Fair => "fair",
        }
    }
}

fn default_n() -> usize {
    128
}
fn default_m() -> usize {
    32
}
fn default_ratio() -> f64 {
    0.8
}
fn default_trials() -> u64 {
    1
}

/// Full description of one simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: ProtocolKind,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Hash length; ignored by the Bell-pair protocol.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Decoys per transmitted sequence. Defaults to `n`.
    #[serde(default)]
    pub l: Option<usize>,
    /// Maximum tolerated decoy error rate.
    #[serde(default)]
    pub threshold: f64,
    /// Fraction of the raw key surviving privacy amplification.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub hash: HashKind,
    #[serde(default)]
    pub adversary: Option<AdversaryConfig>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
}

impl ScenarioConfig {
    pub fn new(protocol: ProtocolKind) -> ScenarioConfig {
        ScenarioConfig {
            protocol,
            n: default_n(),
            m: default_m(),
            l: None,
            threshold: 0.0,
            ratio: default_ratio(),
            hash: HashKind::default(),
            adversary: None,
            trials: default_trials(),
            master_seed: 0,
        }
    }

    /// Decoys per sequence after applying the default.
    pub fn effective_l(&self) -> usize {
        self.l.unwrap_or(self.n)
    }

    /// Human-readable scenario key, `protocol/adversary`.
    pub fn scenario_label(&self) -> String {
        let adversary = self
            .adversary
            .as_ref()
            .map_or("honest", AdversaryConfig::label);
        format!("{}/{}", self.protocol.name(), adversary)
    }

    /// Rejects impossible or inconsistent scenarios; returns advisory
    /// warnings for legal but questionable ones.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::Invalid("n must be at least 1".into()));
        }
        if self.m == 0 && self.protocol == ProtocolKind::Fair {
            return Err(ConfigError::Invalid("m must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if !(self.threshold >= 0.0 && self.threshold < 1.0) {
            return Err(ConfigError::Invalid(
                "threshold must lie in [0, 1)".into(),
            ));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(ConfigError::Invalid("ratio must lie in (0, 1]".into()));
        }
        let bell = matches!(self.protocol, ProtocolKind::Huang | ProtocolKind::HuangStar3);
        match &self.adversary {
            None | Some(AdversaryConfig::InterceptResend { .. }) => {}
            Some(AdversaryConfig::CnotCe { .. }) => {
                if bell {
                    return Err(ConfigError::Invalid(
                        "the correlation tap needs a free ancilla slot per qubit; \
                         entangled pair halves leave none"
                            .into(),
                    ));
                }
            }
            Some(AdversaryConfig::InsiderHuangAbortRetry {
                target_bit,
                desired,
                max_restarts,
            }) => {
                if !bell {
                    return Err(ConfigError::Invalid(
                        "abort-and-retry targets the Bell-pair protocol".into(),
                    ));
                }
                if *target_bit >= self.n {
                    return Err(ConfigError::Invalid(format!(
                        "target_bit {target_bit} out of range for n = {}",
                        self.n
                    )));
                }
                if *desired > 1 {
                    return Err(ConfigError::Invalid("desired must be 0 or 1".into()));
                }
                if *max_restarts == 0 {
                    return Err(ConfigError::Invalid(
                        "max_restarts must be at least 1".into(),
                    ));
                }
            }
            Some(AdversaryConfig::InsiderFairProbe) => {
                if bell {
                    return Err(ConfigError::Invalid(
                        "the single-qubit probe targets the committed-key protocol".into(),
                    ));
                }
            }
            Some(AdversaryConfig::InsiderFairFakePermutation { .. }) => {
                if bell {
                    return Err(ConfigError::Invalid(
                        "the fake-ordering attack targets the committed-key protocol".into(),
                    ));
                }
                if self.n < 2 {
                    return Err(ConfigError::Invalid(
                        "faking an ordering needs at least two positions".into(),
                    ));
                }
            }
        }

        let mut warnings = Vec::new();
        if self.protocol == ProtocolKind::Fair {
            let margin = leakage_margin_check(self.ratio);
            if !margin.covered {
                warnings.push(format!(
                    "privacy amplification removes {:.4} of the key but the per-qubit \
                     leakage bound is {:.4}; shrink ratio to at most {:.4}",
                    margin.removed_fraction,
                    margin.leakage,
                    1.0 - margin.leakage
                ));
            }
        }
        Ok(warnings)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Deterministic per-trial stream: the master seed and trial index embedded
/// in the cipher key, so streams never overlap.
pub fn trial_rng(master_seed: u64, trial: u64) -> RunRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    RunRng::from_seed(key)
}

/// Integer-only per-trial aggregate. Merging is associative and
/// commutative, which keeps parallel reduction deterministic.
#[derive(Clone, Debug, Default)]
struct TrialTally {
    trials: u64,
    completions: u64,
    discussion_passes: u64,
    key_equal: u64,
    /// Protocol executions; exceeds `trials` only for abort-and-retry.
    total_runs: u64,
    abort_counts: BTreeMap<String, u64>,
    tapped_decoys: u64,
    tapped_decoy_errors: u64,
    tapped_decoys_z: u64,
    tapped_decoy_errors_z: u64,
    tapped_decoys_x: u64,
    tapped_decoy_errors_x: u64,
    probe_attempts: u64,
    probe_correct: u64,
    manipulation_effective: u64,
    manipulation_detected: u64,
    manipulation_ineffective: u64,
    false_accepts: u64,
    campaigns: u64,
    campaigns_succeeded: u64,
    insider_accusations: u64,
    desired_bit_matches: u64,
}

impl TrialTally {
    fn merge(mut self, other: TrialTally) -> TrialTally {
        self.trials += other.trials;
        self.completions += other.completions;
        self.discussion_passes += other.discussion_passes;
        self.key_equal += other.key_equal;
        self.total_runs += other.total_runs;
        for (label, count) in other.abort_counts {
            *self.abort_counts.entry(label).or_insert(0) += count;
        }
        self.tapped_decoys += other.tapped_decoys;
        self.tapped_decoy_errors += other.tapped_decoy_errors;
        self.tapped_decoys_z += other.tapped_decoys_z;
        self.tapped_decoy_errors_z += other.tapped_decoy_errors_z;
        self.tapped_decoys_x += other.tapped_decoys_x;
        self.tapped_decoy_errors_x += other.tapped_decoy_errors_x;
        self.probe_attempts += other.probe_attempts;
        self.probe_correct += other.probe_correct;
        self.manipulation_effective += other.manipulation_effective;
        self.manipulation_detected += other.manipulation_detected;
        self.manipulation_ineffective += other.manipulation_ineffective;
        self.false_accepts += other.false_accepts;
        self.campaigns += other.campaigns;
        self.campaigns_succeeded += other.campaigns_succeeded;
        self.insider_accusations += other.insider_accusations;
        self.desired_bit_matches += other.desired_bit_matches;
        self
    }

    fn record_outcome(&mut self, outcome: &ProtocolOutcome) {
        self.trials += 1;
        self.total_runs += 1;
        let passed_discussion = !matches!(
            outcome,
            ProtocolOutcome::Aborted {
                reason: AbortReason::EavesdroppingDetected { .. },
                phase: Phase::PublicDiscussion,
            }
        );
        if passed_discussion {
            self.discussion_passes += 1;
        }
        match outcome {
            ProtocolOutcome::Completed { alice_key, bob_key } => {
                self.completions += 1;
                if alice_key == bob_key {
                    self.key_equal += 1;
                }
            }
            ProtocolOutcome::Aborted { .. } => {
                let label = outcome.abort_label().expect("aborted");
                *self.abort_counts.entry(label).or_insert(0) += 1;
            }
        }
    }

    fn record_decoy_checks(&mut self, checks: &[DecoyCheckDetail], coverage: TapCoverage) {
        for check in checks {
            if !coverage.covers(check.sequence) {
                continue;
            }
            for &(basis, ok) in &check.results {
                self.tapped_decoys += 1;
                let error = u64::from(!ok);
                self.tapped_decoy_errors += error;
                match basis {
                    Basis::Z => {
                        self.tapped_decoys_z += 1;
                        self.tapped_decoy_errors_z += error;
                    }
                    Basis::X => {
                        self.tapped_decoys_x += 1;
                        self.tapped_decoy_errors_x += error;
                    }
                }
            }
        }
    }
}

fn run_one_trial(cfg: &ScenarioConfig, trial: u64) -> TrialTally {
    let mut rng = trial_rng(cfg.master_seed, trial);
    let mut tally = TrialTally::default();
    let l = cfg.effective_l();

    // Abort-and-retry is a campaign of runs, tallied as one trial.
    if let Some(AdversaryConfig::InsiderHuangAbortRetry {
        target_bit,
        desired,
        max_restarts,
    }) = &cfg.adversary
    {
        let huang_cfg = HuangConfig {
            n: cfg.n,
            l,
            threshold: cfg.threshold,
            variant: huang_variant(cfg.protocol),
        };
        let report = drive_abort_retry(&huang_cfg, *target_bit, *desired, *max_restarts, &mut rng);
        tally.trials = 1;
        tally.total_runs = report.runs as u64;
        tally.campaigns = 1;
        tally.insider_accusations = report.insider_accusations as u64;
        if report.succeeded {
            tally.campaigns_succeeded = 1;
            tally.completions = 1;
            tally.discussion_passes = 1;
            let (alice_key, bob_key) = report.final_keys.expect("succeeded");
            if alice_key == bob_key {
                tally.key_equal = 1;
            }
            if bob_key.get(*target_bit) == *desired {
                tally.desired_bit_matches = 1;
            }
        } else {
            *tally
                .abort_counts
                .entry("campaign-exhausted".to_string())
                .or_insert(0) += 1;
        }
        return tally;
    }

    match &cfg.adversary {
        Some(AdversaryConfig::InterceptResend { coverage }) => {
            let mut tap = InterceptResendTap::new(*coverage);
            run_protocol_trial(cfg, l, Some(&mut tap), &mut rng, &mut tally);
        }
        Some(AdversaryConfig::CnotCe { coverage }) => {
            let mut tap = CnotTap::new(*coverage);
            run_protocol_trial(cfg, l, Some(&mut tap), &mut rng, &mut tally);
        }
        _ => run_protocol_trial(cfg, l, None, &mut rng, &mut tally),
    }
    tally
}

fn run_protocol_trial(
    cfg: &ScenarioConfig,
    l: usize,
    tap: Option<&mut dyn QuantumTap>,
    rng: &mut RunRng,
    tally: &mut TrialTally,
) {
    match cfg.protocol {
        ProtocolKind::Huang | ProtocolKind::HuangStar3 => {
            let huang_cfg = HuangConfig {
                n: cfg.n,
                l,
                threshold: cfg.threshold,
                variant: huang_variant(cfg.protocol),
            };
            let report: HuangReport = run_huang(&huang_cfg, &HuangBob::Honest, tap, rng);
            tally.record_outcome(&report.outcome);
            if let Some(coverage) = cfg.adversary.as_ref().and_then(AdversaryConfig::tap_coverage)
            {
                tally.record_decoy_checks(&report.decoy_checks, coverage);
            }
        }
        ProtocolKind::Fair => {
            let fair_cfg = FairConfig {
                n: cfg.n,
                m: cfg.m,
                l,
                threshold: cfg.threshold,
                ratio: cfg.ratio,
                hash: cfg.hash,
            };
            let bob = match &cfg.adversary {
                Some(AdversaryConfig::InsiderFairProbe) => FairBob::ProbeOneSlot,
                Some(AdversaryConfig::InsiderFairFakePermutation { mode }) => {
                    FairBob::FakeOrder((*mode).into())
                }
                _ => FairBob::Honest,
            };
            let report: FairReport = run_fair(&fair_cfg, &bob, tap, rng);
            tally.record_outcome(&report.outcome);
            if let Some(coverage) = cfg.adversary.as_ref().and_then(AdversaryConfig::tap_coverage)
            {
                tally.record_decoy_checks(&report.decoy_checks, coverage);
            }
            if let Some(probe) = &report.probe {
                tally.probe_attempts += 1;
                tally.probe_correct += u64::from(probe.correct);
            }
            if let Some(effective) = report.manipulation_effective {
                if effective {
                    tally.manipulation_effective += 1;
                    match &report.outcome {
                        ProtocolOutcome::Aborted {
                            reason: AbortReason::ManipulationDetected { .. },
                            ..
                        } => tally.manipulation_detected += 1,
                        ProtocolOutcome::Completed { .. } => tally.false_accepts += 1,
                        ProtocolOutcome::Aborted { .. } => {}
                    }
                } else {
                    tally.manipulation_ineffective += 1;
                }
            }
        }
    }
}

fn huang_variant(protocol: ProtocolKind) -> HuangVariant {
    match protocol {
        ProtocolKind::Huang => HuangVariant::Original,
        ProtocolKind::HuangStar3 => HuangVariant::Star3,
        ProtocolKind::Fair => unreachable!("not a Bell-pair protocol"),
    }
}

/// Detection statistics over decoys the tap actually touched.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecoyDetectionStats {
    pub tapped_decoys: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub z_checked: u64,
    pub z_errors: u64,
    pub z_error_rate: f64,
    pub x_checked: u64,
    pub x_errors: u64,
    pub x_error_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeStats {
    pub attempts: u64,
    pub correct: u64,
    pub correct_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManipulationStats {
    /// Runs where the announced lie changed the recovered key.
    pub effective: u64,
    /// Effective runs ending in an abort that accuses the manipulator.
    pub detected: u64,
    /// Runs where the lie left the key unchanged; these complete.
    pub ineffective: u64,
    /// Effective runs that nevertheless completed. The detection claim is
    /// that this stays at zero.
    pub false_accepts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InsiderStats {
    pub campaigns: u64,
    pub succeeded: u64,
    pub total_runs: u64,
    pub mean_runs: f64,
    /// Aborts pinned on a party rather than an outside eavesdropper.
    pub accusations: u64,
    /// Successful campaigns whose final key carries the desired bit.
    pub desired_bit_matches: u64,
}

/// Aggregate results of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioStats {
    pub scenario: String,
    pub trials: u64,
    pub completions: u64,
    pub discussion_passes: u64,
    /// Fraction of trials that got past public discussion.
    pub pass_rate: f64,
    /// Binomial standard error of `pass_rate`.
    pub stderr: f64,
    /// Fraction of trials completing with identical final keys.
    pub key_equal_rate: f64,
    /// Mean protocol executions per trial; 1.0 except for abort-and-retry.
    pub mean_restarts: f64,
    pub abort_counts: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoy_detection: Option<DecoyDetectionStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manipulation: Option<ManipulationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub insider: Option<InsiderStats>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    /// Wall-clock duration; excluded from determinism comparisons.
    pub duration_ms: u64,
}

impl ScenarioStats {
    pub const CSV_HEADER: &'static str =
        "scenario,trials,completions,pass_rate,stderr,key_equal_rate,mean_restarts,duration_ms";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            self.scenario,
            self.trials,
            self.completions,
            self.pass_rate,
            self.stderr,
            self.key_equal_rate,
            self.mean_restarts,
            self.duration_ms
        )
    }

    /// Copy with the wall clock zeroed, for exact equality comparisons.
    pub fn deterministic_view(&self) -> ScenarioStats {
        let mut view = self.clone();
        view.duration_ms = 0;
        view
    }
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Runs all trials of a scenario and aggregates.
pub fn run_monte_carlo(cfg: &ScenarioConfig) -> Result<ScenarioStats, ConfigError> {
    let warnings = cfg.validate()?;
    let started = Instant::now();
    let tally = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_one_trial(cfg, trial))
        .reduce(TrialTally::default, TrialTally::merge);
    let duration_ms = started.elapsed().as_millis() as u64;

    let pass_rate = rate(tally.discussion_passes, tally.trials);
    let stderr = (pass_rate * (1.0 - pass_rate) / tally.trials as f64).sqrt();
    let decoy_detection = (tally.tapped_decoys > 0).then(|| DecoyDetectionStats {
        tapped_decoys: tally.tapped_decoys,
        errors: tally.tapped_decoy_errors,
        error_rate: rate(tally.tapped_decoy_errors, tally.tapped_decoys),
        z_checked: tally.tapped_decoys_z,
        z_errors: tally.tapped_decoy_errors_z,
        z_error_rate: rate(tally.tapped_decoy_errors_z, tally.tapped_decoys_z),
        x_checked: tally.tapped_decoys_x,
        x_errors: tally.tapped_decoy_errors_x,
        x_error_rate: rate(tally.tapped_decoy_errors_x, tally.tapped_decoys_x),
    });
    let probe = (tally.probe_attempts > 0).then(|| ProbeStats {
        attempts: tally.probe_attempts,
        correct: tally.probe_correct,
        correct_rate: rate(tally.probe_correct, tally.probe_attempts),
    });
    let manipulation = matches!(
        cfg.adversary,
        Some(AdversaryConfig::InsiderFairFakePermutation { .. })
    )
    .then(|| ManipulationStats {
        effective: tally.manipulation_effective,
        detected: tally.manipulation_detected,
        ineffective: tally.manipulation_ineffective,
        false_accepts: tally.false_accepts,
    });
    let insider = (tally.campaigns > 0).then(|| InsiderStats {
        campaigns: tally.campaigns,
        succeeded: tally.campaigns_succeeded,
        total_runs: tally.total_runs,
        mean_runs: rate(tally.total_runs, tally.campaigns),
        accusations: tally.insider_accusations,
        desired_bit_matches: tally.desired_bit_matches,
    });

    Ok(ScenarioStats {
        scenario: cfg.scenario_label(),
        trials: tally.trials,
        completions: tally.completions,
        discussion_passes: tally.discussion_passes,
        pass_rate,
        stderr,
        key_equal_rate: rate(tally.key_equal, tally.trials),
        mean_restarts: rate(tally.total_runs, tally.trials),
        abort_counts: tally.abort_counts,
        decoy_detection,
        probe,
        manipulation,
        insider,
        warnings,
        duration_ms,
    })
}

/// Probability that an intercept-resend tap survives a comparison over `l`
/// decoys: (3/4)^l.
pub fn analytic_pass_probability(l: u32) -> f64 {
    0.75f64.powi(l as i32)
}

/// Shannon entropy of a biased coin, in bits. Zero at both endpoints.
pub fn binary_entropy(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "a probability");
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Expected information an intercept-resend eavesdropper gains per key
/// qubit: her guess is right with probability 3/4, worth 1 - H(3/4) bits.
pub fn eavesdropper_information_per_qubit() -> f64 {
    1.0 - binary_entropy(0.75)
}

/// Whether a privacy-amplification ratio removes at least the per-qubit
/// leakage bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeakageMargin {
    /// Per-qubit leakage bound, in bits.
    pub leakage: f64,
    /// Fraction of the raw key that amplification removes.
    pub removed_fraction: f64,
    pub covered: bool,
    /// `removed_fraction - leakage`; negative when uncovered.
    pub margin: f64,
}

pub fn leakage_margin_check(ratio: f64) -> LeakageMargin {
    assert!(ratio > 0.0 && ratio <= 1.0);
    let leakage = eavesdropper_information_per_qubit();
    let removed_fraction = 1.0 - ratio;
    LeakageMargin {
        leakage,
        removed_fraction,
        covered: removed_fraction >= leakage,
        margin: removed_fraction - leakage,
    }
}
