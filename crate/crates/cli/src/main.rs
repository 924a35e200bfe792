//! Command-line driver: single protocol runs, attack experiments, decoy
//! sweeps, and the closed-form reference numbers.
//!
//! Exit codes: 0 for success (including completed runs), 2 for a run that
//! ended in a protocol abort, 64 for usage or configuration errors.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use qka_core::adversary::{AdversaryConfig, FakeOrderChoice, TapCoverage};
use qka_core::analysis::{
    analytic_pass_probability, eavesdropper_information_per_qubit, leakage_margin_check,
    run_monte_carlo, trial_rng, ProtocolKind, ScenarioConfig, ScenarioStats,
};
use qka_core::fair::{run_fair, FairBob, FairConfig};
use qka_core::huang::{run_huang, HuangBob, HuangConfig, HuangVariant};
use qka_core::{ProtocolOutcome, QuantumTap, Transcript};

const EXIT_ABORTED: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "qka",
    version,
    about = "Two-party quantum key agreement laboratory",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one protocol run and print its outcome and keys.
    Run(RunArgs),
    /// Run a Monte-Carlo experiment and print aggregate statistics.
    Attack(AttackArgs),
    /// Repeat an experiment across decoy counts, one CSV row per point.
    Sweep(SweepArgs),
    /// Print the closed-form reference quantities.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    /// Bell-pair protocol, receiver announces the comparison verdict.
    Huang,
    /// Bell-pair variant: receiver returns results, sender compares.
    HuangStar3,
    /// Committed-key protocol with hash verification.
    Fair,
}

impl From<ProtocolArg> for ProtocolKind {
    fn from(arg: ProtocolArg) -> ProtocolKind {
        match arg {
            ProtocolArg::Huang => ProtocolKind::Huang,
            ProtocolArg::HuangStar3 => ProtocolKind::HuangStar3,
            ProtocolArg::Fair => ProtocolKind::Fair,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AdversaryArg {
    InterceptResend,
    CnotCe,
    InsiderHuangAbortRetry,
    InsiderFairProbe,
    InsiderFairFakePermutation,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CoverageArg {
    AliceKey,
    Alice,
    All,
}

impl From<CoverageArg> for TapCoverage {
    fn from(arg: CoverageArg) -> TapCoverage {
        match arg {
            CoverageArg::AliceKey => TapCoverage::AliceKey,
            CoverageArg::Alice => TapCoverage::Alice,
            CoverageArg::All => TapCoverage::All,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Uniform,
    Transposition,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Pretty,
    Json,
    Csv,
}

/// Scenario parameters shared by every experiment verb. Flags override the
/// config file, which overrides built-in defaults.
#[derive(Args)]
struct ScenarioArgs {
    /// Scenario description as JSON; flags given here override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Protocol to run.
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    /// Private key length in bits.
    #[arg(long)]
    n: Option<usize>,
    /// Hash commitment length in bits (committed-key protocol only).
    #[arg(long)]
    m: Option<usize>,
    /// Decoys per transmitted sequence (defaults to n).
    #[arg(long)]
    l: Option<usize>,
    /// Maximum tolerated decoy error rate.
    #[arg(long)]
    threshold: Option<f64>,
    /// Fraction of the raw key surviving privacy amplification.
    #[arg(long)]
    ratio: Option<f64>,
    /// Master seed; overrides the config file and QKA_SIM_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Adversary preset.
    #[arg(long, value_enum)]
    adversary: Option<AdversaryArg>,
    /// Sequences an outsider tap touches.
    #[arg(long, value_enum, default_value = "alice-key")]
    coverage: CoverageArg,
    /// Key bit the abort-and-retry insider forces.
    #[arg(long, value_name = "INDEX")]
    target_bit: Option<usize>,
    /// Value the forced bit should take.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    desired: Option<u8>,
    /// Run budget for an abort-and-retry campaign.
    #[arg(long)]
    max_restarts: Option<usize>,
    /// Fake-ordering strategy.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Write the run transcript as JSON lines ("-" for stdout).
    #[arg(long, value_name = "FILE")]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Independent trials.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, value_enum, default_value = "pretty")]
    format: FormatArg,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Independent trials per point.
    #[arg(long)]
    trials: Option<u64>,
    /// Decoy counts to visit: a comma list ("1,2,4") or a range ("1..=16").
    #[arg(long = "l-values", value_name = "LIST")]
    l_values: String,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Decoy counts to tabulate: a comma list or a range.
    #[arg(long = "l-values", value_name = "LIST", default_value = "1,2,4,8,16")]
    l_values: String,
    /// Privacy-amplification ratio to check against the leakage bound.
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, value_enum, default_value = "pretty")]
    format: FormatArg,
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (e.g. `qka analyze | head`) instead of
    // panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are not usage errors.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

/// Builds the effective scenario: config file first, then flag overrides,
/// then the seed precedence chain (flag, file, QKA_SIM_SEED, zero).
fn build_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, String> {
    let mut file_specified_seed = false;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|err| format!("cannot read {}: {err}", path.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|err| format!("{} is not valid JSON: {err}", path.display()))?;
            file_specified_seed = value.get("master_seed").is_some();
            serde_json::from_value::<ScenarioConfig>(value)
                .map_err(|err| format!("{}: {err}", path.display()))?
        }
        None => {
            let protocol = args
                .protocol
                .ok_or("either --protocol or --config is required")?;
            ScenarioConfig::new(protocol.into())
        }
    };
    if let Some(protocol) = args.protocol {
        cfg.protocol = protocol.into();
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(l) = args.l {
        cfg.l = Some(l);
    }
    if let Some(threshold) = args.threshold {
        cfg.threshold = threshold;
    }
    if let Some(ratio) = args.ratio {
        cfg.ratio = ratio;
    }
    if let Some(adversary) = build_adversary(args)? {
        cfg.adversary = Some(adversary);
    }

    cfg.master_seed = match args.seed {
        Some(seed) => seed,
        None if file_specified_seed => cfg.master_seed,
        None => match std::env::var("QKA_SIM_SEED") {
            Ok(text) => text
                .parse()
                .map_err(|_| format!("QKA_SIM_SEED is not a valid seed: {text:?}"))?,
            Err(_) => 0,
        },
    };
    Ok(cfg)
}

fn build_adversary(args: &ScenarioArgs) -> Result<Option<AdversaryConfig>, String> {
    let Some(kind) = args.adversary else {
        return Ok(None);
    };
    let coverage = args.coverage.into();
    Ok(Some(match kind {
        AdversaryArg::InterceptResend => AdversaryConfig::InterceptResend { coverage },
        AdversaryArg::CnotCe => AdversaryConfig::CnotCe { coverage },
        AdversaryArg::InsiderHuangAbortRetry => AdversaryConfig::InsiderHuangAbortRetry {
            target_bit: args.target_bit.unwrap_or(0),
            desired: args.desired.unwrap_or(1),
            max_restarts: args.max_restarts.unwrap_or(64),
        },
        AdversaryArg::InsiderFairProbe => AdversaryConfig::InsiderFairProbe,
        AdversaryArg::InsiderFairFakePermutation => AdversaryConfig::InsiderFairFakePermutation {
            mode: match args.mode {
                Some(ModeArg::Transposition) => FakeOrderChoice::Transposition,
                _ => FakeOrderChoice::Uniform,
            },
        },
    }))
}

fn write_transcript(target: &PathBuf, transcript: &Transcript) -> Result<(), String> {
    let jsonl = transcript.to_jsonl();
    if target.as_os_str() == "-" {
        print!("{jsonl}");
        return Ok(());
    }
    let mut file = fs::File::create(target)
        .map_err(|err| format!("cannot create {}: {err}", target.display()))?;
    file.write_all(jsonl.as_bytes())
        .map_err(|err| format!("cannot write {}: {err}", target.display()))?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let cfg = build_scenario(&args.scenario)?;
    cfg.validate().map_err(|err| err.to_string())?;
    let mut rng = trial_rng(cfg.master_seed, 0);
    let l = cfg.effective_l();

    // A single run is one execution; campaigns belong to `attack`.
    if matches!(
        cfg.adversary,
        Some(AdversaryConfig::InsiderHuangAbortRetry { .. })
    ) {
        return Err("abort-and-retry is a multi-run campaign; use `qka attack`".into());
    }

    let mut tap_ir;
    let mut tap_cnot;
    let tap: Option<&mut dyn QuantumTap> = match &cfg.adversary {
        Some(AdversaryConfig::InterceptResend { coverage }) => {
            tap_ir = qka_core::adversary::InterceptResendTap::new(*coverage);
            Some(&mut tap_ir)
        }
        Some(AdversaryConfig::CnotCe { coverage }) => {
            tap_cnot = qka_core::adversary::CnotTap::new(*coverage);
            Some(&mut tap_cnot)
        }
        _ => None,
    };

    let (outcome, transcript) = match cfg.protocol {
        ProtocolKind::Huang | ProtocolKind::HuangStar3 => {
            let huang_cfg = HuangConfig {
                n: cfg.n,
                l,
                threshold: cfg.threshold,
                variant: if cfg.protocol == ProtocolKind::Huang {
                    HuangVariant::Original
                } else {
                    HuangVariant::Star3
                },
            };
            let report = run_huang(&huang_cfg, &HuangBob::Honest, tap, &mut rng);
            (report.outcome, report.transcript)
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
            let report = run_fair(&fair_cfg, &bob, tap, &mut rng);
            if let Some(probe) = &report.probe {
                println!(
                    "probe: slot {} in {:?}, guessed {}, actual bit {} at position {} ({})",
                    probe.slot,
                    probe.guessed_basis,
                    probe.guessed_bit,
                    probe.true_bit,
                    probe.true_position,
                    if probe.correct { "correct" } else { "wrong" }
                );
            }
            if let Some(effective) = report.manipulation_effective {
                println!(
                    "manipulation: {}",
                    if effective { "effective" } else { "ineffective" }
                );
            }
            (report.outcome, report.transcript)
        }
    };

    if let Some(target) = &args.transcript {
        write_transcript(target, &transcript)?;
    }

    match outcome {
        ProtocolOutcome::Completed { alice_key, bob_key } => {
            println!("outcome: completed");
            println!("alice-key: {} ({} bits)", alice_key.to_hex(), alice_key.len());
            println!("bob-key:   {} ({} bits)", bob_key.to_hex(), bob_key.len());
            Ok(ExitCode::SUCCESS)
        }
        outcome @ ProtocolOutcome::Aborted { .. } => {
            println!(
                "outcome: aborted at {}",
                outcome.abort_label().expect("aborted")
            );
            Ok(ExitCode::from(EXIT_ABORTED))
        }
    }
}

fn print_stats(stats: &ScenarioStats, format: FormatArg) -> Result<(), String> {
    match format {
        FormatArg::Json => {
            let json = serde_json::to_string_pretty(stats).map_err(|err| err.to_string())?;
            println!("{json}");
        }
        FormatArg::Csv => {
            println!("{}", ScenarioStats::CSV_HEADER);
            println!("{}", stats.to_csv_row());
        }
        FormatArg::Pretty => {
            println!("scenario:       {}", stats.scenario);
            println!("trials:         {}", stats.trials);
            println!("completions:    {}", stats.completions);
            println!(
                "pass rate:      {:.6} (stderr {:.6})",
                stats.pass_rate, stats.stderr
            );
            println!("key equal rate: {:.6}", stats.key_equal_rate);
            println!("mean restarts:  {:.6}", stats.mean_restarts);
            if !stats.abort_counts.is_empty() {
                println!("aborts:");
                for (label, count) in &stats.abort_counts {
                    println!("  {count:>8}  {label}");
                }
            }
            if let Some(detection) = &stats.decoy_detection {
                println!(
                    "tapped decoys:  {} ({:.6} detected; z {:.6}, x {:.6})",
                    detection.tapped_decoys,
                    detection.error_rate,
                    detection.z_error_rate,
                    detection.x_error_rate
                );
            }
            if let Some(probe) = &stats.probe {
                println!(
                    "probes:         {} ({:.6} correct)",
                    probe.attempts, probe.correct_rate
                );
            }
            if let Some(manipulation) = &stats.manipulation {
                println!(
                    "manipulations:  {} effective ({} detected, {} false accepts), {} ineffective",
                    manipulation.effective,
                    manipulation.detected,
                    manipulation.false_accepts,
                    manipulation.ineffective
                );
            }
            if let Some(insider) = &stats.insider {
                println!(
                    "campaigns:      {} ({} succeeded, mean {:.4} runs, {} accusations)",
                    insider.campaigns, insider.succeeded, insider.mean_runs, insider.accusations
                );
            }
            for warning in &stats.warnings {
                println!("warning:        {warning}");
            }
            println!("duration:       {} ms", stats.duration_ms);
        }
    }
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<ExitCode, String> {
    let mut cfg = build_scenario(&args.scenario)?;
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if cfg.adversary.is_none() {
        return Err("attack needs an adversary; pass --adversary or set one in --config".into());
    }
    let stats = run_monte_carlo(&cfg).map_err(|err| err.to_string())?;
    print_stats(&stats, args.format)?;
    Ok(ExitCode::SUCCESS)
}

/// Parses "1,2,4", "1..8" (half-open), or "1..=8" (inclusive).
fn parse_l_values(text: &str) -> Result<Vec<usize>, String> {
    let text = text.trim();
    let parse_one = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid decoy count {s:?}"))
    };
    if let Some((start, rest)) = text.split_once("..") {
        let start: usize = parse_one(start)?;
        let (inclusive, end) = match rest.strip_prefix('=') {
            Some(end) => (true, end),
            None => (false, rest),
        };
        let end: usize = parse_one(end)?;
        let values: Vec<usize> = if inclusive {
            (start..=end).collect()
        } else {
            (start..end).collect()
        };
        if values.is_empty() {
            return Err(format!("range {text:?} is empty"));
        }
        return Ok(values);
    }
    let values = text
        .split(',')
        .map(parse_one)
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("no decoy counts given".into());
    }
    Ok(values)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, String> {
    let mut cfg = build_scenario(&args.scenario)?;
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    let values = parse_l_values(&args.l_values)?;
    println!("{}", ScenarioStats::CSV_HEADER);
    for l in values {
        let mut point = cfg.clone();
        point.l = Some(l);
        let mut stats = run_monte_carlo(&point).map_err(|err| err.to_string())?;
        stats.scenario = format!("{}(l={l})", stats.scenario);
        println!("{}", stats.to_csv_row());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode, String> {
    let values = parse_l_values(&args.l_values)?;
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err("ratio must lie in (0, 1]".into());
    }
    let margin = leakage_margin_check(args.ratio);
    match args.format {
        FormatArg::Json => {
            let pass_rates: Vec<serde_json::Value> = values
                .iter()
                .map(|&l| {
                    serde_json::json!({
                        "l": l,
                        "pass_probability": analytic_pass_probability(l as u32),
                    })
                })
                .collect();
            let doc = serde_json::json!({
                "intercept_resend_pass": pass_rates,
                "eavesdropper_information_per_qubit": eavesdropper_information_per_qubit(),
                "expected_abort_retry_runs": qka_core::adversary::expected_retry_runs(),
                "leakage_margin": margin,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).map_err(|err| err.to_string())?
            );
        }
        FormatArg::Pretty | FormatArg::Csv => {
            println!("intercept-resend survival of l decoys, (3/4)^l:");
            for &l in &values {
                println!("  l = {l:>4}: {:.6}", analytic_pass_probability(l as u32));
            }
            println!(
                "eavesdropper information per intercepted key qubit: {:.6} bits",
                eavesdropper_information_per_qubit()
            );
            println!(
                "expected abort-and-retry executions: {:.1}",
                qka_core::adversary::expected_retry_runs()
            );
            println!(
                "privacy amplification at ratio {:.3}: removes {:.4}, leakage bound {:.4}, margin {:+.4} ({})",
                args.ratio,
                margin.removed_fraction,
                margin.leakage,
                margin.margin,
                if margin.covered { "covered" } else { "NOT covered" }
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
