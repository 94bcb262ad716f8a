//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hbf_core::channel::{generate_channel, ChannelDump};
use hbf_core::DetectorMode;

use crate::error::{HarnessError, Result};
use crate::output::{cia_trace_csv, metadata_json, sibling, summary_csv, trial_log_csv, write_atomic};
use crate::run::{aggregate, run_trials};
use crate::selftest::run_selftest;
use crate::spec::{parse_detectors, parse_schemes, parse_snr_grid, ExperimentSpec};

#[derive(Debug, Parser)]
#[command(name = "hbf", version, about = "Monte Carlo driver for hybrid precoder/combiner designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean eigenvalue-product metric of the analog baseband channel
    Eigmetric(RunArgs),
    /// Mean achievable sum rate per SNR
    Sumrate(RunArgs),
    /// Monte Carlo BER per detector and SNR
    Ber(RunArgs),
    /// Every metric and, by default, every detector
    All(RunArgs),
    /// Print the channel realization of one seed as JSON
    DumpChannel(RunArgs),
    /// Invariant checks on small configurations
    Selftest,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON experiment file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV (JSON for dump-channel; stdout if omitted there)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; trial i uses seed + i
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// SNR list "0,5,10" or inclusive range "start:step:stop" (dB)
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<String>,
    /// Comma list of scheme names, or "all"
    #[arg(long)]
    pub schemes: Option<String>,
    /// Comma list of detector names, "all" or "none"
    #[arg(long)]
    pub detectors: Option<String>,
    /// Transmit vectors per trial and SNR for BER
    #[arg(long)]
    pub vectors: Option<usize>,
    /// Worker threads (default: HBF_WORKERS or all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write per-trial and per-sweep CIA logs and print solver health
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Eig,
    Rate,
    Ber,
    All,
}

/// Builds the experiment for a subcommand from an optional config file and
/// flag overrides.
fn build_spec(kind: Kind, a: &RunArgs) -> Result<ExperimentSpec> {
    let from_file = a.config.is_some();
    let mut spec = match &a.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::desk_default(),
    };
    if let Some(s) = &a.schemes {
        spec.schemes = parse_schemes(s, &spec.cfg)?;
    }
    if let Some(d) = &a.detectors {
        spec.detectors = parse_detectors(d)?;
    }
    match kind {
        Kind::Eig | Kind::Rate => {
            if a.detectors.as_deref().is_some_and(|d| !d.trim().eq_ignore_ascii_case("none")) {
                return Err(HarnessError::Config("eigmetric and sumrate take no detectors".into()));
            }
            spec.detectors.clear();
            if kind == Kind::Eig && !from_file && a.snr.is_none() {
                // the metric ignores the noise level
                spec.snr_grid_db = vec![10.0];
            }
        }
        Kind::Ber if spec.detectors.is_empty() => spec.detectors = vec![DetectorMode::Mdd, DetectorMode::Amdd],
        Kind::All if a.detectors.is_none() && (!from_file || spec.detectors.is_empty()) => {
            spec.detectors = DetectorMode::ALL.to_vec()
        }
        _ => {}
    }
    if let Some(s) = &a.snr {
        spec.snr_grid_db = parse_snr_grid(s)?;
    }
    if let Some(t) = a.trials {
        spec.n_trials = t;
    }
    if let Some(s) = a.seed {
        spec.base_seed = s;
    }
    if let Some(v) = a.vectors {
        spec.vectors_per_trial = v;
    }
    if let Some(w) = a.workers {
        spec.workers = w;
    }
    if let Some(o) = &a.out {
        spec.output_path = o.display().to_string();
    }
    spec.validate()?;
    Ok(spec)
}

fn run_experiment(kind: Kind, a: &RunArgs) -> Result<()> {
    let spec = build_spec(kind, a)?;
    let trials = run_trials(&spec, spec.workers)?;
    let log = if a.verbose {
        Some((trial_log_csv(&spec, &trials)?, cia_trace_csv(&spec, &trials)?))
    } else {
        None
    };
    let summary = aggregate(&spec, trials);
    let out = PathBuf::from(&spec.output_path);
    write_atomic(&out, &summary_csv(&summary)?)?;
    write_atomic(&sibling(&out, "meta.json"), &metadata_json(&spec, &summary)?)?;
    if let Some((log, cia)) = log {
        write_atomic(&sibling(&out, "trials.csv"), &log)?;
        write_atomic(&sibling(&out, "cia.csv"), &cia)?;
    }
    if a.verbose {
        for h in &summary.health {
            eprintln!(
                "{:24} failed cells {:6}  CIA unconverged {:8}  regularized cells {:6}",
                h.scheme, h.failed_cells, h.cia_unconverged, h.regularized_cells
            );
        }
    }
    eprintln!("wrote {} rows to {} (config {})", summary.rows.len(), out.display(), summary.config_hash);
    Ok(())
}

fn dump_channel(a: &RunArgs) -> Result<()> {
    let spec = match &a.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::desk_default(),
    };
    spec.cfg.validate()?;
    let seed = a.seed.unwrap_or(spec.base_seed);
    let ch = generate_channel::<f64>(&spec.cfg, seed)?;
    let dump = ChannelDump::from_channel(&spec.cfg, seed, &ch);
    let mut text = serde_json::to_vec_pretty(&dump).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push(b'\n');
    match &a.out {
        Some(p) => write_atomic(p, &text),
        None => std::io::stdout()
            .write_all(&text)
            .map_err(|e| HarnessError::io("stdout", e)),
    }
}

fn selftest() -> Result<()> {
    let checks = run_selftest();
    let mut failed = 0;
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("PASS {}", c.name),
            Err(m) => {
                failed += 1;
                println!("FAIL {}: {m}", c.name);
            }
        }
    }
    if failed > 0 {
        return Err(HarnessError::Runtime(format!("{failed} of {} self checks failed", checks.len())));
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Eigmetric(a) => run_experiment(Kind::Eig, a),
        Command::Sumrate(a) => run_experiment(Kind::Rate, a),
        Command::Ber(a) => run_experiment(Kind::Ber, a),
        Command::All(a) => run_experiment(Kind::All, a),
        Command::DumpChannel(a) => dump_channel(a),
        Command::Selftest => selftest(),
    }
}

/// Parses `argv`, runs, and returns the process exit status.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> RunArgs {
        RunArgs::default()
    }

    #[test]
    fn subcommand_defaults() {
        let eig = build_spec(Kind::Eig, &args()).unwrap();
        assert!(eig.detectors.is_empty());
        assert_eq!(eig.snr_grid_db, vec![10.0]);
        let ber = build_spec(Kind::Ber, &args()).unwrap();
        assert_eq!(ber.detectors, vec![DetectorMode::Mdd, DetectorMode::Amdd]);
        let all = build_spec(Kind::All, &args()).unwrap();
        assert_eq!(all.detectors.len(), 5);
        assert_eq!(all.n_trials, crate::spec::DEFAULT_TRIALS);
    }

    #[test]
    fn overrides_apply() {
        let a = RunArgs {
            seed: Some(7),
            trials: Some(3),
            snr: Some("-5:5:5".into()),
            schemes: Some("M3_CIA_MMSE".into()),
            detectors: Some("nwimdd".into()),
            workers: Some(2),
            ..args()
        };
        let s = build_spec(Kind::Ber, &a).unwrap();
        assert_eq!((s.base_seed, s.n_trials, s.workers), (7, 3, 2));
        assert_eq!(s.snr_grid_db, vec![-5.0, 0.0, 5.0]);
        assert_eq!(s.detectors, vec![DetectorMode::Nwimdd]);
    }

    #[test]
    fn config_errors_exit_one() {
        let a = RunArgs {
            detectors: Some("MDD".into()),
            ..args()
        };
        assert_eq!(build_spec(Kind::Rate, &a).unwrap_err().exit_code(), 1);
        let a = RunArgs {
            schemes: Some("NOPE".into()),
            ..args()
        };
        assert_eq!(build_spec(Kind::Ber, &a).unwrap_err().exit_code(), 1);
        let a = RunArgs {
            trials: Some(0),
            ..args()
        };
        assert_eq!(build_spec(Kind::Ber, &a).unwrap_err().exit_code(), 1);
    }
}
