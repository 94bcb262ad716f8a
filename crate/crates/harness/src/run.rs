//! Trial execution and aggregation.
//!
//! A trial owns one channel realization. Schemes sharing an analog family
//! share one analog stage; the digital stage and all metrics are redone per
//! SNR. BER draws for a given (trial, snr) come from one seed shared by all
//! schemes and detectors, so every comparison is paired.

use hbf_core::channel::{generate_channel, ChannelSet};
use hbf_core::detection::Constellation;
use hbf_core::metrics::{ber_trial_multi, sum_rate, BitCount};
use hbf_core::schemes::{design_analog, finish, AnalogFamily, AnalogStage, DesignOptions};
use hbf_core::{DetectorMode, SchemeId};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::spec::{default_workers, ExperimentSpec};

/// 95% two-sided normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Result of one (scheme, snr) cell in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTrial {
    pub eig_metric: f64,
    pub sum_rate: f64,
    /// One count per detector, in spec order.
    pub bits: Vec<BitCount>,
    pub cia_unconverged: usize,
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub index: usize,
    pub seed: u64,
    pub channel_hash: String,
    /// `cells[scheme][snr]`; `Err` holds the solver failure message.
    pub cells: Vec<Vec<Result<CellTrial, String>>>,
    /// Per scheme, the log2 CIA objective per sweep of its analog stage
    /// (empty for designs without CIA).
    pub cia_traces: Vec<Vec<f64>>,
}

/// Aggregated CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: SchemeId,
    pub detector: Option<DetectorMode>,
    pub snr_db: f64,
    pub trials: usize,
    pub eig_metric_mean: f64,
    pub sum_rate_mean: f64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub ber: Option<f64>,
    pub ber_ci: Option<(f64, f64)>,
    pub fail_count: usize,
}

/// Per-scheme solver health over the whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SchemeHealth {
    pub scheme: String,
    pub failed_cells: usize,
    pub cia_unconverged: usize,
    pub regularized_cells: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub rows: Vec<SummaryRow>,
    pub health: Vec<SchemeHealth>,
    #[serde(skip)]
    pub trials: Vec<TrialOutcome>,
}

impl RunSummary {
    /// Per-trial values of one cell, `None` where the trial failed.
    pub fn paired<F: Fn(&CellTrial) -> f64>(&self, scheme: usize, snr: usize, f: F) -> Vec<Option<f64>> {
        self.trials
            .iter()
            .map(|t| t.cells[scheme][snr].as_ref().ok().map(&f))
            .collect()
    }
}

/// Wilson score interval for `k` successes in `n` trials at 95%.
pub fn wilson_interval(k: u64, n: u64) -> Option<(f64, f64)> {
    if n == 0 || k > n {
        return None;
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    Some((lo, hi))
}

/// Seed of the BER draws for one (trial, snr) cell.
pub fn ber_seed(trial_seed: u64, snr_index: usize) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = trial_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((snr_index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// First 16 hex digits of SHA-256 over the channel entries.
pub fn channel_hash(ch: &ChannelSet<f64>) -> String {
    let mut h = Sha256::new();
    for m in &ch.h {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for z in m.iter() {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

/// Evaluates one trial. Deterministic in `(spec, index)`.
pub fn run_trial(spec: &ExperimentSpec, index: usize) -> TrialOutcome {
    let seed = spec.base_seed + index as u64;
    let n_snr = spec.snr_grid_db.len();
    let fail_all = |msg: String| vec![vec![Err(msg); n_snr]; spec.schemes.len()];
    let ch = match generate_channel::<f64>(&spec.cfg, seed) {
        Ok(ch) => ch,
        Err(e) => {
            return TrialOutcome {
                index,
                seed,
                channel_hash: String::new(),
                cells: fail_all(format!("channel: {e}")),
                cia_traces: vec![Vec::new(); spec.schemes.len()],
            }
        }
    };
    let q = Constellation::<f64>::for_modulation(spec.cfg.modulation);
    let opts = DesignOptions::default();
    let mut stages: Vec<(AnalogFamily, Result<AnalogStage<f64>, String>)> = Vec::new();
    let mut cells = Vec::with_capacity(spec.schemes.len());
    let mut cia_traces = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let family = scheme.family();
        let pos = match stages.iter().position(|(f, _)| *f == family) {
            Some(p) => p,
            None => {
                let st = design_analog(family, &ch, &spec.cfg, &opts).map_err(|e| e.to_string());
                stages.push((family, st));
                stages.len() - 1
            }
        };
        cia_traces.push(match &stages[pos].1 {
            Ok(st) => st.diagnostics.objective_trace.clone(),
            Err(_) => Vec::new(),
        });
        let row = match &stages[pos].1 {
            Err(e) => vec![Err(e.clone()); n_snr],
            Ok(stage) => spec
                .snr_grid_db
                .iter()
                .enumerate()
                .map(|(j, &snr)| evaluate_cell(spec, &ch, &q, stage, scheme, snr, ber_seed(seed, j)))
                .collect(),
        };
        cells.push(row);
    }
    TrialOutcome {
        index,
        seed,
        channel_hash: channel_hash(&ch),
        cells,
        cia_traces,
    }
}

fn evaluate_cell(
    spec: &ExperimentSpec,
    ch: &ChannelSet<f64>,
    q: &Constellation<f64>,
    stage: &AnalogStage<f64>,
    scheme: SchemeId,
    snr_db: f64,
    seed: u64,
) -> Result<CellTrial, String> {
    let cfg = spec.cfg.clone().with_snr_db(snr_db);
    let result = finish(scheme, stage, ch, &cfg).map_err(|e| e.to_string())?;
    let rate = sum_rate(ch, &result, cfg.noise_var).map_err(|e| e.to_string())?;
    let bits = if spec.detectors.is_empty() {
        Vec::new()
    } else {
        ber_trial_multi(ch, &result, cfg.noise_var, &spec.detectors, q, spec.vectors_per_trial, seed)
            .map_err(|e| e.to_string())?
    };
    let d = &result.diagnostics;
    Ok(CellTrial {
        eig_metric: d.eig_metric,
        sum_rate: rate.value,
        bits,
        cia_unconverged: d.cia_unconverged,
        regularized: d.cia_regularized || d.digital_regularized || rate.regularized,
    })
}

/// Runs every trial on a pool of `workers` threads (0 = default) and
/// reduces in trial order, so the result does not depend on the pool size.
pub fn run_trials(spec: &ExperimentSpec, workers: usize) -> Result<Vec<TrialOutcome>> {
    let workers = if workers == 0 { default_workers() } else { workers };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..spec.n_trials).into_par_iter().map(|i| run_trial(spec, i)).collect()))
}

pub fn aggregate(spec: &ExperimentSpec, trials: Vec<TrialOutcome>) -> RunSummary {
    let det_slots: Vec<Option<usize>> = if spec.detectors.is_empty() {
        vec![None]
    } else {
        (0..spec.detectors.len()).map(Some).collect()
    };
    let mut rows = Vec::new();
    let mut health = Vec::new();
    for (i, &scheme) in spec.schemes.iter().enumerate() {
        let mut h = SchemeHealth {
            scheme: scheme.name().into(),
            ..Default::default()
        };
        for slot in &det_slots {
            for (j, &snr_db) in spec.snr_grid_db.iter().enumerate() {
                let (mut n, mut fail) = (0usize, 0usize);
                let (mut eig, mut rate) = (0.0, 0.0);
                let (mut sent, mut errors) = (0u64, 0u64);
                for t in &trials {
                    match &t.cells[i][j] {
                        Ok(c) => {
                            n += 1;
                            eig += c.eig_metric;
                            rate += c.sum_rate;
                            if let Some(d) = slot {
                                sent += c.bits[*d].bits_sent;
                                errors += c.bits[*d].bit_errors;
                            }
                            if slot.is_none_or(|d| d == 0) {
                                h.cia_unconverged += c.cia_unconverged;
                                h.regularized_cells += usize::from(c.regularized);
                            }
                        }
                        Err(_) => {
                            fail += 1;
                            if slot.is_none_or(|d| d == 0) {
                                h.failed_cells += 1;
                            }
                        }
                    }
                }
                let mean = |s: f64| if n > 0 { s / n as f64 } else { f64::NAN };
                let has_bits = slot.is_some() && sent > 0;
                rows.push(SummaryRow {
                    scheme,
                    detector: slot.map(|d| spec.detectors[d]),
                    snr_db,
                    trials: spec.n_trials,
                    eig_metric_mean: mean(eig),
                    sum_rate_mean: mean(rate),
                    bits_sent: sent,
                    bit_errors: errors,
                    ber: has_bits.then(|| errors as f64 / sent as f64),
                    ber_ci: if has_bits { wilson_interval(errors, sent) } else { None },
                    fail_count: fail,
                });
            }
        }
        health.push(h);
    }
    RunSummary {
        config_hash: spec.config_hash(),
        rows,
        health,
        trials,
    }
}

/// Validates, runs and aggregates without touching the file system.
pub fn run(spec: &ExperimentSpec, workers: usize) -> Result<RunSummary> {
    spec.validate()?;
    let trials = run_trials(spec, workers)?;
    Ok(aggregate(spec, trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hbf_core::SystemConfig;

    fn tiny() -> ExperimentSpec {
        let mut cfg = SystemConfig::mmwave_default(2);
        cfg.n_t = 16;
        ExperimentSpec {
            cfg,
            schemes: vec![SchemeId::M3CiaMmse, SchemeId::PCiaMmseStar, SchemeId::PSvdStarMmseStar],
            detectors: vec![DetectorMode::Mdd, DetectorMode::Amdd],
            snr_grid_db: vec![0.0, 10.0],
            n_trials: 4,
            vectors_per_trial: 20,
            base_seed: 5,
            output_path: String::new(),
            workers: 1,
        }
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(0, 100).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.036_994).abs() < 1e-5, "{hi}");
        let (lo, hi) = wilson_interval(50, 100).unwrap();
        assert!((lo - 0.403_831).abs() < 1e-5 && (hi - 0.596_169).abs() < 1e-5, "{lo} {hi}");
        assert!(wilson_interval(0, 0).is_none());
        assert!(wilson_interval(3, 2).is_none());
    }

    #[test]
    fn ber_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..50u64 {
            for j in 0..6 {
                assert!(seen.insert(ber_seed(t, j)));
            }
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let spec = tiny();
        assert_eq!(run_trial(&spec, 2), run_trial(&spec, 2));
        assert_ne!(run_trial(&spec, 1).channel_hash, run_trial(&spec, 2).channel_hash);
    }

    #[test]
    fn shared_family_gives_equal_eig_metric() {
        let spec = tiny();
        let t = run_trial(&spec, 0);
        let m3 = t.cells[0][0].as_ref().unwrap();
        let pc = t.cells[1][0].as_ref().unwrap();
        assert_eq!(m3.eig_metric, pc.eig_metric);
        // same analog stage and same digital rule up to scale: only the
        // noise-aware baseband differs
        assert!(m3.sum_rate.is_finite() && pc.sum_rate.is_finite());
    }

    #[test]
    fn rows_cover_every_cell() {
        let spec = tiny();
        let s = run(&spec, 1).unwrap();
        assert_eq!(s.rows.len(), 3 * 2 * 2);
        for r in &s.rows {
            assert_eq!(r.trials, 4);
            assert_eq!(r.fail_count, 0);
            assert_eq!(r.bits_sent, 4 * 20 * 2 * 2 * 2);
            let (lo, hi) = r.ber_ci.unwrap();
            assert!(lo <= r.ber.unwrap() && r.ber.unwrap() <= hi);
        }
        assert_eq!(s.paired(0, 1, |c| c.sum_rate).len(), 4);
    }

    #[test]
    fn no_detectors_gives_one_row_per_cell() {
        let mut spec = tiny();
        spec.detectors.clear();
        let s = run(&spec, 1).unwrap();
        assert_eq!(s.rows.len(), 3 * 2);
        assert!(s.rows.iter().all(|r| r.detector.is_none() && r.ber.is_none() && r.bits_sent == 0));
    }

    #[test]
    fn worker_count_does_not_matter() {
        let spec = tiny();
        let a = run(&spec, 1).unwrap();
        let b = run(&spec, 3).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.trials, b.trials);
    }
}
