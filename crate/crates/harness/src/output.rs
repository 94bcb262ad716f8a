//! CSV and JSON persistence. Files are written to a temporary sibling and
//! renamed into place.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::run::{RunSummary, TrialOutcome};
use crate::spec::ExperimentSpec;

pub const CSV_HEADER: [&str; 13] = [
    "scheme",
    "detector",
    "snr_db",
    "trials",
    "eig_metric_mean",
    "sum_rate_mean",
    "bits_sent",
    "bit_errors",
    "ber",
    "ber_ci_low",
    "ber_ci_high",
    "fail_count",
    "config_hash",
];

/// How SNR values in every output relate to the noise level.
pub const SNR_CONVENTION: &str = "snr_db = 10 log10(E_T / noise_var), E_T = K * n_s";

fn fmt_f64(v: f64) -> String {
    // shortest round-trip form; stable across runs and platforms
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// The summary CSV as bytes.
pub fn summary_csv(summary: &RunSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Runtime(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &summary.rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.detector.map(|d| d.name().to_string()).unwrap_or_default(),
            fmt_f64(r.snr_db),
            r.trials.to_string(),
            fmt_f64(r.eig_metric_mean),
            fmt_f64(r.sum_rate_mean),
            r.bits_sent.to_string(),
            r.bit_errors.to_string(),
            fmt_opt(r.ber),
            fmt_opt(r.ber_ci.map(|c| c.0)),
            fmt_opt(r.ber_ci.map(|c| c.1)),
            r.fail_count.to_string(),
            summary.config_hash.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Runtime(format!("csv: {e}")))
}

/// One row per (trial, scheme, snr, detector) with the channel hash, so
/// rows from the same trial can be checked to share a channel.
pub fn trial_log_csv(spec: &ExperimentSpec, trials: &[TrialOutcome]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Runtime(format!("csv: {e}"));
    w.write_record([
        "trial",
        "seed",
        "channel_hash",
        "scheme",
        "snr_db",
        "detector",
        "eig_metric",
        "sum_rate",
        "bits_sent",
        "bit_errors",
        "cia_unconverged",
        "error",
    ])
    .map_err(csv_err)?;
    for t in trials {
        for (i, scheme) in spec.schemes.iter().enumerate() {
            for (j, &snr) in spec.snr_grid_db.iter().enumerate() {
                let lead = [
                    t.index.to_string(),
                    t.seed.to_string(),
                    t.channel_hash.clone(),
                    scheme.name().to_string(),
                    fmt_f64(snr),
                ];
                let rows: Vec<[String; 7]> = match &t.cells[i][j] {
                    Err(e) => vec![[
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        e.clone(),
                    ]],
                    Ok(c) => {
                        let base = |det: String, b: Option<hbf_core::metrics::BitCount>| {
                            [
                                det,
                                fmt_f64(c.eig_metric),
                                fmt_f64(c.sum_rate),
                                b.map(|b| b.bits_sent.to_string()).unwrap_or_default(),
                                b.map(|b| b.bit_errors.to_string()).unwrap_or_default(),
                                c.cia_unconverged.to_string(),
                                String::new(),
                            ]
                        };
                        if spec.detectors.is_empty() {
                            vec![base(String::new(), None)]
                        } else {
                            spec.detectors
                                .iter()
                                .zip(&c.bits)
                                .map(|(d, b)| base(d.name().to_string(), Some(*b)))
                                .collect()
                        }
                    }
                };
                for rest in rows {
                    w.write_record(lead.iter().chain(rest.iter())).map_err(csv_err)?;
                }
            }
        }
    }
    w.into_inner().map_err(|e| HarnessError::Runtime(format!("csv: {e}")))
}

/// Per-sweep CIA objective log: trial, seed, scheme, sweep, log2 objective.
/// Sweep 0 is the starting point.
pub fn cia_trace_csv(spec: &ExperimentSpec, trials: &[TrialOutcome]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Runtime(format!("csv: {e}"));
    w.write_record(["trial", "seed", "scheme", "sweep", "objective_log2"]).map_err(csv_err)?;
    for t in trials {
        for (scheme, trace) in spec.schemes.iter().zip(&t.cia_traces) {
            for (k, v) in trace.iter().enumerate() {
                w.write_record([
                    t.index.to_string(),
                    t.seed.to_string(),
                    scheme.name().to_string(),
                    k.to_string(),
                    fmt_f64(*v),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.into_inner().map_err(|e| HarnessError::Runtime(format!("csv: {e}")))
}

#[derive(Serialize)]
struct Metadata<'a> {
    config_hash: &'a str,
    snr_convention: &'static str,
    first_seed: u64,
    last_seed: u64,
    spec: &'a ExperimentSpec,
    health: &'a [crate::run::SchemeHealth],
}

/// Spec, seed range and solver health as pretty JSON.
pub fn metadata_json(spec: &ExperimentSpec, summary: &RunSummary) -> Result<Vec<u8>> {
    let meta = Metadata {
        config_hash: &summary.config_hash,
        snr_convention: SNR_CONVENTION,
        first_seed: spec.base_seed,
        last_seed: spec.base_seed + spec.n_trials as u64 - 1,
        spec,
        health: &summary.health,
    };
    let mut out = serde_json::to_vec_pretty(&meta).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let shown = path.display().to_string();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(&shown, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(&shown, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(&shown, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(&shown, e.error))?;
    Ok(())
}

/// `results.csv` -> `results.csv.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1e-7, 47.123456789012345, -3.0, f64::INFINITY] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/x.csv"), b"x").is_err());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("a/b.csv"), "meta.json"), Path::new("a/b.csv.meta.json"));
    }
}
