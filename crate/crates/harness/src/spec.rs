//! Experiment description, its JSON form and the sweep/list parsers the CLI
//! feeds into it.

use std::path::Path;

use hbf_core::detection::{Constellation, DEFAULT_HYPOTHESIS_CAP};
use hbf_core::{DetectorMode, SchemeId, SystemConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_VECTORS: usize = 100;

/// One Monte Carlo experiment. Every trial draws a channel from seed
/// `base_seed + index` and evaluates all (scheme, detector, snr) cells on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub cfg: SystemConfig,
    pub schemes: Vec<SchemeId>,
    /// Empty for runs that only report the eigen metric and sum rate.
    #[serde(default)]
    pub detectors: Vec<DetectorMode>,
    pub snr_grid_db: Vec<f64>,
    pub n_trials: usize,
    #[serde(default = "default_vectors")]
    pub vectors_per_trial: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_path: String,
    /// Thread count; 0 picks `HBF_WORKERS` or the machine's parallelism.
    /// Never affects results.
    #[serde(default)]
    pub workers: usize,
}

fn default_vectors() -> usize {
    DEFAULT_VECTORS
}

fn default_output() -> String {
    "results.csv".into()
}

impl ExperimentSpec {
    /// Four users at 64/4 antennas, every scheme, MDD and AMDD, 0..20 dB.
    pub fn desk_default() -> Self {
        ExperimentSpec {
            cfg: SystemConfig::mmwave_default(4),
            schemes: SchemeId::ALL.to_vec(),
            detectors: vec![DetectorMode::Mdd, DetectorMode::Amdd],
            snr_grid_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            n_trials: DEFAULT_TRIALS,
            vectors_per_trial: DEFAULT_VECTORS,
            base_seed: 0,
            output_path: default_output(),
            workers: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.schemes.is_empty() {
            return Err(HarnessError::Config("no schemes selected".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(HarnessError::Config("empty SNR grid".into()));
        }
        if let Some(bad) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return Err(HarnessError::Config(format!("non-finite SNR value {bad}")));
        }
        if self.n_trials == 0 {
            return Err(HarnessError::Config("n_trials must be at least 1".into()));
        }
        if !self.detectors.is_empty() && self.vectors_per_trial == 0 {
            return Err(HarnessError::Config("vectors_per_trial must be at least 1".into()));
        }
        if has_duplicates(&self.schemes) || has_duplicates(&self.detectors) {
            return Err(HarnessError::Config("duplicate scheme or detector".into()));
        }
        for s in &self.schemes {
            s.check(&self.cfg)?;
        }
        if !self.detectors.is_empty() {
            let q = Constellation::<f64>::for_modulation(self.cfg.modulation);
            let hyp = (q.size() as u128).checked_pow(self.cfg.n_s as u32).unwrap_or(u128::MAX);
            if hyp > DEFAULT_HYPOTHESIS_CAP {
                return Err(HarnessError::Config(format!(
                    "{} hypotheses per detection exceed the cap {}",
                    hyp, DEFAULT_HYPOTHESIS_CAP
                )));
            }
        }
        if self.base_seed.checked_add(self.n_trials as u64).is_none() {
            return Err(HarnessError::Config("base_seed + n_trials overflows".into()));
        }
        Ok(())
    }

    /// Short digest of everything that determines the CSV body. The output
    /// path and worker count are left out.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_path = String::new();
        canon.workers = 0;
        let bytes = serde_json::to_vec(&canon).expect("spec serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}

/// `"10"`, `"0,5,10"` or an inclusive `"start:step:stop"` range.
pub fn parse_snr_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |m: String| HarnessError::Config(format!("bad SNR grid `{text}`: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
                return Err(bad("step must be positive".into()));
            }
            if stop < start {
                return Err(bad("stop below start".into()));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if n > 10_000 {
                return Err(bad("too many points".into()));
            }
            (0..n).map(|i| start + i as f64 * step).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad("use a value list or start:step:stop".into())),
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite".into()));
    }
    Ok(grid)
}

/// Comma list of scheme names; `all` expands to every scheme the
/// configuration supports.
pub fn parse_schemes(text: &str, cfg: &SystemConfig) -> Result<Vec<SchemeId>> {
    if text.trim().eq_ignore_ascii_case("all") {
        let all: Vec<_> = SchemeId::ALL.into_iter().filter(|s| s.check(cfg).is_ok()).collect();
        if all.is_empty() {
            return Err(HarnessError::Config("no scheme supports this configuration".into()));
        }
        return Ok(all);
    }
    text.split(',')
        .map(|s| s.trim().parse::<SchemeId>().map_err(HarnessError::from))
        .collect()
}

pub fn parse_detectors(text: &str) -> Result<Vec<DetectorMode>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(DetectorMode::ALL.to_vec());
    }
    if text.trim().eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.trim().parse::<DetectorMode>().map_err(HarnessError::from))
        .collect()
}

/// `HBF_WORKERS` if set and positive, else the machine's parallelism.
pub fn default_workers() -> usize {
    std::env::var("HBF_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_forms() {
        assert_eq!(parse_snr_grid("10").unwrap(), vec![10.0]);
        assert_eq!(parse_snr_grid("0, 5,10").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_snr_grid("-5:5:20").unwrap(), vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_snr_grid("0:0.1:0.3").unwrap().len(), 4);
        for bad in ["", "a", "0:0:5", "5:1:0", "1:2", "0:1:2:3", "nan"] {
            assert!(parse_snr_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn scheme_lists() {
        let cfg = SystemConfig::mmwave_default(4);
        assert_eq!(parse_schemes("all", &cfg).unwrap().len(), 7);
        assert_eq!(
            parse_schemes("REF29_CIA_BD,p_svd_star_mmse_star", &cfg).unwrap(),
            vec![SchemeId::Ref29CiaBd, SchemeId::PSvdStarMmseStar]
        );
        let err = parse_schemes("REF29,M3", &cfg).unwrap_err().to_string();
        assert!(err.contains("P_SVD_STAR_MMSE_STAR"), "{err}");
        // wider BS RF: the K*n_s-only schemes drop out of `all`
        let mut wide = cfg.clone();
        wide.n_rf_t = 10;
        let all = parse_schemes("all", &wide).unwrap();
        assert!(!all.contains(&SchemeId::Ref21SvdMmse));
        assert!(all.contains(&SchemeId::Ref29CiaBd));
    }

    #[test]
    fn detector_lists() {
        assert_eq!(parse_detectors("all").unwrap().len(), 5);
        assert!(parse_detectors("none").unwrap().is_empty());
        assert_eq!(parse_detectors("mdd,NWIMDD").unwrap(), vec![DetectorMode::Mdd, DetectorMode::Nwimdd]);
        assert!(parse_detectors("ZF").unwrap_err().to_string().contains("AMDD"));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let mut v = serde_json::to_value(ExperimentSpec::desk_default()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
        v.as_object_mut().unwrap().remove("extra");
        v["cfg"]["bogus"] = serde_json::json!(1);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let spec = ExperimentSpec::desk_default();
        let back = ExperimentSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let minimal = r#"{"cfg":{"n_t":16,"n_r":4,"n_s":1,"k_users":2,"n_rf_t":2,"n_rf_r":1,"n_paths":4},
            "schemes":["M3_CIA_MMSE"],"snr_grid_db":[0],"n_trials":3}"#;
        let m = ExperimentSpec::from_json(minimal).unwrap();
        assert!(m.detectors.is_empty());
        assert_eq!(m.vectors_per_trial, DEFAULT_VECTORS);
        m.validate().unwrap();
    }

    #[test]
    fn hash_ignores_output_and_workers() {
        let a = ExperimentSpec::desk_default();
        let mut b = a.clone();
        b.output_path = "elsewhere.csv".into();
        b.workers = 7;
        assert_eq!(a.config_hash(), b.config_hash());
        b.base_seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn validation() {
        let ok = ExperimentSpec::desk_default();
        ok.validate().unwrap();
        let mut s = ok.clone();
        s.n_trials = 0;
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.snr_grid_db.clear();
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.schemes.push(SchemeId::Ref29CiaBd);
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.cfg.n_rf_t = 10;
        assert!(matches!(s.validate(), Err(HarnessError::Core(_))));
        let mut s = ok;
        s.base_seed = u64::MAX;
        assert!(s.validate().is_err());
    }
}
