//! Quick invariant checks on small configurations, run by `hbf selftest`.

use hbf_core::analog::{column_iterative, CiaSettings};
use hbf_core::channel::generate_channel;
use hbf_core::detection::{detect, effective_matrix, Constellation};
use hbf_core::digital::{constrained_mmse, MmseProblem};
use hbf_core::linalg::{adjoint, columns, frob, frob_sqr, identity, trace};
use hbf_core::schemes::{design, design_analog, DesignOptions};
use hbf_core::{DetectorMode, SchemeId, SystemConfig, Vector};

use crate::run::run_trial;
use crate::spec::ExperimentSpec;

pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

fn small_cfg() -> SystemConfig {
    let mut cfg = SystemConfig::mmwave_default(2);
    cfg.n_t = 16;
    cfg.with_snr_db(10.0)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit_modulus_and_power() -> Result<(), String> {
    let cfg = small_cfg();
    for seed in 0..5 {
        let ch = generate_channel::<f64>(&cfg, seed).map_err(|e| e.to_string())?;
        for s in SchemeId::ALL {
            let r = design(s, &ch, &cfg).map_err(|e| format!("{s}: {e}"))?;
            let target_t = 1.0 / (cfg.n_t as f64).sqrt();
            let target_r = 1.0 / (cfg.n_r as f64).sqrt();
            let bad_t = r.precoder.f_rf.iter().any(|z| (z.norm() - target_t).abs() > 1e-12 * target_t);
            let bad_r = r
                .combiners
                .iter()
                .any(|c| c.w_rf.iter().any(|z| (z.norm() - target_r).abs() > 1e-12 * target_r));
            ensure(!bad_t && !bad_r, || format!("{s}: analog entry off the unit circle"))?;
            let p = frob_sqr(&r.precoder.product());
            let e_t = cfg.total_energy();
            ensure((p - e_t).abs() <= 1e-9 * e_t, || format!("{s}: power {p} != {e_t}"))?;
        }
    }
    Ok(())
}

fn bd_leakage() -> Result<(), String> {
    let cfg = small_cfg();
    for seed in 0..5 {
        let ch = generate_channel::<f64>(&cfg, seed).map_err(|e| e.to_string())?;
        let r = design(SchemeId::Ref29CiaBd, &ch, &cfg).map_err(|e| e.to_string())?;
        for j in 0..cfg.k_users {
            let hbb = adjoint(&r.combiners[j].w_rf).dot(&ch.h[j]).dot(&r.precoder.f_rf);
            for k in (0..cfg.k_users).filter(|&k| k != j) {
                let fk = columns(&r.precoder.f_bb, k * cfg.n_s, cfg.n_s);
                let leak = frob(&hbb.dot(&fk)) / frob(&hbb);
                ensure(leak < 1e-9, || format!("leakage {leak:e} from user {k} into {j}"))?;
            }
        }
    }
    Ok(())
}

fn cia_monotone() -> Result<(), String> {
    let cfg = small_cfg();
    for seed in 0..5 {
        let ch = generate_channel::<f64>(&cfg, seed).map_err(|e| e.to_string())?;
        let h = &ch.h[0];
        let d = adjoint(h).dot(h);
        let out = column_iterative(&d, 2, &CiaSettings::default()).map_err(|e| e.to_string())?;
        for w in out.objective_trace.windows(2) {
            ensure(w[1].at_least(&w[0], 1e-9), || format!("objective fell: {:?} -> {:?}", w[0], w[1]))?;
        }
    }
    Ok(())
}

fn mmse_energy() -> Result<(), String> {
    let cfg = small_cfg();
    let ch = generate_channel::<f64>(&cfg, 3).map_err(|e| e.to_string())?;
    let st = design_analog(SchemeId::M3CiaMmse.family(), &ch, &cfg, &DesignOptions::default())
        .map_err(|e| e.to_string())?;
    let n = st.h_bb.nrows();
    let p = MmseProblem {
        h_eff: st.h_bb.clone(),
        a: adjoint(&st.f_rf).dot(&st.f_rf),
        r_x: identity(n),
        r_n: identity::<f64>(n).mapv(|z| z * cfg.noise_var),
        e_t: cfg.total_energy(),
    };
    let sol = constrained_mmse(&p).map_err(|e| e.to_string())?;
    let e = p.energy(&sol.f);
    ensure((e - p.e_t).abs() <= 1e-9 * p.e_t, || format!("energy {e} != {}", p.e_t))?;
    ensure(sol.beta > 0.0, || "nonpositive receiver scale".into())
}

fn noise_free_detection() -> Result<(), String> {
    let cfg = small_cfg();
    let q = Constellation::<f64>::qpsk();
    let ch = generate_channel::<f64>(&cfg, 4).map_err(|e| e.to_string())?;
    let r = design(SchemeId::PSvdStarMmseStar, &ch, &cfg).map_err(|e| e.to_string())?;
    let a = effective_matrix(&ch, &r, 0);
    let eye = identity::<f64>(cfg.n_s);
    for i in 0..q.size().pow(cfg.n_s as u32) {
        let x: Vector = (0..cfg.n_s).map(|j| q.points[(i / q.size().pow(j as u32)) % q.size()]).collect();
        let y = a.dot(&x);
        let got = detect(&y, &a, &eye, DetectorMode::Mdd, &q).map_err(|e| e.to_string())?;
        ensure(got == x.to_vec(), || format!("hypothesis {i} not recovered"))?;
    }
    Ok(())
}

fn determinism() -> Result<(), String> {
    let spec = ExperimentSpec {
        cfg: small_cfg(),
        schemes: SchemeId::ALL.to_vec(),
        detectors: vec![DetectorMode::Mdd, DetectorMode::Amdd],
        snr_grid_db: vec![5.0],
        n_trials: 1,
        vectors_per_trial: 10,
        base_seed: 11,
        output_path: String::new(),
        workers: 1,
    };
    ensure(run_trial(&spec, 0) == run_trial(&spec, 0), || "repeated trial differs".into())
}

fn sum_rate_finite() -> Result<(), String> {
    let cfg = small_cfg();
    let ch = generate_channel::<f64>(&cfg, 6).map_err(|e| e.to_string())?;
    for s in SchemeId::ALL {
        let r = design(s, &ch, &cfg).map_err(|e| e.to_string())?;
        let rate = hbf_core::metrics::sum_rate(&ch, &r, cfg.noise_var).map_err(|e| e.to_string())?;
        ensure(rate.value.is_finite() && rate.value >= 0.0, || format!("{s}: rate {}", rate.value))?;
        ensure(trace(&r.precoder.product().dot(&adjoint(&r.precoder.product()))).re > 0.0, || {
            format!("{s}: zero precoder")
        })?;
    }
    Ok(())
}

pub fn run_selftest() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<(), String>); 7] = [
        ("unit modulus and transmit power", unit_modulus_and_power),
        ("block diagonalization leakage", bd_leakage),
        ("CIA objective nondecreasing", cia_monotone),
        ("constrained MMSE energy", mmse_energy),
        ("noise-free detection", noise_free_detection),
        ("sum rate finite", sum_rate_finite),
        ("trial determinism", determinism),
    ];
    checks
        .into_iter()
        .map(|(name, f)| Check { name, outcome: f() })
        .collect()
}
