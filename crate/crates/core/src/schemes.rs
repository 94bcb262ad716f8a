//! The seven end-to-end hybrid designs, each an analog stage followed by a
//! digital stage and the common power normalization.
//!
//! The analog stage never looks at the noise level, so a caller sweeping
//! SNR can run [`design_analog`] once per channel and [`finish`] per SNR.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analog::{self, CiaSettings};
use crate::channel::ChannelSet;
use crate::digital;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::metrics::eig_product_metric;
use crate::model::{HybridPrecoder, SystemConfig, UserCombiner};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "REF21_SVD_MMSE")]
    Ref21SvdMmse,
    #[serde(rename = "REF29_CIA_BD")]
    Ref29CiaBd,
    #[serde(rename = "M3_CIA_MMSE")]
    M3CiaMmse,
    #[serde(rename = "P_CIA_STAR_MMSE_STAR")]
    PCiaStarMmseStar,
    #[serde(rename = "P_SVD_MMSE_STAR")]
    PSvdMmseStar,
    #[serde(rename = "P_CIA_MMSE_STAR")]
    PCiaMmseStar,
    #[serde(rename = "P_SVD_STAR_MMSE_STAR")]
    PSvdStarMmseStar,
}

/// Schemes sharing an analog family produce identical analog matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnalogFamily {
    /// Eigenvector phases at the users, conjugate channel phases at the BS.
    SvdConjugate,
    /// Independent CIA at the users, then CIA at the BS.
    Cia,
    /// Alternating CIA between users and BS.
    RecursiveCia,
    /// Eigenvector phases plus a digital eigen-combiner at the users,
    /// eigenvector phases of the combined channel at the BS.
    SvdEigen,
}

impl SchemeId {
    pub const ALL: [SchemeId; 7] = [
        SchemeId::Ref21SvdMmse,
        SchemeId::Ref29CiaBd,
        SchemeId::M3CiaMmse,
        SchemeId::PCiaStarMmseStar,
        SchemeId::PSvdMmseStar,
        SchemeId::PCiaMmseStar,
        SchemeId::PSvdStarMmseStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Ref21SvdMmse => "REF21_SVD_MMSE",
            SchemeId::Ref29CiaBd => "REF29_CIA_BD",
            SchemeId::M3CiaMmse => "M3_CIA_MMSE",
            SchemeId::PCiaStarMmseStar => "P_CIA_STAR_MMSE_STAR",
            SchemeId::PSvdMmseStar => "P_SVD_MMSE_STAR",
            SchemeId::PCiaMmseStar => "P_CIA_MMSE_STAR",
            SchemeId::PSvdStarMmseStar => "P_SVD_STAR_MMSE_STAR",
        }
    }

    pub fn family(self) -> AnalogFamily {
        match self {
            SchemeId::Ref21SvdMmse | SchemeId::PSvdMmseStar => AnalogFamily::SvdConjugate,
            SchemeId::Ref29CiaBd | SchemeId::M3CiaMmse | SchemeId::PCiaMmseStar => AnalogFamily::Cia,
            SchemeId::PCiaStarMmseStar => AnalogFamily::RecursiveCia,
            SchemeId::PSvdStarMmseStar => AnalogFamily::SvdEigen,
        }
    }

    /// Rejects configurations the scheme's wiring cannot serve.
    pub fn check(self, cfg: &SystemConfig) -> Result<()> {
        cfg.validate()?;
        let fail = |reason: String| {
            Err(Error::SchemeIncompatible {
                scheme: self.name().to_string(),
                reason,
            })
        };
        let ks = cfg.total_streams();
        match self {
            SchemeId::Ref21SvdMmse | SchemeId::PSvdMmseStar => {
                if cfg.n_rf_t != ks || cfg.n_rf_r != cfg.n_s {
                    return fail(format!(
                        "needs n_rf_t = K*n_s ({ks}) and n_rf_r = n_s ({}), got {} and {}",
                        cfg.n_s, cfg.n_rf_t, cfg.n_rf_r
                    ));
                }
            }
            SchemeId::M3CiaMmse | SchemeId::PCiaMmseStar | SchemeId::PCiaStarMmseStar => {
                if cfg.n_rf_r != cfg.n_s {
                    return fail(format!(
                        "analog-only receivers need n_rf_r = n_s ({}), got {}",
                        cfg.n_s, cfg.n_rf_r
                    ));
                }
            }
            SchemeId::Ref29CiaBd => {
                let others = (cfg.k_users - 1) * cfg.n_rf_r;
                if cfg.n_rf_t < others + cfg.n_s {
                    return fail(format!(
                        "block diagonalization needs n_rf_t - (K-1)*n_rf_r >= n_s, got {} - {} < {}",
                        cfg.n_rf_t, others, cfg.n_s
                    ));
                }
            }
            SchemeId::PSvdStarMmseStar => {}
        }
        Ok(())
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .iter()
            .copied()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownName {
                kind: "scheme",
                name: s.to_string(),
                valid: SchemeId::ALL.iter().map(|id| id.name()).collect::<Vec<_>>().join(", "),
            })
    }
}

/// Iteration budgets for the CIA-based families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions<T: Real> {
    pub cia: CiaSettings<T>,
    pub outer_max: usize,
}

impl<T: Real> Default for DesignOptions<T> {
    fn default() -> Self {
        DesignOptions {
            cia: CiaSettings::default(),
            outer_max: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics<T: Real> {
    /// `2 sum log2 s_i` over the `K n_s` largest singular values of the
    /// analog-only baseband channel.
    pub eig_metric: T,
    /// MMSE-optimal common receiver scalar for the stacked effective channel.
    pub receiver_scale: T,
    pub cia_sweeps: usize,
    pub cia_unconverged: usize,
    pub cia_regularized: bool,
    pub outer_passes: usize,
    pub outer_converged: bool,
    /// log2 objective per sweep of the (last) BS-side CIA run.
    pub objective_trace: Vec<T>,
    pub digital_regularized: bool,
}

#[derive(Debug, Clone)]
pub struct DesignResult<T: Real> {
    pub scheme: SchemeId,
    pub precoder: HybridPrecoder<T>,
    pub combiners: Vec<UserCombiner<T>>,
    pub diagnostics: Diagnostics<T>,
}

/// Output of the noise-independent part of a design.
#[derive(Debug, Clone)]
pub struct AnalogStage<T: Real> {
    pub family: AnalogFamily,
    pub f_rf: CMatrix<T>,
    pub w_rf: Vec<CMatrix<T>>,
    /// Digital combiners fixed at this stage (eigen-combiner family only).
    pub w_bb: Option<Vec<CMatrix<T>>>,
    /// Stacked `W_RF_k^H H_k F_RF`.
    pub h_bb: CMatrix<T>,
    pub eig_metric: T,
    pub diagnostics: Diagnostics<T>,
}

fn stacked_baseband<T: Real>(channels: &ChannelSet<T>, w: &[CMatrix<T>], f: &CMatrix<T>) -> CMatrix<T> {
    let blocks: Vec<CMatrix<T>> = channels
        .h
        .iter()
        .zip(w)
        .map(|(h, w)| linalg::adjoint(w).dot(h).dot(f))
        .collect();
    linalg::vstack(&blocks)
}

fn trace_log2<T: Real>(trace: &[crate::model::PseudoDet<T>]) -> Vec<T> {
    trace.iter().map(|p| p.log2).collect()
}

pub fn design_analog<T: Real>(
    family: AnalogFamily,
    channels: &ChannelSet<T>,
    cfg: &SystemConfig,
    opts: &DesignOptions<T>,
) -> Result<AnalogStage<T>> {
    cfg.validate()?;
    if channels.k_users() != cfg.k_users {
        return Err(Error::Dimension(format!(
            "{} channels for {} users",
            channels.k_users(),
            cfg.k_users
        )));
    }
    if channels.h.iter().any(|h| h.dim() != (cfg.n_r, cfg.n_t)) {
        return Err(Error::Dimension("channel shape does not match the configuration".into()));
    }
    let mut diag = Diagnostics::default();
    let h_stack = channels.stacked();
    let (f_rf, w_rf, w_bb) = match family {
        AnalogFamily::SvdConjugate => {
            let w: Vec<CMatrix<T>> = channels
                .h
                .iter()
                .map(|h| analog::svd_phase_combiner(h, cfg.n_s))
                .collect::<Result<_>>()?;
            let blocks: Vec<CMatrix<T>> = channels
                .h
                .iter()
                .zip(&w)
                .map(|(h, w)| analog::conjugate_phase_precoder(h, w))
                .collect::<Result<_>>()?;
            (linalg::hstack(&blocks), w, None)
        }
        AnalogFamily::Cia => {
            let mut w = Vec::with_capacity(cfg.k_users);
            for h in &channels.h {
                let r = analog::cia_analog_combiner(h, cfg.n_rf_r, &opts.cia)?;
                diag.cia_sweeps += r.sweeps;
                diag.cia_unconverged += usize::from(!r.converged);
                diag.cia_regularized |= r.regularized;
                w.push(r.b);
            }
            let r = analog::cia_analog_precoder(&h_stack, &linalg::blkdiag(&w), cfg.n_rf_t, &opts.cia)?;
            diag.cia_sweeps += r.sweeps;
            diag.cia_unconverged += usize::from(!r.converged);
            diag.cia_regularized |= r.regularized;
            diag.objective_trace = trace_log2(&r.objective_trace);
            (r.b, w, None)
        }
        AnalogFamily::RecursiveCia => {
            let r = analog::recursive_cia(channels, cfg, &opts.cia, opts.outer_max)?;
            diag.cia_sweeps = r.inner_sweeps;
            diag.cia_unconverged = r.inner_unconverged;
            diag.cia_regularized = r.regularized;
            diag.outer_passes = r.passes;
            diag.outer_converged = r.converged;
            let w_blk = linalg::blkdiag(&r.w_rf);
            let gram = analog::composite_gram(&h_stack, &w_blk);
            // objective of the final precoder under the final combiners
            diag.objective_trace = vec![analog::cia_objective(&r.f_rf, &gram)?.log2];
            (r.f_rf, r.w_rf, None)
        }
        AnalogFamily::SvdEigen => {
            let mut w_rf = Vec::with_capacity(cfg.k_users);
            let mut w_bb = Vec::with_capacity(cfg.k_users);
            let mut w_full = Vec::with_capacity(cfg.k_users);
            for h in &channels.h {
                let wr = analog::svd_phase_combiner(h, cfg.n_rf_r)?;
                let wb = digital::svd_digital_combiner(&linalg::adjoint(&wr).dot(h), cfg.n_s)?;
                w_full.push(wr.dot(&wb));
                w_rf.push(wr);
                w_bb.push(wb);
            }
            let f = analog::eig_phase_precoder(&h_stack, &linalg::blkdiag(&w_full), cfg.n_rf_t)?;
            (f, w_rf, Some(w_bb))
        }
    };
    let h_bb = stacked_baseband(channels, &w_rf, &f_rf);
    let eig_metric = eig_product_metric(&h_bb, cfg.total_streams())?;
    diag.eig_metric = eig_metric;
    Ok(AnalogStage {
        family,
        f_rf,
        w_rf,
        w_bb,
        h_bb,
        eig_metric,
        diagnostics: diag,
    })
}

/// Digital stage and normalization on top of a precomputed analog stage,
/// at the noise level in `cfg`.
pub fn finish<T: Real>(
    scheme: SchemeId,
    stage: &AnalogStage<T>,
    channels: &ChannelSet<T>,
    cfg: &SystemConfig,
) -> Result<DesignResult<T>> {
    scheme.check(cfg)?;
    if stage.family != scheme.family() {
        return Err(Error::InvalidConfig(format!(
            "analog stage {:?} cannot finish scheme {}",
            stage.family,
            scheme.name()
        )));
    }
    let noise_var = T::lit(cfg.noise_var);
    let e_t = T::lit(cfg.total_energy());
    let mut diag = stage.diagnostics.clone();
    let analog_only = || stage.w_rf.iter().cloned().map(UserCombiner::analog_only).collect::<Vec<_>>();

    let (f_bb, combiners) = match scheme {
        SchemeId::Ref21SvdMmse | SchemeId::M3CiaMmse => (digital::pseudo_mmse(&stage.h_bb, noise_var)?, analog_only()),
        SchemeId::PSvdMmseStar | SchemeId::PCiaMmseStar | SchemeId::PCiaStarMmseStar => {
            let gamma = digital::combined_noise_trace(&stage.w_rf, noise_var);
            let s = digital::mmse_bb(&stage.h_bb, &stage.f_rf, gamma, e_t)?;
            diag.digital_regularized = s.regularized;
            (s.x, analog_only())
        }
        SchemeId::Ref29CiaBd => {
            let blocks: Vec<CMatrix<T>> = (0..cfg.k_users)
                .map(|k| {
                    stage
                        .h_bb
                        .slice(ndarray::s![k * cfg.n_rf_r..(k + 1) * cfg.n_rf_r, ..])
                        .to_owned()
                })
                .collect();
            let bd = digital::bd_precoder(&blocks, cfg.n_s)?;
            let combiners = stage
                .w_rf
                .iter()
                .zip(bd.w_bb)
                .map(|(w_rf, w_bb)| UserCombiner {
                    w_rf: w_rf.clone(),
                    w_bb,
                })
                .collect();
            (bd.f_bb, combiners)
        }
        SchemeId::PSvdStarMmseStar => {
            let w_bb = stage
                .w_bb
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("analog stage lacks digital combiners".into()))?;
            let combiners: Vec<UserCombiner<T>> = stage
                .w_rf
                .iter()
                .zip(w_bb)
                .map(|(w_rf, w_bb)| UserCombiner {
                    w_rf: w_rf.clone(),
                    w_bb: w_bb.clone(),
                })
                .collect();
            let full: Vec<CMatrix<T>> = combiners.iter().map(UserCombiner::full).collect();
            let h_tilde = stacked_baseband(channels, &full, &stage.f_rf);
            let gamma = digital::combined_noise_trace(&full, noise_var);
            let s = digital::mmse_bb(&h_tilde, &stage.f_rf, gamma, e_t)?;
            diag.digital_regularized = s.regularized;
            (s.x, combiners)
        }
    };
    let precoder = HybridPrecoder::new(stage.f_rf.clone(), f_bb)?.normalized(e_t)?;
    diag.receiver_scale = receiver_scale(channels, &precoder, &combiners, noise_var);
    Ok(DesignResult {
        scheme,
        precoder,
        combiners,
        diagnostics: diag,
    })
}

/// `argmin_s E||x - s (H_eff F x + n)||^2` over real `s` for the stacked
/// effective channel; falls back to 1 when the alignment is not positive.
fn receiver_scale<T: Real>(
    channels: &ChannelSet<T>,
    precoder: &HybridPrecoder<T>,
    combiners: &[UserCombiner<T>],
    noise_var: T,
) -> T {
    let full: Vec<CMatrix<T>> = combiners.iter().map(UserCombiner::full).collect();
    let hf = stacked_baseband(channels, &full, &precoder.product());
    let cross = linalg::trace(&hf).re;
    let denom = linalg::frob_sqr(&hf) + digital::combined_noise_trace(&full, noise_var);
    let s = cross / denom;
    if s > T::zero() && s.is_finite() {
        s
    } else {
        T::one()
    }
}

pub fn design_with<T: Real>(
    scheme: SchemeId,
    channels: &ChannelSet<T>,
    cfg: &SystemConfig,
    opts: &DesignOptions<T>,
) -> Result<DesignResult<T>> {
    scheme.check(cfg)?;
    let stage = design_analog(scheme.family(), channels, cfg, opts)?;
    finish(scheme, &stage, channels, cfg)
}

pub fn design<T: Real>(scheme: SchemeId, channels: &ChannelSet<T>, cfg: &SystemConfig) -> Result<DesignResult<T>> {
    design_with(scheme, channels, cfg, &DesignOptions::default())
}
