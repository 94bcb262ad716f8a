//! Hybrid analog/digital precoder and combiner designs for downlink
//! millimeter-wave multiuser MIMO, with channel generation, detectors and
//! performance metrics.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod analog;
pub mod channel;
pub mod detection;
pub mod digital;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod schemes;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use model::{Modulation, SystemConfig};
pub use schemes::SchemeId;
pub use detection::DetectorMode;

pub type Real = f64;
pub type Complex = num_complex::Complex<f64>;
pub type Matrix = linalg::CMatrix<f64>;
pub type Vector = linalg::CVector<f64>;
pub type Channels = channel::ChannelSet<f64>;
pub type Precoder = model::HybridPrecoder<f64>;
pub type Combiner = model::UserCombiner<f64>;
pub type Design = schemes::DesignResult<f64>;
pub type Qam = detection::Constellation<f64>;
