//! LQR and model-reference adaptive control of an identified glycol heat
//! exchanger model, with uncertainty injection and tracking metrics.

pub mod analysis;
pub mod control;
pub mod error;
pub mod matcore;
pub mod plant;
pub mod scenario;

pub use error::{Error, Result};
