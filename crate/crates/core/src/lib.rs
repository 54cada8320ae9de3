//! EDFA gain-spectrum modeling with a semi-supervised self-normalizing
//! network, plus one-shot and CORAL-based transfer between amplifiers.
//!
//! A deterministic synthetic amplifier ([`synth`]) stands in for lab
//! hardware so every pipeline can be checked against a known ground truth.

pub mod dataset;
pub mod domain;
pub mod error;
pub mod eval;
pub mod nn;
pub mod synth;
pub mod train;
pub mod transfer;

pub use domain::{
    compute_gain, dbm_to_mw, mw_to_dbm, validate_record, ChannelMask, ChannelPlan, ConfigClass, DeviceKind,
    Direction, GainSpectrum, MeasurementRecord, PowerSpectrum, Violation, N_CHANNELS,
};
pub use error::{Error, Result};
pub use nn::{init_network, Network, CANONICAL_DIMS};
