//! Measurement ingestion, ILA power renormalization, loading generators,
//! train/test splits and feature assembly.

pub mod features;
pub mod io;
pub mod loading;
pub mod split;

use serde::{Deserialize, Serialize};

use crate::domain::{
    dbm_to_mw, mw_to_dbm, ChannelMask, ConfigClass, DeviceKind, Direction, MeasurementRecord, PowerSpectrum,
    DARK_FLOOR_DBM, N_CHANNELS,
};
use crate::error::{Error, Result};

pub use features::{assemble_features, fit_standardizer, FeatureVector, Standardizer, N_FEATURES, SENTINEL};
pub use io::{ingest, ingest_ila_raw, write_ila_raw_csv, write_records, Format, Ingested, SCHEMA_VERSION};
pub use loading::{gen_fixed_configs, gen_goalpost_configs, gen_random_configs};
pub use split::{split, split_indices, SplitSpec};

/// ILA capture before renormalization: per-channel spectra come from the
/// OCMs of the two auxiliary ROADMs, totals from the power monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlaRawRecord {
    pub device_id: String,
    pub direction: Direction,
    pub gain_target_db: f64,
    pub config_class: ConfigClass,
    pub mask: ChannelMask,
    pub aux_in_spectrum_dbm: PowerSpectrum,
    pub aux_out_spectrum_dbm: PowerSpectrum,
    pub p_in_aux_total_mw: f64,
    pub p_out_aux_total_mw: f64,
    pub p_in_ila_total_mw: f64,
    pub p_out_ila_total_mw: f64,
}

/// Scale factors applied by [`normalize_ila_record`], plus the plain ratios
/// of the amplifier and auxiliary power-monitor totals for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlaScaling {
    pub sigma_in: f64,
    pub sigma_out: f64,
    pub pm_ratio_in: f64,
    pub pm_ratio_out: f64,
}

fn scale_spectrum(p: &PowerSpectrum, mask: &ChannelMask, sigma: f64) -> Result<PowerSpectrum> {
    let mut out = vec![DARK_FLOOR_DBM; N_CHANNELS];
    for i in mask.active_indices() {
        out[i] = mw_to_dbm(sigma * dbm_to_mw(p.values_dbm()[i]))?;
    }
    PowerSpectrum::from_dbm(out)
}

/// Rescales the auxiliary OCM spectra, in mW, so that the active channels sum
/// to the amplifier's own input and output power-monitor totals.
pub fn normalize_ila_record(raw: &IlaRawRecord) -> Result<(MeasurementRecord, IlaScaling)> {
    for v in [raw.p_in_aux_total_mw, raw.p_out_aux_total_mw, raw.p_in_ila_total_mw, raw.p_out_ila_total_mw] {
        if !(v > 0.0) {
            return Err(Error::NonPositivePower(v));
        }
    }
    if raw.mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let ocm_in = raw.aux_in_spectrum_dbm.total_mw(&raw.mask);
    let ocm_out = raw.aux_out_spectrum_dbm.total_mw(&raw.mask);
    if !(ocm_in > 0.0) {
        return Err(Error::NonPositivePower(ocm_in));
    }
    if !(ocm_out > 0.0) {
        return Err(Error::NonPositivePower(ocm_out));
    }
    let scaling = IlaScaling {
        sigma_in: raw.p_in_ila_total_mw / ocm_in,
        sigma_out: raw.p_out_ila_total_mw / ocm_out,
        pm_ratio_in: raw.p_in_ila_total_mw / raw.p_in_aux_total_mw,
        pm_ratio_out: raw.p_out_ila_total_mw / raw.p_out_aux_total_mw,
    };
    let record = MeasurementRecord {
        device_id: raw.device_id.clone(),
        kind: DeviceKind::Ila,
        direction: raw.direction,
        gain_target_db: raw.gain_target_db,
        tilt_db: 0.0,
        p_in: scale_spectrum(&raw.aux_in_spectrum_dbm, &raw.mask, scaling.sigma_in)?,
        p_out: scale_spectrum(&raw.aux_out_spectrum_dbm, &raw.mask, scaling.sigma_out)?,
        mask: raw.mask.clone(),
        total_in_dbm: mw_to_dbm(raw.p_in_ila_total_mw)?,
        total_out_dbm: mw_to_dbm(raw.p_out_ila_total_mw)?,
        voa_in_dbm: None,
        voa_out_dbm: None,
        voa_attn_db: None,
        config_class: raw.config_class,
    };
    Ok((record, scaling))
}
