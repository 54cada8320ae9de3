//! The 196-wide model input and its z-score standardizer.

use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{MeasurementRecord, N_CHANNELS};
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 6 + 2 * N_CHANNELS;
/// Stand-in for VOA telemetry an amplifier does not expose.
pub const SENTINEL: f64 = -999.0;
/// Positions of the three VOA features.
pub const VOA_SLOTS: Range<usize> = 3..6;
pub const POWER_SLOTS: Range<usize> = 6..6 + N_CHANNELS;
pub const MASK_SLOTS: Range<usize> = 6 + N_CHANNELS..N_FEATURES;

/// `[G0, P_in, P_out, P^V_in, P^V_out, P^V_attn, P(1..95), c(1..95)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != N_FEATURES {
            return Err(Error::DimensionMismatch { expected: N_FEATURES, actual: values.len() });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn has_sentinel(&self) -> bool {
        self.0[VOA_SLOTS].iter().any(|v| *v == SENTINEL)
    }
}

pub fn assemble_features(r: &MeasurementRecord) -> FeatureVector {
    let mut v = Vec::with_capacity(N_FEATURES);
    v.push(r.gain_target_db);
    v.push(r.total_in_dbm);
    v.push(r.total_out_dbm);
    for voa in [r.voa_in_dbm, r.voa_out_dbm, r.voa_attn_db] {
        v.push(voa.unwrap_or(SENTINEL));
    }
    v.extend_from_slice(r.p_in.values_dbm());
    v.extend(r.mask.weights());
    FeatureVector(v)
}

/// Per-feature z-score fitted on training vectors.
///
/// Sentinels in the VOA slots are excluded from the statistics and pass
/// through untouched. A column that is entirely sentinel keeps mean 0 and
/// std 1; it is never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub sentinel: f64,
}

fn is_sentinel_slot(j: usize, v: f64, sentinel: f64) -> bool {
    VOA_SLOTS.contains(&j) && v == sentinel
}

pub fn fit_standardizer(train: &[FeatureVector]) -> Result<Standardizer> {
    if train.len() < 2 {
        return Err(Error::DegenerateStatistics(format!("need at least 2 vectors, got {}", train.len())));
    }
    let mut mean = vec![0.0; N_FEATURES];
    let mut std = vec![1.0; N_FEATURES];
    for j in 0..N_FEATURES {
        let col: Vec<f64> = train
            .iter()
            .map(|v| v.0[j])
            .filter(|x| !is_sentinel_slot(j, *x, SENTINEL))
            .collect();
        match col.len() {
            0 => continue,
            1 => {
                return Err(Error::DegenerateStatistics(format!(
                    "feature {j} has a single non-sentinel observation"
                )))
            }
            n => {
                let m = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
                mean[j] = m;
                let s = var.sqrt();
                std[j] = if s > 1e-12 { s } else { 1.0 };
            }
        }
    }
    Ok(Standardizer { mean, std, sentinel: SENTINEL })
}

impl Standardizer {
    pub fn apply(&self, v: &FeatureVector) -> Vec<f64> {
        v.0.iter()
            .enumerate()
            .map(|(j, x)| {
                if is_sentinel_slot(j, *x, self.sentinel) {
                    *x
                } else {
                    (x - self.mean[j]) / self.std[j]
                }
            })
            .collect()
    }

    /// Standardized vectors stacked as rows.
    pub fn apply_matrix(&self, vs: &[FeatureVector]) -> Array2<f64> {
        let mut m = Array2::zeros((vs.len(), N_FEATURES));
        for (mut row, v) in m.rows_mut().into_iter().zip(vs) {
            for (dst, src) in row.iter_mut().zip(self.apply(v)) {
                *dst = src;
            }
        }
        m
    }
}
