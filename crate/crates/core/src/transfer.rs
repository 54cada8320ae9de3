//! Transfer of a trained network to a new device: homogeneous fine-tuning
//! from a handful of fully loaded shots, and heterogeneous fine-tuning with
//! a CORAL penalty against a stored source covariance.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::split::gain_key;
use crate::domain::{ConfigClass, DeviceKind, MeasurementRecord};
use crate::error::{Error, Result};
use crate::nn::{adam_step, batch_covariance, AdamState, LossBreakdown, LossSpec, Network};
use crate::train::LabeledSet;

/// Batch size of the source reference and the per-epoch target batch cap.
pub const REFERENCE_BATCH: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomoTlConfig {
    pub shots_per_gain_setting: usize,
    pub epochs: usize,
    pub alpha0: f64,
    pub theta: f64,
    pub clip: f64,
}

impl Default for HomoTlConfig {
    fn default() -> Self {
        Self { shots_per_gain_setting: 1, epochs: 10_000, alpha0: 1e-3, theta: -1.0, clip: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeteroTlConfig {
    pub shots_per_gain_setting: usize,
    pub epochs: usize,
    pub output_lr: f64,
    pub layer_ratio: f64,
    pub halving_period: usize,
    pub lambda_coral: f64,
    pub reference_batch: usize,
    pub clip: f64,
}

impl Default for HeteroTlConfig {
    fn default() -> Self {
        Self {
            shots_per_gain_setting: 48,
            epochs: 10_000,
            output_lr: 1e-2,
            layer_ratio: 0.1,
            halving_period: 2000,
            lambda_coral: 0.4,
            reference_batch: REFERENCE_BATCH,
            clip: 1.0,
        }
    }
}

impl HeteroTlConfig {
    /// 32 shots per setting when the target has a VOA the source lacked,
    /// 48 when the target lacks the VOA.
    pub fn for_pair(source: DeviceKind, target: DeviceKind) -> Self {
        let shots = if !source.has_voa() && target.has_voa() { 32 } else { 48 };
        Self { shots_per_gain_setting: shots, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TransferConfig {
    Homogeneous(HomoTlConfig),
    Heterogeneous(HeteroTlConfig),
}

impl TransferConfig {
    pub fn shots_per_gain_setting(&self) -> usize {
        match self {
            Self::Homogeneous(c) => c.shots_per_gain_setting,
            Self::Heterogeneous(c) => c.shots_per_gain_setting,
        }
    }
}

/// Learning rate of weight layer `l` (1-based, `l = n_layers` is the output).
pub fn layer_lr(cfg: &TransferConfig, l: usize, n_layers: usize, epoch: usize) -> f64 {
    assert!((1..=n_layers).contains(&l), "layer index out of range");
    let depth = (n_layers - l) as i32;
    match cfg {
        TransferConfig::Homogeneous(c) => c.alpha0 * 10f64.powf(c.theta * depth as f64),
        TransferConfig::Heterogeneous(c) => {
            let halvings = if c.halving_period == 0 { 0 } else { epoch / c.halving_period };
            c.output_lr * c.layer_ratio.powi(depth) * 0.5f64.powi(halvings as i32)
        }
    }
}

fn layer_lrs(cfg: &TransferConfig, n_layers: usize, epoch: usize) -> Vec<f64> {
    (1..=n_layers).map(|l| layer_lr(cfg, l, n_layers, epoch)).collect()
}

/// Per gain setting: one fully loaded record plus `shots - 1` random-class
/// records, in ascending gain order.
pub fn tl_shot_sampler<R: Rng + ?Sized>(
    campaign: &[MeasurementRecord],
    shots: usize,
    rng: &mut R,
) -> Result<Vec<MeasurementRecord>> {
    if shots == 0 {
        return Err(Error::EmptyShots);
    }
    let mut groups: BTreeMap<i64, (f64, Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in campaign.iter().enumerate() {
        let e = groups.entry(gain_key(r.gain_target_db)).or_insert((r.gain_target_db, Vec::new(), Vec::new()));
        if r.mask.is_full() {
            e.1.push(i);
        } else if r.config_class == ConfigClass::Random {
            e.2.push(i);
        }
    }
    let mut out = Vec::new();
    for (_, (gain, full, random)) in groups {
        let &f = full.choose(rng).ok_or(Error::MissingFullLoad(gain))?;
        if random.len() < shots - 1 {
            return Err(Error::InsufficientData(format!(
                "gain {gain} dB: {} random-class records, {} needed",
                random.len(),
                shots - 1
            )));
        }
        out.push(campaign[f].clone());
        out.extend(random.choose_multiple(rng, shots - 1).map(|&i| campaign[i].clone()));
    }
    if out.is_empty() {
        return Err(Error::EmptyShots);
    }
    Ok(out)
}

fn target_set(net: &Network, shots: &[MeasurementRecord]) -> Result<LabeledSet> {
    if shots.is_empty() {
        return Err(Error::EmptyShots);
    }
    let s = net.standardizer.as_ref().ok_or_else(|| Error::InvalidConfig("network has no standardizer".into()))?;
    LabeledSet::from_records(shots, s)
}

/// Full-batch fine-tuning of a copy of `source` with layer-wise learning
/// rates that shrink towards the input.
pub fn homogeneous_transfer(source: &Network, shots: &[MeasurementRecord], cfg: &HomoTlConfig) -> Result<(Network, Vec<f64>)> {
    let data = target_set(source, shots)?;
    let mut net = source.clone();
    let mut state = AdamState::new(&net);
    let schedule = TransferConfig::Homogeneous(cfg.clone());
    let lrs = layer_lrs(&schedule, net.n_layers(), 0);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let cache = net.forward(data.x.view())?;
        let (loss, grads) = net.backward(&cache, data.y.view(), data.mask.view(), LossSpec::default())?;
        adam_step(&mut net, &mut state, &grads, &lrs, Some(cfg.clip));
        trace.push(loss.total);
    }
    net.metadata.provenance.push("transfer:homogeneous".into());
    net.metadata.source_device = source.metadata.source_device.clone();
    Ok((net, trace))
}

/// Last-hidden-layer covariance over `n` rows drawn without replacement
/// from the standardized source training vectors `x`.
pub fn reference_covariance<R: Rng + ?Sized>(net: &Network, x: &Array2<f64>, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    if x.nrows() < n {
        return Err(Error::InsufficientData(format!("{} source vectors, {n} needed", x.nrows())));
    }
    let idx = rand::seq::index::sample(rng, x.nrows(), n).into_vec();
    let batch = x.select(ndarray::Axis(0), &idx);
    let cache = net.forward(batch.view())?;
    batch_covariance(cache.last_hidden().view())
}

fn hetero_loop<R: Rng + ?Sized>(
    source: &Network,
    shots: &[MeasurementRecord],
    cfg: &HeteroTlConfig,
    reference: Option<ArrayView2<f64>>,
    rng: &mut R,
) -> Result<(Network, Vec<LossBreakdown>)> {
    if cfg.reference_batch < 2 {
        return Err(Error::InvalidConfig("reference_batch must be at least 2".into()));
    }
    let data = target_set(source, shots)?;
    let mut net = source.clone();
    let mut state = AdamState::new(&net);
    let schedule = TransferConfig::Heterogeneous(cfg.clone());
    let n = data.len();
    let subsample = n > cfg.reference_batch;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batch;
        let data_ref = if subsample {
            let idx = rand::seq::index::sample(rng, n, cfg.reference_batch).into_vec();
            batch = data.select(&idx);
            &batch
        } else {
            &data
        };
        let spec = LossSpec { coral: reference.map(|c| (c, cfg.lambda_coral)) };
        let cache = net.forward(data_ref.x.view())?;
        let (loss, grads) = net.backward(&cache, data_ref.y.view(), data_ref.mask.view(), spec)?;
        let lrs = layer_lrs(&schedule, net.n_layers(), epoch);
        adam_step(&mut net, &mut state, &grads, &lrs, Some(cfg.clip));
        trace.push(loss);
    }
    net.metadata.source_device = source.metadata.source_device.clone();
    Ok((net, trace))
}

/// Fine-tuning on target shots with `MSE + lambda * CORAL(C_S, C_T)`, C_T
/// taken over each epoch's batch. The source reference is never modified.
pub fn heterogeneous_transfer<R: Rng + ?Sized>(
    source: &Network,
    shots: &[MeasurementRecord],
    cfg: &HeteroTlConfig,
    rng: &mut R,
) -> Result<(Network, Vec<LossBreakdown>)> {
    let reference = source.coral_reference.as_ref().ok_or(Error::MissingReference)?;
    if shots.is_empty() {
        return Err(Error::EmptyShots);
    }
    let (mut net, trace) = hetero_loop(source, shots, cfg, Some(reference.view()), rng)?;
    net.metadata.provenance.push("transfer:heterogeneous-coral".into());
    Ok((net, trace))
}

/// The same schedule and batching without the CORAL term.
pub fn heterogeneous_transfer_mse<R: Rng + ?Sized>(
    source: &Network,
    shots: &[MeasurementRecord],
    cfg: &HeteroTlConfig,
    rng: &mut R,
) -> Result<(Network, Vec<LossBreakdown>)> {
    let (mut net, trace) = hetero_loop(source, shots, cfg, None, rng)?;
    net.metadata.provenance.push("transfer:heterogeneous-mse".into());
    Ok((net, trace))
}
