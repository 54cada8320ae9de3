//! Two-phase training: greedy layer-wise denoising pretraining of the hidden
//! layers, then supervised fine-tuning of the whole network.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::features::VOA_SLOTS;
use crate::dataset::split::gain_key;
use crate::dataset::{assemble_features, fit_standardizer, FeatureVector, Standardizer, SENTINEL};
use crate::domain::{ConfigClass, MeasurementRecord, N_CHANNELS};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, LossSpec, Network, CANONICAL_DIMS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub samples_per_gain_setting: usize,
    pub epochs_per_layer: usize,
    pub lr: f64,
    /// Gaussian corruption on standardized features.
    pub noise_std: f64,
    /// Emit a progress event every this many epochs (0 = first/last only).
    pub log_every: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { samples_per_gain_setting: 512, epochs_per_layer: 1800, lr: 1e-3, noise_std: 0.1, log_every: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    /// Total labeled records across all gain settings.
    pub labeled_count: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip: f64,
    pub log_every: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { labeled_count: 256, epochs: 1200, lr: 1e-3, batch_size: 32, clip: 1.0, log_every: 100 }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub stage: String,
    pub layer: Option<usize>,
    pub epoch: usize,
    pub loss: f64,
}

fn should_log(epoch: usize, epochs: usize, every: usize) -> bool {
    epoch == 0 || epoch + 1 == epochs || (every > 0 && (epoch + 1) % every == 0)
}

/// Standardized inputs, targets and 0/1 channel weights.
///
/// Targets are the per-channel gain minus the record's target gain: the
/// network models the ripple around the set point, which keeps the output
/// scale independent of the gain setting.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub mask: Array2<f64>,
}

impl LabeledSet {
    pub fn from_records(records: &[MeasurementRecord], standardizer: &Standardizer) -> Result<Self> {
        let feats: Vec<FeatureVector> = records.iter().map(assemble_features).collect();
        let x = standardizer.apply_matrix(&feats);
        let mut y = Array2::zeros((records.len(), N_CHANNELS));
        let mut mask = Array2::zeros((records.len(), N_CHANNELS));
        for (k, r) in records.iter().enumerate() {
            for (i, g) in r.gain()?.defined() {
                y[[k, i]] = g - r.gain_target_db;
                mask[[k, i]] = 1.0;
            }
        }
        Ok(Self { x, y, mask })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            mask: self.mask.select(Axis(0), rows),
        }
    }
}

/// 1 where a standardized input is real, 0 on sentinel VOA slots.
fn observed_mask(x: &Array2<f64>) -> Array2<f64> {
    let mut m = Array2::ones(x.dim());
    for (mut mrow, xrow) in m.rows_mut().into_iter().zip(x.rows()) {
        for j in VOA_SLOTS {
            if j < xrow.len() && xrow[j] == SENTINEL {
                mrow[j] = 0.0;
            }
        }
    }
    m
}

/// Greedy layer-wise denoising pretraining.
///
/// For each hidden layer in turn, the layer plus a throwaway linear decoder
/// is trained full-batch to reconstruct the clean layer input from a
/// Gaussian-corrupted copy. Earlier layers are frozen (their outputs are
/// computed once). Sentinel inputs are neither corrupted nor reconstructed.
/// The output layer is left at its random initialization.
pub fn pretrain_layerwise<R: Rng + ?Sized>(
    unlabeled: &Array2<f64>,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<(Network, Vec<ProgressEvent>)> {
    pretrain_layerwise_dims(&CANONICAL_DIMS, unlabeled, cfg, rng)
}

pub fn pretrain_layerwise_dims<R: Rng + ?Sized>(
    dims: &[usize],
    unlabeled: &Array2<f64>,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<(Network, Vec<ProgressEvent>)> {
    if unlabeled.nrows() < 2 {
        return Err(Error::InsufficientData(format!("{} unlabeled vectors", unlabeled.nrows())));
    }
    if unlabeled.ncols() != dims[0] {
        return Err(Error::DimensionMismatch { expected: dims[0], actual: unlabeled.ncols() });
    }
    let mut net = Network::init(dims, rng);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite noise std");
    let mut events = Vec::new();
    let mut input = unlabeled.clone();
    let mut observed = observed_mask(&input);
    for l in 0..net.n_layers() - 1 {
        let (fan_in, fan_out) = (net.layers[l].fan_in(), net.layers[l].fan_out());
        let mut ae = Network::init(&[fan_in, fan_out, fan_in], rng);
        ae.selu = net.selu;
        ae.layers[0] = net.layers[l].clone();
        let mut state = AdamState::new(&ae);
        for epoch in 0..cfg.epochs_per_layer {
            let mut noisy = input.clone();
            if cfg.noise_std > 0.0 {
                ndarray::Zip::from(&mut noisy).and(&observed).for_each(|v, &o| {
                    let eps = noise.sample(rng);
                    if o != 0.0 {
                        *v += eps;
                    }
                });
            }
            let cache = ae.forward(noisy.view())?;
            let (loss, grads) = ae.backward(&cache, input.view(), observed.view(), LossSpec::default())?;
            adam_step(&mut ae, &mut state, &grads, &[cfg.lr, cfg.lr], None);
            if should_log(epoch, cfg.epochs_per_layer, cfg.log_every) {
                events.push(ProgressEvent { stage: "pretrain".into(), layer: Some(l + 1), epoch, loss: loss.total });
            }
        }
        net.layers[l] = ae.layers.swap_remove(0);
        let selu = net.selu;
        input = net.layers[l].forward(input.view()).mapv(|v| selu.eval(v));
        observed = Array2::ones(input.dim());
    }
    net.metadata.provenance.push("pretrain:layerwise-denoising".into());
    Ok((net, events))
}

/// Mini-batch Adam on the masked MSE, all layers at `cfg.lr`, global-norm
/// clipping. Returns the network and the mean batch loss of every epoch.
pub fn finetune_supervised<R: Rng + ?Sized>(
    net: &Network,
    data: &LabeledSet,
    cfg: &FinetuneConfig,
    rng: &mut R,
) -> Result<(Network, Vec<f64>, Vec<ProgressEvent>)> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no labeled records".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    let mut net = net.clone();
    let mut state = AdamState::new(&net);
    let lrs = vec![cfg.lr; net.n_layers()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut events = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let cache = net.forward(batch.x.view())?;
            let (loss, grads) = net.backward(&cache, batch.y.view(), batch.mask.view(), LossSpec::default())?;
            adam_step(&mut net, &mut state, &grads, &lrs, Some(cfg.clip));
            sum += loss.total;
            batches += 1;
        }
        let mean = sum / batches as f64;
        trace.push(mean);
        if should_log(epoch, cfg.epochs, cfg.log_every) {
            events.push(ProgressEvent { stage: "finetune".into(), layer: None, epoch, loss: mean });
        }
    }
    if cfg.epochs > 0 {
        net.metadata.provenance.push("finetune:supervised".into());
    }
    Ok((net, trace, events))
}

/// Zeroes the output weights and sets the bias to the per-channel mean of
/// the labeled targets: fine-tuning starts from a constant prediction instead
/// of a random function of the input.
pub fn init_output_layer(net: &mut Network, data: &LabeledSet) {
    let out = net.layers.last_mut().expect("non-empty");
    let mut bias = Array1::zeros(out.fan_out());
    let weighted = (&data.y * &data.mask).sum_axis(Axis(0));
    let counts = data.mask.sum_axis(Axis(0));
    let overall = weighted.sum() / counts.sum().max(1.0);
    for i in 0..bias.len() {
        bias[i] = if counts[i] > 0.0 { weighted[i] / counts[i] } else { overall };
    }
    out.bias = bias;
    out.weights.fill(0.0);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectTrainConfig {
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub skip_pretrain: bool,
    /// Records sampled for the stored CORAL reference; none when `None`.
    pub coral_reference_batch: Option<usize>,
}

impl Default for DirectTrainConfig {
    fn default() -> Self {
        Self {
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            skip_pretrain: false,
            coral_reference_batch: Some(128),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub finetune_trace: Vec<f64>,
    pub events: Vec<ProgressEvent>,
}

fn by_gain(records: &[MeasurementRecord], keep: impl Fn(&MeasurementRecord) -> bool) -> BTreeMap<i64, Vec<usize>> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if keep(r) {
            groups.entry(gain_key(r.gain_target_db)).or_default().push(i);
        }
    }
    groups
}

/// Labeled fine-tuning subset: fully loaded and random-class records,
/// spread evenly over gain settings, every fully loaded record included.
pub fn select_labeled<R: Rng + ?Sized>(records: &[MeasurementRecord], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let groups = by_gain(records, |r| r.config_class == ConfigClass::Random || r.mask.is_full());
    if groups.is_empty() {
        return Err(Error::InsufficientData("no fully loaded or random-class records".into()));
    }
    let n_groups = groups.len();
    let mut picked = Vec::with_capacity(count);
    for (g, (_, idx)) in groups.into_iter().enumerate() {
        let quota = count / n_groups + usize::from(g < count % n_groups);
        if idx.len() < quota {
            return Err(Error::InsufficientData(format!("{} labeled candidates, {quota} needed", idx.len())));
        }
        let (mut full, mut rest): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| records[i].mask.is_full());
        full.truncate(quota);
        rest.shuffle(rng);
        let take = quota - full.len();
        picked.extend(full);
        picked.extend_from_slice(&rest[..take]);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Unlabeled pretraining subset: `per_gain` records of any class per setting.
pub fn select_unlabeled<R: Rng + ?Sized>(records: &[MeasurementRecord], per_gain: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut picked = Vec::new();
    for (key, mut idx) in by_gain(records, |_| true) {
        if idx.len() < per_gain {
            return Err(Error::InsufficientData(format!(
                "gain {} dB: {} records, {per_gain} needed for pretraining",
                key as f64 / 1e6,
                idx.len()
            )));
        }
        idx.shuffle(rng);
        picked.extend_from_slice(&idx[..per_gain]);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Standardizer fit, pretraining (unless skipped), fine-tuning and, when
/// configured, the CORAL reference of the trained network.
pub fn train_direct<R: Rng + ?Sized>(train: &[MeasurementRecord], cfg: &DirectTrainConfig, rng: &mut R) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let feats: Vec<FeatureVector> = train.iter().map(assemble_features).collect();
    let standardizer = fit_standardizer(&feats)?;
    let labeled_idx = select_labeled(train, cfg.finetune.labeled_count, rng)?;
    let labeled_records: Vec<MeasurementRecord> = labeled_idx.iter().map(|&i| train[i].clone()).collect();
    let labeled = LabeledSet::from_records(&labeled_records, &standardizer)?;

    let mut events = Vec::new();
    let mut net = if cfg.skip_pretrain {
        let mut net = Network::init(&CANONICAL_DIMS, rng);
        net.metadata.provenance.push("init:scratch".into());
        net
    } else {
        let idx = select_unlabeled(train, cfg.pretrain.samples_per_gain_setting, rng)?;
        let picked: Vec<FeatureVector> = idx.iter().map(|&i| feats[i].clone()).collect();
        let x = standardizer.apply_matrix(&picked);
        let (net, ev) = pretrain_layerwise(&x, &cfg.pretrain, rng)?;
        events.extend(ev);
        net
    };
    net.standardizer = Some(standardizer.clone());
    net.metadata.source_device = Some(train[0].device_id.clone());
    init_output_layer(&mut net, &labeled);
    let (mut net, trace, ev) = finetune_supervised(&net, &labeled, &cfg.finetune, rng)?;
    events.extend(ev);
    if let Some(n) = cfg.coral_reference_batch {
        let x = standardizer.apply_matrix(&feats);
        net.coral_reference = Some(crate::transfer::reference_covariance(&net, &x, n, rng)?);
    }
    Ok(TrainedModel { network: net, finetune_trace: trace, events })
}
