//! Self-normalizing MLP: SELU hidden layers, identity output, exact
//! backpropagation for the masked MSE and CORAL losses, and Adam.

pub mod activation;
pub mod adam;
pub mod loss;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Standardizer;
use crate::error::{Error, Result};

pub use activation::{selu, Selu};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{batch_covariance, coral_penalty, weighted_mse, LossBreakdown};

/// 196 inputs, hidden 200/200/100/100, 95 outputs.
pub const CANONICAL_DIMS: [usize; 6] = [196, 200, 200, 100, 100, 95];
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// One affine layer. `weights` is fan_in x fan_out, so a batch maps as
/// `X W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    /// Weights ~ N(0, 1/fan_in), zero bias.
    pub fn lecun_normal<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive fan-in");
        Self {
            weights: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

/// Free-form provenance carried in checkpoints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub source_device: Option<String>,
    /// Ordered list of the stages that produced the weights.
    pub provenance: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// The gain model. Outputs are per-channel gain minus the target gain, in
/// dB; `eval::predict_gain` adds the set point back.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
    pub selu: Selu,
    pub standardizer: Option<Standardizer>,
    /// Last-hidden-layer covariance of the source domain.
    pub coral_reference: Option<Array2<f64>>,
    pub metadata: Metadata,
}

/// Pre-activations and activations of one forward pass.
///
/// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`; the last
/// entry is the network output and `acts[L - 1]` the last hidden layer.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<Array2<f64>>,
    pub acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("at least one layer")
    }

    pub fn last_hidden(&self) -> &Array2<f64> {
        &self.acts[self.acts.len() - 2]
    }
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self { layers: net.layers.iter().map(|l| Dense::zeros(l.fan_in(), l.fan_out())).collect() }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// What to differentiate.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossSpec<'a> {
    /// Reference covariance and weight of the CORAL term.
    pub coral: Option<(ArrayView2<'a, f64>, f64)>,
}

pub fn init_network<R: Rng + ?Sized>(rng: &mut R) -> Network {
    Network::init(&CANONICAL_DIMS, rng)
}

impl Network {
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "a network needs an input and an output width");
        let layers = dims.windows(2).map(|w| Dense::lecun_normal(w[0], w[1], rng)).collect();
        Self {
            layers,
            selu: Selu::default(),
            standardizer: None,
            coral_reference: None,
            metadata: Metadata::default(),
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(|l| l.fan_out()));
        dims
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.ncols() });
        }
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(acts[l].view());
            let a = if l == last { z.clone() } else { z.mapv(|v| self.selu.eval(v)) };
            pre.push(z);
            acts.push(a);
        }
        Ok(ForwardCache { pre, acts })
    }

    /// Output only.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut a = x.to_owned();
        if a.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: a.ncols() });
        }
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.forward(a.view());
            if l != last {
                a.mapv_inplace(|v| self.selu.eval(v));
            }
        }
        Ok(a)
    }

    /// Loss and exact gradients for a cached forward pass. `targets` and
    /// `mask` are batch x outputs; the CORAL term, when requested, acts on
    /// the last hidden layer of the same batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        targets: ArrayView2<f64>,
        mask: ArrayView2<f64>,
        spec: LossSpec<'_>,
    ) -> Result<(LossBreakdown, Gradients)> {
        let (mse, mut delta) = loss::batch_weighted_mse(cache.output().view(), targets, mask)?;
        let (coral, lambda, coral_grad) = match spec.coral {
            Some((c_s, lambda)) => {
                let (p, g) = loss::coral_with_gradient(c_s, cache.last_hidden().view())?;
                (p, lambda, (lambda != 0.0).then(|| g * lambda))
            }
            None => (0.0, 0.0, None),
        };
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        for l in (0..n).rev() {
            let input = &cache.acts[l];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense { weights: gw, bias: gb });
            if l == 0 {
                break;
            }
            let mut d_act = delta.dot(&self.layers[l].weights.t());
            if l == n - 1 {
                if let Some(g) = &coral_grad {
                    d_act += g;
                }
            }
            let selu = self.selu;
            ndarray::Zip::from(&mut d_act).and(&cache.pre[l - 1]).for_each(|d, &z| *d *= selu.derivative(z));
            delta = d_act;
        }
        grads.reverse();
        Ok((LossBreakdown::new(mse, coral, lambda), Gradients { layers: grads }))
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_dims())
    }

    pub fn flop_count(&self) -> usize {
        flop_count(&self.layer_dims())
    }

    /// Parameters flattened layer by layer (weights row-major, then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

/// Weights plus biases.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Two FLOPs per multiply-add and one per bias addition; activations are
/// not counted. This is the convention that gives 238,095 for the
/// canonical topology.
pub fn flop_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| 2 * w[0] * w[1] + w[1]).sum()
}

/// Serialized network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub layer_dims: Vec<usize>,
    pub selu_alpha: f64,
    pub selu_lambda: f64,
    /// One row-major fan_in x fan_out array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub standardizer: Option<Standardizer>,
    pub coral_reference: Option<Vec<Vec<f64>>>,
    pub metadata: Metadata,
}

impl Network {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            layer_dims: self.layer_dims(),
            selu_alpha: self.selu.alpha,
            selu_lambda: self.selu.lambda,
            weights: self.layers.iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: self.layers.iter().map(|l| l.bias.to_vec()).collect(),
            standardizer: self.standardizer.clone(),
            coral_reference: self.coral_reference.as_ref().map(|c| c.outer_iter().map(|r| r.to_vec()).collect()),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "checkpoint schema_version {}, expected {CHECKPOINT_SCHEMA_VERSION}",
                ck.schema_version
            )));
        }
        let dims = &ck.layer_dims;
        if dims.len() < 2 || ck.weights.len() != dims.len() - 1 || ck.biases.len() != dims.len() - 1 {
            return Err(Error::SchemaMismatch("layer count does not match layer_dims".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, (w, b)) in ck.weights.into_iter().zip(ck.biases).enumerate() {
            let (fi, fo) = (dims[l], dims[l + 1]);
            if b.len() != fo {
                return Err(Error::DimensionMismatch { expected: fo, actual: b.len() });
            }
            let weights = Array2::from_shape_vec((fi, fo), w)
                .map_err(|_| Error::DimensionMismatch { expected: fi * fo, actual: 0 })?;
            layers.push(Dense { weights, bias: Array1::from(b) });
        }
        let coral_reference = match ck.coral_reference {
            Some(rows) => {
                let d = rows.len();
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                Some(
                    Array2::from_shape_vec((d, d), flat)
                        .map_err(|_| Error::SchemaMismatch("coral_reference is not square".into()))?,
                )
            }
            None => None,
        };
        Ok(Self {
            layers,
            selu: Selu { alpha: ck.selu_alpha, lambda: ck.selu_lambda },
            standardizer: ck.standardizer,
            coral_reference,
            metadata: ck.metadata,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
