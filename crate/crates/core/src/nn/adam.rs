use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    w: Array2<f64>,
    b: Array1<f64>,
}

/// First and second moments for every parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Moments>,
    v: Vec<Moments>,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self::with_config(net, AdamConfig::default())
    }

    pub fn with_config(net: &Network, config: AdamConfig) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Moments { w: Array2::zeros(l.weights.dim()), b: Array1::zeros(l.bias.len()) })
                .collect::<Vec<_>>()
        };
        Self { config, step: 0, m: zeros(), v: zeros() }
    }
}

/// Clips `grads` to a global L2 norm of `clip` (when given), then takes one
/// Adam step with a separate learning rate per layer. Returns the norm
/// before clipping.
pub fn adam_step(net: &mut Network, state: &mut AdamState, grads: &Gradients, lrs: &[f64], clip: Option<f64>) -> f64 {
    assert_eq!(lrs.len(), net.layers.len(), "one learning rate per layer");
    let norm = grads.global_norm();
    let scale = match clip {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let lr = lrs[l];
        let g = &grads.layers[l];
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, &g: &f64| {
            let g = g * scale;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        };
        Zip::from(&mut layer.weights)
            .and(&mut state.m[l].w)
            .and(&mut state.v[l].w)
            .and(&g.weights)
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&mut state.m[l].b)
            .and(&mut state.v[l].b)
            .and(&g.bias)
            .for_each(update);
    }
    norm
}
