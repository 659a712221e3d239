//! Small dense networks with hand-rolled backprop.
//!
//! Shape: affine -> tanh -> affine -> tanh -> affine (linear head). The
//! actor puts a softmax on top; the critic reads the single linear output.
//! Gradients are exact backpropagation, verified against central finite
//! differences by the gradcheck suite.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DrlError;

/// One affine layer; `weights` is row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn validate(&self) -> Result<(), DrlError> {
        if self.weights.len() != self.in_dim * self.out_dim || self.biases.len() != self.out_dim {
            return Err(DrlError::ShapeMismatch {
                context: format!(
                    "layer declared {}x{} but holds {} weights / {} biases",
                    self.out_dim,
                    self.in_dim,
                    self.weights.len(),
                    self.biases.len()
                ),
            });
        }
        Ok(())
    }
}

/// Multi-layer perceptron with tanh hidden activations and a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Build a network with the given layer widths, weights uniform in
    /// `+-1/sqrt(fan_in)` and zero biases.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn validate(&self) -> Result<(), DrlError> {
        if self.layers.is_empty() {
            return Err(DrlError::ShapeMismatch { context: "network has no layers".into() });
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(DrlError::ShapeMismatch {
                    context: format!(
                        "layer output {} feeds layer input {}",
                        pair[0].out_dim, pair[1].in_dim
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Read parameter `idx` in flat order (layer 0 weights, layer 0 biases,
    /// layer 1 weights, ...). Used by the finite-difference oracle.
    pub fn get_param(&self, mut idx: usize) -> f64 {
        for layer in &self.layers {
            if idx < layer.weights.len() {
                return layer.weights[idx];
            }
            idx -= layer.weights.len();
            if idx < layer.biases.len() {
                return layer.biases[idx];
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for layer in &mut self.layers {
            if idx < layer.weights.len() {
                layer.weights[idx] = value;
                return;
            }
            idx -= layer.weights.len();
            if idx < layer.biases.len() {
                layer.biases[idx] = value;
                return;
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Plain forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, DrlError> {
        Ok(self.forward_cache(input)?.output().to_vec())
    }

    /// Forward pass keeping every activation for backprop.
    pub fn forward_cache(&self, input: &[f64]) -> Result<ForwardCache, DrlError> {
        if input.len() != self.input_dim() {
            return Err(DrlError::ShapeMismatch {
                context: format!("input has {} entries, network expects {}", input.len(), self.input_dim()),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = &activations[l];
            let mut out = vec![0.0; layer.out_dim];
            for (o, out_v) in out.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let mut acc = layer.biases[o];
                for (w, x) in row.iter().zip(prev) {
                    acc += w * x;
                }
                *out_v = acc;
            }
            if l + 1 < self.layers.len() {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Backpropagate `dloss/doutput` through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> MlpGrads {
        debug_assert_eq!(output_grad.len(), self.output_dim());
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = output_grad.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input_act = &cache.activations[l];
            let layer_grads = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                layer_grads.biases[o] += d;
                let row = &mut layer_grads.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, x) in row.iter_mut().zip(input_act) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += d * w;
                    }
                }
                // tanh'(z) expressed through the stored activation a = tanh(z)
                for (pd, a) in prev_delta.iter_mut().zip(input_act) {
                    *pd *= 1.0 - a * a;
                }
                delta = prev_delta;
            }
        }
        grads
    }
}

/// Activations of one forward pass; `activations[0]` is the input and the
/// last entry is the raw linear output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Per-layer gradient accumulators, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
                .collect(),
        }
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for layer in &self.layers {
            if idx < layer.weights.len() {
                return layer.weights[idx];
            }
            idx -= layer.weights.len();
            if idx < layer.biases.len() {
                return layer.biases[idx];
            }
            idx -= layer.biases.len();
        }
        panic!("gradient index out of range");
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|&g| g == 0.0))
    }
}

/// Numerically safe softmax: shift by the max before exponentiating.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of the policy-gradient loss `-log pi(action) * advantage` with
/// respect to the actor parameters, for a single transition.
pub fn actor_gradient(actor: &Mlp, obs: &[f64], action: usize, advantage: f64) -> Result<MlpGrads, DrlError> {
    let cache = actor.forward_cache(obs)?;
    let probs = softmax(cache.output());
    if action >= probs.len() {
        return Err(DrlError::ShapeMismatch {
            context: format!("action {action} out of range for {} outputs", probs.len()),
        });
    }
    let output_grad: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| advantage * (p - if k == action { 1.0 } else { 0.0 }))
        .collect();
    Ok(actor.backward(&cache, &output_grad))
}

/// Gradient of the squared TD error `(td_target - V(s))^2` with respect to
/// the critic parameters.
pub fn critic_gradient(critic: &Mlp, obs: &[f64], td_target: f64) -> Result<MlpGrads, DrlError> {
    let cache = critic.forward_cache(obs)?;
    let value = cache.output()[0];
    let output_grad = vec![2.0 * (value - td_target)];
    Ok(critic.backward(&cache, &output_grad))
}

/// Clip the gradient to `grad_clip_norm` (global norm) and take one
/// gradient-descent step of size `learning_rate`.
pub fn apply_update(mlp: &mut Mlp, grads: &MlpGrads, learning_rate: f64, grad_clip_norm: f64) -> Result<(), DrlError> {
    let norm = grads.global_norm();
    if !norm.is_finite() {
        return Err(DrlError::NonFiniteGradient { norm });
    }
    let scale = if grad_clip_norm > 0.0 && norm > grad_clip_norm {
        grad_clip_norm / norm
    } else {
        1.0
    };
    for (layer, g) in mlp.layers.iter_mut().zip(&grads.layers) {
        for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
            *w -= learning_rate * scale * gw;
        }
        for (b, gb) in layer.biases.iter_mut().zip(&g.biases) {
            *b -= learning_rate * scale * gb;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, RngDomain};

    #[test]
    fn softmax_uniform_and_hand_values() {
        let probs = softmax(&[0.0, 0.0, 0.0, 0.0]);
        for p in &probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let two = softmax(&[1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((two[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((two[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[0.3, -1.2, 4.0]);
        let b = softmax(&[0.3 + 123.0, -1.2 + 123.0, 4.0 + 123.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&[1e300, 1e300, -1e300]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        let mut rng = derive_rng(42, RngDomain::Init);
        let mlp = Mlp::new(&[3, 5, 4, 2], &mut rng);
        let input = [0.3, -0.7, 1.1];
        let got = mlp.forward(&input).unwrap();

        // independent re-implementation of the same arithmetic
        let mut x: Vec<f64> = input.to_vec();
        for (l, layer) in mlp.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.out_dim);
            for o in 0..layer.out_dim {
                let mut acc = layer.biases[o];
                for (i, xi) in x.iter().enumerate() {
                    acc += layer.weights[o * layer.in_dim + i] * xi;
                }
                y.push(if l + 1 < mlp.layers.len() { acc.tanh() } else { acc });
            }
            x = y;
        }
        for (a, b) in got.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_output_is_bias() {
        let mut rng = derive_rng(1, RngDomain::Init);
        let mut mlp = Mlp::new(&[4, 3, 2], &mut rng);
        for layer in &mut mlp.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        mlp.layers[1].biases = vec![0.5, -1.5];
        let out = mlp.forward(&[9.0, -3.0, 0.1, 2.0]).unwrap();
        assert_eq!(out, vec![0.5, -1.5]);
    }

    #[test]
    fn single_layer_identity_passthrough() {
        let layer = Layer { in_dim: 2, out_dim: 2, weights: vec![1.0, 0.0, 0.0, 1.0], biases: vec![0.0, 0.0] };
        let mlp = Mlp { layers: vec![layer] };
        assert_eq!(mlp.forward(&[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = derive_rng(2, RngDomain::Init);
        let mlp = Mlp::new(&[4, 3, 2], &mut rng);
        assert!(mlp.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_advantage_zero_gradient() {
        let mut rng = derive_rng(3, RngDomain::Init);
        let mlp = Mlp::new(&[4, 6, 3], &mut rng);
        let grads = actor_gradient(&mlp, &[0.1, 0.2, 0.3, 0.4], 1, 0.0).unwrap();
        assert!(grads.is_zero());
    }

    #[test]
    fn critic_gradient_zero_at_target() {
        let mut rng = derive_rng(4, RngDomain::Init);
        let mlp = Mlp::new(&[3, 5, 1], &mut rng);
        let obs = [0.4, -0.2, 0.9];
        let v = mlp.forward(&obs).unwrap()[0];
        let grads = critic_gradient(&mlp, &obs, v).unwrap();
        assert!(grads.global_norm() < 1e-15);
    }

    #[test]
    fn critic_gradient_scales_with_residual() {
        // linear critic: gradient norm is proportional to the residual
        let layer = Layer { in_dim: 2, out_dim: 1, weights: vec![0.3, -0.8], biases: vec![0.1] };
        let mlp = Mlp { layers: vec![layer] };
        let obs = [1.0, 2.0];
        let v = mlp.forward(&obs).unwrap()[0];
        let n1 = critic_gradient(&mlp, &obs, v + 1.0).unwrap().global_norm();
        let n3 = critic_gradient(&mlp, &obs, v + 3.0).unwrap().global_norm();
        assert!((n3 / n1 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_policy_gradient_sign_at_zero_init() {
        // zero weights and biases: uniform policy over two actions
        let mlp = Mlp {
            layers: vec![Layer { in_dim: 2, out_dim: 2, weights: vec![0.0; 4], biases: vec![0.0; 2] }],
        };
        let adv = 1.5;
        let grads = actor_gradient(&mlp, &[1.0, 1.0], 0, adv).unwrap();
        // d(-A log pi_0)/d b_0 = A (pi_0 - 1) < 0 for positive advantage:
        // descending it raises the chosen action's logit.
        assert!(grads.layers[0].biases[0] < 0.0);
        assert!(grads.layers[0].biases[1] > 0.0);
    }

    #[test]
    fn update_applies_clipped_step() {
        let mut rng = derive_rng(5, RngDomain::Init);
        let mut mlp = Mlp::new(&[2, 2], &mut rng);
        let before = mlp.clone();

        let zero = MlpGrads::zeros_like(&mlp);
        apply_update(&mut mlp, &zero, 0.5, 1.0).unwrap();
        assert_eq!(mlp, before);

        let mut grads = MlpGrads::zeros_like(&mlp);
        grads.layers[0].weights = vec![10.0, 0.0, 0.0, 0.0];
        apply_update(&mut mlp, &grads, 0.0, 1.0).unwrap();
        assert_eq!(mlp, before);

        // norm 10 with clip 1: effective gradient is grads / 10
        apply_update(&mut mlp, &grads, 1.0, 1.0).unwrap();
        assert!((mlp.layers[0].weights[0] - (before.layers[0].weights[0] - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn param_flat_indexing_roundtrips() {
        let mut rng = derive_rng(6, RngDomain::Init);
        let mut mlp = Mlp::new(&[3, 4, 2], &mut rng);
        let n = mlp.param_count();
        assert_eq!(n, 3 * 4 + 4 + 4 * 2 + 2);
        for i in 0..n {
            let v = mlp.get_param(i);
            mlp.set_param(i, v + 1.0);
            assert_eq!(mlp.get_param(i), v + 1.0);
            mlp.set_param(i, v);
        }
    }
}
