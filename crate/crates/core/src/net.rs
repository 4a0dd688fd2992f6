//! Fully connected ReLU networks with hand-written reverse mode, Adam and an
//! L2 weight penalty.
//!
//! Weight matrices are stored `out × in`, so a layer maps `x ↦ W x + b`.
//! Batched routines take column-major `dim × batch` matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Parameters of a multilayer perceptron. Also used as the container for
/// gradients and optimizer moments, which share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.ncols()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        Ok(MlpParams {
            layers: dims
                .windows(2)
                .map(|w| Layer {
                    weights: DMatrix::zeros(w[1], w[0]),
                    bias: DVector::zeros(w[1]),
                })
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite())
        })
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.shape() == b.weights.shape() && a.bias.len() == b.bias.len()
            })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.zip_apply(&b.weights, |x, y| *x += scale * y);
            a.bias.axpy(scale, &b.bias, 1.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    /// All parameters as a flat sequence: per layer, weights (column-major)
    /// then bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "layer dims must have at least two entries, all >= 1: {dims:?}"
        )));
    }
    Ok(())
}

/// He-normal weights `N(0, 2/fan_in)`, zero biases.
pub fn init_mlp(dims: &[usize], rng: &mut Rng) -> Result<MlpParams> {
    let mut p = MlpParams::zeros(dims)?;
    for l in &mut p.layers {
        let std = (2.0 / l.weights.ncols() as f64).sqrt();
        for w in l.weights.iter_mut() {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(p)
}

fn relu_in_place(m: &mut DMatrix<f64>) {
    for v in m.iter_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}

pub fn forward(p: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    check_len("network input", p.input_dim(), x.len())?;
    let input = DMatrix::from_column_slice(x.len(), 1, x);
    Ok(forward_batch(p, &input).output.as_slice().to_vec())
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` is the output of
    /// layer `l` (after ReLU for hidden layers).
    activations: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

/// Forward pass over a `input_dim × batch` matrix.
pub fn forward_batch(p: &MlpParams, x: &DMatrix<f64>) -> ForwardCache {
    let last = p.layers.len() - 1;
    let mut activations = Vec::with_capacity(p.layers.len() + 1);
    activations.push(x.clone());
    for (i, layer) in p.layers.iter().enumerate() {
        let prev = activations.last().expect("non-empty");
        let mut z = &layer.weights * prev;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        if i != last {
            relu_in_place(&mut z);
        }
        activations.push(z);
    }
    let output = activations.pop().expect("output layer");
    ForwardCache {
        activations,
        output,
    }
}

/// Gradient of `Σ_b grad_out[:, b] · forward(p, x[:, b])` with respect to
/// every parameter.
pub fn backward_batch(p: &MlpParams, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> MlpParams {
    let mut grads = p.zeros_like();
    let mut delta = grad_out.clone();
    for l in (0..p.layers.len()).rev() {
        let input = &cache.activations[l];
        grads.layers[l].weights = &delta * input.transpose();
        grads.layers[l].bias = delta.column_sum();
        if l > 0 {
            let mut upstream = p.layers[l].weights.tr_mul(&delta);
            // ReLU derivative, taken as 0 at 0.
            for (u, a) in upstream.iter_mut().zip(input.iter()) {
                if !(*a > 0.0) {
                    *u = 0.0;
                }
            }
            delta = upstream;
        }
    }
    grads
}

/// Gradient of `grad_out · forward(p, x)` for a single input.
pub fn backward(p: &MlpParams, x: &[f64], grad_out: &[f64]) -> Result<MlpParams> {
    check_len("network input", p.input_dim(), x.len())?;
    check_len("output gradient", p.output_dim(), grad_out.len())?;
    let input = DMatrix::from_column_slice(x.len(), 1, x);
    let cache = forward_batch(p, &input);
    let g = DMatrix::from_column_slice(grad_out.len(), 1, grad_out);
    Ok(backward_batch(p, &cache, &g))
}

/// `coeff · Σ w²` over weight matrices (biases excluded) and its gradient.
pub fn l2_penalty(p: &MlpParams, coeff: f64) -> (f64, MlpParams) {
    let mut grads = p.zeros_like();
    let mut value = 0.0;
    for (g, l) in grads.layers.iter_mut().zip(&p.layers) {
        value += l.weights.iter().map(|w| w * w).sum::<f64>();
        g.weights = &l.weights * (2.0 * coeff);
    }
    (coeff * value, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(p: &MlpParams, config: AdamConfig) -> Self {
        AdamState {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `p` along gradient `g`.
pub fn adam_step(p: &mut MlpParams, g: &MlpParams, s: &mut AdamState) -> Result<()> {
    if !p.same_shape(g) || !p.same_shape(&s.m) || !p.same_shape(&s.v) {
        return Err(Error::DimensionMismatch {
            what: "adam parameter shapes",
            expected: p.num_params(),
            got: g.num_params(),
        });
    }
    s.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = s.config;
    let c1 = 1.0 - beta1.powi(s.t as i32);
    let c2 = 1.0 - beta2.powi(s.t as i32);
    for (((w, gi), m), v) in p
        .iter_mut()
        .zip(g.iter())
        .zip(s.m.iter_mut())
        .zip(s.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * gi;
        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    /// Straight-line evaluation with explicit loops, independent of the
    /// matrix code path.
    fn reference_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = p.layers.len() - 1;
        for (i, l) in p.layers.iter().enumerate() {
            let mut z = vec![0.0; l.weights.nrows()];
            for r in 0..l.weights.nrows() {
                let mut acc = l.bias[r];
                for c in 0..l.weights.ncols() {
                    acc += l.weights[(r, c)] * a[c];
                }
                z[r] = if i == last { acc } else { acc.max(0.0) };
            }
            a = z;
        }
        a
    }

    fn random_input(dim: usize, rng: &mut Rng) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn init_shapes_and_determinism() {
        let dims = [12, 30, 30, 30, 6];
        let p = init_mlp(&dims, &mut seed::rng(1)).unwrap();
        let shapes: Vec<_> = p.layers.iter().map(|l| l.weights.shape()).collect();
        assert_eq!(shapes, vec![(30, 12), (30, 30), (30, 30), (6, 30)]);
        assert_eq!(p.layer_dims(), dims.to_vec());
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert_eq!(p, init_mlp(&dims, &mut seed::rng(1)).unwrap());
        assert!(init_mlp(&[12], &mut seed::rng(1)).is_err());
        assert!(init_mlp(&[12, 0, 6], &mut seed::rng(1)).is_err());
    }

    #[test]
    fn init_std_matches_he_scale() {
        let p = init_mlp(&[30, 400], &mut seed::rng(2)).unwrap();
        let w = &p.layers[0].weights;
        assert!(w.len() >= 10_000);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (2.0f64 / 30.0).sqrt();
        assert!((std - target).abs() / target < 0.1);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[4, 5, 3]).unwrap();
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut p = MlpParams::zeros(&[3, 3]).unwrap();
        p.layers[0].weights = DMatrix::identity(3, 3);
        assert_eq!(forward(&p, &[0.5, 1.0, 2.0]).unwrap(), vec![0.5, 1.0, 2.0]);
        assert!(forward(&p, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = seed::rng(3);
        for _ in 0..10 {
            let p = init_mlp(&[12, 30, 30, 30, 6], &mut rng).unwrap();
            let x = random_input(12, &mut rng);
            let a = forward(&p, &x).unwrap();
            let b = reference_forward(&p, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_net_is_positively_homogeneous_without_bias() {
        let p = init_mlp(&[4, 16, 3], &mut seed::rng(4)).unwrap();
        let x = [0.3, -1.0, 2.0, 0.7];
        let y = forward(&p, &x).unwrap();
        for alpha in [0.5, 2.0, 7.5] {
            let xs: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let ys = forward(&p, &xs).unwrap();
            for (a, b) in ys.iter().zip(&y) {
                assert!((a - alpha * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = init_mlp(&[5, 8, 2], &mut seed::rng(5)).unwrap();
        let g = backward(&p, &[0.1, 0.2, 0.3, 0.4, 0.5], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_layer_gradient_is_outer_product() {
        let p = init_mlp(&[3, 2], &mut seed::rng(6)).unwrap();
        let x = [0.5, -1.0, 2.0];
        let go = [0.3, -0.7];
        let g = backward(&p, &x, &go).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(g.layers[0].weights[(r, c)], go[r] * x[c]);
            }
            assert_eq!(g.layers[0].bias[r], go[r]);
        }
    }

    fn objective(p: &MlpParams, x: &[f64], go: &[f64], coeff: f64) -> f64 {
        let y = reference_forward(p, x);
        y.iter().zip(go).map(|(a, b)| a * b).sum::<f64>() + l2_penalty(p, coeff).0
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seed::rng(7);
        let h = 1e-6;
        let coeff = 1e-2;
        for _ in 0..5 {
            let mut p = init_mlp(&[12, 30, 30, 30, 6], &mut rng).unwrap();
            for l in &mut p.layers {
                for b in l.bias.iter_mut() {
                    *b = rng.random_range(-0.1..0.1);
                }
            }
            let x = random_input(12, &mut rng);
            let go = random_input(6, &mut rng);
            let mut g = backward(&p, &x, &go).unwrap();
            g.add_scaled(&l2_penalty(&p, coeff).1, 1.0);
            let analytic: Vec<f64> = g.iter().copied().collect();
            for (k, ga) in analytic.iter().enumerate() {
                let mut plus = p.clone();
                *plus.iter_mut().nth(k).unwrap() += h;
                let mut minus = p.clone();
                *minus.iter_mut().nth(k).unwrap() -= h;
                let fd = (objective(&plus, &x, &go, coeff) - objective(&minus, &x, &go, coeff))
                    / (2.0 * h);
                // Relative error with a 1e-3 magnitude floor: central
                // differences carry ~1e-9 absolute roundoff at h = 1e-6.
                let scale = ga.abs().max(fd.abs()).max(1e-3);
                assert!((ga - fd).abs() / scale < 1e-5, "param {k}: {ga} vs {fd}");
            }
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_sample_gradients() {
        let mut rng = seed::rng(8);
        let p = init_mlp(&[6, 10, 10, 3], &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|_| random_input(6, &mut rng)).collect();
        let gs: Vec<Vec<f64>> = (0..4).map(|_| random_input(3, &mut rng)).collect();
        let mut expected = p.zeros_like();
        for (x, g) in xs.iter().zip(&gs) {
            expected.add_scaled(&backward(&p, x, g).unwrap(), 1.0);
        }
        let x = DMatrix::from_fn(6, 4, |r, c| xs[c][r]);
        let g = DMatrix::from_fn(3, 4, |r, c| gs[c][r]);
        let batch = backward_batch(&p, &forward_batch(&p, &x), &g);
        for (a, b) in batch.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_examples() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        p.layers[0].weights[(0, 0)] = 3.0;
        p.layers[0].bias[0] = 100.0;
        let (v, g) = l2_penalty(&p, 0.1);
        assert!((v - 0.9).abs() < 1e-15);
        assert!((g.layers[0].weights[(0, 0)] - 0.6).abs() < 1e-15);
        assert_eq!(g.layers[0].bias[0], 0.0);
        let (v0, g0) = l2_penalty(&p, 0.0);
        assert_eq!(v0, 0.0);
        assert!(g0.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let p = init_mlp(&[4, 6, 2], &mut seed::rng(9)).unwrap();
        let coeff = 0.37;
        let (_, g) = l2_penalty(&p, coeff);
        let h = 1e-5;
        for (k, ga) in g.iter().enumerate() {
            let mut plus = p.clone();
            *plus.iter_mut().nth(k).unwrap() += h;
            let mut minus = p.clone();
            *minus.iter_mut().nth(k).unwrap() -= h;
            let fd = (l2_penalty(&plus, coeff).0 - l2_penalty(&minus, coeff).0) / (2.0 * h);
            let scale = ga.abs().max(fd.abs()).max(1e-6);
            assert!((ga - fd).abs() / scale < 1e-8);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = init_mlp(&[3, 4, 2], &mut seed::rng(10)).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        for (i, v) in g.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0.37 } else { -5.0 };
        }
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(s.t, 1);
        let lr = s.config.lr;
        for ((a, b), gi) in p.iter().zip(before.iter()).zip(g.iter()) {
            let delta = a - b;
            assert!((delta.abs() - lr).abs() <= lr * 1e-3);
            assert_eq!(delta.signum(), -gi.signum());
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = init_mlp(&[3, 4, 2], &mut seed::rng(11)).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut s).unwrap();
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 2);
        let wrong = MlpParams::zeros(&[3, 5, 2]).unwrap();
        assert!(adam_step(&mut p, &wrong, &mut s).is_err());
    }

    #[test]
    fn adam_trajectories_are_deterministic() {
        let run = || {
            let mut rng = seed::rng(12);
            let mut p = init_mlp(&[3, 4, 2], &mut rng).unwrap();
            let mut s = AdamState::new(&p, AdamConfig::default());
            for _ in 0..20 {
                let x = random_input(3, &mut rng);
                let g = backward(&p, &x, &[1.0, -1.0]).unwrap();
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
