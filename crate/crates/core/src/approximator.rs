//! Small dense MLPs with reverse-mode gradients, Adam and soft target updates.
//!
//! Everything is `f64`. Batched evaluation takes one sample per row;
//! `forward` evaluates a single vector with matrix-vector products.

use ndarray::{Array, Array1, Array2, ArrayView2, Axis, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ApproxError {
    #[error("layer dims need at least an input and an output width, got {0}")]
    TooFewLayers(usize),
    #[error("layer width must be positive (layer {0})")]
    ZeroWidth(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("parameter shapes differ between networks")]
    ShapeMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("flattened parameter length {got} does not match dims (expected {expected})")]
    BadRecord { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ApproxError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A fully connected network `dims[0] -> ... -> dims[L]`.
///
/// Layer `l` holds a `(dims[l+1] x dims[l])` weight matrix and a bias of
/// length `dims[l+1]`. Hidden layers use ReLU; the last layer uses
/// `output_activation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    hidden_activation: HiddenActivation,
    output_activation: OutputActivation,
    init_seed: u64,
}

/// Parameter-shaped container used for gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer activations kept from a forward pass; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct Trace {
    acts: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace always holds the input")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.acts.pop().expect("trace always holds the input")
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(ApproxError::TooFewLayers(dims.len()));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(ApproxError::ZeroWidth(i));
    }
    Ok(())
}

impl Mlp {
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    pub fn new(layer_dims: &[usize], output_activation: OutputActivation, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            hidden_activation: HiddenActivation::Relu,
            output_activation,
            init_seed: seed,
        })
    }

    /// Network with every weight and bias set to zero.
    pub fn zeros(layer_dims: &[usize], output_activation: OutputActivation) -> Result<Self> {
        let mut net = Self::new(layer_dims, output_activation, 0)?;
        net.weights.iter_mut().for_each(|w| w.fill(0.0));
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden_activation
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims.windows(2).map(|p| p[1] * p[0] + p[1]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Single-input pass; matrix-vector products avoid the packing buffers of a batched product.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(ApproxError::DimMismatch { expected: self.input_dim(), got: input.len() });
        }
        let last = self.num_layers() - 1;
        let mut a = Array1::from(input.to_vec());
        for l in 0..=last {
            let mut z = self.weights[l].dot(&a);
            z += &self.biases[l];
            self.activate(l == last, &mut z);
            a = z;
        }
        Ok(a.to_vec())
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(ApproxError::DimMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        let last = self.num_layers() - 1;
        let mut a = self.affine(0, x);
        for l in 0..=last {
            if l > 0 {
                a = self.affine(l, a.view());
            }
            self.activate(l == last, &mut a);
        }
        Ok(a)
    }

    /// Forward pass keeping every layer's activation for a later `backward_batch`.
    pub fn forward_trace(&self, x: ArrayView2<'_, f64>) -> Result<Trace> {
        if x.ncols() != self.input_dim() {
            return Err(ApproxError::DimMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        let last = self.num_layers() - 1;
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(x.to_owned());
        for l in 0..=last {
            let mut a = self.affine(l, acts[l].view());
            self.activate(l == last, &mut a);
            acts.push(a);
        }
        Ok(Trace { acts })
    }

    fn affine(&self, l: usize, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights[l].t());
        z += &self.biases[l];
        z
    }

    fn activate<D: Dimension>(&self, is_output: bool, z: &mut Array<f64, D>) {
        if is_output {
            if self.output_activation == OutputActivation::Sigmoid {
                z.mapv_inplace(sigmoid);
            }
        } else {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }

    /// Reverse pass for the scalar `sum(upstream * output)`.
    ///
    /// Returns parameter gradients (when `with_params`) and the input gradient.
    /// The ReLU derivative at exactly zero is zero.
    pub fn backward_batch(
        &self,
        trace: &Trace,
        upstream: ArrayView2<'_, f64>,
        with_params: bool,
    ) -> Result<(Option<Gradients>, Array2<f64>)> {
        let out = trace.output();
        if upstream.dim() != out.dim() {
            return Err(ApproxError::DimMismatch { expected: out.ncols(), got: upstream.ncols() });
        }
        let last = self.num_layers() - 1;
        let mut delta = upstream.to_owned();
        if self.output_activation == OutputActivation::Sigmoid {
            delta.zip_mut_with(out, |d, &s| *d *= s * (1.0 - s));
        }
        let mut gw = Vec::with_capacity(self.num_layers());
        let mut gb = Vec::with_capacity(self.num_layers());
        for l in (0..=last).rev() {
            if l < last {
                // relu'(z) from the stored post-activation: a > 0 iff z > 0
                delta.zip_mut_with(&trace.acts[l + 1], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            if with_params {
                gw.push(delta.t().dot(&trace.acts[l]));
                gb.push(delta.sum_axis(Axis(0)));
            }
            delta = delta.dot(&self.weights[l]);
        }
        let grads = with_params.then(|| {
            gw.reverse();
            gb.reverse();
            Gradients { weights: gw, biases: gb }
        });
        Ok((grads, delta))
    }

    /// Single-sample convenience wrapper around [`Mlp::backward_batch`].
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if upstream.len() != self.output_dim() {
            return Err(ApproxError::DimMismatch { expected: self.output_dim(), got: upstream.len() });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let trace = self.forward_trace(x)?;
        let g = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row view");
        let (grads, dx) = self.backward_batch(&trace, g, true)?;
        Ok((grads.expect("requested"), dx.into_raw_vec_and_offset().0))
    }

    fn same_shape(&self, other: &Mlp) -> bool {
        self.layer_dims == other.layer_dims
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(ApproxError::InvalidTau(tau));
        }
        if !self.same_shape(online) {
            return Err(ApproxError::ShapeMismatch);
        }
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        Ok(())
    }

    /// Row-major flattening: W_1, b_1, W_2, b_2, ...
    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }
}

/// Functional form of [`Mlp::soft_update_from`].
pub fn soft_update(target: &Mlp, online: &Mlp, tau: f64) -> Result<Mlp> {
    let mut next = target.clone();
    next.soft_update_from(online, tau)?;
    Ok(next)
}

fn flatten(weights: &[Array2<f64>], biases: &[Array1<f64>]) -> Vec<f64> {
    let mut flat = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        flat.extend(w.iter());
        flat.extend(b.iter());
    }
    flat
}

type Layers = (Vec<Array2<f64>>, Vec<Array1<f64>>);

fn unflatten(dims: &[usize], flat: &[f64]) -> Result<Layers> {
    validate_dims(dims)?;
    let expected: usize = dims.windows(2).map(|p| p[1] * p[0] + p[1]).sum();
    if flat.len() != expected {
        return Err(ApproxError::BadRecord { expected, got: flat.len() });
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut at = 0;
    for p in dims.windows(2) {
        let (fan_in, fan_out) = (p[0], p[1]);
        let n = fan_in * fan_out;
        weights.push(Array2::from_shape_vec((fan_out, fan_in), flat[at..at + n].to_vec()).unwrap());
        at += n;
        biases.push(Array1::from(flat[at..at + fan_out].to_vec()));
        at += fan_out;
    }
    Ok((weights, biases))
}

/// On-disk form of an [`Mlp`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpRecord {
    pub layer_dims: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub init_seed: u64,
    pub params: Vec<f64>,
}

impl From<Mlp> for MlpRecord {
    fn from(net: Mlp) -> Self {
        MlpRecord {
            params: net.flat_params(),
            layer_dims: net.layer_dims,
            hidden_activation: net.hidden_activation,
            output_activation: net.output_activation,
            init_seed: net.init_seed,
        }
    }
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = ApproxError;

    fn try_from(rec: MlpRecord) -> Result<Self> {
        let (weights, biases) = unflatten(&rec.layer_dims, &rec.params)?;
        let net = Mlp {
            layer_dims: rec.layer_dims,
            weights,
            biases,
            hidden_activation: rec.hidden_activation,
            output_activation: rec.output_activation,
            init_seed: rec.init_seed,
        };
        if !net.is_finite() {
            return Err(ApproxError::NonFinite("checkpoint parameters"));
        }
        Ok(net)
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.weights.len() == net.weights.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.dim() == b.dim())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.dim() == b.dim())
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flat_map(|w| w.iter()).chain(self.biases.iter().flat_map(|b| b.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }

    /// Rescale so the global L2 norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }
}

/// Adam with bias correction. Moments mirror the parameter shapes of the tracked network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdamRecord", into = "AdamRecord")]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self::with_betas(net, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &Mlp, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) || !self.first.matches(net) {
            return Err(ApproxError::ShapeMismatch);
        }
        if !grads.is_finite() {
            return Err(ApproxError::NonFinite("gradients"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = self.learning_rate;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.first.weights[l])
                .and(&mut self.second.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.first.biases[l])
                .and(&mut self.second.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AdamRecord {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    layer_dims: Vec<usize>,
    first_moments: Vec<f64>,
    second_moments: Vec<f64>,
}

impl From<Adam> for AdamRecord {
    fn from(a: Adam) -> Self {
        let mut layer_dims = vec![a.first.weights[0].ncols()];
        layer_dims.extend(a.first.weights.iter().map(|w| w.nrows()));
        AdamRecord {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            step_count: a.step_count,
            layer_dims,
            first_moments: a.first.flat(),
            second_moments: a.second.flat(),
        }
    }
}

impl TryFrom<AdamRecord> for Adam {
    type Error = ApproxError;

    fn try_from(r: AdamRecord) -> Result<Self> {
        let (w1, b1) = unflatten(&r.layer_dims, &r.first_moments)?;
        let (w2, b2) = unflatten(&r.layer_dims, &r.second_moments)?;
        Ok(Adam {
            learning_rate: r.learning_rate,
            beta1: r.beta1,
            beta2: r.beta2,
            epsilon: r.epsilon,
            step_count: r.step_count,
            first: Gradients { weights: w1, biases: b1 },
            second: Gradients { weights: w2, biases: b2 },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in 0..net.num_layers() {
            let w = &net.weights()[l];
            let b = &net.biases()[l];
            let mut z = vec![0.0; w.nrows()];
            for r in 0..w.nrows() {
                let mut s = b[r];
                for c in 0..w.ncols() {
                    s += w[[r, c]] * a[c];
                }
                z[r] = s;
            }
            let last = l + 1 == net.num_layers();
            a = z
                .into_iter()
                .map(|v| match (last, net.output_activation()) {
                    (false, _) => v.max(0.0),
                    (true, OutputActivation::Identity) => v,
                    (true, OutputActivation::Sigmoid) => 1.0 / (1.0 + (-v).exp()),
                })
                .collect();
        }
        a
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = Mlp::new(&[2, 1], OutputActivation::Identity, 7).unwrap();
        let b = Mlp::new(&[2, 1], OutputActivation::Identity, 7).unwrap();
        assert_eq!(a, b);
        let net = Mlp::new(&[14, 64, 64, 4], OutputActivation::Sigmoid, 1).unwrap();
        let shapes: Vec<_> = net.weights().iter().map(|w| w.dim()).collect();
        assert_eq!(shapes, vec![(64, 14), (64, 64), (4, 64)]);
        assert!(net.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        for seed in 0..20 {
            let net = Mlp::new(&[9, 33, 5], OutputActivation::Identity, seed).unwrap();
            for w in net.weights() {
                let bound = 1.0 / (w.ncols() as f64).sqrt();
                assert!(w.iter().all(|v| v.abs() <= bound));
                // the sampled range actually reaches near the bound
                let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(max > 0.8 * bound);
            }
        }
    }

    #[test]
    fn rejects_bad_dims() {
        assert_eq!(Mlp::new(&[], OutputActivation::Identity, 0), Err(ApproxError::TooFewLayers(0)));
        assert_eq!(Mlp::new(&[3], OutputActivation::Identity, 0), Err(ApproxError::TooFewLayers(1)));
        assert_eq!(Mlp::new(&[3, 0, 1], OutputActivation::Identity, 0), Err(ApproxError::ZeroWidth(1)));
    }

    #[test]
    fn zero_networks() {
        let s = Mlp::zeros(&[3, 4, 2], OutputActivation::Sigmoid).unwrap();
        assert_eq!(s.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
        let i = Mlp::zeros(&[3, 4, 2], OutputActivation::Identity).unwrap();
        assert_eq!(i.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_evaluation() {
        let net = Mlp::new(&[5, 7, 6, 3], OutputActivation::Sigmoid, 11).unwrap();
        let x = [0.3, -1.2, 0.8, 2.0, -0.1];
        let got = net.forward(&x).unwrap();
        let want = naive_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        let batched = net.forward_batch(ArrayView2::from_shape((1, 5), &x[..]).unwrap()).unwrap();
        for (g, b) in got.iter().zip(batched.iter()) {
            assert!((g - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = Mlp::new(&[3, 2], OutputActivation::Identity, 0).unwrap();
        assert_eq!(net.forward(&[1.0]), Err(ApproxError::DimMismatch { expected: 3, got: 1 }));
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn linear_layer_gradients() {
        let mut net = Mlp::zeros(&[3, 2], OutputActivation::Identity).unwrap();
        net.weights_mut()[0].assign(&array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let x = [0.5, -1.0, 2.0];
        let (g, dx) = net.backward(&x, &[1.0, 1.0]).unwrap();
        assert_eq!(g.weights[0], array![[0.5, -1.0, 2.0], [0.5, -1.0, 2.0]]);
        assert_eq!(g.biases[0], array![1.0, 1.0]);
        assert_eq!(dx, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(&[4, 8, 3], OutputActivation::Sigmoid, 3).unwrap();
        let (g, dx) = net.backward(&[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert_eq!(g.global_norm(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_first_step_matches_hand_evaluation() {
        // m1 = 0.05, v1 = 0.00025; m_hat = 0.5, v_hat = 0.25 -> delta = -0.01 * 0.5 / (0.5 + 1e-8)
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        let mut opt = Adam::new(&net, 0.01);
        let mut g = Gradients::zeros_like(&net);
        g.weights[0][[0, 0]] = 0.5;
        opt.step(&mut net, &g).unwrap();
        let want = -0.01 * 0.5 / (0.5 + 1e-8);
        assert!((net.weights()[0][[0, 0]] - want).abs() < 1e-15);
        assert_eq!(net.biases()[0][0], 0.0);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut net = Mlp::new(&[2, 3, 1], OutputActivation::Identity, 5).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, 0.01);
        opt.step(&mut net, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_two_steps_follow_recurrence() {
        // scripted evaluation of the recurrences for a constant gradient g
        let g = 0.3;
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.01);
        let (mut m, mut v, mut p) = (0.0, 0.0, 1.0);
        let mut expected = vec![];
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let step = lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            p -= step;
            expected.push(p);
        }
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        net.weights_mut()[0][[0, 0]] = 1.0;
        let mut opt = Adam::new(&net, lr);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][[0, 0]] = g;
        for want in expected {
            opt.step(&mut net, &grads).unwrap();
            assert!((net.weights()[0][[0, 0]] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_rejects_bad_gradients() {
        let mut net = Mlp::zeros(&[2, 1], OutputActivation::Identity).unwrap();
        let mut opt = Adam::new(&net, 0.01);
        let mut g = Gradients::zeros_like(&net);
        g.biases[0][0] = f64::NAN;
        assert_eq!(opt.step(&mut net, &g), Err(ApproxError::NonFinite("gradients")));
        let other = Mlp::zeros(&[3, 1], OutputActivation::Identity).unwrap();
        assert_eq!(opt.step(&mut net, &Gradients::zeros_like(&other)), Err(ApproxError::ShapeMismatch));
    }

    #[test]
    fn soft_update_endpoints() {
        let target = Mlp::zeros(&[2, 2], OutputActivation::Identity).unwrap();
        let mut online = target.clone();
        online.weights_mut()[0].fill(1.0);
        online.biases_mut()[0].fill(1.0);
        let mixed = soft_update(&target, &online, 0.01).unwrap();
        assert!(mixed.flat_params().iter().all(|&v| (v - 0.01).abs() < 1e-15));
        assert_eq!(soft_update(&target, &online, 1.0).unwrap(), online);
        assert_eq!(soft_update(&target, &online, 0.0).unwrap(), target);
        assert_eq!(soft_update(&target, &online, 1.5), Err(ApproxError::InvalidTau(1.5)));
        let other = Mlp::zeros(&[2, 3], OutputActivation::Identity).unwrap();
        assert_eq!(soft_update(&target, &other, 0.5), Err(ApproxError::ShapeMismatch));
    }

    #[test]
    fn clip_global_norm() {
        let net = Mlp::zeros(&[1, 2], OutputActivation::Identity).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.weights[0].assign(&array![[3.0], [4.0]]);
        assert_eq!(g.clip_global_norm(0.5), 5.0);
        assert!((g.global_norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let net = Mlp::new(&[4, 6, 2], OutputActivation::Sigmoid, 42).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
        let mut opt = Adam::new(&net, 0.01);
        let mut n2 = net.clone();
        let (g, _) = net.backward(&[1.0, 2.0, 3.0, 4.0], &[1.0, -1.0]).unwrap();
        opt.step(&mut n2, &g).unwrap();
        let back: Adam = serde_json::from_str(&serde_json::to_string(&opt).unwrap()).unwrap();
        assert_eq!(back, opt);
    }
}
