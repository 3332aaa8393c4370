use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::rng::SeededRng;
use crate::{Error, Result};

/// One dense layer: `y = activation(W x + b)`, `W` shaped `[out_dim, in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerRecord", into = "LayerRecord")]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != biases.len() {
            return Err(Error::Structural(format!(
                "layer has {} weight rows but {} biases",
                weights.nrows(),
                biases.len()
            )));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Array2::from_shape_fn((out_dim, in_dim), |_| rng.uniform_range(-limit, limit));
        Self {
            weights,
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Pre-activation `W x + b`.
    #[inline]
    pub fn affine(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&x) + &self.biases
    }

    #[inline]
    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let activation = self.activation;
        self.affine(x).mapv_into(|v| activation.apply(v))
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// On-disk form of a layer: row-major nested weight rows.
#[derive(Serialize, Deserialize)]
struct LayerRecord {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl From<Layer> for LayerRecord {
    fn from(layer: Layer) -> Self {
        Self {
            in_dim: layer.in_dim(),
            out_dim: layer.out_dim(),
            activation: layer.activation,
            weights: layer.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            biases: layer.biases.to_vec(),
        }
    }
}

impl TryFrom<LayerRecord> for Layer {
    type Error = Error;

    fn try_from(rec: LayerRecord) -> Result<Self> {
        if rec.weights.len() != rec.out_dim || rec.weights.iter().any(|r| r.len() != rec.in_dim) {
            return Err(Error::Format(format!(
                "layer weights do not match declared shape {}x{}",
                rec.out_dim, rec.in_dim
            )));
        }
        let flat: Vec<f64> = rec.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((rec.out_dim, rec.in_dim), flat)
            .map_err(|e| Error::Format(e.to_string()))?;
        Layer::new(weights, Array1::from(rec.biases), rec.activation)
    }
}

/// Gradient for one layer, same shapes as the layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Feed-forward network `x^(l) = phi^(l)(W^(l) x^(l-1) + b^(l))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRecord", into = "NetworkRecord")]
pub struct DenseNetwork {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl DenseNetwork {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Structural("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Structural("network needs at least one layer".into()));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != width {
                return Err(Error::Structural(format!(
                    "layer {i} expects input width {} but previous width is {width}",
                    layer.in_dim()
                )));
            }
            if layer.out_dim() == 0 {
                return Err(Error::Structural(format!("layer {i} has zero outputs")));
            }
            width = layer.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    /// Randomly initialised network with the given layer widths (excluding the input).
    pub fn glorot(input_dim: usize, widths: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if widths.len() != activations.len() {
            return Err(Error::Structural(format!(
                "{} layer widths but {} activations",
                widths.len(),
                activations.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Structural("layer widths must be positive".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut prev = input_dim;
        let layers = widths
            .iter()
            .zip(activations)
            .map(|(&w, &act)| {
                let layer = Layer::glorot(prev, w, act, &mut rng);
                prev = w;
                layer
            })
            .collect();
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    pub fn is_autoencoder(&self) -> bool {
        self.output_dim() == self.input_dim
    }

    fn check_input(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer after the input; the last entry is the output.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Vec<Array1<f64>>> {
        self.check_input(x)?;
        let mut acts: Vec<Array1<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = match acts.last() {
                Some(prev) => layer.forward(prev.view()),
                None => layer.forward(x),
            };
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn output(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.forward(x)?.pop().expect("network has layers"))
    }

    /// Mean squared reconstruction error `(1/N) sum (x^(L)_i - x_i)^2`.
    pub fn reconstruction_mse(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.require_autoencoder()?;
        let out = self.output(x)?;
        Ok(mean_squared_difference(out.view(), x))
    }

    fn require_autoencoder(&self) -> Result<()> {
        if !self.is_autoencoder() {
            return Err(Error::Structural(format!(
                "autoencoder shape required: input {} vs output {}",
                self.input_dim,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Reverse-mode pass given `dL/d(output)`. Returns parameter gradients
    /// (when requested) and `dL/d(input)` through the network only.
    pub fn backward(
        &self,
        x: ArrayView1<f64>,
        acts: &[Array1<f64>],
        output_grad: Array1<f64>,
        want_params: bool,
    ) -> (Option<Vec<LayerGrad>>, Array1<f64>) {
        let mut grads: Vec<LayerGrad> = Vec::new();
        let mut upstream = output_grad;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let delta: Array1<f64> = ndarray::Zip::from(&upstream)
                .and(&acts[l])
                .map_collect(|&g, &y| g * act.derivative_from_output(y));
            if want_params {
                let input = if l == 0 { x } else { acts[l - 1].view() };
                let dw = outer(delta.view(), input);
                grads.push(LayerGrad {
                    weights: dw,
                    biases: delta.clone(),
                });
            }
            upstream = layer.weights.t().dot(&delta);
        }
        grads.reverse();
        (want_params.then_some(grads), upstream)
    }

    /// Gradients of `(1/N) sum_i (x^(L)_i - target_i)^2` w.r.t. every weight and bias.
    pub fn grad_params(&self, x: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<Vec<LayerGrad>> {
        self.check_input(x)?;
        if target.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: target.len(),
            });
        }
        let acts = self.forward(x)?;
        let n = target.len() as f64;
        let out = acts.last().expect("network has layers");
        let output_grad = (out - &target) * (2.0 / n);
        let (grads, _) = self.backward(x, &acts, output_grad, true);
        Ok(grads.expect("requested"))
    }

    /// Total derivative of `MSE(x) = (1/N)||f(x) - x||^2` w.r.t. `x`, with
    /// `x` appearing both as network input and as reconstruction target.
    pub fn grad_input(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.mse_and_grad_input(x)?.1)
    }

    pub fn mse_and_grad_input(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        self.require_autoencoder()?;
        self.check_input(x)?;
        let acts = self.forward(x)?;
        let n = x.len() as f64;
        let residual = acts.last().expect("network has layers") - &x;
        let mse = residual.dot(&residual) / n;
        let (_, through_net) = self.backward(x, &acts, residual.clone() * (2.0 / n), false);
        Ok((mse, through_net - residual * (2.0 / n)))
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl From<DenseNetwork> for NetworkRecord {
    fn from(net: DenseNetwork) -> Self {
        Self {
            input_dim: net.input_dim,
            layers: net.layers,
        }
    }
}

impl TryFrom<NetworkRecord> for DenseNetwork {
    type Error = Error;

    fn try_from(rec: NetworkRecord) -> Result<Self> {
        DenseNetwork::new(rec.input_dim, rec.layers)
    }
}

/// `(1/N) sum (a_i - b_i)^2`.
pub fn mean_squared_difference(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n
}

fn outer(col: ArrayView1<f64>, row: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((col.len(), row.len()), |(i, j)| col[i] * row[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn identity_net(n: usize) -> DenseNetwork {
        let layer = Layer::new(Array2::eye(n), Array1::zeros(n), Activation::Identity).unwrap();
        DenseNetwork::new(n, vec![layer]).unwrap()
    }

    fn zero_net(n: usize) -> DenseNetwork {
        DenseNetwork::new(n, vec![Layer::zeros(n, n, Activation::Identity)]).unwrap()
    }

    #[test]
    fn zero_map_outputs_zero() {
        let out = zero_net(2).output(array![3.0, -1.0].view()).unwrap();
        assert_eq!(out, array![0.0, 0.0]);
    }

    #[test]
    fn identity_map_reproduces_input() {
        let out = identity_net(2).output(array![0.2, 0.7].view()).unwrap();
        assert_eq!(out, array![0.2, 0.7]);
    }

    #[test]
    fn hand_evaluated_two_one_two() {
        let hidden = Layer::new(array![[1.0, 1.0]], array![0.0], Activation::Sigmoid).unwrap();
        let output = Layer::new(array![[1.0], [1.0]], array![0.0, 0.0], Activation::Identity).unwrap();
        let net = DenseNetwork::new(2, vec![hidden, output]).unwrap();
        let acts = net.forward(array![1.0, 1.0].view()).unwrap();
        let s2 = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((acts[0][0] - 0.880797).abs() < 1e-6);
        assert_eq!(acts[1], array![s2, s2]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = identity_net(3).forward(array![1.0].view()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 1 }));
    }

    #[test]
    fn broken_chain_rejected() {
        let a = Layer::zeros(3, 2, Activation::Relu);
        let b = Layer::zeros(4, 3, Activation::Relu);
        assert!(matches!(DenseNetwork::new(3, vec![a, b]), Err(Error::Structural(_))));
    }

    #[test]
    fn grad_params_zero_at_perfect_reconstruction() {
        let net = identity_net(3);
        let x = array![0.1, 0.5, 0.9];
        for g in net.grad_params(x.view(), x.view()).unwrap() {
            assert!(g.weights.iter().all(|&v| v == 0.0));
            assert!(g.biases.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn one_by_one_identity_gradient() {
        let net = identity_net(1);
        let grads = net.grad_params(array![1.0].view(), array![0.0].view()).unwrap();
        assert_eq!(grads[0].weights[[0, 0]], 2.0);
        assert_eq!(grads[0].biases[0], 2.0);
    }

    #[test]
    fn grad_input_identity_is_zero() {
        let g = identity_net(4).grad_input(array![0.3, -2.0, 5.0, 0.0].view()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_input_zero_map_is_two_x_over_n() {
        let x = array![0.3, -2.0, 5.0, 1.0];
        let g = zero_net(4).grad_input(x.view()).unwrap();
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn grad_input_requires_autoencoder_shape() {
        let net = DenseNetwork::glorot(3, &[2], &[Activation::Relu], 1).unwrap();
        assert!(matches!(net.grad_input(array![1.0, 2.0, 3.0].view()), Err(Error::Structural(_))));
    }

    #[test]
    fn cached_intermediates_reproduce_output() {
        let net = DenseNetwork::glorot(
            5,
            &[4, 2, 4, 5],
            &[Activation::Relu, Activation::Sigmoid, Activation::Relu, Activation::Identity],
            17,
        )
        .unwrap();
        let x = array![0.1, 0.2, 0.3, 0.4, 0.5];
        let acts = net.forward(x.view()).unwrap();
        for start in 0..acts.len() {
            let mut v = acts[start].clone();
            for layer in &net.layers()[start + 1..] {
                v = layer.forward(v.view());
            }
            assert_eq!(&v, acts.last().unwrap());
        }
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let net = DenseNetwork::glorot(6, &[3, 6], &[Activation::Sigmoid, Activation::Sigmoid], 99).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let back: DenseNetwork = serde_json::from_str(&text).unwrap();
        assert_eq!(net, back);
    }
}
