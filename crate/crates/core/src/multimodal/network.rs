use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::neuralnet::{Activation, DenseNetwork, Layer};
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Result};

/// Size of one data type in a multimodal autoencoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub input_dim: usize,
    /// Width of this type's second (and fourth) layer.
    pub second: usize,
}

impl ModalitySpec {
    pub fn new(name: &str, input_dim: usize, second: usize) -> Self {
        Self {
            name: name.into(),
            input_dim,
            second,
        }
    }
}

/// Shape of a five-layer multimodal AE. Activations are for layers 2 to 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeArchitecture {
    pub types: Vec<ModalitySpec>,
    pub shared: usize,
    pub activations: [Activation; 4],
}

impl MaeArchitecture {
    /// ReLU on the second and fourth layers, no activation on the third and fifth.
    pub fn new(types: Vec<ModalitySpec>, shared: usize) -> Self {
        Self {
            types,
            shared,
            activations: [Activation::Relu, Activation::Identity, Activation::Relu, Activation::Identity],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::Structural("a multimodal AE needs at least one data type".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for t in &self.types {
            if !names.insert(t.name.as_str()) {
                return Err(Error::Structural(format!("duplicate data type '{}'", t.name)));
            }
            if t.second == 0 || t.second >= t.input_dim {
                return Err(Error::Structural(format!(
                    "type '{}': second layer {} must be in 1..{}",
                    t.name, t.second, t.input_dim
                )));
            }
        }
        let total: usize = self.types.iter().map(|t| t.second).sum();
        if self.shared == 0 || self.shared >= total {
            return Err(Error::Structural(format!(
                "shared layer {} must be in 1..{total} (sum of second layers)",
                self.shared
            )));
        }
        Ok(())
    }

    pub fn build(&self, seed: u64) -> Result<MaeNetwork> {
        self.validate()?;
        let [a2, a3, a4, a5] = self.activations;
        let branches = self
            .types
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut rng = SeededRng::new(derive_seed(seed, k as u64));
                Branch {
                    name: t.name.clone(),
                    encoder: Layer::glorot(t.input_dim, t.second, a2, &mut rng),
                    fusion: Layer::glorot(t.second, self.shared, a3, &mut rng),
                    defusion: Layer::glorot(self.shared, t.second, a4, &mut rng),
                    decoder: Layer::glorot(t.second, t.input_dim, a5, &mut rng),
                }
            })
            .collect();
        MaeNetwork::new(branches)
    }
}

/// Parameters owned by one data type: layers 2 to 5 of its path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub name: String,
    pub encoder: Layer,
    pub fusion: Layer,
    pub defusion: Layer,
    pub decoder: Layer,
}

impl Branch {
    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }
}

/// Per-type encoders and decoders joined by one shared third layer.
///
/// The third layer sums every type's affine term, biases included, inside a
/// single activation (all fusion layers therefore share one activation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Branch>", into = "Vec<Branch>")]
pub struct MaeNetwork {
    branches: Vec<Branch>,
}

impl TryFrom<Vec<Branch>> for MaeNetwork {
    type Error = Error;

    fn try_from(branches: Vec<Branch>) -> Result<Self> {
        Self::new(branches)
    }
}

impl From<MaeNetwork> for Vec<Branch> {
    fn from(net: MaeNetwork) -> Self {
        net.branches
    }
}

/// All intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeForward {
    pub codes: Vec<Array1<f64>>,
    pub shared: Array1<f64>,
    pub fused: Vec<Array1<f64>>,
    pub outputs: Vec<Array1<f64>>,
}

impl MaeNetwork {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::Structural("a multimodal AE needs at least one data type".into()))?;
        let shared = first.fusion.out_dim();
        let shared_act = first.fusion.activation;
        for b in &branches {
            let h = b.encoder.out_dim();
            let chain_ok = b.fusion.in_dim() == h
                && b.fusion.out_dim() == shared
                && b.defusion.in_dim() == shared
                && b.defusion.out_dim() == h
                && b.decoder.in_dim() == h
                && b.decoder.out_dim() == b.encoder.in_dim();
            if !chain_ok {
                return Err(Error::Structural(format!("type '{}': layer sizes do not chain", b.name)));
            }
            if b.fusion.activation != shared_act {
                return Err(Error::Structural("all fusion layers must share one activation".into()));
            }
        }
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub(crate) fn branches_mut(&mut self) -> &mut [Branch] {
        &mut self.branches
    }

    pub fn n_types(&self) -> usize {
        self.branches.len()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.branches.iter().map(Branch::input_dim).collect()
    }

    pub fn shared_dim(&self) -> usize {
        self.branches[0].fusion.out_dim()
    }

    pub fn shared_activation(&self) -> Activation {
        self.branches[0].fusion.activation
    }

    pub fn parameter_count(&self) -> usize {
        self.branches
            .iter()
            .map(|b| {
                b.encoder.parameter_count()
                    + b.fusion.parameter_count()
                    + b.defusion.parameter_count()
                    + b.decoder.parameter_count()
            })
            .sum()
    }

    /// The equivalent plain five-layer network when there is a single type.
    pub fn as_plain(&self) -> Option<DenseNetwork> {
        match self.branches.as_slice() {
            [b] => DenseNetwork::new(
                b.input_dim(),
                vec![b.encoder.clone(), b.fusion.clone(), b.defusion.clone(), b.decoder.clone()],
            )
            .ok(),
            _ => None,
        }
    }

    /// Wraps a five-layer network as a one-type multimodal AE.
    pub fn from_plain(name: &str, net: &DenseNetwork) -> Result<Self> {
        match net.layers() {
            [enc, fus, defus, dec] => Self::new(vec![Branch {
                name: name.into(),
                encoder: enc.clone(),
                fusion: fus.clone(),
                defusion: defus.clone(),
                decoder: dec.clone(),
            }]),
            layers => Err(Error::Structural(format!("expected 4 weight layers, found {}", layers.len()))),
        }
    }

    pub(crate) fn check_inputs(&self, inputs: &[ArrayView1<f64>]) -> Result<()> {
        if inputs.len() != self.branches.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} data types, got {}",
                self.branches.len(),
                inputs.len()
            )));
        }
        for (b, x) in self.branches.iter().zip(inputs) {
            if x.len() != b.input_dim() {
                return Err(Error::TypeDimensionMismatch {
                    data_type: b.name.clone(),
                    expected: b.input_dim(),
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &[ArrayView1<f64>]) -> Result<MaeForward> {
        self.check_inputs(inputs)?;
        let codes: Vec<Array1<f64>> = self.branches.iter().zip(inputs).map(|(b, x)| b.encoder.forward(*x)).collect();
        let mut pre: Option<Array1<f64>> = None;
        for (b, h) in self.branches.iter().zip(&codes) {
            let term = b.fusion.affine(h.view());
            pre = Some(match pre {
                None => term,
                Some(acc) => acc + &term,
            });
        }
        let act = self.shared_activation();
        let shared = pre.expect("at least one type").mapv_into(|v| act.apply(v));
        let fused: Vec<Array1<f64>> = self.branches.iter().map(|b| b.defusion.forward(shared.view())).collect();
        let outputs = self
            .branches
            .iter()
            .zip(&fused)
            .map(|(b, h)| b.decoder.forward(h.view()))
            .collect();
        Ok(MaeForward {
            codes,
            shared,
            fused,
            outputs,
        })
    }

    /// Per-type reconstruction MSE `(1/N_k) ||x^{k,(5)} - x^k||^2`.
    pub fn per_type_mse(&self, inputs: &[ArrayView1<f64>]) -> Result<Vec<f64>> {
        let fwd = self.forward(inputs)?;
        Ok(fwd
            .outputs
            .iter()
            .zip(inputs)
            .map(|(o, x)| crate::neuralnet::mean_squared_difference(o.view(), *x))
            .collect())
    }

    /// Weighted MSE and its gradient w.r.t. every type's input, treating each
    /// input as both network input and reconstruction target.
    pub fn wmse_and_grad(&self, inputs: &[ArrayView1<f64>], weights: &[f64]) -> Result<(f64, Vec<Array1<f64>>)> {
        let fwd = self.forward(inputs)?;
        let mut residual_grads = Vec::with_capacity(self.branches.len());
        let mut out_grads = Vec::with_capacity(self.branches.len());
        let mut wmse: Option<f64> = None;
        for ((o, x), &w) in fwd.outputs.iter().zip(inputs).zip(weights) {
            let n = x.len() as f64;
            let residual = o - x;
            let mse = residual.dot(&residual) / n;
            wmse = Some(wmse.map_or(w * mse, |acc| acc + w * mse));
            let g = (residual * (2.0 / n)) * w;
            residual_grads.push(g.clone());
            out_grads.push(g);
        }
        let through = self.input_grad(inputs, &fwd, out_grads);
        let grads = through.into_iter().zip(residual_grads).map(|(t, r)| t - r).collect();
        Ok((wmse.expect("at least one type"), grads))
    }

    /// Back-propagates per-type output gradients to per-type input gradients.
    pub fn input_grad(
        &self,
        inputs: &[ArrayView1<f64>],
        fwd: &MaeForward,
        out_grads: Vec<Array1<f64>>,
    ) -> Vec<Array1<f64>> {
        let mut into_shared: Option<Array1<f64>> = None;
        for ((b, g), (fused, out)) in self
            .branches
            .iter()
            .zip(out_grads)
            .zip(fwd.fused.iter().zip(&fwd.outputs))
        {
            let d5 = scale_by_derivative(g, out, b.decoder.activation);
            let d4 = scale_by_derivative(b.decoder.weights.t().dot(&d5), fused, b.defusion.activation);
            let up = b.defusion.weights.t().dot(&d4);
            into_shared = Some(match into_shared {
                None => up,
                Some(acc) => acc + &up,
            });
        }
        let d3 = scale_by_derivative(into_shared.expect("at least one type"), &fwd.shared, self.shared_activation());
        self.branches
            .iter()
            .zip(&fwd.codes)
            .zip(inputs)
            .map(|((b, code), _)| {
                let d2 = scale_by_derivative(b.fusion.weights.t().dot(&d3), code, b.encoder.activation);
                b.encoder.weights.t().dot(&d2)
            })
            .collect()
    }
}

fn scale_by_derivative(upstream: Array1<f64>, output: &Array1<f64>, act: Activation) -> Array1<f64> {
    Zip::from(&upstream)
        .and(output)
        .map_collect(|&g, &y| g * act.derivative_from_output(y))
}
