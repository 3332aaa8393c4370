use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Branch, MaeNetwork};
use crate::neuralnet::{check_finite_loss, sgd_train, Activation, BatchSchedule, DenseNetwork, Layer, TrainConfig, TrainReport};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Budgets for the three training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeTrainConfig {
    /// Used for each pre-training stage (outer and inner get the full budget).
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Without pre-training, joint training runs for both budgets combined.
    pub pretraining: bool,
}

impl Default for MaeTrainConfig {
    fn default() -> Self {
        let base = TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        };
        Self {
            pretrain: base.clone(),
            finetune: base,
            pretraining: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaeTrainReport {
    pub outer: Vec<TrainReport>,
    pub inner: Option<TrainReport>,
    pub finetune: TrainReport,
}

fn check_rows(net: &MaeNetwork, data: &[ArrayView2<f64>]) -> Result<usize> {
    if data.len() != net.n_types() {
        return Err(Error::InvalidInput(format!(
            "expected {} data types, got {}",
            net.n_types(),
            data.len()
        )));
    }
    let rows = data[0].nrows();
    for (b, d) in net.branches().iter().zip(data) {
        if d.nrows() == 0 {
            return Err(Error::EmptyData(format!("type '{}' has no training rows", b.name)));
        }
        if d.ncols() != b.input_dim() {
            return Err(Error::TypeDimensionMismatch {
                data_type: b.name.clone(),
                expected: b.input_dim(),
                got: d.ncols(),
            });
        }
        if d.nrows() != rows {
            return Err(Error::InvalidInput(format!(
                "type '{}' has {} rows, expected {rows}",
                b.name,
                d.nrows()
            )));
        }
    }
    Ok(rows)
}

/// Trains each type's encoder and decoder as an independent shallow AE
/// (`N_k -> second_k -> N_k`). Type `k` shuffles with `derive_seed(cfg.seed, k)`.
pub fn pretrain_outer(net: &mut MaeNetwork, data: &[ArrayView2<f64>], cfg: &TrainConfig) -> Result<Vec<TrainReport>> {
    check_rows(net, data)?;
    let results: Vec<Result<(Layer, Layer, TrainReport)>> = net
        .branches()
        .par_iter()
        .zip(data.par_iter())
        .enumerate()
        .map(|(k, (b, d))| {
            let mut shallow = DenseNetwork::new(b.input_dim(), vec![b.encoder.clone(), b.decoder.clone()])?;
            let type_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, k as u64),
                ..cfg.clone()
            };
            let report = sgd_train(&mut shallow, *d, &type_cfg)?;
            let mut layers = shallow.into_layers().into_iter();
            let enc = layers.next().expect("two layers");
            let dec = layers.next().expect("two layers");
            Ok((enc, dec, report))
        })
        .collect();
    let mut reports = Vec::with_capacity(results.len());
    for (b, r) in net.branches_mut().iter_mut().zip(results) {
        let (enc, dec, report) = r?;
        b.encoder = enc;
        b.decoder = dec;
        reports.push(report);
    }
    Ok(reports)
}

/// Per-type second-layer codes of every record under the current encoders.
pub fn encode_all(net: &MaeNetwork, data: &[ArrayView2<f64>]) -> Result<Vec<Array2<f64>>> {
    check_rows(net, data)?;
    Ok(net
        .branches()
        .iter()
        .zip(data)
        .map(|(b, d)| batch_layer(&b.encoder, &d.view()))
        .collect())
}

/// Trains the fusion and de-fusion layers to reconstruct the frozen
/// encoders' codes. Encoders and decoders are not touched.
pub fn pretrain_inner(net: &mut MaeNetwork, data: &[ArrayView2<f64>], cfg: &TrainConfig) -> Result<TrainReport> {
    let codes = encode_all(net, data)?;
    let views: Vec<ArrayView2<f64>> = codes.iter().map(|c| c.view()).collect();
    run_sgd(net, &views, cfg, Stage::Inner)
}

/// Joint SGD on the sum over types of per-type MSE.
pub fn finetune(net: &mut MaeNetwork, data: &[ArrayView2<f64>], cfg: &TrainConfig) -> Result<TrainReport> {
    check_rows(net, data)?;
    run_sgd(net, data, cfg, Stage::Full)
}

/// Mean over records of `sum_k (1/N_k) ||x^{k,(5)} - x^k||^2` (the fine-tuning objective).
pub fn joint_objective(net: &MaeNetwork, data: &[ArrayView2<f64>]) -> Result<f64> {
    let rows = check_rows(net, data)?;
    let (loss, _) = batch_grads(net.branches(), data, Stage::Full, false);
    Ok(loss / rows as f64)
}

/// Mean over records of per-type reconstruction MSE.
pub fn per_type_training_mse(net: &MaeNetwork, data: &[ArrayView2<f64>]) -> Result<Vec<f64>> {
    let rows = check_rows(net, data)?;
    let mut sums = vec![0.0; net.n_types()];
    for r in 0..rows {
        let inputs: Vec<_> = data.iter().map(|d| d.row(r)).collect();
        for (s, m) in sums.iter_mut().zip(net.per_type_mse(&inputs)?) {
            *s += m;
        }
    }
    Ok(sums.into_iter().map(|s| s / rows as f64).collect())
}

/// Inner-stage reconstruction objective on codes, for diagnostics.
pub fn inner_objective(net: &MaeNetwork, data: &[ArrayView2<f64>]) -> Result<f64> {
    let rows = check_rows(net, data)?;
    let codes = encode_all(net, data)?;
    let views: Vec<ArrayView2<f64>> = codes.iter().map(|c| c.view()).collect();
    let (loss, _) = batch_grads(net.branches(), &views, Stage::Inner, false);
    Ok(loss / rows as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    /// Codes in, codes out: layers 3 and 4 only.
    Inner,
    /// Records in, records out: all four layers.
    Full,
}

fn run_sgd(net: &mut MaeNetwork, data: &[ArrayView2<f64>], cfg: &TrainConfig, stage: Stage) -> Result<TrainReport> {
    let rows = data[0].nrows();
    cfg.validate(rows)?;
    let mut schedule = BatchSchedule::new(rows, cfg.batch_size, cfg.seed);
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for batch in schedule.epoch() {
            let xs: Vec<Array2<f64>> = data.iter().map(|d| d.select(Axis(0), batch)).collect();
            let views: Vec<ArrayView2<f64>> = xs.iter().map(|x| x.view()).collect();
            let (loss, grads) = batch_grads(net.branches(), &views, stage, true);
            loss_sum += loss;
            apply(net.branches_mut(), grads, cfg.learning_rate, cfg.weight_decay);
        }
        let loss = loss_sum / rows as f64;
        check_finite_loss(epoch, loss)?;
        report.epoch_losses.push(loss);
    }
    Ok(report)
}

struct Grad {
    weights: Array2<f64>,
    biases: Array1<f64>,
}

#[derive(Default)]
struct BranchGrads {
    encoder: Option<Grad>,
    fusion: Option<Grad>,
    defusion: Option<Grad>,
    decoder: Option<Grad>,
}

fn batch_layer(layer: &Layer, input: &ArrayView2<f64>) -> Array2<f64> {
    let mut z = input.dot(&layer.weights.t());
    z += &layer.biases;
    let act = layer.activation;
    z.mapv_inplace(|v| act.apply(v));
    z
}

fn scale_by_derivative(upstream: &mut Array2<f64>, output: &Array2<f64>, act: Activation) {
    upstream.zip_mut_with(output, |g, &y| *g *= act.derivative_from_output(y));
}

fn layer_grad(delta: &Array2<f64>, input: &ArrayView2<f64>) -> Grad {
    Grad {
        weights: delta.t().dot(input),
        biases: delta.sum_axis(Axis(0)),
    }
}

/// Forward and backward pass over a minibatch. Returns the summed per-record
/// loss and, when requested, gradients of the batch-mean loss.
fn batch_grads(
    branches: &[Branch],
    xs: &[ArrayView2<f64>],
    stage: Stage,
    want_grads: bool,
) -> (f64, Vec<BranchGrads>) {
    let full = stage == Stage::Full;
    let codes: Vec<Array2<f64>> = if full {
        branches.iter().zip(xs).map(|(b, x)| batch_layer(&b.encoder, x)).collect()
    } else {
        Vec::new()
    };
    let code_view = |k: usize| if full { codes[k].view() } else { xs[k].view() };

    let mut pre: Option<Array2<f64>> = None;
    for (k, b) in branches.iter().enumerate() {
        let mut term = code_view(k).dot(&b.fusion.weights.t());
        term += &b.fusion.biases;
        pre = Some(match pre {
            None => term,
            Some(mut acc) => {
                acc += &term;
                acc
            }
        });
    }
    let shared_act = branches[0].fusion.activation;
    let mut shared = pre.expect("at least one type");
    shared.mapv_inplace(|v| shared_act.apply(v));

    let fused: Vec<Array2<f64>> = branches.iter().map(|b| batch_layer(&b.defusion, &shared.view())).collect();
    let outputs: Vec<Array2<f64>> = if full {
        branches.iter().zip(&fused).map(|(b, h)| batch_layer(&b.decoder, &h.view())).collect()
    } else {
        Vec::new()
    };

    let rows = xs[0].nrows() as f64;
    let mut loss = 0.0;
    let mut upstreams = Vec::with_capacity(branches.len());
    for (k, x) in xs.iter().enumerate() {
        let out = if full { &outputs[k] } else { &fused[k] };
        let width = x.ncols() as f64;
        let mut up = out - x;
        let sum_sq: f64 = up.iter().map(|v| v * v).sum();
        loss += sum_sq / width;
        up *= 2.0 / (rows * width);
        upstreams.push(up);
    }
    if !want_grads {
        return (loss, Vec::new());
    }

    let mut grads: Vec<BranchGrads> = branches.iter().map(|_| BranchGrads::default()).collect();
    let mut into_shared: Option<Array2<f64>> = None;
    for (k, (b, mut up)) in branches.iter().zip(upstreams).enumerate() {
        if full {
            scale_by_derivative(&mut up, &outputs[k], b.decoder.activation);
            grads[k].decoder = Some(layer_grad(&up, &fused[k].view()));
            up = up.dot(&b.decoder.weights);
        }
        scale_by_derivative(&mut up, &fused[k], b.defusion.activation);
        grads[k].defusion = Some(layer_grad(&up, &shared.view()));
        let next = up.dot(&b.defusion.weights);
        into_shared = Some(match into_shared {
            None => next,
            Some(mut acc) => {
                acc += &next;
                acc
            }
        });
    }
    let mut d3 = into_shared.expect("at least one type");
    scale_by_derivative(&mut d3, &shared, shared_act);
    for (k, b) in branches.iter().enumerate() {
        grads[k].fusion = Some(layer_grad(&d3, &code_view(k)));
        if full {
            let mut up = d3.dot(&b.fusion.weights);
            scale_by_derivative(&mut up, &codes[k], b.encoder.activation);
            grads[k].encoder = Some(layer_grad(&up, &xs[k]));
        }
    }
    (loss, grads)
}

fn update(layer: &mut Layer, grad: Option<Grad>, lr: f64, weight_decay: f64) {
    if let Some(Grad { mut weights, biases }) = grad {
        if weight_decay > 0.0 {
            weights.scaled_add(weight_decay, &layer.weights);
        }
        layer.weights.scaled_add(-lr, &weights);
        layer.biases.scaled_add(-lr, &biases);
    }
}

fn apply(branches: &mut [Branch], grads: Vec<BranchGrads>, lr: f64, weight_decay: f64) {
    for (b, g) in branches.iter_mut().zip(grads) {
        update(&mut b.decoder, g.decoder, lr, weight_decay);
        update(&mut b.defusion, g.defusion, lr, weight_decay);
        update(&mut b.fusion, g.fusion, lr, weight_decay);
        update(&mut b.encoder, g.encoder, lr, weight_decay);
    }
}

/// Gradients of the batch-mean joint objective for the parameter order
/// encoder, fusion, de-fusion, decoder of each type (testing aid).
#[cfg(test)]
pub(crate) fn full_gradients(net: &MaeNetwork, data: &[ArrayView2<f64>]) -> Vec<[(Array2<f64>, Array1<f64>); 4]> {
    let (_, grads) = batch_grads(net.branches(), data, Stage::Full, true);
    grads
        .into_iter()
        .map(|g| {
            let take = |g: Option<Grad>| {
                let g = g.expect("full stage fills every layer");
                (g.weights, g.biases)
            };
            [take(g.encoder), take(g.fusion), take(g.defusion), take(g.decoder)]
        })
        .collect()
}
