use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::DenseNetwork;
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Minibatch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 coefficient on weights (biases are not decayed).
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 50,
            learning_rate: 0.01,
            weight_decay: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, records: usize) -> Result<()> {
        if records == 0 {
            return Err(Error::EmptyData("training set is empty".into()));
        }
        if self.batch_size == 0 || self.batch_size > records {
            return Err(Error::InvalidInput(format!(
                "batch size {} must be in 1..={records}",
                self.batch_size
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate {} must be a finite non-negative number",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidInput("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mean training loss observed during each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Visits `0..records` in minibatches, reshuffled every epoch from a single seeded stream.
pub(crate) struct BatchSchedule {
    rng: SeededRng,
    order: Vec<usize>,
    batch_size: usize,
}

impl BatchSchedule {
    pub(crate) fn new(records: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            rng: SeededRng::new(seed),
            order: (0..records).collect(),
            batch_size,
        }
    }

    /// Shuffles and returns this epoch's batches; the last may be short.
    pub(crate) fn epoch(&mut self) -> std::slice::Chunks<'_, usize> {
        self.rng.shuffle(&mut self.order);
        self.order.chunks(self.batch_size)
    }
}

pub(crate) fn check_finite_loss(epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, loss })
    }
}

/// Trains `net` as an autoencoder on the rows of `data` (mean squared reconstruction error plus weight decay).
pub fn sgd_train(net: &mut DenseNetwork, data: ArrayView2<f64>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate(data.nrows())?;
    if data.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: data.ncols(),
        });
    }
    if !net.is_autoencoder() {
        return Err(Error::Structural("sgd_train needs an autoencoder-shaped network".into()));
    }
    let records = data.nrows();
    let mut schedule = BatchSchedule::new(records, cfg.batch_size, cfg.seed);
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for batch in schedule.epoch() {
            let x = data.select(Axis(0), batch);
            loss_sum += batch_step(net, &x, cfg.learning_rate, cfg.weight_decay);
        }
        let loss = loss_sum / records as f64;
        check_finite_loss(epoch, loss)?;
        report.epoch_losses.push(loss);
    }
    Ok(report)
}

/// One SGD update on a minibatch. Returns the sum over rows of per-row MSE.
fn batch_step(net: &mut DenseNetwork, x: &Array2<f64>, lr: f64, weight_decay: f64) -> f64 {
    let layers = net.layers_mut();
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    for layer in layers.iter() {
        let input = acts.last().unwrap_or(x);
        let mut z = input.dot(&layer.weights.t());
        z += &layer.biases;
        let act = layer.activation;
        z.mapv_inplace(|v| act.apply(v));
        acts.push(z);
    }
    let rows = x.nrows() as f64;
    let width = x.ncols() as f64;
    let mut upstream = acts.last().expect("network has layers") - x;
    let sum_sq: f64 = upstream.iter().map(|v| v * v).sum();
    upstream *= 2.0 / (rows * width);

    for l in (0..layers.len()).rev() {
        let layer = &mut layers[l];
        let act = layer.activation;
        upstream.zip_mut_with(&acts[l], |g, &y| *g *= act.derivative_from_output(y));
        let input = if l == 0 { x } else { &acts[l - 1] };
        let mut dw = upstream.t().dot(input);
        let db = upstream.sum_axis(Axis(0));
        let next = (l > 0).then(|| upstream.dot(&layer.weights));
        if weight_decay > 0.0 {
            dw.scaled_add(weight_decay, &layer.weights);
        }
        layer.weights.scaled_add(-lr, &dw);
        layer.biases.scaled_add(-lr, &db);
        if let Some(n) = next {
            upstream = n;
        }
    }
    sum_sq / width
}
