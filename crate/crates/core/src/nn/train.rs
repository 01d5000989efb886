//! Mini-batch training with Adam or SGD.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Mode, Network};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam { lr: f64 },
    Sgd { lr: f64, momentum: f64, weight_decay: f64 },
}

impl Optimizer {
    /// Adam with learning rate 0.001.
    pub fn adam() -> Self {
        Optimizer::Adam { lr: 1e-3 }
    }

    /// SGD with learning rate 0.01, momentum 0.9 and weight decay 5e-4.
    pub fn sgd() -> Self {
        Optimizer::Sgd { lr: 0.01, momentum: 0.9, weight_decay: 5e-4 }
    }

    fn lr(&self) -> f64 {
        match *self {
            Optimizer::Adam { lr } | Optimizer::Sgd { lr, .. } => lr,
        }
    }
}

fn default_decay() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Multiplicative learning-rate factor applied after every epoch.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
}

impl TrainConfig {
    pub fn new(optimizer: Optimizer, epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self { optimizer, epochs, batch_size, seed, lr_decay: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr() > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        if let Optimizer::Sgd { momentum, weight_decay, .. } = self.optimizer {
            if !(0.0..1.0).contains(&momentum) || weight_decay < 0.0 {
                return Err(Error::Config("invalid SGD momentum or weight decay".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainMetrics {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }
}

struct OptState {
    first: Gradients,
    second: Gradients,
    t: u64,
}

impl OptState {
    fn new(net: &Network) -> Self {
        let zeros: Gradients = net
            .params()
            .iter()
            .map(|ps| ps.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect())
            .collect();
        Self { first: zeros.clone(), second: zeros, t: 0 }
    }

    fn step(&mut self, opt: Optimizer, lr: f64, net: &mut Network, grads: &Gradients) {
        self.t += 1;
        let t = self.t as i32;
        for (l, layer) in net.params_mut().iter_mut().enumerate() {
            for (p, param) in layer.iter_mut().enumerate() {
                let g = grads[l][p].data();
                let m = self.first[l][p].data_mut();
                match opt {
                    Optimizer::Adam { .. } => {
                        const B1: f64 = 0.9;
                        const B2: f64 = 0.999;
                        const EPS: f64 = 1e-8;
                        let v = self.second[l][p].data_mut();
                        let c1 = 1.0 - B1.powi(t);
                        let c2 = 1.0 - B2.powi(t);
                        for (((w, &g), m), v) in param.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                            *m = B1 * *m + (1.0 - B1) * g;
                            *v = B2 * *v + (1.0 - B2) * g * g;
                            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                        }
                    }
                    Optimizer::Sgd { momentum, weight_decay, .. } => {
                        for ((w, &g), m) in param.data_mut().iter_mut().zip(g).zip(m) {
                            let g = g + weight_decay * *w;
                            *m = momentum * *m + g;
                            *w -= lr * *m;
                        }
                    }
                }
            }
        }
    }
}

/// Train a copy of `net`; the input network is left untouched.
///
/// Dropout masks come from a per-step stream derived from `cfg.seed`, and
/// the sample order of epoch `e` from another, so runs are reproducible.
pub fn train(
    net: &Network,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Network, TrainMetrics)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if data.image_shape() != net.input_shape() {
        return Err(Error::Shape(format!(
            "dataset images {:?} do not match network input {:?}",
            data.image_shape(),
            net.input_shape()
        )));
    }
    let classes = net.num_classes();
    if let Some(&label) = data.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }

    let mut net = net.clone();
    let mut state = OptState::new(&net);
    let mut metrics = TrainMetrics::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut lr = cfg.optimizer.lr();
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(cfg.seed, seed::SHUFFLE, epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.images().gather(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let mode = Mode::Train { step_seed: seed::derive(cfg.seed, seed::DROPOUT, step) };
            let (loss, grads, hits) = train_step(&net, &batch, &labels, mode)?;
            loss_sum += loss * chunk.len() as f64;
            correct += hits;
            state.step(cfg.optimizer, lr, &mut net, &grads);
            step += 1;
        }
        let test_accuracy = test.map(|t| accuracy(&net, t, 1)).transpose()?;
        metrics.epochs.push(EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            test_accuracy,
        });
        lr *= cfg.lr_decay;
    }
    Ok((net, metrics))
}

fn train_step(
    net: &Network,
    batch: &Tensor,
    labels: &[usize],
    mode: Mode,
) -> Result<(f64, Gradients, usize)> {
    let (logits, trace) = net.forward_trace(batch, net.depth() - 1, mode)?;
    let hits = argmax_rows(&logits).iter().zip(labels).filter(|(p, l)| p == l).count();
    let (loss, grad) = super::network::cross_entropy(&logits, labels);
    let (_, grads) = net.backward(&trace, grad, false, true);
    Ok((loss, grads.expect("parameter gradients requested"), hits))
}

pub(crate) fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.batch())
        .map(|i| {
            let row = t.item(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Predicted class per image, evaluated in chunks of 256 across `workers`
/// threads. Results do not depend on the worker count.
pub fn predict(net: &Network, images: &Tensor, workers: usize) -> Result<Vec<usize>> {
    let logits = super::forward_parallel(net, images, workers)?;
    Ok(argmax_rows(&logits))
}

/// Top-1 accuracy on a labeled dataset.
pub fn accuracy(net: &Network, data: &Dataset, workers: usize) -> Result<f64> {
    let pred = predict(net, data.images(), workers)?;
    let hits = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}
