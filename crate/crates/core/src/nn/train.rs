use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{backward, forward_batch, predict_batch, Gradients};
use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::mnist::Dataset;
use crate::tensor::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            epochs: 20,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Input(format!(
                "learning rate {} must be a finite value >= 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Input(format!(
                "momentum {} must lie in [0, 1)",
                self.momentum
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Input(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(z)[label]`, via log-sum-exp.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Index of the largest logit; the lowest index wins ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of samples whose top logit is the label.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    for_each_chunk(net, data.images(), 512, |start, logits| {
        for i in 0..logits.rows() {
            if argmax(logits.row(i)) == data.labels()[start + i] {
                correct += 1;
            }
        }
    })?;
    Ok(correct as f64 / data.len() as f64)
}

/// Runs the network over `images` in fixed-size chunks.
pub(crate) fn for_each_chunk(
    net: &Network,
    images: &Matrix,
    chunk: usize,
    mut f: impl FnMut(usize, &Matrix),
) -> Result<()> {
    let mut start = 0;
    while start < images.rows() {
        let end = (start + chunk).min(images.rows());
        let idx: Vec<usize> = (start..end).collect();
        let logits = predict_batch(net, &images.select_rows(&idx))?;
        f(start, &logits);
        start = end;
    }
    Ok(())
}

pub fn train(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<EpochMetrics>)> {
    train_with(net, data, cfg, |_, _| {})
}

/// Like [`train`], calling `observer` after every epoch.
pub fn train_with(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochMetrics, &Network),
) -> Result<(Network, Vec<EpochMetrics>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if data.images().cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "images have {} pixels, network expects {}",
            data.images().cols(),
            net.input_dim()
        )));
    }
    if let Some(&bad) = data.labels().iter().find(|&&l| l >= net.class_count) {
        return Err(Error::Input(format!("label {bad} out of range")));
    }

    let mut net = net.clone();
    let mut velocity: Vec<Option<(Matrix, Vector)>> = net
        .layers
        .iter()
        .map(|l| {
            params(l).map(|(w, b)| (Matrix::zeros(w.rows(), w.cols()), Vector::zeros(b.len())))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Separate stream from the one used for weight initialization.
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.images().select_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
            let (logits, cache) = forward_batch(&net, &x)?;
            for (b, &label) in labels.iter().enumerate() {
                let row = logits.row(b);
                loss_sum += softmax_cross_entropy(row, label);
                if argmax(row) == label {
                    correct += 1;
                }
            }
            if !loss_sum.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: loss_sum,
                });
            }
            let grads = backward(&net, &cache, &labels)?;
            apply_momentum_step(&mut net, &mut velocity, &grads, cfg);
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        observer(&m, &net);
        metrics.push(m);
    }
    Ok((net, metrics))
}

fn params(layer: &Layer) -> Option<(&Matrix, &Vector)> {
    match layer {
        Layer::Dense(d) => Some((&d.weights, &d.bias)),
        Layer::Conv(c) => Some((&c.kernels, &c.bias)),
        _ => None,
    }
}

fn params_mut(layer: &mut Layer) -> Option<(&mut Matrix, &mut Vector)> {
    match layer {
        Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
        Layer::Conv(c) => Some((&mut c.kernels, &mut c.bias)),
        _ => None,
    }
}

/// Classical momentum: `v ← μv − η g`, `θ ← θ + v`.
fn apply_momentum_step(
    net: &mut Network,
    velocity: &mut [Option<(Matrix, Vector)>],
    grads: &Gradients,
    cfg: &TrainConfig,
) {
    let (lr, mu) = (cfg.learning_rate, cfg.momentum);
    for ((layer, vel), grad) in net.layers.iter_mut().zip(velocity).zip(&grads.layers) {
        let (Some((w, b)), Some((vw, vb)), Some(g)) = (params_mut(layer), vel.as_mut(), grad)
        else {
            continue;
        };
        step(
            w.as_mut_slice(),
            vw.as_mut_slice(),
            g.weights.as_slice(),
            lr,
            mu,
        );
        step(
            b.as_mut_slice(),
            vb.as_mut_slice(),
            g.bias.as_slice(),
            lr,
            mu,
        );
    }
}

fn step(theta: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, mu: f64) {
    for ((t, vi), &gi) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
        *vi = mu * *vi - lr * gi;
        *t += *vi;
    }
}
