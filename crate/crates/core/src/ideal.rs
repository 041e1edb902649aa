//! Ideal outputs and the input images that come closest to producing them.
//!
//! The ideal logit vector for class `j*` takes, over all training images,
//! the largest logit ever seen in component `j*` and the smallest logit ever
//! seen in every other component. Candidate images are then scored by the
//! mean squared distance between their logits and that target, and refined
//! by gradient descent on the image with the network frozen.

use crate::error::{Error, Result};
use crate::mnist::{class_mean, Dataset};
use crate::nn::{backward_from_output_grad, forward, predict_batch, Network};
use crate::tensor::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub class_index: usize,
    pub t: Vector,
    /// Componentwise maximum of the training logits.
    pub max: Vector,
    /// Componentwise minimum of the training logits.
    pub min: Vector,
}

/// Builds `t` with `t_j = max C_j` for the target class and `min C_j` elsewhere,
/// where `C_j` collects component `j` of every row of `logits`.
pub fn class_targets(
    logits: &Matrix,
    labels: &[usize],
    class_index: usize,
) -> Result<TargetVector> {
    if logits.rows() == 0 {
        return Err(Error::Input("no training logits".into()));
    }
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let c = logits.cols();
    if class_index >= c {
        return Err(Error::Input(format!(
            "class {class_index} out of range for {c} outputs"
        )));
    }
    let mut max = logits.row(0).to_vec();
    let mut min = logits.row(0).to_vec();
    for i in 1..logits.rows() {
        for (j, &z) in logits.row(i).iter().enumerate() {
            max[j] = max[j].max(z);
            min[j] = min[j].min(z);
        }
    }
    let t = (0..c)
        .map(|j| if j == class_index { max[j] } else { min[j] })
        .collect();
    Ok(TargetVector {
        class_index,
        t: Vector::new(t),
        max: Vector::new(max),
        min: Vector::new(min),
    })
}

/// Logits of every image in `data`, one row per image.
pub fn dataset_logits(net: &Network, data: &Dataset) -> Result<Matrix> {
    if data.is_empty() {
        return Err(Error::Input("dataset is empty".into()));
    }
    let mut out = Matrix::zeros(data.len(), net.class_count);
    let chunk = 512;
    let mut start = 0;
    while start < data.len() {
        let end = (start + chunk).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let z = predict_batch(net, &data.images().select_rows(&idx))?;
        for i in 0..z.rows() {
            out.row_mut(start + i).copy_from_slice(z.row(i));
        }
        start = end;
    }
    Ok(out)
}

/// Mean squared distance between a logit vector and the target.
pub fn target_loss(logits: &[f64], t: &TargetVector) -> f64 {
    let c = t.t.len() as f64;
    logits
        .iter()
        .zip(t.t.iter())
        .map(|(z, t)| (z - t) * (z - t))
        .sum::<f64>()
        / c
}

/// [`target_loss`] of every image in `data`.
pub fn target_losses(net: &Network, data: &Dataset, t: &TargetVector) -> Result<Vec<f64>> {
    let z = dataset_logits(net, data)?;
    Ok((0..z.rows()).map(|i| target_loss(z.row(i), t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    AvgImg,
    MinImg,
    AvgMinImg,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::AvgImg => "avg_img",
            InitKind::MinImg => "min_img",
            InitKind::AvgMinImg => "avg_min_img",
        }
    }
}

/// Mean training image of the class.
pub fn init_avg_img(data: &Dataset, class_index: usize) -> Result<Vector> {
    class_mean(data, class_index)
}

/// Indices ordered by loss, ties by index.
fn ranked(losses: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..losses.len()).collect();
    idx.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    idx
}

/// Index of the lowest-loss entry, lowest index on ties.
pub fn min_loss_index(losses: &[f64]) -> Option<usize> {
    ranked(losses).first().copied()
}

/// Training image whose logits are closest to the target.
pub fn init_min_img(net: &Network, data: &Dataset, t: &TargetVector) -> Result<Vector> {
    let losses = target_losses(net, data, t)?;
    let i = min_loss_index(&losses).expect("nonempty dataset");
    Ok(data.image(i))
}

/// Number of images kept by a percentile cut: `⌈percentile · n⌉`, at least 1.
pub fn percentile_count(n: usize, percentile: f64) -> usize {
    ((percentile * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// Mean of the images whose loss ranks in the lowest `⌈percentile · N⌉`.
pub fn init_avg_min_img(
    net: &Network,
    data: &Dataset,
    t: &TargetVector,
    percentile: f64,
) -> Result<Vector> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::Input(format!(
            "percentile {percentile} must lie in (0, 1]"
        )));
    }
    let losses = target_losses(net, data, t)?;
    Ok(mean_of_lowest(data, &losses, percentile))
}

pub(crate) fn mean_of_lowest(data: &Dataset, losses: &[f64], percentile: f64) -> Vector {
    let keep = percentile_count(losses.len(), percentile);
    let mut sum = vec![0.0; data.images().cols()];
    for &i in &ranked(losses)[..keep] {
        for (s, p) in sum.iter_mut().zip(data.images().row(i)) {
            *s += p;
        }
    }
    Vector::new(sum.into_iter().map(|s| s / keep as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Keep pixels inside `[0, 1]` after every step.
    pub clamp_pixels: bool,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            steps: 1000,
            learning_rate: 0.01,
            clamp_pixels: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdealImageResult {
    /// Lowest-loss iterate, not necessarily the last.
    pub image: Vector,
    pub init_kind: InitKind,
    /// Loss of iterate 0 through iterate `steps`.
    pub loss_curve: Vec<f64>,
    pub final_loss: f64,
    pub steps: usize,
}

/// Gradient descent on the input image towards the target logits.
///
/// The network is borrowed immutably, so its weights cannot change.
pub fn learn_ideal_image(
    net: &Network,
    t: &TargetVector,
    init_kind: InitKind,
    init: &Vector,
    cfg: &DescentConfig,
) -> Result<IdealImageResult> {
    if init.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "initial image has {} pixels, network expects {}",
            init.len(),
            net.input_dim()
        )));
    }
    if t.t.len() != net.class_count {
        return Err(Error::Shape(format!(
            "target has {} components, network emits {}",
            t.t.len(),
            net.class_count
        )));
    }
    if !(cfg.learning_rate >= 0.0) {
        return Err(Error::Input(format!(
            "learning rate {} must be >= 0",
            cfg.learning_rate
        )));
    }
    let c = net.class_count as f64;
    let mut image = init.clone();
    let mut curve = Vec::with_capacity(cfg.steps + 1);
    let mut best = (f64::INFINITY, image.clone());

    for step in 0..=cfg.steps {
        let (z, cache) = forward(net, &image)?;
        let loss = target_loss(z.as_slice(), t);
        if !loss.is_finite() {
            return Err(Error::StepDivergence { step, loss });
        }
        curve.push(loss);
        if loss < best.0 {
            best = (loss, image.clone());
        }
        if step == cfg.steps {
            break;
        }
        let dz: Vec<f64> = z
            .iter()
            .zip(t.t.iter())
            .map(|(z, t)| 2.0 * (z - t) / c)
            .collect();
        let dz = Matrix::new(1, dz.len(), dz)?;
        let grads = backward_from_output_grad(net, &cache, &dz)?;
        for (p, g) in image.as_mut_slice().iter_mut().zip(grads.input.row(0)) {
            *p -= cfg.learning_rate * g;
            if cfg.clamp_pixels {
                *p = p.clamp(0.0, 1.0);
            }
        }
    }
    Ok(IdealImageResult {
        image: best.1,
        init_kind,
        loss_curve: curve,
        final_loss: best.0,
        steps: cfg.steps,
    })
}
