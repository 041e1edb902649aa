//! A small from-scratch network core: dense and 3×3 convolution layers,
//! max-pooling, softmax cross-entropy, backpropagation and SGD with momentum.
//!
//! Activations flow between layers as row-major batches (`batch × features`),
//! with convolutional feature maps flattened channel-major (`c, y, x`).

mod activation;
mod layers;
mod train;

pub use activation::{activate, activate_inverse, ActivationKind, SELU_ALPHA, SELU_LAMBDA};
pub use layers::{
    backward, backward_from_output_grad, forward, forward_batch, predict_batch, ForwardCache,
    Gradients, LayerCache, LayerGrad,
};
pub use train::{
    evaluate, softmax, softmax_cross_entropy, train, train_with, EpochMetrics, TrainConfig,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

/// Channel-major feature-map shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape3 {
            channels,
            height,
            width,
        }
    }

    /// A flat feature vector of length `n`.
    pub const fn flat(n: usize) -> Self {
        Shape3::new(n, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// MNIST image geometry.
pub const MNIST_SHAPE: Shape3 = Shape3::new(1, 28, 28);

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: ActivationKind,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vector, activation: ActivationKind) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} weight rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `f(Wx + b)` for a single input.
    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        let pre = self.weights.matvec(x)?.add(&self.bias)?;
        Ok(activate(self.activation, &pre))
    }
}

/// Side length of every convolution kernel.
pub const KERNEL_SIZE: usize = 3;
pub const KERNEL_AREA: usize = KERNEL_SIZE * KERNEL_SIZE;

/// Valid (unpadded) 3×3 convolution.
///
/// `kernels` is `k_out × (k_in·9)`: row `o` holds the kernels of output
/// channel `o` for input channels `0..k_in`, each flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernels: Matrix,
    pub bias: Vector,
    pub activation: ActivationKind,
    pub stride: usize,
    pub input_shape: Shape3,
}

impl ConvLayer {
    pub fn new(
        kernels: Matrix,
        bias: Vector,
        activation: ActivationKind,
        stride: usize,
        input_shape: Shape3,
    ) -> Result<Self> {
        if kernels.cols() != input_shape.channels * KERNEL_AREA {
            return Err(Error::UnsupportedShape(format!(
                "kernel matrix has {} columns; {} input channels of 3x3 kernels need {}",
                kernels.cols(),
                input_shape.channels,
                input_shape.channels * KERNEL_AREA
            )));
        }
        if bias.len() != kernels.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                kernels.rows()
            )));
        }
        if stride == 0 {
            return Err(Error::Shape("stride must be at least 1".into()));
        }
        if input_shape.height < KERNEL_SIZE || input_shape.width < KERNEL_SIZE {
            return Err(Error::Shape(format!(
                "{}x{} input is smaller than a 3x3 kernel",
                input_shape.height, input_shape.width
            )));
        }
        Ok(ConvLayer {
            kernels,
            bias,
            activation,
            stride,
            input_shape,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.input_shape.channels
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.rows()
    }

    pub fn output_shape(&self) -> Shape3 {
        Shape3::new(
            self.out_channels(),
            (self.input_shape.height - KERNEL_SIZE) / self.stride + 1,
            (self.input_shape.width - KERNEL_SIZE) / self.stride + 1,
        )
    }
}

/// Non-overlapping `size × size` max-pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool {
    pub size: usize,
    pub input_shape: Shape3,
}

impl MaxPool {
    pub fn output_shape(&self) -> Shape3 {
        Shape3::new(
            self.input_shape.channels,
            self.input_shape.height / self.size,
            self.input_shape.width / self.size,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    MaxPool(MaxPool),
    /// Marks the switch from feature maps to flat vectors; data is unchanged.
    Flatten,
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten => "flatten",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv(_))
    }

    pub fn activation(&self) -> Option<ActivationKind> {
        match self {
            Layer::Dense(d) => Some(d.activation),
            Layer::Conv(c) => Some(c.activation),
            _ => None,
        }
    }

    fn output_shape(&self, input: Shape3) -> Result<Shape3> {
        match self {
            Layer::Dense(d) => {
                if input.len() != d.input_dim() {
                    return Err(Error::Shape(format!(
                        "dense layer expects {} inputs, previous layer gives {}",
                        d.input_dim(),
                        input.len()
                    )));
                }
                Ok(Shape3::flat(d.output_dim()))
            }
            Layer::Conv(c) => {
                if input != c.input_shape {
                    return Err(Error::Shape(format!(
                        "conv layer expects {:?}, previous layer gives {input:?}",
                        c.input_shape
                    )));
                }
                Ok(c.output_shape())
            }
            Layer::MaxPool(p) => {
                if input != p.input_shape || p.size == 0 || p.output_shape().is_empty() {
                    return Err(Error::Shape(format!(
                        "max-pool over {:?} with size {} cannot follow {input:?}",
                        p.input_shape, p.size
                    )));
                }
                Ok(p.output_shape())
            }
            Layer::Flatten => Ok(Shape3::flat(input.len())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub input_shape: Shape3,
    pub class_count: usize,
}

impl Network {
    /// Validates that adjacent layers compose and the last one emits `class_count` logits.
    pub fn new(layers: Vec<Layer>, input_shape: Shape3, class_count: usize) -> Result<Self> {
        if !layers.iter().any(Layer::has_params) {
            return Err(Error::Validation(
                "network has no parameterized layers".into(),
            ));
        }
        let mut shape = input_shape;
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(shape).map_err(|e| e.at_layer(i))?;
        }
        if shape.len() != class_count {
            return Err(Error::Shape(format!(
                "network emits {} values but has {class_count} classes",
                shape.len()
            )));
        }
        Ok(Network {
            layers,
            input_shape,
            class_count,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.len()
    }

    /// Shape entering each layer, followed by the final output shape.
    pub fn shapes(&self) -> Vec<Shape3> {
        let mut out = vec![self.input_shape];
        let mut s = self.input_shape;
        for l in &self.layers {
            s = l.output_shape(s).expect("validated at construction");
            out.push(s);
        }
        out
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    /// Fully connected stack; hidden layers use `hidden`, the output layer is linear.
    pub fn fully_connected(
        input_dim: usize,
        widths: &[usize],
        hidden: ActivationKind,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for (i, &w) in widths.iter().enumerate() {
            let act = if i + 1 == widths.len() {
                ActivationKind::Identity
            } else {
                hidden
            };
            let weights = init_weights(&mut rng, w, fan_in, fan_in);
            layers.push(Layer::Dense(DenseLayer::new(
                weights,
                Vector::zeros(w),
                act,
            )?));
            fan_in = w;
        }
        let classes = *widths
            .last()
            .ok_or_else(|| Error::Validation("no layer widths given".into()))?;
        Network::new(layers, Shape3::flat(input_dim), classes)
    }

    /// Single linear layer 784 → 10.
    pub fn fc1(seed: u64) -> Result<Self> {
        Self::fully_connected(MNIST_SHAPE.len(), &[10], ActivationKind::Identity, seed)
    }

    /// 784 → 256 → 256 → 128 → 32 → 10 with SELU hidden layers.
    pub fn fc5(seed: u64) -> Result<Self> {
        Self::fully_connected(
            MNIST_SHAPE.len(),
            &[256, 256, 128, 32, 10],
            ActivationKind::Selu,
            seed,
        )
    }

    /// conv(16 × 3×3, relu) → 2×2 max-pool → flatten → dense(10).
    pub fn cnn_small(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k_out = 16;
        let fan_in = MNIST_SHAPE.channels * KERNEL_AREA;
        let conv = ConvLayer::new(
            init_weights(&mut rng, k_out, fan_in, fan_in),
            Vector::zeros(k_out),
            ActivationKind::Relu,
            1,
            MNIST_SHAPE,
        )?;
        let pool = MaxPool {
            size: 2,
            input_shape: conv.output_shape(),
        };
        let flat = pool.output_shape().len();
        let dense = DenseLayer::new(
            init_weights(&mut rng, 10, flat, flat),
            Vector::zeros(10),
            ActivationKind::Identity,
        )?;
        Network::new(
            vec![
                Layer::Conv(conv),
                Layer::MaxPool(pool),
                Layer::Flatten,
                Layer::Dense(dense),
            ],
            MNIST_SHAPE,
            10,
        )
    }
}

/// Zero-mean normal entries with standard deviation `1/√fan_in`.
fn init_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// `[W | b]`, so that `W' · [x; 1] = W x + b`.
pub fn absorb_bias(layer: &DenseLayer) -> Matrix {
    let (m, n) = layer.weights.shape();
    Matrix::from_fn(m, n + 1, |i, j| {
        if j < n {
            layer.weights[(i, j)]
        } else {
            layer.bias[i]
        }
    })
}

/// `[x; 1]`.
pub fn augment(x: &Vector) -> Vector {
    let mut v = x.as_slice().to_vec();
    v.push(1.0);
    Vector::new(v)
}
