//! Signal-space analysis of small neural networks.
//!
//! Every dense (and flattened convolutional) weight matrix `W` is studied
//! through its four fundamental spaces: the signal space (row space), the
//! rejected-signal space (null space), the signal-output space (column space)
//! and the rejected-output space (left null space). The crate trains small
//! MNIST classifiers from scratch, decomposes inputs into signal and rejected
//! components, inverts networks with invertible activations layer by layer,
//! and learns ideal input images for each class.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convspace;
pub mod error;
pub mod factor;
pub mod ideal;
pub mod invert;
pub mod mnist;
pub mod nn;
pub mod store;
pub mod subspace;
pub mod tensor;

pub use convspace::{kernel_signal_space, kernels_to_matrix, KernelMatrix, KernelSignalSpace};
pub use error::{Error, Result};
pub use factor::{condition_number, numerical_rank, pseudoinverse, svd, svd_with_tol, SvdFactors};
pub use ideal::{
    class_targets, learn_ideal_image, DescentConfig, IdealImageResult, InitKind, TargetVector,
};
pub use invert::{invert_layer, invert_network, InversionReport, NetworkInverter};
pub use mnist::{Dataset, Split};
pub use nn::{ActivationKind, ConvLayer, DenseLayer, Layer, Network, Shape3, TrainConfig};
pub use store::{load_checkpoint, save_checkpoint, Table};
pub use subspace::{bases, decompose, project_on_weight, ProjectionResult, SubspaceBases};
pub use tensor::{matmul, matvec, norm2, transpose, Matrix, Vector};
