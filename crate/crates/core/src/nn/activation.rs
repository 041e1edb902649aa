use crate::error::{Error, Result};
use crate::tensor::Vector;

/// SELU scale, to the standard published digits.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SELU negative-branch coefficient.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Identity,
    Selu,
    Tanh,
    Sigmoid,
    LeakyRelu(f64),
    Relu,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Selu => "selu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::LeakyRelu(_) => "leaky_relu",
            ActivationKind::Relu => "relu",
        }
    }

    pub fn is_invertible(self) -> bool {
        match self {
            ActivationKind::LeakyRelu(alpha) => alpha > 0.0,
            ActivationKind::Relu => false,
            _ => true,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
                }
            }
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            ActivationKind::LeakyRelu(alpha) => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            ActivationKind::Relu => x.max(0.0),
        }
    }

    /// `f'(pre)`, given both the pre-activation and `f(pre)`.
    #[inline]
    pub fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            ActivationKind::Identity => 1.0,
            ActivationKind::Selu => {
                if pre > 0.0 {
                    SELU_LAMBDA
                } else {
                    post + SELU_LAMBDA * SELU_ALPHA
                }
            }
            ActivationKind::Tanh => 1.0 - post * post,
            ActivationKind::Sigmoid => post * (1.0 - post),
            ActivationKind::LeakyRelu(alpha) => {
                if pre > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            ActivationKind::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Open interval `(lo, hi)` that the activation's outputs occupy.
    pub fn range(self) -> (f64, f64) {
        match self {
            ActivationKind::Selu => (-SELU_LAMBDA * SELU_ALPHA, f64::INFINITY),
            ActivationKind::Tanh => (-1.0, 1.0),
            ActivationKind::Sigmoid => (0.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `f⁻¹(y)`; `index` only labels the error.
    pub fn invert(self, y: f64, index: usize) -> Result<f64> {
        if !self.is_invertible() {
            return Err(Error::NotInvertible(self.name()));
        }
        let (lo, hi) = self.range();
        if !(y > lo && y < hi) {
            return Err(Error::Domain {
                activation: self.name(),
                index,
                value: y,
            });
        }
        Ok(match self {
            ActivationKind::Identity => y,
            ActivationKind::Selu => {
                if y > 0.0 {
                    y / SELU_LAMBDA
                } else {
                    (y / (SELU_LAMBDA * SELU_ALPHA)).ln_1p()
                }
            }
            ActivationKind::Tanh => y.atanh(),
            ActivationKind::Sigmoid => (y / (1.0 - y)).ln(),
            ActivationKind::LeakyRelu(alpha) => {
                if y > 0.0 {
                    y
                } else {
                    y / alpha
                }
            }
            ActivationKind::Relu => unreachable!("relu rejected above"),
        })
    }
}

/// Elementwise `f(x)`.
pub fn activate(kind: ActivationKind, x: &Vector) -> Vector {
    x.map(|v| kind.apply(v))
}

/// Elementwise `f⁻¹(y)`.
pub fn activate_inverse(kind: ActivationKind, y: &Vector) -> Result<Vector> {
    if !kind.is_invertible() {
        return Err(Error::NotInvertible(kind.name()));
    }
    y.iter()
        .enumerate()
        .map(|(i, &v)| kind.invert(v, i))
        .collect::<Result<Vec<_>>>()
        .map(Vector::new)
}
