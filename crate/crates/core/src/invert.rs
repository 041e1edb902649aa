//! Layer-by-layer inversion of networks whose activations are bijective.
//!
//! Each dense layer `out = f(W x + b)` is undone by
//! `x_signal = W⁺ (f⁻¹(out) − b)`, the minimum-norm preimage. It lies in the
//! signal space of `W`; any true preimage differs from it only by a
//! rejected-signal (null-space) component.

use crate::error::{Error, Result};
use crate::factor::{svd, SvdFactors};
use crate::nn::{ActivationKind, DenseLayer, Layer, Network};
use crate::tensor::{Matrix, Vector};

/// Distance from an activation-range boundary treated as sitting on it.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct InversionReport {
    pub recovered_input: Vector,
    /// Recovered input of each layer, first layer first.
    pub per_layer_inputs: Vec<Vector>,
    /// `‖layer_k(recovered input_k) − target_k‖`.
    pub per_layer_residual_norm: Vec<f64>,
    pub condition_numbers: Vec<f64>,
    /// Layers where a target value on the activation boundary was nudged inward.
    pub clamped: Vec<bool>,
}

impl InversionReport {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

/// `f⁻¹(out)`, nudging values within [`BOUNDARY_TOL`] of a finite range end inward.
fn inverse_activation(kind: ActivationKind, out: &Vector) -> Result<(Vector, bool)> {
    if !kind.is_invertible() {
        return Err(Error::NotInvertible(kind.name()));
    }
    let (lo, hi) = kind.range();
    let mut clamped = false;
    let mut v = Vec::with_capacity(out.len());
    for (i, &y) in out.iter().enumerate() {
        let y = if lo.is_finite() && y <= lo && y > lo - BOUNDARY_TOL {
            clamped = true;
            lo + BOUNDARY_TOL
        } else if hi.is_finite() && y >= hi && y < hi + BOUNDARY_TOL {
            clamped = true;
            hi - BOUNDARY_TOL
        } else {
            y
        };
        v.push(kind.invert(y, i)?);
    }
    Ok((Vector::new(v), clamped))
}

/// `W⁺ (f⁻¹(out) − b)`.
pub fn invert_layer(layer: &DenseLayer, out: &Vector) -> Result<Vector> {
    let pinv = svd(&layer.weights)?.pseudoinverse();
    invert_with(layer, &pinv, out).map(|(x, _)| x)
}

fn invert_with(layer: &DenseLayer, pinv: &Matrix, out: &Vector) -> Result<(Vector, bool)> {
    if out.len() != layer.output_dim() {
        return Err(Error::Shape(format!(
            "target has length {}, layer emits {}",
            out.len(),
            layer.output_dim()
        )));
    }
    let (pre, clamped) = inverse_activation(layer.activation, out)?;
    let x = pinv.matvec(&pre.sub(&layer.bias)?)?;
    Ok((x, clamped))
}

/// Pseudoinverses of every layer, computed once and reused across targets.
#[derive(Debug, Clone)]
pub struct NetworkInverter {
    layers: Vec<DenseLayer>,
    pinvs: Vec<Matrix>,
    condition_numbers: Vec<f64>,
}

impl NetworkInverter {
    /// Fails unless every layer is dense with an invertible activation.
    pub fn new(net: &Network) -> Result<Self> {
        let mut layers = Vec::new();
        for (k, layer) in net.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) if d.activation.is_invertible() => layers.push(d.clone()),
                Layer::Dense(d) => {
                    return Err(Error::NotInvertible(d.activation.name()).at_layer(k))
                }
                other => {
                    return Err(Error::Validation(format!(
                        "{} layers cannot be inverted",
                        other.kind_name()
                    ))
                    .at_layer(k))
                }
            }
        }
        let mut pinvs = Vec::with_capacity(layers.len());
        let mut condition_numbers = Vec::with_capacity(layers.len());
        for (k, d) in layers.iter().enumerate() {
            let f: SvdFactors = svd(&d.weights).map_err(|e| e.at_layer(k))?;
            condition_numbers.push(f.condition_number().map_err(|e| e.at_layer(k))?);
            pinvs.push(f.pseudoinverse());
        }
        Ok(NetworkInverter {
            layers,
            pinvs,
            condition_numbers,
        })
    }

    pub fn condition_numbers(&self) -> &[f64] {
        &self.condition_numbers
    }

    /// Inverts from the last layer to the first.
    pub fn invert(&self, out: &Vector) -> Result<InversionReport> {
        let depth = self.layers.len();
        let mut inputs = vec![Vector::default(); depth];
        let mut residuals = vec![0.0; depth];
        let mut clamped = vec![false; depth];
        let mut target = out.clone();
        for k in (0..depth).rev() {
            let layer = &self.layers[k];
            let (x, c) = invert_with(layer, &self.pinvs[k], &target).map_err(|e| e.at_layer(k))?;
            residuals[k] = layer.forward(&x)?.sub(&target)?.norm2();
            clamped[k] = c;
            target = x.clone();
            inputs[k] = x;
        }
        Ok(InversionReport {
            recovered_input: target,
            per_layer_inputs: inputs,
            per_layer_residual_norm: residuals,
            condition_numbers: self.condition_numbers.clone(),
            clamped,
        })
    }
}

pub fn invert_network(net: &Network, out: &Vector) -> Result<InversionReport> {
    NetworkInverter::new(net)?.invert(out)
}
