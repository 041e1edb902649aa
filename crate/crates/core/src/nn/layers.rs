use super::{ConvLayer, DenseLayer, Layer, MaxPool, Network, KERNEL_AREA, KERNEL_SIZE};
use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix, Vector};

/// What one layer saw during a forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub pre: Matrix,
    pub output: Matrix,
    /// Flat input index chosen by each pooled output, per sample.
    argmax: Vec<usize>,
}

/// Per-layer pre-activations and outputs of a batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    pub layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Batch entering layer `k`.
    pub fn layer_input(&self, k: usize) -> &Matrix {
        if k == 0 {
            &self.input
        } else {
            &self.layers[k - 1].output
        }
    }

    pub fn logits(&self) -> &Matrix {
        &self.layers.last().expect("network has layers").output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vector,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    /// `None` for layers without parameters.
    pub layers: Vec<Option<LayerGrad>>,
    /// Gradient with respect to each input sample.
    pub input: Matrix,
}

/// Forward pass of one input, returning the pre-softmax logits and the cache.
pub fn forward(net: &Network, x: &Vector) -> Result<(Vector, ForwardCache)> {
    let batch = Matrix::new(1, x.len().max(1), x.as_slice().to_vec()).map_err(|_| {
        Error::Shape(format!(
            "input of length {} for a network expecting {}",
            x.len(),
            net.input_dim()
        ))
    })?;
    let (logits, cache) = forward_batch(net, &batch)?;
    Ok((logits.row_vector(0), cache))
}

pub fn forward_batch(net: &Network, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    check_input(net, x)?;
    let mut layers: Vec<LayerCache> = Vec::with_capacity(net.layers.len());
    for (k, layer) in net.layers.iter().enumerate() {
        let input = if k == 0 { x } else { &layers[k - 1].output };
        let cache = layer_forward(layer, input).map_err(|e| e.at_layer(k))?;
        layers.push(cache);
    }
    let cache = ForwardCache {
        input: x.clone(),
        layers,
    };
    Ok((cache.logits().clone(), cache))
}

/// Logits for a batch without retaining intermediate values.
pub fn predict_batch(net: &Network, x: &Matrix) -> Result<Matrix> {
    check_input(net, x)?;
    let mut current = x.clone();
    for (k, layer) in net.layers.iter().enumerate() {
        current = layer_forward(layer, &current)
            .map_err(|e| e.at_layer(k))?
            .output;
    }
    Ok(current)
}

fn check_input(net: &Network, x: &Matrix) -> Result<()> {
    if x.cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "input of length {} for a network expecting {}",
            x.cols(),
            net.input_dim()
        )));
    }
    Ok(())
}

fn layer_forward(layer: &Layer, x: &Matrix) -> Result<LayerCache> {
    match layer {
        Layer::Dense(d) => {
            let pre = dense_pre(d, x)?;
            let output = map(&pre, |v| d.activation.apply(v));
            Ok(LayerCache {
                pre,
                output,
                argmax: Vec::new(),
            })
        }
        Layer::Conv(c) => {
            let pre = conv_pre(c, x)?;
            let output = map(&pre, |v| c.activation.apply(v));
            Ok(LayerCache {
                pre,
                output,
                argmax: Vec::new(),
            })
        }
        Layer::MaxPool(p) => {
            let (output, argmax) = pool_forward(p, x)?;
            Ok(LayerCache {
                pre: output.clone(),
                output,
                argmax,
            })
        }
        Layer::Flatten => Ok(LayerCache {
            pre: x.clone(),
            output: x.clone(),
            argmax: Vec::new(),
        }),
    }
}

fn map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let data = m.as_slice().iter().map(|&v| f(v)).collect();
    Matrix::new(m.rows(), m.cols(), data).expect("same shape")
}

fn dense_pre(d: &DenseLayer, x: &Matrix) -> Result<Matrix> {
    let mut pre = x.matmul_nt(&d.weights)?;
    for i in 0..pre.rows() {
        for (p, b) in pre.row_mut(i).iter_mut().zip(d.bias.iter()) {
            *p += b;
        }
    }
    Ok(pre)
}

/// Patch matrix of one sample: `k_in·9` rows, one column per output pixel.
fn im2col(c: &ConvLayer, sample: &[f64]) -> Matrix {
    let s = c.input_shape;
    let out = c.output_shape();
    let l = out.height * out.width;
    let mut cols = Matrix::zeros(s.channels * KERNEL_AREA, l);
    for ci in 0..s.channels {
        let plane = &sample[ci * s.height * s.width..(ci + 1) * s.height * s.width];
        for ky in 0..KERNEL_SIZE {
            for kx in 0..KERNEL_SIZE {
                let dst = cols.row_mut(ci * KERNEL_AREA + ky * KERNEL_SIZE + kx);
                for oy in 0..out.height {
                    let src = (oy * c.stride + ky) * s.width + kx;
                    let row = &mut dst[oy * out.width..(oy + 1) * out.width];
                    if c.stride == 1 {
                        row.copy_from_slice(&plane[src..src + out.width]);
                    } else {
                        for (ox, d) in row.iter_mut().enumerate() {
                            *d = plane[src + ox * c.stride];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adds patch-matrix gradients back onto the sample they were cut from.
fn col2im(c: &ConvLayer, cols: &Matrix, sample: &mut [f64]) {
    let s = c.input_shape;
    let out = c.output_shape();
    for ci in 0..s.channels {
        let plane = &mut sample[ci * s.height * s.width..(ci + 1) * s.height * s.width];
        for ky in 0..KERNEL_SIZE {
            for kx in 0..KERNEL_SIZE {
                let src = cols.row(ci * KERNEL_AREA + ky * KERNEL_SIZE + kx);
                for oy in 0..out.height {
                    let base = (oy * c.stride + ky) * s.width + kx;
                    for (ox, g) in src[oy * out.width..(oy + 1) * out.width].iter().enumerate() {
                        plane[base + ox * c.stride] += g;
                    }
                }
            }
        }
    }
}

fn conv_pre(c: &ConvLayer, x: &Matrix) -> Result<Matrix> {
    let out_len = c.output_shape().len();
    let mut pre = Matrix::zeros(x.rows(), out_len);
    for b in 0..x.rows() {
        // k_out × L, which is exactly the channel-major flattening.
        let mut maps = c.kernels.matmul(&im2col(c, x.row(b)))?;
        for o in 0..c.out_channels() {
            let bias = c.bias[o];
            maps.row_mut(o).iter_mut().for_each(|v| *v += bias);
        }
        pre.row_mut(b).copy_from_slice(maps.as_slice());
    }
    Ok(pre)
}

fn pool_forward(p: &MaxPool, x: &Matrix) -> Result<(Matrix, Vec<usize>)> {
    let s = p.input_shape;
    let o = p.output_shape();
    let mut out = Matrix::zeros(x.rows(), o.len());
    let mut argmax = Vec::with_capacity(x.rows() * o.len());
    for b in 0..x.rows() {
        let sample = x.row(b);
        let dst = out.row_mut(b);
        for ch in 0..s.channels {
            for oy in 0..o.height {
                for ox in 0..o.width {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dy in 0..p.size {
                        for dx in 0..p.size {
                            let idx = ch * s.height * s.width
                                + (oy * p.size + dy) * s.width
                                + ox * p.size
                                + dx;
                            // strict '>' keeps the first maximum on ties
                            if sample[idx] > best {
                                best = sample[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    dst[ch * o.height * o.width + oy * o.width + ox] = best;
                    argmax.push(best_idx);
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Gradients of mean softmax cross-entropy over the cached batch.
pub fn backward(net: &Network, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
    let logits = cache.logits();
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.rows()
        )));
    }
    let scale = 1.0 / labels.len() as f64;
    let mut d = Matrix::zeros(logits.rows(), logits.cols());
    for (b, &label) in labels.iter().enumerate() {
        if label >= net.class_count {
            return Err(Error::Input(format!("label {label} out of range")));
        }
        let p = super::softmax(logits.row(b));
        let row = d.row_mut(b);
        for (j, pj) in p.into_iter().enumerate() {
            row[j] = scale * (pj - if j == label { 1.0 } else { 0.0 });
        }
    }
    backward_from_output_grad(net, cache, &d)
}

/// Backpropagates an arbitrary gradient with respect to the logits.
pub fn backward_from_output_grad(
    net: &Network,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Result<Gradients> {
    if dlogits.shape() != cache.logits().shape() {
        return Err(Error::Shape(format!(
            "output gradient {:?} vs logits {:?}",
            dlogits.shape(),
            cache.logits().shape()
        )));
    }
    let mut grads: Vec<Option<LayerGrad>> = vec![None; net.layers.len()];
    let mut grad = dlogits.clone();
    for (k, layer) in net.layers.iter().enumerate().rev() {
        let lc = &cache.layers[k];
        let input = cache.layer_input(k);
        grad = match layer {
            Layer::Dense(d) => {
                let dpre = through_activation(&grad, lc, d.activation);
                let weights = dpre.matmul_tn(input)?;
                let bias = column_sums(&dpre);
                grads[k] = Some(LayerGrad { weights, bias });
                dpre.matmul(&d.weights)?
            }
            Layer::Conv(c) => {
                let dpre = through_activation(&grad, lc, c.activation);
                let (g, dx) = conv_backward(c, input, &dpre)?;
                grads[k] = Some(g);
                dx
            }
            Layer::MaxPool(_) => {
                let mut dx = Matrix::zeros(input.rows(), input.cols());
                let per = grad.cols();
                for b in 0..grad.rows() {
                    let src = grad.row(b);
                    let dst = dx.row_mut(b);
                    for (j, &g) in src.iter().enumerate() {
                        dst[lc.argmax[b * per + j]] += g;
                    }
                }
                dx
            }
            Layer::Flatten => grad,
        };
    }
    Ok(Gradients {
        layers: grads,
        input: grad,
    })
}

fn through_activation(grad: &Matrix, lc: &LayerCache, act: super::ActivationKind) -> Matrix {
    let data = grad
        .as_slice()
        .iter()
        .zip(lc.pre.as_slice().iter().zip(lc.output.as_slice()))
        .map(|(&g, (&pre, &post))| g * act.derivative(pre, post))
        .collect();
    Matrix::new(grad.rows(), grad.cols(), data).expect("same shape")
}

fn column_sums(m: &Matrix) -> Vector {
    let mut s = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (a, v) in s.iter_mut().zip(m.row(i)) {
            *a += v;
        }
    }
    Vector::new(s)
}

fn conv_backward(c: &ConvLayer, x: &Matrix, dpre: &Matrix) -> Result<(LayerGrad, Matrix)> {
    let k_out = c.out_channels();
    let l = c.output_shape().height * c.output_shape().width;
    let mut dk = Matrix::zeros(k_out, c.kernels.cols());
    let mut db = vec![0.0; k_out];
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    for b in 0..x.rows() {
        let d = Matrix::new(k_out, l, dpre.row(b).to_vec())?;
        let cols = im2col(c, x.row(b));
        for (o, bias_grad) in db.iter_mut().enumerate() {
            let d_row = d.row(o);
            for (j, g) in dk.row_mut(o).iter_mut().enumerate() {
                *g += dot(d_row, cols.row(j));
            }
            *bias_grad += d_row.iter().sum::<f64>();
        }
        let dcols = c.kernels.matmul_tn(&d)?;
        col2im(c, &dcols, dx.row_mut(b));
    }
    Ok((
        LayerGrad {
            weights: dk,
            bias: Vector::new(db),
        },
        dx,
    ))
}
