//! Independent oracles shared by the integration tests and the acceptance run.
//!
//! Nothing here calls into the crate's factorization code: the eigen-solver
//! and products below work on plain nested `Vec`s.

#![allow(dead_code)]

use llens_core::tensor::Matrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Product of random `m × r` and `r × n` factors, so rank is `r` almost surely.
pub fn random_low_rank(rng: &mut ChaCha8Rng, m: usize, n: usize, r: usize) -> Matrix {
    let a = random_matrix(rng, m, r);
    let b = random_matrix(rng, r, n);
    Matrix::from_fn(m, n, |i, j| (0..r).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn to_rows(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

/// Textbook triple-loop product.
pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

pub fn naive_transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.first().map_or(0, Vec::len);
    (0..n).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted in descending order.
#[allow(clippy::needless_range_loop)] // textbook index form of the rotations
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Eigenvalues of the smaller Gram matrix (`AᵀA` or `AAᵀ`), descending.
pub fn gram_eigenvalues(a: &Matrix) -> Vec<f64> {
    let rows = to_rows(a);
    let t = naive_transpose(&rows);
    let gram = if a.rows() >= a.cols() {
        naive_matmul(&t, &rows)
    } else {
        naive_matmul(&rows, &t)
    };
    symmetric_eigenvalues(&gram)
}

/// `max |QᵀQ − I|` over the columns of `q`.
pub fn orthogonality_defect(q: &Matrix) -> f64 {
    let rows = to_rows(q);
    let g = naive_matmul(&naive_transpose(&rows), &rows);
    let mut worst: f64 = 0.0;
    for (i, r) in g.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}

pub fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn frobenius_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Random shape used by the property suites: sizes in `1..=max`.
pub fn random_shape(rng: &mut ChaCha8Rng, max: usize) -> (usize, usize) {
    (rng.random_range(1..=max), rng.random_range(1..=max))
}

use llens_core::nn::{
    backward, forward_batch, softmax_cross_entropy, ActivationKind, ConvLayer, DenseLayer, Layer,
    MaxPool, Network, Shape3,
};

fn smooth_activation(rng: &mut ChaCha8Rng) -> ActivationKind {
    match rng.random_range(0..4) {
        0 => ActivationKind::Tanh,
        1 => ActivationKind::Sigmoid,
        2 => ActivationKind::Selu,
        _ => ActivationKind::Identity,
    }
}

fn random_dense(rng: &mut ChaCha8Rng, out: usize, inp: usize, act: ActivationKind) -> Layer {
    let w = Matrix::from_fn(out, inp, |_, _| rng.random_range(-1.0..1.0));
    let b = Matrix::from_fn(1, out, |_, _| rng.random_range(-0.5..0.5)).row_vector(0);
    Layer::Dense(DenseLayer::new(w, b, act).unwrap())
}

/// Small random network of one to three parameterized layers; every fourth
/// one starts with a convolution (and sometimes a max-pool).
pub fn random_small_network(rng: &mut ChaCha8Rng, k: usize) -> Network {
    let classes = rng.random_range(2..5);
    if k % 4 == 3 {
        let input = Shape3::new(
            rng.random_range(1..3),
            rng.random_range(4..7),
            rng.random_range(4..7),
        );
        let k_out = rng.random_range(1..4);
        let kernels = Matrix::from_fn(k_out, input.channels * 9, |_, _| {
            rng.random_range(-1.0..1.0)
        });
        let bias = Matrix::from_fn(1, k_out, |_, _| rng.random_range(-0.5..0.5)).row_vector(0);
        let conv = ConvLayer::new(kernels, bias, ActivationKind::Tanh, 1, input).unwrap();
        let mut shape = conv.output_shape();
        let mut layers = vec![Layer::Conv(conv)];
        if rng.random_bool(0.5) {
            let pool = MaxPool {
                size: 2,
                input_shape: shape,
            };
            shape = pool.output_shape();
            layers.push(Layer::MaxPool(pool));
        }
        layers.push(Layer::Flatten);
        layers.push(random_dense(
            rng,
            classes,
            shape.len(),
            ActivationKind::Identity,
        ));
        return Network::new(layers, input, classes).unwrap();
    }
    let depth = rng.random_range(1..=3);
    let input = rng.random_range(2..7);
    let mut layers = Vec::new();
    let mut fan_in = input;
    for d in 0..depth {
        let last = d + 1 == depth;
        let out = if last {
            classes
        } else {
            rng.random_range(2..7)
        };
        let act = if last {
            ActivationKind::Identity
        } else {
            smooth_activation(rng)
        };
        layers.push(random_dense(rng, out, fan_in, act));
        fan_in = out;
    }
    Network::new(layers, Shape3::flat(input), classes).unwrap()
}

pub fn mean_loss(net: &Network, x: &Matrix, labels: &[usize]) -> f64 {
    let (z, _) = forward_batch(net, x).unwrap();
    (0..z.rows())
        .map(|i| softmax_cross_entropy(z.row(i), labels[i]))
        .sum::<f64>()
        / labels.len() as f64
}

fn params_mut(layer: &mut Layer) -> Option<(&mut [f64], &mut [f64])> {
    match layer {
        Layer::Dense(d) => Some((d.weights.as_mut_slice(), d.bias.as_mut_slice())),
        Layer::Conv(c) => Some((c.kernels.as_mut_slice(), c.bias.as_mut_slice())),
        _ => None,
    }
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Largest relative gap between backprop and central differences (step `h`)
/// over every parameter block and the input, on a random batch.
pub fn gradient_check(net: &Network, rng: &mut ChaCha8Rng, batch: usize, h: f64) -> f64 {
    let x = Matrix::from_fn(batch, net.input_dim(), |_, _| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..batch)
        .map(|_| rng.random_range(0..net.class_count))
        .collect();
    let (_, cache) = forward_batch(net, &x).unwrap();
    let grads = backward(net, &cache, &labels).unwrap();

    let mut worst: f64 = 0.0;
    for k in 0..net.layers.len() {
        let Some(g) = &grads.layers[k] else { continue };
        for block in 0..2 {
            let analytic = if block == 0 {
                g.weights.as_slice().to_vec()
            } else {
                g.bias.as_slice().to_vec()
            };
            let mut numeric = vec![0.0; analytic.len()];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let (pw, pb) = params_mut(&mut plus.layers[k]).unwrap();
                if block == 0 {
                    pw[i] += h
                } else {
                    pb[i] += h
                }
                let (mw, mb) = params_mut(&mut minus.layers[k]).unwrap();
                if block == 0 {
                    mw[i] -= h
                } else {
                    mb[i] -= h
                }
                *slot =
                    (mean_loss(&plus, &x, &labels) - mean_loss(&minus, &x, &labels)) / (2.0 * h);
            }
            worst = worst.max(relative_gap(&analytic, &numeric));
        }
    }
    let mut numeric = vec![0.0; x.rows() * x.cols()];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_mut_slice()[i] += h;
        xm.as_mut_slice()[i] -= h;
        *slot = (mean_loss(net, &xp, &labels) - mean_loss(net, &xm, &labels)) / (2.0 * h);
    }
    worst.max(relative_gap(grads.input.as_slice(), &numeric))
}
