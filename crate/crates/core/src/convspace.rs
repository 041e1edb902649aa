//! Signal spaces of 3×3 convolution kernels.
//!
//! Every 3×3 kernel of a layer, across both input and output channels,
//! becomes one row of a `K × 9` matrix. The SVD of that matrix gives at most
//! nine signal vectors, which render directly as 3×3 tiles.

use std::path::Path;

use crate::error::{Error, Result};
use crate::factor::{svd, SvdFactors};
use crate::nn::{ConvLayer, KERNEL_AREA};
use crate::subspace::signal_vis_vectors;
use crate::tensor::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    /// `K × 9`, one flattened kernel per row.
    pub matrix: Matrix,
    /// Identifies the layer the kernels came from.
    pub source: String,
}

/// One row per (output channel, input channel) pair, output channel major.
pub fn kernels_to_matrix(layer: &ConvLayer, source: impl Into<String>) -> Result<KernelMatrix> {
    let k_in = layer.in_channels();
    if layer.kernels.cols() != k_in * KERNEL_AREA {
        return Err(Error::UnsupportedShape(format!(
            "kernel rows of length {} are not {} input channels of 3x3 kernels",
            layer.kernels.cols(),
            k_in
        )));
    }
    let k_out = layer.out_channels();
    let mut data = Vec::with_capacity(k_out * k_in * KERNEL_AREA);
    for o in 0..k_out {
        data.extend_from_slice(layer.kernels.row(o));
    }
    Ok(KernelMatrix {
        matrix: Matrix::new(k_out * k_in, KERNEL_AREA, data)?,
        source: source.into(),
    })
}

#[derive(Debug, Clone)]
pub struct KernelSignalSpace {
    /// `σ_i v_i` for each of the `rank` nonzero singular values.
    pub vis_vectors: Vec<Vector>,
    pub condition: f64,
    pub rank: usize,
    pub factors: SvdFactors,
}

pub fn kernel_signal_space(km: &KernelMatrix) -> Result<KernelSignalSpace> {
    if km.matrix.rows() == 0 {
        return Err(Error::Input(format!("{} has no kernels", km.source)));
    }
    let factors = svd(&km.matrix)?;
    let condition = factors.condition_number()?;
    Ok(KernelSignalSpace {
        vis_vectors: signal_vis_vectors(&factors),
        condition,
        rank: factors.rank,
        factors,
    })
}

/// Largest relative error when rebuilding each kernel from the signal vectors.
///
/// Each kernel `k` is expanded as `Σ (v_iᵀk) v_i` over the signal space;
/// all-zero kernels are compared absolutely.
pub fn kernel_reconstruction_error(km: &KernelMatrix, space: &KernelSignalSpace) -> f64 {
    let rank = space.rank;
    let vs: Vec<Vector> = (0..rank).map(|i| space.factors.v(i)).collect();
    let mut worst: f64 = 0.0;
    for r in 0..km.matrix.rows() {
        let k = Vector::from(km.matrix.row(r));
        let mut rebuilt = Vector::zeros(KERNEL_AREA);
        for v in &vs {
            let a = v.dot(&k).expect("9-vectors");
            rebuilt.axpy(a, v).expect("9-vectors");
        }
        let err = rebuilt.sub(&k).expect("9-vectors").norm2();
        let scale = k.norm2();
        worst = worst.max(if scale > 0.0 { err / scale } else { err });
    }
    worst
}

/// Parses nine lines of nine whitespace-separated reals; blank lines and
/// lines starting with `#` are skipped. The rows must be independent.
pub fn parse_basis(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Format(format!("line {}: bad number {t:?}", n + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != KERNEL_AREA {
            return Err(Error::Format(format!(
                "line {}: expected {KERNEL_AREA} values, found {}",
                n + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() != KERNEL_AREA {
        return Err(Error::Format(format!(
            "expected {KERNEL_AREA} basis vectors, found {}",
            rows.len()
        )));
    }
    let basis = Matrix::from_rows(&rows)?;
    let rank = svd(&basis)?.rank;
    if rank != KERNEL_AREA {
        return Err(Error::Validation(format!(
            "basis vectors are dependent (rank {rank})"
        )));
    }
    Ok(basis)
}

pub fn load_basis(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_basis(&text)
}

/// Coefficients `c` minimizing `‖Bᵀc − v‖` for basis rows `B`, and the residual norm.
pub fn express_in_basis(basis: &Matrix, v: &Vector) -> Result<(Vector, f64)> {
    let bt = basis.transpose();
    let c = svd(&bt)?.pseudoinverse().matvec(v)?;
    let residual = bt.matvec(&c)?.sub(v)?.norm2();
    Ok((c, residual))
}

/// Largest relative residual of projecting each row of `a` onto the row span of `b`.
///
/// Zero rows are skipped. Mutual residuals of zero in both directions mean
/// the two sets span the same space.
pub fn span_residual(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let f = svd(b)?;
    let vs: Vec<Vector> = (0..f.rank).map(|i| f.v(i)).collect();
    let mut worst: f64 = 0.0;
    for r in 0..a.rows() {
        let x = Vector::from(a.row(r));
        let scale = x.norm2();
        if scale == 0.0 {
            continue;
        }
        let mut p = Vector::zeros(x.len());
        for v in &vs {
            p.axpy(v.dot(&x)?, v)?;
        }
        worst = worst.max(p.sub(&x)?.norm2() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ActivationKind, Shape3};

    fn conv(kernels: Matrix) -> ConvLayer {
        let k_in = kernels.cols() / 9;
        let bias = Vector::zeros(kernels.rows());
        ConvLayer::new(
            kernels,
            bias,
            ActivationKind::Relu,
            1,
            Shape3::new(k_in, 5, 5),
        )
        .unwrap()
    }

    #[test]
    fn single_kernel_flattens_row_major() {
        let l = conv(Matrix::new(1, 9, (1..=9).map(f64::from).collect()).unwrap());
        let km = kernels_to_matrix(&l, "conv0").unwrap();
        assert_eq!(km.matrix.shape(), (1, 9));
        assert_eq!(
            km.matrix.row(0),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
        );
        let s = kernel_signal_space(&km).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.condition - 1.0).abs() < 1e-15);
        let v = &s.vis_vectors[0];
        let cos = v.dot(&Vector::from(km.matrix.row(0))).unwrap()
            / (v.norm2() * km.matrix.row_vector(0).norm2());
        assert!((cos.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multi_channel_kernels_collapse_into_rows() {
        // 2 output channels × 3 input channels.
        let data: Vec<f64> = (0..54).map(|i| (i as f64 * 0.37).sin()).collect();
        let l = conv(Matrix::new(2, 27, data.clone()).unwrap());
        let km = kernels_to_matrix(&l, "c").unwrap();
        assert_eq!(km.matrix.shape(), (6, 9));
        assert_eq!(km.matrix.row(4), &data[36..45]);
        let s = kernel_signal_space(&km).unwrap();
        assert!(s.rank <= 6);
        assert!(kernel_reconstruction_error(&km, &s) < 1e-12);
    }

    #[test]
    fn zero_and_orthonormal_kernels() {
        let km = kernels_to_matrix(&conv(Matrix::zeros(4, 9)), "z").unwrap();
        assert!(km.matrix.as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(
            kernel_signal_space(&km),
            Err(Error::UndefinedCondition)
        ));

        let km = kernels_to_matrix(&conv(Matrix::identity(9)), "i").unwrap();
        let s = kernel_signal_space(&km).unwrap();
        assert_eq!(s.rank, 9);
        assert!((s.condition - 1.0).abs() < 1e-12);
    }

    const SAMPLE_BASIS: &str = "\
# identity
1 0 0 0 0 0 0 0 0
0 1 0 0 0 0 0 0 0
0 0 1 0 0 0 0 0 0
0 0 0 1 0 0 0 0 0

0 0 0 0 1 0 0 0 0
0 0 0 0 0 1 0 0 0
0 0 0 0 0 0 1 0 0
0 0 0 0 0 0 0 1 0
0 0 0 0 0 0 0 0 2
";

    #[test]
    fn basis_parsing() {
        let b = parse_basis(SAMPLE_BASIS).unwrap();
        assert_eq!(b[(8, 8)], 2.0);
        assert!(matches!(parse_basis("1 2 3"), Err(Error::Format(_))));
        let dependent = SAMPLE_BASIS.replace("0 0 0 0 0 0 0 0 2", "1 0 0 0 0 0 0 0 0");
        assert!(matches!(parse_basis(&dependent), Err(Error::Validation(_))));
        let bad = SAMPLE_BASIS.replace("0 0 0 0 0 0 0 0 2", "0 0 0 0 0 0 0 0 x");
        assert!(matches!(parse_basis(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn express_and_span() {
        let b = parse_basis(SAMPLE_BASIS).unwrap();
        let v = Vector::new((0..9).map(|i| i as f64 - 4.0).collect());
        let (c, res) = express_in_basis(&b, &v).unwrap();
        assert!(res < 1e-12);
        assert!((c[8] - 2.0).abs() < 1e-12);

        let plane = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let tilted = Matrix::from_rows(&[[1.0, 1.0, 0.0], [1.0, -1.0, 0.0]]).unwrap();
        assert!(span_residual(&plane, &tilted).unwrap() < 1e-15);
        assert!(span_residual(&tilted, &plane).unwrap() < 1e-15);
        let off = Matrix::from_rows(&[[0.0, 0.0, 1.0]]).unwrap();
        assert!((span_residual(&off, &plane).unwrap() - 1.0).abs() < 1e-15);
    }
}
