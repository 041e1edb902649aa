//! The four fundamental spaces of a weight matrix and the decompositions
//! built on them.
//!
//! For `W = U Σ Vᵀ` of rank `r`:
//!
//! * signal space = row space of `W`, spanned by `v_1..v_r`
//! * rejected-signal space = null space of `W`, spanned by `v_{r+1}..v_n`
//! * signal-output space = column space of `W`, spanned by `u_1..u_r`
//! * rejected-output space = null space of `Wᵀ`, spanned by `u_{r+1}..u_m`

use crate::error::{Error, Result};
use crate::factor::SvdFactors;
use crate::tensor::{Matrix, Vector};

#[derive(Debug, Clone)]
pub struct SubspaceBases {
    pub signal: Vec<Vector>,
    pub rejected_signal: Vec<Vector>,
    pub signal_out: Vec<Vector>,
    pub rejected_out: Vec<Vector>,
    pub rank: usize,
}

impl SubspaceBases {
    /// Dimension of the input space.
    pub fn input_dim(&self) -> usize {
        self.signal.len() + self.rejected_signal.len()
    }

    pub fn output_dim(&self) -> usize {
        self.signal_out.len() + self.rejected_out.len()
    }
}

/// Splits full SVD factors into the four orthonormal bases at index `rank`.
pub fn bases(f: &SvdFactors) -> Result<SubspaceBases> {
    let n = f.vt.cols();
    let m = f.u.rows();
    if f.vt.rows() != n {
        return Err(Error::InsufficientBasis(format!(
            "Vᵀ has {} rows, the null space of W needs {n}",
            f.vt.rows()
        )));
    }
    if f.u.cols() != m {
        return Err(Error::InsufficientBasis(format!(
            "U has {} columns, the null space of Wᵀ needs {m}",
            f.u.cols()
        )));
    }
    let r = f.rank;
    let v: Vec<Vector> = (0..n).map(|i| f.vt.row_vector(i)).collect();
    let u: Vec<Vector> = (0..m).map(|i| f.u.column(i)).collect();
    Ok(SubspaceBases {
        signal: v[..r].to_vec(),
        rejected_signal: v[r..].to_vec(),
        signal_out: u[..r].to_vec(),
        rejected_out: u[r..].to_vec(),
        rank: r,
    })
}

/// Split of an input into its signal and rejected-signal components.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub x_signal: Vector,
    pub x_rejected: Vector,
    /// `a_i = v_iᵀ x` for every input basis vector, signal first.
    pub coeffs: Vector,
}

pub fn decompose(x: &Vector, b: &SubspaceBases) -> Result<Decomposition> {
    let n = b.input_dim();
    if x.len() != n {
        return Err(Error::Shape(format!(
            "input has length {}, basis dimension is {n}",
            x.len()
        )));
    }
    let mut x_signal = Vector::zeros(n);
    let mut x_rejected = Vector::zeros(n);
    let mut coeffs = Vec::with_capacity(n);
    for v in &b.signal {
        let a = v.dot(x)?;
        x_signal.axpy(a, v)?;
        coeffs.push(a);
    }
    for v in &b.rejected_signal {
        let a = v.dot(x)?;
        x_rejected.axpy(a, v)?;
        coeffs.push(a);
    }
    Ok(Decomposition {
        x_signal,
        x_rejected,
        coeffs: Vector::new(coeffs),
    })
}

/// Projection of an input onto one neuron's weight vector.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub p: Vector,
    pub residual: Vector,
    pub energy_kept: f64,
    pub energy_removed: f64,
}

/// `p = ((wᵀx)/‖w‖²) w`, `residual = x − p`.
pub fn project_on_weight(w: &Vector, x: &Vector) -> Result<ProjectionResult> {
    if w.len() != x.len() {
        return Err(Error::Shape(format!(
            "weight length {} vs input length {}",
            w.len(),
            x.len()
        )));
    }
    let ww = w.norm_squared();
    if ww == 0.0 {
        return Err(Error::DegenerateWeight);
    }
    let p = w.scale(w.dot(x)? / ww);
    let residual = x.sub(&p)?;
    let xx = x.norm_squared();
    let (energy_kept, energy_removed) = if xx == 0.0 {
        (0.0, 0.0)
    } else {
        let removed = residual.norm_squared() / xx;
        (p.norm_squared() / xx, removed)
    };
    Ok(ProjectionResult {
        p,
        residual,
        energy_kept,
        energy_removed,
    })
}

/// `σ_1 v_1, …, σ_r v_r`.
pub fn signal_vis_vectors(f: &SvdFactors) -> Vec<Vector> {
    (0..f.rank).map(|i| f.v(i).scale(f.sigma[i])).collect()
}

/// Residual of each class-mean image against that class's weight row.
///
/// `weights` is the layer matrix without the bias column; row `c` is the
/// neuron scoring class `c`.
pub fn class_residual_report(
    weights: &Matrix,
    class_means: &[Vector],
) -> Result<Vec<ProjectionResult>> {
    if class_means.len() > weights.rows() {
        return Err(Error::Shape(format!(
            "{} class means but only {} weight rows",
            class_means.len(),
            weights.rows()
        )));
    }
    class_means
        .iter()
        .enumerate()
        .map(|(c, mean)| {
            if mean.len() != weights.cols() {
                return Err(Error::Shape(format!(
                    "class {c} mean has length {}, weights expect {}",
                    mean.len(),
                    weights.cols()
                )));
            }
            project_on_weight(&weights.row_vector(c), mean)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::svd;
    use proptest::prelude::*;

    fn vecs_close(a: &Vector, b: &Vector, tol: f64) -> bool {
        a.sub(b).unwrap().max_abs() <= tol
    }

    #[test]
    fn full_rank_square_has_no_rejected_space() {
        let b = bases(&svd(&Matrix::identity(2)).unwrap()).unwrap();
        assert_eq!(b.signal.len(), 2);
        assert!(b.rejected_signal.is_empty() && b.rejected_out.is_empty());
        assert!(vecs_close(&b.signal[0], &Vector::basis(2, 0), 0.0));
        assert!(vecs_close(&b.signal[1], &Vector::basis(2, 1), 0.0));
    }

    #[test]
    fn zero_matrix_rejects_everything() {
        let b = bases(&svd(&Matrix::zeros(2, 3)).unwrap()).unwrap();
        assert!(b.signal.is_empty());
        assert_eq!(b.rejected_signal.len(), 3);
        assert_eq!(b.rejected_out.len(), 2);
    }

    #[test]
    fn null_space_of_single_row() {
        let w = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let b = bases(&svd(&w).unwrap()).unwrap();
        assert_eq!(b.rank, 1);
        assert_eq!(b.rejected_signal.len(), 2);
        for v in &b.rejected_signal {
            assert!(w.matvec(v).unwrap().max_abs() <= 1e-15);
            assert!(v[0].abs() <= 1e-15);
        }
    }

    #[test]
    fn thin_factors_are_rejected() {
        let mut f = svd(&Matrix::identity(3)).unwrap();
        f.vt = Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(bases(&f), Err(Error::InsufficientBasis(_))));
    }

    #[test]
    fn decompose_examples() {
        let w = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let b = bases(&svd(&w).unwrap()).unwrap();
        let x = Vector::new(vec![2.0, -1.0, 0.0]);
        let d = decompose(&x, &b).unwrap();
        assert!(d.x_rejected.max_abs() <= 1e-15);

        let v3 = b.rejected_signal[0].clone();
        let d = decompose(&v3, &b).unwrap();
        assert!(d.x_signal.max_abs() <= 1e-15);
        assert!((d.coeffs[2] - 1.0).abs() <= 1e-15);

        assert!(matches!(
            decompose(&Vector::zeros(2), &b),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn decompose_matches_normal_equations_for_single_row() {
        // Least squares onto span{(1,1)}: coefficient (x1+x2)/2 by the normal equations.
        let w = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let b = bases(&svd(&w).unwrap()).unwrap();
        for x in [[0.3, 0.9], [-2.0, 5.0], [1.0, -1.0]] {
            let d = decompose(&Vector::from(&x[..]), &b).unwrap();
            let c = (x[0] + x[1]) / 2.0;
            assert!(vecs_close(&d.x_signal, &Vector::new(vec![c, c]), 1e-14));
        }
    }

    #[test]
    fn projection_examples() {
        let w = Vector::new(vec![1.0, 2.0, -1.0]);
        let r = project_on_weight(&w, &w).unwrap();
        assert!(vecs_close(&r.p, &w, 1e-15));
        assert!(r.residual.max_abs() <= 1e-15);
        assert!(r.energy_removed.abs() <= 1e-15);

        let x = Vector::new(vec![2.0, -1.0, 0.0]);
        let r = project_on_weight(&w, &x).unwrap();
        assert_eq!(r.p.max_abs(), 0.0);
        assert_eq!(r.energy_removed, 1.0);

        let r =
            project_on_weight(&Vector::new(vec![1.0, 1.0]), &Vector::new(vec![2.0, 0.0])).unwrap();
        assert_eq!(r.p.as_slice(), &[1.0, 1.0]);
        assert_eq!(r.residual.as_slice(), &[1.0, -1.0]);
        assert_eq!(r.energy_kept, 0.5);
        assert_eq!(r.energy_removed, 0.5);

        let r = project_on_weight(&w, &Vector::zeros(3)).unwrap();
        assert_eq!((r.energy_kept, r.energy_removed), (0.0, 0.0));

        assert!(matches!(
            project_on_weight(&Vector::zeros(2), &Vector::zeros(2)),
            Err(Error::DegenerateWeight)
        ));
    }

    #[test]
    fn vis_vectors_examples() {
        let v = signal_vis_vectors(&svd(&Matrix::identity(2)).unwrap());
        assert_eq!(v.len(), 2);
        assert!(vecs_close(&v[0], &Vector::basis(2, 0), 0.0));
        let v = signal_vis_vectors(&svd(&Matrix::from_diag(2, 2, &[3.0, 1.0])).unwrap());
        assert!(vecs_close(&v[0], &Vector::new(vec![3.0, 0.0]), 0.0));
        assert!(vecs_close(&v[1], &Vector::new(vec![0.0, 1.0]), 0.0));
        assert!(signal_vis_vectors(&svd(&Matrix::zeros(2, 2)).unwrap()).is_empty());
    }

    #[test]
    fn class_residual_examples() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [0.0, 3.0]]).unwrap();
        let means = vec![Vector::new(vec![1.0, 2.0]), Vector::zeros(2)];
        let r = class_residual_report(&w, &means).unwrap();
        assert!(r[0].residual.max_abs() <= 1e-15);
        assert_eq!(r[1].residual.max_abs(), 0.0);
        assert_eq!((r[1].energy_kept, r[1].energy_removed), (0.0, 0.0));
        assert!(class_residual_report(&w, &[Vector::zeros(3)]).is_err());
        assert!(class_residual_report(&w, &vec![Vector::zeros(2); 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_identities(
            (w, x) in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(-5.0..5.0f64, n),
                prop::collection::vec(-5.0..5.0f64, n),
            ))
        ) {
            let w = Vector::new(w);
            let x = Vector::new(x);
            prop_assume!(w.norm2() > 1e-6 && x.norm2() > 1e-6);
            let r = project_on_weight(&w, &x).unwrap();
            let xx = x.norm_squared();
            prop_assert!((xx - r.p.norm_squared() - r.residual.norm_squared()).abs() <= 1e-10 * xx);
            prop_assert!(r.residual.dot(&w).unwrap().abs() <= 1e-10 * x.norm2() * w.norm2());
            prop_assert!((r.energy_kept + r.energy_removed - 1.0).abs() <= 1e-10);
            prop_assert!(r.p.add(&r.residual).unwrap().sub(&x).unwrap().norm2() <= 1e-12 * x.norm2());
        }
    }
}
