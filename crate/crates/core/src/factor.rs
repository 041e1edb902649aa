//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations,
//! plus numerical rank, condition number and the Moore–Penrose pseudoinverse.
//!
//! The decomposition is always *full*: `u` is `m × m` and `vt` is `n × n`,
//! so the null spaces of `W` and `Wᵀ` are available to [`crate::subspace`].
//! Columns that the rotations cannot supply (zero singular values, or the
//! extra dimensions of a rectangular matrix) are filled with an orthonormal
//! complement built from Householder reflectors.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Matrix, Vector};

/// Relative threshold below which a singular value is not counted in the rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Maximum number of Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// Left singular vectors as columns, `m × m`.
    pub u: Matrix,
    /// Singular values, descending, length `min(m, n)`.
    pub sigma: Vector,
    /// Right singular vectors as rows, `n × n`.
    pub vt: Matrix,
    pub rank: usize,
    pub rank_tol: f64,
}

impl SvdFactors {
    /// Rows of the source matrix.
    pub fn m(&self) -> usize {
        self.u.rows()
    }

    /// Columns of the source matrix.
    pub fn n(&self) -> usize {
        self.vt.cols()
    }

    /// Right singular vector `v_i` (0-based).
    pub fn v(&self, i: usize) -> Vector {
        self.vt.row_vector(i)
    }

    /// Left singular vector `u_i` (0-based).
    pub fn u_col(&self, i: usize) -> Vector {
        self.u.column(i)
    }

    /// `U · diag(σ) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let (m, n) = (self.m(), self.n());
        let mut out = Matrix::zeros(m, n);
        for (k, &s) in self.sigma.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let v = self.vt.row(k);
            for i in 0..m {
                let c = self.u[(i, k)] * s;
                if c != 0.0 {
                    axpy(out.row_mut(i), c, v);
                }
            }
        }
        out
    }

    pub fn condition_number(&self) -> Result<f64> {
        condition_number(self)
    }

    pub fn pseudoinverse(&self) -> Matrix {
        pseudoinverse(self)
    }
}

/// SVD with the default rank tolerance.
pub fn svd(w: &Matrix) -> Result<SvdFactors> {
    svd_with_tol(w, DEFAULT_RANK_TOL)
}

pub fn svd_with_tol(w: &Matrix, rank_tol: f64) -> Result<SvdFactors> {
    if !w.is_finite() {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    if w.rows() == 0 {
        return Err(Error::Input("matrix has no rows".into()));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::Input(format!(
            "rank tolerance {rank_tol} must be > 0"
        )));
    }
    let (m, n) = w.shape();
    // Rotate the columns of a tall matrix; for a wide W work on Wᵀ.
    let transposed = m < n;
    let a = if transposed { w.transpose() } else { w.clone() };
    let (p, q) = a.shape();

    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| a.column(j).into_vec()).collect();
    let mut rot: Vec<Vec<f64>> = (0..q).map(|j| Vector::basis(q, j).into_vec()).collect();
    jacobi_sweeps(&mut cols, &mut rot)?;

    let mut order: Vec<(usize, f64)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (j, dot(c, c).sqrt()))
        .collect();
    // Stable sort keeps the result deterministic when singular values tie.
    order.sort_by(|x, y| y.1.total_cmp(&x.1));
    let sigma: Vec<f64> = order.iter().map(|&(_, s)| s).collect();
    let cols: Vec<Vec<f64>> = order.iter().map(|&(j, _)| cols[j].clone()).collect();
    let mut rot: Vec<Vec<f64>> = order.iter().map(|&(j, _)| rot[j].clone()).collect();

    // Normalized long vectors for the well-determined singular values.
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let floor = s1 * p as f64 * f64::EPSILON;
    let known = sigma.iter().take_while(|&&s| s > 0.0 && s > floor).count();
    let mut long: Vec<Vec<f64>> = cols[..known]
        .iter()
        .zip(&sigma)
        .map(|(c, &s)| c.iter().map(|x| x / s).collect())
        .collect();
    long.extend(orthonormal_complement(&long, p));

    // Largest-magnitude entry of each right singular vector of W is nonnegative.
    for i in 0..q {
        let v = if transposed { &long[i] } else { &rot[i] };
        let pivot = v.iter().fold(
            0.0f64,
            |best, &x| if x.abs() > best.abs() { x } else { best },
        );
        if pivot < 0.0 {
            long[i].iter_mut().for_each(|x| *x = -*x);
            rot[i].iter_mut().for_each(|x| *x = -*x);
        }
    }
    if transposed {
        // Extra right singular vectors beyond min(m, n) have no partner to flip with.
        for v in long.iter_mut().skip(q) {
            let pivot = v.iter().fold(
                0.0f64,
                |best, &x| if x.abs() > best.abs() { x } else { best },
            );
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }

    let (u_cols, v_cols) = if transposed { (rot, long) } else { (long, rot) };
    let u = Matrix::from_fn(m, m, |i, j| u_cols[j][i]);
    let vt = Matrix::from_fn(n, n, |i, j| v_cols[i][j]);
    let sigma = Vector::new(sigma);
    let rank = numerical_rank(&sigma, rank_tol)?;
    Ok(SvdFactors {
        u,
        sigma,
        vt,
        rank,
        rank_tol,
    })
}

fn jacobi_sweeps(cols: &mut [Vec<f64>], rot: &mut [Vec<f64>]) -> Result<()> {
    let q = cols.len();
    let p = cols.first().map_or(0, Vec::len);
    let tol = (p.max(1) as f64) * f64::EPSILON;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for j in i + 1..q {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma.abs() <= tol * scale {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(cols, i, j, c, s);
                rotate_pair(rot, i, j, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi SVD did not converge within {MAX_SWEEPS} sweeps"
    )))
}

fn rotate_pair(vs: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = vs.split_at_mut(j);
    let (x, y) = (&mut lo[i], &mut hi[0]);
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Orthonormal basis for the complement of `span(known)` in `R^dim`.
///
/// `known` must be orthonormal. Householder QR of the known block yields
/// reflectors whose product maps the trailing unit vectors onto the complement.
fn orthonormal_complement(known: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let k = known.len();
    let mut work: Vec<Vec<f64>> = known.to_vec();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for c in 0..k {
        let x = &work[c][c..];
        let norm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = dot(&v, &v).sqrt();
        if vnorm > 0.0 {
            v.iter_mut().for_each(|e| *e /= vnorm);
        }
        for col in work.iter_mut().skip(c) {
            apply_reflector(&v, &mut col[c..]);
        }
        reflectors.push(v);
    }
    (k..dim)
        .map(|j| {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            for (c, v) in reflectors.iter().enumerate().rev() {
                apply_reflector(v, &mut e[c..]);
            }
            e
        })
        .collect()
}

fn apply_reflector(v: &[f64], x: &mut [f64]) {
    let d = 2.0 * dot(v, x);
    if d != 0.0 {
        axpy(x, -d, v);
    }
}

/// `σ₁ / σ_rank`.
pub fn condition_number(f: &SvdFactors) -> Result<f64> {
    if f.rank == 0 {
        return Err(Error::UndefinedCondition);
    }
    Ok(f.sigma[0] / f.sigma[f.rank - 1])
}

/// `W⁺ = V · diag(1/σ_i, i < rank) · Uᵀ`.
pub fn pseudoinverse(f: &SvdFactors) -> Matrix {
    let (m, n) = (f.m(), f.n());
    let mut out = Matrix::zeros(n, m);
    for k in 0..f.rank {
        let inv = 1.0 / f.sigma[k];
        let v = f.vt.row(k);
        let u = f.u.column(k);
        for (i, &vi) in v.iter().enumerate() {
            let c = vi * inv;
            if c != 0.0 {
                axpy(out.row_mut(i), c, u.as_slice());
            }
        }
    }
    out
}

/// Count of `σ_i > rank_tol · σ₁`.
pub fn numerical_rank(sigma: &Vector, rank_tol: f64) -> Result<usize> {
    if !(rank_tol > 0.0) {
        return Err(Error::Input(format!(
            "rank tolerance {rank_tol} must be > 0"
        )));
    }
    let s = sigma.as_slice();
    if let Some(i) = s.iter().position(|&x| !(x >= 0.0)) {
        return Err(Error::Input(format!(
            "singular value {i} is negative or NaN"
        )));
    }
    if let Some(i) = s.windows(2).position(|w| w[0] < w[1]) {
        return Err(Error::Input(format!(
            "singular values not descending at index {}",
            i + 1
        )));
    }
    let Some(&s1) = s.first() else { return Ok(0) };
    if s1 == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rank_tol * s1).count())
}
