//! Deterministic inputs for the benchmarks in `benches/`.

use llens_core::tensor::Matrix;

/// A dense matrix with reproducible, well-spread entries.
pub fn sample_matrix(rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| {
        let k = (i * 7919 + j * 104_729) % 1009;
        k as f64 / 504.5 - 1.0
    })
}
