//! Dense symmetric-positive-definite factorization and solves.
//!
//! All models in this crate reduce to solving systems with matrices of the
//! form `K + noise` on the diagonal. Interpolation runs with zero noise, so
//! near-singular matrices are expected; factorization retries with a ladder
//! of diagonal jitters scaled by the mean diagonal and records the jitter
//! that succeeded.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative jitter schedule applied to the mean diagonal on factorization
/// failure. The leading zero means clean matrices factor untouched.
pub const DEFAULT_JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Cholesky factorization `M + jitter*I = L Lᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    lower: Array2<f64>,
    jitter: f64,
}

impl SpdFactorization {
    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// The lower-triangular factor L.
    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.lower.view()
    }

    /// Absolute jitter that was added to the diagonal (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// log det(M + jitter*I) = 2 Σ log L_ii.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.lower[[i, i]].ln()).sum::<f64>() * 2.0
    }

    /// Solve M x = b by forward and backward triangular substitution.
    pub fn solve_vec(&self, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve: factor is {n}x{n} but rhs has length {}",
                b.len()
            )));
        }
        let l = &self.lower;
        // L z = b
        let mut z = b.to_owned();
        for i in 0..n {
            let mut acc = z[i];
            for j in 0..i {
                acc -= l[[i, j]] * z[j];
            }
            z[i] = acc / l[[i, i]];
        }
        // Lᵀ x = z
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in i + 1..n {
                acc -= l[[j, i]] * z[j];
            }
            z[i] = acc / l[[i, i]];
        }
        Ok(z)
    }

    /// Solve M X = B column by column.
    pub fn solve_mat(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve: factor is {n}x{n} but rhs has {} rows",
                b.nrows()
            )));
        }
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            let x = self.solve_vec(col)?;
            out.column_mut(j).assign(&x);
        }
        Ok(out)
    }

    /// Dense inverse (M + jitter*I)⁻¹; used for leave-one-out identities.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.dim();
        let eye = Array2::eye(n);
        self.solve_mat(eye.view()).expect("identity has matching dims")
    }
}

/// Attempt a Cholesky factorization; on a non-positive pivot return its index.
fn try_cholesky(m: &ArrayView2<'_, f64>, jitter: f64) -> std::result::Result<Array2<f64>, (usize, f64)> {
    let n = m.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = m[[i, j]];
            if i == j {
                acc += jitter;
            }
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return Err((i, acc));
                }
                l[[i, j]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Factorize a symmetric matrix, retrying with each jitter in `ladder`
/// (relative to the mean diagonal) until one succeeds.
pub fn factorize(m: ArrayView2<'_, f64>, ladder: &[f64]) -> Result<SpdFactorization> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "factorize: expected nonempty square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let mut scale = 0.0;
    for i in 0..n {
        let d = m[[i, i]];
        if !d.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite diagonal entry at {i}")));
        }
        scale += d.abs();
    }
    scale /= n as f64;
    for i in 0..n {
        for j in 0..i {
            let diff = (m[[i, j]] - m[[j, i]]).abs();
            if diff > 1e-8 * scale.max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }

    let mut worst: Option<(usize, f64)> = None;
    for &rel in ladder {
        let jitter = rel * scale;
        match try_cholesky(&m, jitter) {
            Ok(lower) => return Ok(SpdFactorization { lower, jitter }),
            Err((pivot, value)) => {
                worst = Some(match worst {
                    Some((p, v)) if p <= pivot => (p, v),
                    _ => (pivot, value),
                });
            }
        }
    }
    let (pivot, value) = worst.expect("ladder is nonempty");
    Err(Error::NotPositiveDefinite { pivot, value })
}

/// Factorize with the default jitter ladder.
pub fn factorize_default(m: ArrayView2<'_, f64>) -> Result<SpdFactorization> {
    factorize(m, &DEFAULT_JITTER_LADDER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identity_factors_to_identity() {
        let eye = Array2::<f64>::eye(3);
        let f = factorize_default(eye.view()).unwrap();
        assert_eq!(f.jitter(), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(f.lower()[[i, j]], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn small_spd_reconstructs() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let f = factorize_default(m.view()).unwrap();
        let l = f.lower().to_owned();
        let rec = l.dot(&l.t());
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(rec[[i, j]], m[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn solve_identity_returns_rhs_and_zero_rhs_gives_zero() {
        let eye = Array2::<f64>::eye(4);
        let f = factorize_default(eye.view()).unwrap();
        let b = array![1.0, -2.0, 3.0, 0.5];
        let x = f.solve_vec(b.view()).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(x[i], b[i], epsilon = 1e-15);
        }
        let zero = Array1::<f64>::zeros(4);
        let x0 = f.solve_vec(zero.view()).unwrap();
        assert!(x0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_symmetric_rejected() {
        let m = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(matches!(factorize_default(m.view()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn indefinite_reports_smallest_failing_pivot() {
        let m = array![[1.0, 0.0], [0.0, -5.0]];
        match factorize(m.view(), &[0.0]) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn solve_dimension_mismatch() {
        let eye = Array2::<f64>::eye(3);
        let f = factorize_default(eye.view()).unwrap();
        let b = Array1::<f64>::zeros(2);
        assert!(matches!(f.solve_vec(b.view()), Err(Error::DimensionMismatch(_))));
    }
}
