//! Independent numerical oracles for the integration tests. These stay
//! free of the library's linear-algebra path so they can check it.

#![allow(dead_code)]

use ndarray::{Array1, Array2};

/// Central finite-difference gradient of a scalar function.
pub fn central_gradient<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += step;
            lo[i] -= step;
            (f(&hi) - f(&lo)) / (2.0 * step)
        })
        .collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut a = m.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[[row, col]].abs() > a[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
                inv.swap([col, k], [pivot, k]);
            }
        }
        let d = a[[col, col]];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for k in 0..n {
            a[[col, k]] /= d;
            inv[[col, k]] /= d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[[row, col]];
            if factor == 0.0 {
                continue;
            }
            for k in 0..n {
                a[[row, k]] -= factor * a[[col, k]];
                inv[[row, k]] -= factor * inv[[col, k]];
            }
        }
    }
    inv
}

/// log|M| via LU decomposition with partial pivoting (Doolittle).
pub fn lu_log_det(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut log_det = 0.0;
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[[row, col]].abs() > a[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
            }
            // Row swaps flip the determinant sign; SPD determinants stay
            // positive so the magnitude is all that matters here.
        }
        let d = a[[col, col]];
        log_det += d.abs().ln();
        for row in col + 1..n {
            let factor = a[[row, col]] / d;
            for k in col..n {
                a[[row, k]] -= factor * a[[col, k]];
            }
        }
    }
    log_det
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite 1-d integral of `f` over [a, b]: the interval is split into
/// panels no wider than `max_panel` and a 12-point Gauss-Legendre rule is
/// applied per panel, so narrow features stay resolved even when the
/// integration box is sized by a much wider one.
pub fn integrate_1d<F>(f: F, a: f64, b: f64, max_panel: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let (nodes, weights) = gauss_legendre(12);
    let panels = (((b - a) / max_panel).ceil() as usize).max(1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let half = 0.5 * width;
        let mid = lo + half;
        total += nodes.iter().zip(&weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
    }
    total
}

/// Composite tensor-product 2-d integral over [a1,b1] x [a2,b2].
pub fn integrate_2d<F>(f: F, a1: f64, b1: f64, a2: f64, b2: f64, max_panel: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let (nodes, weights) = gauss_legendre(12);
    let panels1 = (((b1 - a1) / max_panel).ceil() as usize).max(1);
    let panels2 = (((b2 - a2) / max_panel).ceil() as usize).max(1);
    let w1 = (b1 - a1) / panels1 as f64;
    let w2 = (b2 - a2) / panels2 as f64;
    // Precompute the flattened abscissas per axis.
    let axis = |a: f64, width: f64, panels: usize| -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(panels * nodes.len());
        for p in 0..panels {
            let half = 0.5 * width;
            let mid = a + p as f64 * width + half;
            for (x, w) in nodes.iter().zip(&weights) {
                pts.push((mid + half * x, w * half));
            }
        }
        pts
    };
    let xs = axis(a1, w1, panels1);
    let ys = axis(a2, w2, panels2);
    let mut total = 0.0;
    for &(x, wx) in &xs {
        let mut inner = 0.0;
        for &(y, wy) in &ys {
            inner += wy * f(x, y);
        }
        total += wx * inner;
    }
    total
}

/// Dense conditional of a joint Gaussian: mean and covariance of block 2
/// given block-1 observations, all through the explicit inverse.
pub fn dense_gaussian_condition(
    joint: &Array2<f64>,
    observed: &Array1<f64>,
    n_obs: usize,
) -> (Array1<f64>, Array2<f64>) {
    let n = joint.nrows();
    let m = n - n_obs;
    let k11 = joint.slice(ndarray::s![..n_obs, ..n_obs]).to_owned();
    let k12 = joint.slice(ndarray::s![..n_obs, n_obs..]).to_owned();
    let k21 = joint.slice(ndarray::s![n_obs.., ..n_obs]).to_owned();
    let k22 = joint.slice(ndarray::s![n_obs.., n_obs..]).to_owned();
    let inv = gauss_jordan_inverse(&k11);
    let mean = k21.dot(&inv).dot(observed);
    let cov = &k22 - &k21.dot(&inv).dot(&k12);
    assert_eq!(mean.len(), m);
    (mean, cov)
}
