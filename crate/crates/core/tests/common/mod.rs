//! Shared test helpers: central-difference gradients and comparison with a
//! scale-aware relative error.

#![allow(dead_code)]

use vfi_core::tensor::Tensor;

/// Central finite differences of a scalar function.
pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], eps: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        x[i] = x0[i] + eps;
        let fp = f(&x);
        x[i] = x0[i] - eps;
        let fm = f(&x);
        x[i] = x0[i];
        out.push((fp - fm) / (2.0 * eps));
    }
    out
}

/// Worst per-element relative error between two gradient vectors. Elements
/// are compared against `max(|a_i|, |b_i|, 1e-6 * max_scale)` so that
/// finite-difference noise on near-zero components does not dominate.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let floor = (scale * 1e-6).max(1e-10);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Gradient of `f` w.r.t. one tensor argument by finite differences,
/// leaving the other arguments to the closure's captured state.
pub fn fd_grad_tensor(f: impl FnMut(&[f64]) -> f64, t: &Tensor, eps: f64) -> Vec<f64> {
    fd_grad(f, t.data(), eps)
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `log |det J|` of a square Jacobian built column-by-column from central
/// differences of a vector-valued map.
pub fn fd_jacobian_log_abs_det(
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
    x0: &[f64],
    eps: f64,
) -> f64 {
    let n = x0.len();
    let mut jac = vec![0.0; n * n]; // row-major [output][input]
    let mut x = x0.to_vec();
    for j in 0..n {
        x[j] = x0[j] + eps;
        let fp = f(&x);
        x[j] = x0[j] - eps;
        let fm = f(&x);
        x[j] = x0[j];
        assert_eq!(fp.len(), n, "map must be dimension preserving");
        for i in 0..n {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    }
    let t = Tensor::from_vec(&[n, n], jac);
    vfi_core::linalg::log_abs_det(&t).expect("finite-difference Jacobian is singular")
}
