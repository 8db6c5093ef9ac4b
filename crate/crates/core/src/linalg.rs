//! Small dense linear algebra for channel-mixing matrices: LU with partial
//! pivoting (determinant, inverse) and a Householder QR used to draw random
//! orthogonal matrices. Matrices are `[n, n]` tensors, row-major.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Determinant magnitude below which a mixing matrix is treated as singular.
pub const SINGULAR_DET_EPS: f64 = 1e-12;

struct Lu {
    lu: Vec<f64>,
    piv: Vec<usize>,
    n: usize,
    /// +1 or -1 depending on row-swap parity.
    sign: f64,
}

fn lu_decompose(m: &Tensor) -> Result<Lu> {
    let (n, nc) = m.dims2();
    if n != nc {
        return Err(Error::dimension(format!("matrix must be square, got {n}x{nc}")));
    }
    let mut lu = m.data().to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        // Partial pivot on the largest magnitude in column k.
        let mut p = k;
        let mut best = lu[k * n + k].abs();
        for r in (k + 1)..n {
            let v = lu[r * n + k].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return Err(Error::numerical("singular matrix in LU decomposition".to_string()));
        }
        if p != k {
            for c in 0..n {
                lu.swap(k * n + c, p * n + c);
            }
            piv.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[k * n + k];
        for r in (k + 1)..n {
            let f = lu[r * n + k] / pivot;
            lu[r * n + k] = f;
            for c in (k + 1)..n {
                lu[r * n + c] -= f * lu[k * n + c];
            }
        }
    }
    Ok(Lu { lu, piv, n, sign })
}

/// Determinant via LU.
pub fn det(m: &Tensor) -> Result<f64> {
    match lu_decompose(m) {
        Ok(f) => {
            let mut d = f.sign;
            for k in 0..f.n {
                d *= f.lu[k * f.n + k];
            }
            Ok(d)
        }
        Err(Error::Numerical(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// `log |det M|`; errors when `|det|` is below [`SINGULAR_DET_EPS`].
pub fn log_abs_det(m: &Tensor) -> Result<f64> {
    let d = det(m)?;
    if d.abs() <= SINGULAR_DET_EPS {
        return Err(Error::numerical(format!(
            "matrix is numerically singular (|det| = {:.3e} <= {:.0e})",
            d.abs(),
            SINGULAR_DET_EPS
        )));
    }
    Ok(d.abs().ln())
}

/// Matrix inverse via LU; errors on singular input.
pub fn inverse(m: &Tensor) -> Result<Tensor> {
    let f = lu_decompose(m)?;
    let n = f.n;
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        // Solve M x = e_j with the permuted right-hand side.
        for (i, c) in col.iter_mut().enumerate() {
            *c = if f.piv[i] == j { 1.0 } else { 0.0 };
        }
        // Forward substitution (unit lower triangle).
        for i in 1..n {
            let mut s = col[i];
            for k in 0..i {
                s -= f.lu[i * n + k] * col[k];
            }
            col[i] = s;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= f.lu[i * n + k] * col[k];
            }
            col[i] = s / f.lu[i * n + i];
        }
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok(Tensor::from_vec(&[n, n], inv))
}

/// Random orthogonal matrix: QR of a Gaussian matrix with the R-diagonal sign
/// folded into Q, so |det Q| = 1 exactly up to rounding.
pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Tensor {
    let mut a: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    // Householder QR, accumulating Q.
    let mut v = vec![0.0; n];
    for k in 0..n {
        let mut norm = 0.0;
        for i in k..n {
            norm += a[i * n + k] * a[i * n + k];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k * n + k] >= 0.0 { -norm } else { norm };
        let mut vnorm2 = 0.0;
        for i in k..n {
            v[i] = a[i * n + k];
            if i == k {
                v[i] -= alpha;
            }
            vnorm2 += v[i] * v[i];
        }
        if vnorm2 == 0.0 {
            continue;
        }
        // Apply H = I - 2 v v^T / (v^T v) to A (columns k..) and to Q.
        for c in k..n {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i] * a[i * n + c];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                a[i * n + c] -= f * v[i];
            }
        }
        for c in 0..n {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i] * q[i * n + c];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                q[i * n + c] -= f * v[i];
            }
        }
    }
    // q now holds the product of reflections applied to I, i.e. Q^T.
    // Fold in sign(diag(R)) so the distribution is Haar and det sign varies.
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let s = if a[i * n + i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            out[j * n + i] = s * q[i * n + j];
        }
    }
    Tensor::from_vec(&[n, n], out)
}

/// `a * b` for `[m, k] x [k, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    assert_eq!(k, k2);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data()[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::from_vec(&[m, n], out)
}
