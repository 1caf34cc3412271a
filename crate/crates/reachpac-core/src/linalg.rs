//! Small dense matrix helpers for the low-dimensional state spaces this
//! crate works in. Matrices are row-major `&[f64]` slices of length n*n.

#![allow(dead_code)]

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(n: usize, m: &[f64], v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = dot(&m[i * n..(i + 1) * n], v);
    }
}

/// Cholesky factor L (lower, row-major) with A = L Lᵀ, or `None` when the
/// matrix is not positive definite to working precision.
pub fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = fmath::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Matrix inverse by Gauss-Jordan elimination with partial pivoting.
/// Returns `None` on (numerical) singularity.
pub fn invert(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if fmath::abs(m[r * n + col]) > fmath::abs(m[pivot * n + col]) {
                pivot = r;
            }
        }
        let p = m[pivot * n + col];
        if !p.is_finite() || fmath::abs(p) < 1e-300 {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                m.swap(pivot * n + c, col * n + c);
                inv.swap(pivot * n + c, col * n + c);
            }
        }
        let inv_p = 1.0 / m[col * n + col];
        for c in 0..n {
            m[col * n + c] *= inv_p;
            inv[col * n + c] *= inv_p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                m[r * n + c] -= f * m[col * n + c];
                inv[r * n + c] -= f * inv[col * n + c];
            }
        }
    }
    Some(inv)
}

/// Determinant via LU with partial pivoting.
pub fn determinant(n: usize, a: &[f64]) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if fmath::abs(m[r * n + col]) > fmath::abs(m[pivot * n + col]) {
                pivot = r;
            }
        }
        let p = m[pivot * n + col];
        if p == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..n {
                m.swap(pivot * n + c, col * n + c);
            }
            det = -det;
        }
        det *= m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
        }
    }
    det
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as rows of V) with A = Vᵀ diag(λ) V.
pub fn sym_eigen(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if fmath::abs(apq) < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + fmath::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + fmath::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / fmath::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vpk = v[p * n + k];
                    let vqk = v[q * n + k];
                    v[p * n + k] = c * vpk - s * vqk;
                    v[q * n + k] = s * vpk + c * vqk;
                }
            }
        }
    }
    let eig = (0..n).map(|i| m[i * n + i]).collect();
    (eig, v)
}

/// Principal square root of a symmetric positive definite matrix.
/// Returns `None` when an eigenvalue is not strictly positive.
pub fn sym_sqrt(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let (eig, v) = sym_eigen(n, a);
    if eig.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    // Vᵀ diag(sqrt λ) V
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += v[k * n + i] * fmath::sqrt(eig[k]) * v[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn invert_recovers_identity() {
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert(3, &a).unwrap();
        let mut prod = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                prod[i * 3 + j] = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(invert(2, &a).is_none());
        assert_eq!(determinant(2, &a), 0.0);
        assert!(cholesky(2, &a).is_none());
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let a = vec![5.0, 2.0, 2.0, 3.0];
        let r = sym_sqrt(2, &a).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = (0..2).map(|k| r[i * 2 + k] * r[k * 2 + j]).sum();
                assert!((s - a[i * 2 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn determinant_of_triangular_product() {
        let a = vec![2.0, 0.0, 1.0, 3.0];
        assert!((determinant(2, &a) - 6.0).abs() < 1e-14);
    }
}
