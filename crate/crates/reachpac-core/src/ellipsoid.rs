//! Ellipsoidal set representation and minimum-volume enclosing fitting.
//!
//! A set estimate is the sublevel set { x : g(x) <= level } of the score
//! g(x) = |A x + b|^2 - 1 with A symmetric positive definite. `fit_mvee`
//! solves the enclosing scenario program by barycentric-coordinate
//! ascent on the dual (Khachiyan's update plus away steps), then scales
//! the result so every sample is contained exactly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dynamics::SampleBatch;
use crate::fmath;
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetError {
    #[error("matrix must be square symmetric positive definite ({reason})")]
    InvalidShape { reason: String },
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("level {level} collapses the set to empty (must exceed -1)")]
    EmptySet { level: f64 },
    #[error("batch is degenerate: affine hull has rank below the state dimension")]
    DegenerateData,
    #[error("need at least {needed} samples to fit a full-dimensional ellipsoid, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("ascent did not reach tolerance within the iteration cap (gap {gap})")]
    NoConvergence { gap: f64 },
}

/// Reachable-set estimate { x : |A x + b|^2 - 1 <= level }.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    dim: usize,
    matrix: Vec<f64>, // row-major, symmetric positive definite
    offset: Vec<f64>,
    level: f64,
}

impl Ellipsoid {
    /// Builds a set from a symmetric positive definite matrix (row-major)
    /// and an offset; the level starts at 0.
    pub fn new(dim: usize, matrix: Vec<f64>, offset: Vec<f64>) -> Result<Self, SetError> {
        Self::with_parts(dim, matrix, offset, 0.0)
    }

    pub fn with_parts(
        dim: usize,
        matrix: Vec<f64>,
        offset: Vec<f64>,
        level: f64,
    ) -> Result<Self, SetError> {
        if dim == 0 || matrix.len() != dim * dim || offset.len() != dim {
            return Err(SetError::InvalidShape {
                reason: String::from("dimension and buffer lengths disagree"),
            });
        }
        if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(SetError::InvalidShape {
                reason: String::from("non-finite entry"),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                if fmath::abs(matrix[i * dim + j] - matrix[j * dim + i])
                    > 1e-9 * (1.0 + fmath::abs(matrix[i * dim + j]))
                {
                    return Err(SetError::InvalidShape {
                        reason: String::from("matrix is not symmetric"),
                    });
                }
            }
        }
        if linalg::cholesky(dim, &matrix).is_none() {
            return Err(SetError::InvalidShape {
                reason: String::from("matrix is not positive definite"),
            });
        }
        if !(level > -1.0) || !level.is_finite() {
            return Err(SetError::EmptySet { level });
        }
        Ok(Self {
            dim,
            matrix,
            offset,
            level,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Score g(x) = |A x + b|^2 - 1; membership means score <= level.
    ///
    /// ```
    /// use reachpac_core::ellipsoid::Ellipsoid;
    ///
    /// let disc = Ellipsoid::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
    /// assert_eq!(disc.score(&[0.0, 0.0]).unwrap(), -1.0); // center
    /// assert_eq!(disc.score(&[1.0, 0.0]).unwrap(), 0.0);  // boundary
    /// ```
    pub fn score(&self, x: &[f64]) -> Result<f64, SetError> {
        if x.len() != self.dim {
            return Err(SetError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut norm_sq = 0.0;
        for i in 0..self.dim {
            let mut acc = self.offset[i];
            for j in 0..self.dim {
                acc += self.matrix[i * self.dim + j] * x[j];
            }
            norm_sq += acc * acc;
        }
        Ok(norm_sq - 1.0)
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, SetError> {
        Ok(self.score(x)? <= self.level)
    }

    /// Same shape with the membership threshold moved to `q`. Inclusion
    /// is monotone in q.
    pub fn with_level(&self, q: f64) -> Result<Ellipsoid, SetError> {
        if !(q > -1.0) || !q.is_finite() {
            return Err(SetError::EmptySet { level: q });
        }
        let mut out = self.clone();
        out.level = q;
        Ok(out)
    }

    /// Lebesgue volume: V_n(1) (1 + level)^(n/2) / det(A).
    pub fn volume(&self) -> f64 {
        let det = fmath::abs(linalg::determinant(self.dim, &self.matrix));
        unit_ball_volume(self.dim) * fmath::powf(1.0 + self.level, self.dim as f64 / 2.0) / det
    }

    /// Center -A^{-1} b of the ellipsoid.
    pub fn center(&self) -> Vec<f64> {
        let inv = linalg::invert(self.dim, &self.matrix).expect("matrix validated SPD");
        let mut c = vec![0.0; self.dim];
        linalg::mat_vec(self.dim, &inv, &self.offset, &mut c);
        for v in c.iter_mut() {
            *v = -*v;
        }
        c
    }

    /// The quadratic form H = A^T A = A^2 defining (x-c)^T H (x-c) <= 1+level.
    /// Unique even though A is only determined up to an orthogonal factor.
    pub fn quadratic_form(&self) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.matrix[k * n + i] * self.matrix[k * n + j];
                }
                h[i * n + j] = s;
            }
        }
        h
    }

    /// Boundary polyline of a two-dimensional set, for plotting.
    pub fn boundary_points_2d(&self, segments: usize) -> Result<Vec<(f64, f64)>, SetError> {
        if self.dim != 2 {
            return Err(SetError::DimensionMismatch {
                expected: 2,
                got: self.dim,
            });
        }
        let inv = linalg::invert(2, &self.matrix).expect("matrix validated SPD");
        let r = fmath::sqrt(1.0 + self.level);
        let mut pts = Vec::with_capacity(segments + 1);
        for s in 0..=segments {
            let theta = 2.0 * core::f64::consts::PI * (s as f64) / (segments as f64);
            let u = [
                r * fmath::cos(theta) - self.offset[0],
                r * fmath::sin(theta) - self.offset[1],
            ];
            let x = inv[0] * u[0] + inv[1] * u[1];
            let y = inv[2] * u[0] + inv[3] * u[1];
            pts.push((x, y));
        }
        Ok(pts)
    }
}

/// Volume of the n-dimensional unit ball.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * core::f64::consts::PI / (n as f64) * unit_ball_volume(n - 2),
    }
}

/// Iteration cap for the dual ascent.
const MVEE_MAX_ITER: usize = 1_000_000;

/// Fits the (1+tol)-approximate minimum-volume enclosing ellipsoid.
///
/// Dual ascent over barycentric weights with Frank-Wolfe and away steps;
/// on convergence the quadratic form is rescaled so the farthest sample
/// sits exactly on the boundary, making containment exact rather than
/// tol-approximate.
pub fn fit_mvee(batch: &SampleBatch, tol: f64) -> Result<Ellipsoid, SetError> {
    let d = batch.dim();
    let n = batch.len();
    if n < d + 1 {
        return Err(SetError::TooFewSamples {
            needed: d + 1,
            got: n,
        });
    }
    let tol = if tol > 0.0 { tol } else { 1e-7 };
    let lift = d + 1;

    // u: barycentric weights over samples; X = sum u_i q_i q_i^T on the
    // lifted points q_i = (p_i, 1).
    let mut u = vec![1.0 / n as f64; n];
    let mut x_mat = vec![0.0; lift * lift];
    let assemble = |u: &[f64], x_mat: &mut Vec<f64>| {
        x_mat.fill(0.0);
        for (i, p) in batch.rows().enumerate() {
            let w = u[i];
            if w == 0.0 {
                continue;
            }
            for r in 0..lift {
                let qr = if r < d { p[r] } else { 1.0 };
                for c in 0..lift {
                    let qc = if c < d { p[c] } else { 1.0 };
                    x_mat[r * lift + c] += w * qr * qc;
                }
            }
        }
    };
    assemble(&u, &mut x_mat);
    let mut x_inv = linalg::invert(lift, &x_mat).ok_or(SetError::DegenerateData)?;

    let mut m_vals = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut q = vec![0.0; lift];
    let mut xq = vec![0.0; lift];

    for iter in 0..MVEE_MAX_ITER {
        // M_i = q_i^T X^{-1} q_i
        for (i, p) in batch.rows().enumerate() {
            q[..d].copy_from_slice(p);
            q[d] = 1.0;
            linalg::mat_vec(lift, &x_inv, &q, &mut xq);
            m_vals[i] = linalg::dot(&q, &xq);
        }
        let mut j_up = 0;
        let mut m_up = f64::NEG_INFINITY;
        let mut j_dn = 0;
        let mut m_dn = f64::INFINITY;
        for i in 0..n {
            if m_vals[i] > m_up {
                m_up = m_vals[i];
                j_up = i;
            }
            if u[i] > 1e-12 && m_vals[i] < m_dn {
                m_dn = m_vals[i];
                j_dn = i;
            }
        }
        let target = lift as f64;
        gap = m_up / target - 1.0;
        if gap <= tol {
            converged = true;
            break;
        }

        // pick the more violated side: add weight at the farthest point
        // or pull weight off an interior support point
        let (j, kappa) = if (m_up - target) >= (target - m_dn) {
            (j_up, m_up)
        } else {
            (j_dn, m_dn)
        };
        let mut step = (kappa - target) / (target * (kappa - 1.0));
        if j == j_dn {
            // away step cannot push the weight negative
            let max_away = -u[j] / (1.0 - u[j]);
            if step < max_away {
                step = max_away;
            }
            if step == 0.0 {
                // no room to move; fall back to the Frank-Wolfe step
                let kappa = m_up;
                step = (kappa - target) / (target * (kappa - 1.0));
            }
        }
        let j = if step > 0.0 || j == j_dn { j } else { j_up };

        for w in u.iter_mut() {
            *w *= 1.0 - step;
        }
        u[j] += step;
        if u[j] < 0.0 {
            u[j] = 0.0;
        }

        // X <- (1-step) X + step q_j q_j^T, refreshed periodically to
        // shed accumulated drift
        if iter % 4096 == 4095 {
            assemble(&u, &mut x_mat);
        } else {
            let p = batch.row(j);
            for r in 0..lift {
                let qr = if r < d { p[r] } else { 1.0 };
                for c in 0..lift {
                    let qc = if c < d { p[c] } else { 1.0 };
                    x_mat[r * lift + c] = (1.0 - step) * x_mat[r * lift + c] + step * qr * qc;
                }
            }
        }
        x_inv = linalg::invert(lift, &x_mat).ok_or(SetError::DegenerateData)?;
    }
    if !converged {
        return Err(SetError::NoConvergence { gap });
    }

    // center c = sum u_i p_i, scatter S = sum u_i (p_i - c)(p_i - c)^T,
    // shape H = S^{-1} / d
    let mut center = vec![0.0; d];
    for (i, p) in batch.rows().enumerate() {
        for j in 0..d {
            center[j] += u[i] * p[j];
        }
    }
    let mut scatter = vec![0.0; d * d];
    for (i, p) in batch.rows().enumerate() {
        let w = u[i];
        if w == 0.0 {
            continue;
        }
        for r in 0..d {
            for c in 0..d {
                scatter[r * d + c] += w * (p[r] - center[r]) * (p[c] - center[c]);
            }
        }
    }
    let s_inv = linalg::invert(d, &scatter).ok_or(SetError::DegenerateData)?;
    let mut h = vec![0.0; d * d];
    for i in 0..d * d {
        h[i] = s_inv[i] / d as f64;
    }
    // symmetrize against inversion round-off
    for r in 0..d {
        for c in 0..r {
            let avg = 0.5 * (h[r * d + c] + h[c * d + r]);
            h[r * d + c] = avg;
            h[c * d + r] = avg;
        }
    }

    // inflate so the farthest sample lands exactly on the boundary
    let mut s_max = 0.0f64;
    let mut hx = vec![0.0; d];
    for p in batch.rows() {
        let mut diff = vec![0.0; d];
        for j in 0..d {
            diff[j] = p[j] - center[j];
        }
        linalg::mat_vec(d, &h, &diff, &mut hx);
        let v = linalg::dot(&diff, &hx);
        if v > s_max {
            s_max = v;
        }
    }
    if !(s_max > 0.0) || !s_max.is_finite() {
        return Err(SetError::DegenerateData);
    }
    // the margin absorbs the rounding of the square-root factorization,
    // so the touching sample scores strictly nonpositive
    let margin = s_max * (1.0 + 1e-14);
    for v in h.iter_mut() {
        *v /= margin;
    }

    let a = linalg::sym_sqrt(d, &h).ok_or(SetError::DegenerateData)?;
    let mut b = vec![0.0; d];
    linalg::mat_vec(d, &a, &center, &mut b);
    for v in b.iter_mut() {
        *v = -*v;
    }
    Ellipsoid::new(d, a, b)
}
