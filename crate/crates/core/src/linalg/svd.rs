//! Thin singular value decomposition.
//!
//! Tall inputs are first reduced with a Householder QR; the square factor is
//! then diagonalized by one-sided (Hestenes) Jacobi rotations acting on
//! contiguous columns. Wide inputs are handled through their transpose.

use super::{DenseMatrix, LinalgError};

/// Sweep budget for the Jacobi iteration. Typical inputs converge in under
/// fifteen sweeps.
pub const MAX_JACOBI_SWEEPS: usize = 80;

/// Thin SVD `M = U diag(sigma) Vᵀ` with `k = min(m, n)` triplets.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    /// `m x k`, orthonormal columns.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative.
    pub sigma: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub v: DenseMatrix,
    /// Number of singular values strictly above `rank_tolerance`.
    pub effective_rank: usize,
    pub rank_tolerance: f64,
}

/// Default rank cutoff: `max(m, n) * sigma_1 * eps`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

/// Computes the thin SVD of `m`.
///
/// `rank_tolerance = 0` selects [`default_rank_tolerance`].
pub fn svd(m: &DenseMatrix, rank_tolerance: f64) -> Result<SvdFactors, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite { row: 0, col: 0 });
    }
    if rank_tolerance < 0.0 || !rank_tolerance.is_finite() {
        return Err(LinalgError::InvalidArgument(format!(
            "rank tolerance must be finite and >= 0, got {rank_tolerance}"
        )));
    }
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = svd(&m.transpose(), rank_tolerance)?;
        return Ok(SvdFactors {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
            effective_rank: t.effective_rank,
            rank_tolerance: t.rank_tolerance,
        });
    }
    if cols == 0 {
        return Ok(SvdFactors {
            u: DenseMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(0, 0),
            effective_rank: 0,
            rank_tolerance,
        });
    }

    let (q, mut work) = if rows > cols {
        let (q, r) = householder_qr(m);
        (Some(q), r)
    } else {
        (None, m.clone())
    };
    let mut v = DenseMatrix::identity(cols);
    jacobi_sweeps(&mut work, &mut v)?;

    let n = cols;
    let norms: Vec<f64> = (0..n).map(|j| norm(work.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps kernel order among exact ties.
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let wr = work.rows();
    let mut u_small = DenseMatrix::zeros(wr, n);
    let mut v_sorted = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut filled = 0;
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        v_sorted.col_mut(dst).copy_from_slice(v.col(src));
        if s > 0.0 && s.is_normal() {
            let inv = 1.0 / s;
            for (o, &w) in u_small.col_mut(dst).iter_mut().zip(work.col(src)) {
                *o = w * inv;
            }
            sigma.push(s);
            filled += 1;
        } else {
            sigma.push(0.0);
        }
    }
    complete_orthonormal(&mut u_small, filled);

    let u = match q {
        Some(q) => q.matmul(&u_small)?,
        None => u_small,
    };

    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let tol = if rank_tolerance == 0.0 {
        default_rank_tolerance(rows, cols, sigma_max)
    } else {
        rank_tolerance
    };
    let effective_rank = sigma.iter().filter(|&&s| s > tol).count();
    Ok(SvdFactors {
        u,
        sigma,
        v: v_sorted,
        effective_rank,
        rank_tolerance: tol,
    })
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One-sided Jacobi on the columns of `w`, accumulating the right rotations
/// into `v`. On return the columns of `w` are mutually orthogonal.
fn jacobi_sweeps(w: &mut DenseMatrix, v: &mut DenseMatrix) -> Result<(), LinalgError> {
    let n = w.cols();
    let m = w.rows();
    let tol = f64::EPSILON * (m as f64).sqrt();
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (wp, wq) = two_columns(w, p, q);
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (a, b) in wp.iter().zip(wq.iter()) {
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + 1.0_f64.hypot(zeta));
                let c = 1.0 / 1.0_f64.hypot(t);
                let s = c * t;
                rotate(wp, wq, c, s);
                let (vp, vq) = two_columns(v, p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(LinalgError::NoConvergence {
        sweeps: MAX_JACOBI_SWEEPS,
    })
}

#[inline]
fn rotate(xp: &mut [f64], xq: &mut [f64], c: f64, s: f64) {
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Mutable access to columns `p < q` at once.
fn two_columns(m: &mut DenseMatrix, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let r = m.rows();
    let (head, tail) = m.as_mut_slice().split_at_mut(q * r);
    (&mut head[p * r..(p + 1) * r], &mut tail[..r])
}

/// Householder QR of a tall matrix: returns thin `Q` (m x n) and square
/// upper-triangular `R` (n x n).
pub fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (m, n) = a.shape();
    assert!(m >= n, "householder_qr expects rows >= cols");
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &work.col(k)[k..];
        let xnorm = norm(x);
        if xnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut vk = x.to_vec();
        vk[0] -= alpha;
        let vnorm = norm(&vk);
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        vk.iter_mut().for_each(|e| *e /= vnorm);
        for j in k..n {
            let col = &mut work.col_mut(j)[k..];
            let d: f64 = vk.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let d2 = 2.0 * d;
            for (c, vv) in col.iter_mut().zip(&vk) {
                *c -= d2 * vv;
            }
        }
        reflectors.push(vk);
    }
    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            r[(i, j)] = work[(i, j)];
        }
    }
    let mut q = DenseMatrix::zeros(m, n);
    for i in 0..n {
        q[(i, i)] = 1.0;
    }
    for k in (0..n).rev() {
        let vk = &reflectors[k];
        if vk.is_empty() {
            continue;
        }
        for j in k..n {
            let col = &mut q.col_mut(j)[k..];
            let d: f64 = vk.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let d2 = 2.0 * d;
            for (c, vv) in col.iter_mut().zip(vk) {
                *c -= d2 * vv;
            }
        }
    }
    (q, r)
}

/// Replaces columns `filled..` of `u` with unit vectors orthogonal to every
/// earlier column.
fn complete_orthonormal(u: &mut DenseMatrix, filled: usize) {
    let (m, k) = u.shape();
    let mut next_basis = 0;
    for j in filled..k {
        loop {
            assert!(next_basis < m, "cannot complete orthonormal basis");
            let mut cand = vec![0.0; m];
            cand[next_basis] = 1.0;
            next_basis += 1;
            // Two Gram-Schmidt passes.
            for _ in 0..2 {
                for prev in 0..j {
                    let p = u.col(prev);
                    let d: f64 = p.iter().zip(&cand).map(|(a, b)| a * b).sum();
                    for (c, pv) in cand.iter_mut().zip(p) {
                        *c -= d * pv;
                    }
                }
            }
            let nrm = norm(&cand);
            if nrm > 0.5 {
                for (o, c) in u.col_mut(j).iter_mut().zip(&cand) {
                    *o = c / nrm;
                }
                break;
            }
        }
    }
}

impl SvdFactors {
    /// Number of stored triplets, `min(m, n)` for a fresh decomposition.
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.u.rows()
    }

    pub fn cols(&self) -> usize {
        self.v.rows()
    }

    /// Leading `r` left singular vectors.
    pub fn u_leading(&self, r: usize) -> DenseMatrix {
        self.u.columns(0..r.min(self.u.cols()))
    }

    /// Leading `r` right singular vectors.
    pub fn v_leading(&self, r: usize) -> DenseMatrix {
        self.v.columns(0..r.min(self.v.cols()))
    }

    /// Rank-`r` truncation. Keeps `min(r, effective_rank)` triplets, so a
    /// request beyond the numerical rank reproduces the original matrix.
    pub fn truncate(&self, r: usize) -> SvdFactors {
        let keep = r.min(self.effective_rank);
        SvdFactors {
            u: self.u_leading(keep),
            sigma: self.sigma[..keep].to_vec(),
            v: self.v_leading(keep),
            effective_rank: keep,
            rank_tolerance: self.rank_tolerance,
        }
    }

    /// `U diag(sigma) Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            us.col_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        us.matmul_t(&self.v).expect("consistent factor shapes")
    }

    /// Moore-Penrose pseudoinverse `V_k diag(1/sigma_k) U_kᵀ` over the
    /// singular values above the rank tolerance.
    pub fn pseudoinverse(&self) -> DenseMatrix {
        let k = self.effective_rank;
        let mut vs = self.v_leading(k);
        for j in 0..k {
            let inv = 1.0 / self.sigma[j];
            vs.col_mut(j).iter_mut().for_each(|x| *x *= inv);
        }
        vs.matmul_t(&self.u_leading(k)).expect("consistent factor shapes")
    }

    /// Orthogonal projector onto the column space, `U_k U_kᵀ`.
    pub fn left_projector(&self) -> DenseMatrix {
        let uk = self.u_leading(self.effective_rank);
        uk.gram_outer()
    }

    /// Orthogonal projector onto the row space, `V_k V_kᵀ`.
    pub fn right_projector(&self) -> DenseMatrix {
        let vk = self.v_leading(self.effective_rank);
        vk.gram_outer()
    }

    /// `(sigma_r - sigma_{r+1}) <= rel_tol * sigma_1` for `1 <= r < effective_rank`:
    /// the rank-`r` truncation is not unique.
    pub fn has_tie_at(&self, r: usize, rel_tol: f64) -> bool {
        if r == 0 || r >= self.effective_rank {
            return false;
        }
        let s1 = self.sigma[0];
        self.sigma[r - 1] - self.sigma[r] <= rel_tol * s1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(r: usize, c: usize, seed: u64) -> DenseMatrix {
        // Small LCG; keeps the kernel tests independent of the crate RNG.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DenseMatrix::from_fn(r, c, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        let g = q.t_matmul(q).unwrap();
        g.sub(&DenseMatrix::identity(q.cols())).unwrap().frobenius_norm()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let f = svd(&DenseMatrix::identity(3), 0.0).unwrap();
        assert_eq!(f.sigma, vec![1.0, 1.0, 1.0]);
        assert_eq!(f.effective_rank, 3);
    }

    #[test]
    fn diagonal_input_is_sorted_with_signed_permutation_vectors() {
        let m = DenseMatrix::from_diagonal(&[1.0, 3.0, 2.0]);
        let f = svd(&m, 0.0).unwrap();
        assert_eq!(f.sigma, vec![3.0, 2.0, 1.0]);
        for j in 0..3 {
            let nonzero: Vec<f64> = f.u.col(j).iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(nonzero[0].abs(), 1.0);
        }
    }

    #[test]
    fn reconstructs_tall_square_and_wide() {
        for (r, c) in [(6, 4), (5, 5), (3, 7), (40, 13), (1, 5), (5, 1)] {
            let m = pseudo_random(r, c, (r * 31 + c) as u64);
            let f = svd(&m, 0.0).unwrap();
            let rel = f.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
            assert!(rel <= 1e-9, "{r}x{c}: {rel}");
            assert!(orthonormality_error(&f.u) <= 1e-10);
            assert!(orthonormality_error(&f.v) <= 1e-10);
            assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_input_still_has_orthonormal_u() {
        let a = pseudo_random(7, 2, 3);
        let b = pseudo_random(2, 5, 4);
        let m = a.matmul(&b).unwrap();
        let f = svd(&m, 0.0).unwrap();
        assert_eq!(f.effective_rank, 2);
        assert!(orthonormality_error(&f.u) <= 1e-10);
        assert!(orthonormality_error(&f.v) <= 1e-10);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let f = svd(&DenseMatrix::zeros(4, 3), 0.0).unwrap();
        assert_eq!(f.effective_rank, 0);
        assert!(f.sigma.iter().all(|&s| s == 0.0));
        assert!(orthonormality_error(&f.u) <= 1e-12);
    }

    #[test]
    fn qr_factors_reproduce_input() {
        let a = pseudo_random(9, 4, 11);
        let (q, r) = householder_qr(&a);
        assert!(q.matmul(&r).unwrap().sub(&a).unwrap().max_abs() < 1e-13);
        assert!(orthonormality_error(&q) < 1e-13);
        for j in 0..4 {
            for i in (j + 1)..4 {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn negative_tolerance_is_rejected() {
        assert!(svd(&DenseMatrix::identity(2), -1.0).is_err());
    }
}
