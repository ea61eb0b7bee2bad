//! Dense linear algebra: storage, products, SVD, pseudoinverses, projectors,
//! symmetric factorizations and the generalized rank-constrained solver.

mod factor;
mod gemm;
mod matrix;
mod svd;

pub use factor::{
    cholesky, invert_lower_triangular, symmetric_eigen, symmetric_factor, FactorStrategy, SymmetricEigen,
    SymmetricFactor, PSD_NEGATIVE_SLACK, SYMMETRY_TOLERANCE,
};
pub use gemm::multiply_chain;
pub use matrix::DenseMatrix;
pub use svd::{default_rank_tolerance, householder_qr, svd, SvdFactors, MAX_JACOBI_SWEEPS};

use thiserror::Error;

/// Relative gap `(σ_r − σ_{r+1}) / σ_1` at or below which a rank-`r`
/// truncation is reported as non-unique.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("data length {got} does not match shape (expected {expected})")]
    BadLength { expected: usize, got: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("SVD did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix plus ridge {ridge:e} is not positive definite (pivot {pivot} = {value:e}); try a larger ridge")]
    NotPositiveDefiniteWithRidge { pivot: usize, value: f64, ridge: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("triangular matrix is singular at diagonal {index}")]
    Singular { index: usize },
}

impl LinalgError {
    pub(crate) fn shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Self {
        LinalgError::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        }
    }
}

/// Moore-Penrose pseudoinverse with the default rank tolerance.
pub fn pseudoinverse(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    Ok(svd(m, 0.0)?.pseudoinverse())
}

/// Orthogonal projector onto the column space of `m`.
pub fn left_projector(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    Ok(svd(m, 0.0)?.left_projector())
}

/// Orthogonal projector onto the row space of `m`.
pub fn right_projector(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    Ok(svd(m, 0.0)?.right_projector())
}

/// A product `M_r R` where only the left factor is truncated. Factoring `M`
/// once lets a rank sweep evaluate every `r` with one small product each.
#[derive(Clone, Debug)]
pub struct TruncatedProduct {
    pub core: SvdFactors,
    /// `Vᵀ R`, one row per singular triplet of `M`.
    vt_right: DenseMatrix,
}

impl TruncatedProduct {
    pub fn new(m: &DenseMatrix, right: &DenseMatrix) -> Result<Self, LinalgError> {
        if m.cols() != right.rows() {
            return Err(LinalgError::shape("truncated product", m, right));
        }
        let core = svd(m, 0.0)?;
        let vt_right = core.v.t_matmul(right)?;
        Ok(TruncatedProduct { core, vt_right })
    }

    /// Rank the truncation actually uses for a request of `r`.
    pub fn used_rank(&self, r: usize) -> usize {
        r.min(self.core.effective_rank)
    }

    /// True when `r` exceeds the numerical rank of `M`.
    pub fn is_clamped(&self, r: usize) -> bool {
        r > self.core.effective_rank
    }

    /// True when `σ_r` and `σ_{r+1}` tie, so the truncation is not unique.
    pub fn has_tie_at(&self, r: usize) -> bool {
        self.core.has_tie_at(r, TIE_TOLERANCE)
    }

    /// `M_r R`
    pub fn at_rank(&self, r: usize) -> DenseMatrix {
        let k = self.used_rank(r);
        let mut us = self.core.u_leading(k);
        for j in 0..k {
            let s = self.core.sigma[j];
            us.col_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        let top = self.vt_right.row_range(0..k);
        us.matmul(&top).expect("consistent factor shapes")
    }
}

/// Solution of `min_{rank W ≤ r} ‖A − B W C‖_F` with diagnostics.
#[derive(Clone, Debug)]
pub struct RankApprox {
    pub w: DenseMatrix,
    /// Rank of the truncated projected target that was used.
    pub used_rank: usize,
    /// Numerical rank of `P_B A P_C`.
    pub available_rank: usize,
    /// `r` exceeded the available rank.
    pub clamped: bool,
    /// `σ_r = σ_{r+1}` of the projected target: the minimizer is not unique.
    pub tie: bool,
}

/// `W = B† (P_B A P_C)_r C†`, the minimal-norm minimizer of `‖A − B W C‖_F`
/// over matrices of rank at most `r`.
pub fn generalized_rank_approx(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    r: usize,
) -> Result<DenseMatrix, LinalgError> {
    Ok(generalized_rank_approx_detailed(a, b, c, r)?.w)
}

pub fn generalized_rank_approx_detailed(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    r: usize,
) -> Result<RankApprox, LinalgError> {
    if r == 0 {
        return Err(LinalgError::InvalidArgument("rank must be at least 1".into()));
    }
    if a.rows() != b.rows() {
        return Err(LinalgError::shape("generalized_rank_approx (A, B)", a, b));
    }
    if a.cols() != c.cols() {
        return Err(LinalgError::shape("generalized_rank_approx (A, C)", a, c));
    }
    let fb = svd(b, 0.0)?;
    let fc = svd(c, 0.0)?;
    let projected = fb
        .left_projector()
        .matmul(a)?
        .matmul(&fc.right_projector())?;
    let core = svd(&projected, 0.0)?;
    let truncated = core.truncate(r).reconstruct();
    let w = fb.pseudoinverse().matmul(&truncated)?.matmul(&fc.pseudoinverse())?;
    Ok(RankApprox {
        w,
        used_rank: r.min(core.effective_rank),
        available_rank: core.effective_rank,
        clamped: r > core.effective_rank,
        tie: core.has_tie_at(r, TIE_TOLERANCE),
    })
}
