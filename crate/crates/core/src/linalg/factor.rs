//! Symmetric factorizations `S = L Lᵀ`.

use serde::{Deserialize, Serialize};

use super::svd::{default_rank_tolerance, svd};
use super::{DenseMatrix, LinalgError};

/// Symmetry tolerance for inputs, relative to `max(1, max|S_ij|)`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues below `-PSD_NEGATIVE_SLACK * ||S||_2` reject a matrix as not PSD.
pub const PSD_NEGATIVE_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FactorStrategy {
    /// Square lower-triangular factor of `S + ridge I`.
    CholeskyWithRidge,
    /// Thin `Q_p Λ_p^{1/2}` factor over the eigenvalues above the rank tolerance.
    #[default]
    PsdEigendecomposition,
}

#[derive(Clone, Debug)]
pub struct SymmetricFactor {
    /// `n x p`; `p = n` for Cholesky, `p = numerical rank` for the PSD path.
    pub l: DenseMatrix,
    pub source_kind: FactorStrategy,
    pub ridge: f64,
}

/// Eigen-decomposition of a symmetric matrix: eigenvalues in nonincreasing
/// order and matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    /// `||S||_2`, the largest absolute eigenvalue.
    pub spectral_norm: f64,
    pub rank_tolerance: f64,
}

fn check_symmetric(s: &DenseMatrix) -> Result<(), LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch {
            op: "symmetric input",
            left: s.shape(),
            right: (s.cols(), s.rows()),
        });
    }
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOLERANCE * s.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigen-decomposition through the SVD: singular vectors of a symmetric
/// matrix are eigenvectors, and the Rayleigh quotient recovers the sign.
pub fn symmetric_eigen(s: &DenseMatrix) -> Result<SymmetricEigen, LinalgError> {
    check_symmetric(s)?;
    let n = s.rows();
    let f = svd(s, 0.0)?;
    let su = s.matmul(&f.u)?;
    let mut pairs: Vec<(f64, usize)> = (0..n)
        .map(|j| {
            let q: f64 = f.u.col(j).iter().zip(su.col(j)).map(|(a, b)| a * b).sum();
            (q, j)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite eigenvalues"));
    let order: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let spectral_norm = f.sigma.first().copied().unwrap_or(0.0);
    Ok(SymmetricEigen {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors: f.u.select_columns(&order),
        spectral_norm,
        rank_tolerance: default_rank_tolerance(n, n, spectral_norm),
    })
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky(s: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    check_symmetric(s)?;
    let n = s.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(l)
}

/// Inverse of a nonsingular lower-triangular matrix.
pub fn invert_lower_triangular(l: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let n = l.rows();
    if !l.is_square() {
        return Err(LinalgError::DimensionMismatch {
            op: "invert_lower_triangular",
            left: l.shape(),
            right: (n, n),
        });
    }
    let mut inv = DenseMatrix::zeros(n, n);
    // Solve L x = e_j column by column; column j of the inverse is zero above j.
    for j in 0..n {
        if l[(j, j)] == 0.0 {
            return Err(LinalgError::Singular { index: j });
        }
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..n {
            let mut acc = 0.0;
            for k in j..i {
                acc += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -acc / l[(i, i)];
        }
    }
    Ok(inv)
}

/// Factors `S + ridge I` as `L Lᵀ`.
pub fn symmetric_factor(
    s: &DenseMatrix,
    strategy: FactorStrategy,
    ridge: f64,
) -> Result<SymmetricFactor, LinalgError> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(LinalgError::InvalidArgument(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    check_symmetric(s)?;
    let ridged = if ridge > 0.0 { s.add_identity(ridge) } else { s.clone() };
    let l = match strategy {
        FactorStrategy::CholeskyWithRidge => cholesky(&ridged).map_err(|e| match e {
            LinalgError::NotPositiveDefinite { pivot, value } => LinalgError::NotPositiveDefiniteWithRidge {
                pivot,
                value,
                ridge,
            },
            other => other,
        })?,
        FactorStrategy::PsdEigendecomposition => {
            let eig = symmetric_eigen(&ridged)?;
            if let Some(&min) = eig.values.last() {
                if min < -PSD_NEGATIVE_SLACK * eig.spectral_norm {
                    return Err(LinalgError::NotPsd { min_eigenvalue: min });
                }
            }
            let keep: Vec<usize> = (0..eig.values.len())
                .filter(|&j| eig.values[j] > eig.rank_tolerance)
                .collect();
            let mut l = eig.vectors.select_columns(&keep);
            for (c, &j) in keep.iter().enumerate() {
                let root = eig.values[j].sqrt();
                l.col_mut(c).iter_mut().for_each(|x| *x *= root);
            }
            l
        }
    };
    Ok(SymmetricFactor {
        l,
        source_kind: strategy,
        ridge,
    })
}

impl SymmetricFactor {
    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Number of factor columns.
    pub fn width(&self) -> usize {
        self.l.cols()
    }

    /// `L Lᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        self.l.gram_outer()
    }

    /// `L†`, computed in closed form for both factor kinds: the inverse of a
    /// triangular Cholesky factor, or `Λ^{-1/2} Qᵀ` for the eigen factor.
    pub fn pseudoinverse(&self) -> Result<DenseMatrix, LinalgError> {
        match self.source_kind {
            FactorStrategy::CholeskyWithRidge => invert_lower_triangular(&self.l),
            FactorStrategy::PsdEigendecomposition => {
                let mut t = self.l.transpose();
                for j in 0..self.l.cols() {
                    let nsq: f64 = self.l.col(j).iter().map(|v| v * v).sum();
                    let inv = 1.0 / nsq;
                    for i in 0..t.cols() {
                        t[(j, i)] *= inv;
                    }
                }
                Ok(t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DenseMatrix {
        let b = DenseMatrix::from_fn(n, n, |i, j| ((i * 5 + j * 3) as f64 * 0.37).cos());
        b.gram_outer().add_identity(0.5)
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let f = symmetric_factor(&DenseMatrix::identity(4), FactorStrategy::CholeskyWithRidge, 0.0).unwrap();
        assert_eq!(f.l, DenseMatrix::identity(4));
    }

    #[test]
    fn cholesky_reproduces_ridged_input() {
        let s = spd(6);
        let f = symmetric_factor(&s, FactorStrategy::CholeskyWithRidge, 1e-2).unwrap();
        let target = s.add_identity(1e-2);
        let rel = f.reconstruct().sub(&target).unwrap().frobenius_norm() / target.frobenius_norm();
        assert!(rel < 1e-12);
        for j in 0..6 {
            for i in 0..j {
                assert_eq!(f.l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn rank_one_psd_factor_is_thin() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let s = DenseMatrix::from_fn(4, 4, |i, j| v[i] * v[j]);
        let f = symmetric_factor(&s, FactorStrategy::PsdEigendecomposition, 0.0).unwrap();
        assert_eq!(f.l.shape(), (4, 1));
        let rel = f.reconstruct().sub(&s).unwrap().frobenius_norm() / s.frobenius_norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn indefinite_inputs_are_rejected_per_strategy() {
        let s = DenseMatrix::from_diagonal(&[1.0, -0.5]);
        let chol = symmetric_factor(&s, FactorStrategy::CholeskyWithRidge, 0.0);
        assert!(matches!(chol, Err(LinalgError::NotPositiveDefiniteWithRidge { pivot: 1, .. })));
        let psd = symmetric_factor(&s, FactorStrategy::PsdEigendecomposition, 0.0);
        assert!(matches!(psd, Err(LinalgError::NotPsd { .. })));
        // A large enough ridge rescues the Cholesky path.
        assert!(symmetric_factor(&s, FactorStrategy::CholeskyWithRidge, 1.0).is_ok());
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let s = DenseMatrix::from_rows(&[&[1.0, 0.1], &[0.0, 1.0]]);
        assert!(matches!(
            symmetric_factor(&s, FactorStrategy::CholeskyWithRidge, 0.0),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn eigen_recovers_signed_spectrum() {
        let q = DenseMatrix::from_rows(&[&[0.6, 0.8], &[-0.8, 0.6]]);
        let d = DenseMatrix::from_diagonal(&[3.0, -1.0]);
        let s = q.matmul(&d).unwrap().matmul_t(&q).unwrap().symmetrize();
        let e = symmetric_eigen(&s).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn factor_pseudoinverses_match_svd_route() {
        let s = spd(5);
        for strategy in [FactorStrategy::CholeskyWithRidge, FactorStrategy::PsdEigendecomposition] {
            let f = symmetric_factor(&s, strategy, 0.0).unwrap();
            let closed = f.pseudoinverse().unwrap();
            let generic = svd(&f.l, 0.0).unwrap().pseudoinverse();
            assert!(closed.sub(&generic).unwrap().max_abs() < 1e-9, "{strategy:?}");
        }
    }

    #[test]
    fn triangular_inverse_is_exact_inverse() {
        let l = cholesky(&spd(7)).unwrap();
        let inv = invert_lower_triangular(&l).unwrap();
        let id = l.matmul(&inv).unwrap();
        assert!(id.sub(&DenseMatrix::identity(7)).unwrap().max_abs() < 1e-12);
    }
}
