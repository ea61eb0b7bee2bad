//! Factor-analysis post-processing for latent representations: Varimax
//! rotation, orthogonal Procrustes alignment, explained variance, factor
//! balance and aligned correlations.

use thiserror::Error;

use crate::linalg::{svd, DenseMatrix, LinalgError};

#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least {needed} factors, got {got}")]
    TooFewFactors { needed: usize, got: usize },
    #[error("data has zero total variance")]
    ZeroVariance,
    #[error("all explained variances are zero")]
    AllZero,
    #[error("explained variance {0} is negative or non-finite")]
    InvalidVariance(f64),
}

/// Scores `Z` (`T x r`) and loadings `B` (`A x r`) with `data ≈ Z Bᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentFactors {
    pub scores: DenseMatrix,
    pub loadings: DenseMatrix,
    pub rotation_applied: bool,
}

impl LatentFactors {
    pub fn new(scores: DenseMatrix, loadings: DenseMatrix) -> Result<Self, FactorError> {
        if scores.cols() != loadings.cols() {
            return Err(FactorError::Shape(format!(
                "scores have {} factors but loadings have {}",
                scores.cols(),
                loadings.cols()
            )));
        }
        Ok(LatentFactors {
            scores,
            loadings,
            rotation_applied: false,
        })
    }

    pub fn factor_count(&self) -> usize {
        self.loadings.cols()
    }

    /// Encodes `data` (`A x T`, one column per period) through `encoder`
    /// (`r x A`), with loadings `encoderᵀ`. Pass centered data for affine maps.
    pub fn from_encoder(encoder: &DenseMatrix, data: &DenseMatrix) -> Result<Self, FactorError> {
        let z = encoder.matmul(data)?;
        Self::new(z.transpose(), encoder.transpose())
    }

    /// `(Z R, B R)`
    pub fn rotated(&self, r: &DenseMatrix) -> Result<Self, FactorError> {
        Ok(LatentFactors {
            scores: self.scores.matmul(r)?,
            loadings: self.loadings.matmul(r)?,
            rotation_applied: true,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarimaxOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Row-normalize the loadings before rotating (Kaiser normalization).
    pub kaiser_normalize: bool,
}

impl Default for VarimaxOptions {
    fn default() -> Self {
        VarimaxOptions {
            tol: 1e-12,
            max_iters: 500,
            kaiser_normalize: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VarimaxOutcome {
    pub factors: LatentFactors,
    pub rotation: DenseMatrix,
    /// Criterion before the first sweep and after each sweep.
    pub criterion_history: Vec<f64>,
    pub converged: bool,
    /// Some factor pair had a criterion that was flat in the rotation angle,
    /// so the rotation within that pair is arbitrary.
    pub degenerate: bool,
}

/// `Σ_k [ (1/p) Σ_i b_ik⁴ − ((1/p) Σ_i b_ik²)² ]`
pub fn varimax_criterion(loadings: &DenseMatrix) -> f64 {
    let p = loadings.rows() as f64;
    (0..loadings.cols())
        .map(|k| {
            let c = loadings.col(k);
            let s2: f64 = c.iter().map(|x| x * x).sum::<f64>() / p;
            let s4: f64 = c.iter().map(|x| x.powi(4)).sum::<f64>() / p;
            s4 - s2 * s2
        })
        .sum()
}

/// Varimax by pairwise planar rotations. Each pair is rotated to the exact
/// maximizer of its share of the criterion, so the criterion never decreases.
pub fn varimax_rotate(f: &LatentFactors, opts: VarimaxOptions) -> Result<VarimaxOutcome, FactorError> {
    let r = f.factor_count();
    if r < 2 {
        return Err(FactorError::TooFewFactors { needed: 2, got: r });
    }
    let p = f.loadings.rows();
    let mut b = f.loadings.clone();
    let norms: Vec<f64> = (0..p)
        .map(|i| {
            let h = b.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            if opts.kaiser_normalize && h > 0.0 {
                h
            } else {
                1.0
            }
        })
        .collect();
    for k in 0..r {
        for (x, h) in b.col_mut(k).iter_mut().zip(&norms) {
            *x /= h;
        }
    }
    let mut rot = DenseMatrix::identity(r);
    let mut history = vec![varimax_criterion(&b)];
    let mut converged = false;
    let mut degenerate = false;
    let pf = p as f64;
    for _ in 0..opts.max_iters {
        let mut sweep_degenerate = false;
        for j in 0..r - 1 {
            for k in j + 1..r {
                let (mut a, mut bb, mut c, mut d, mut scale) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (x, y) = (b[(i, j)], b[(i, k)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    a += u;
                    bb += v;
                    c += u * u - v * v;
                    d += 2.0 * u * v;
                    scale += (x * x + y * y).powi(2);
                }
                let num = d - 2.0 * a * bb / pf;
                let den = c - (a * a - bb * bb) / pf;
                if num.hypot(den) <= 1e-12 * scale {
                    if scale > 0.0 {
                        sweep_degenerate = true;
                    }
                    continue;
                }
                let phi = num.atan2(den) / 4.0;
                if phi == 0.0 {
                    continue;
                }
                let (s, co) = phi.sin_cos();
                rotate_pair(&mut b, j, k, co, s);
                rotate_pair(&mut rot, j, k, co, s);
            }
        }
        let crit = varimax_criterion(&b);
        let gain = crit - history[history.len() - 1];
        history.push(crit);
        degenerate = sweep_degenerate;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(VarimaxOutcome {
        factors: f.rotated(&rot)?,
        rotation: rot,
        criterion_history: history,
        converged,
        degenerate,
    })
}

fn rotate_pair(m: &mut DenseMatrix, j: usize, k: usize, c: f64, s: f64) {
    for i in 0..m.rows() {
        let (x, y) = (m[(i, j)], m[(i, k)]);
        m[(i, j)] = c * x + s * y;
        m[(i, k)] = -s * x + c * y;
    }
}

#[derive(Clone, Debug)]
pub struct ProcrustesFit {
    pub rotation: DenseMatrix,
    /// `Z R`
    pub aligned: DenseMatrix,
    /// `Zᵀ target` is rank deficient, so the minimizer is not unique.
    pub rank_deficient: bool,
    /// `Σ σ_i(Zᵀ target)`, the optimal value of `tr(Rᵀ Zᵀ target)`.
    pub trace_optimum: f64,
}

/// Orthogonal `R` minimizing `‖Z R − target‖_F`: with `Zᵀ target = U Σ Vᵀ`,
/// `R = U Vᵀ`.
pub fn procrustes_align(z: &DenseMatrix, target: &DenseMatrix) -> Result<ProcrustesFit, FactorError> {
    if z.shape() != target.shape() {
        return Err(FactorError::Shape(format!(
            "Z is {:?} but target is {:?}",
            z.shape(),
            target.shape()
        )));
    }
    let m = z.t_matmul(target)?;
    let f = svd(&m, 0.0)?;
    let rotation = f.u.matmul_t(&f.v)?;
    Ok(ProcrustesFit {
        aligned: z.matmul(&rotation)?,
        rotation,
        rank_deficient: f.effective_rank < m.cols(),
        trace_optimum: f.sigma.iter().sum(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplainedVariance {
    pub per_factor: Vec<f64>,
    pub total: f64,
}

/// Share of the total variance of `data` (`T x A`, one row per period)
/// along each unit-normalized loading direction. The total sums the shares,
/// so it is at most one when the directions are orthonormal.
pub fn cumulative_explained_variance(f: &LatentFactors, data: &DenseMatrix) -> Result<ExplainedVariance, FactorError> {
    if data.cols() != f.loadings.rows() {
        return Err(FactorError::Shape(format!(
            "data has {} assets but loadings have {}",
            data.cols(),
            f.loadings.rows()
        )));
    }
    let t = data.rows();
    if t < 2 {
        return Err(FactorError::ZeroVariance);
    }
    let mut centered = data.clone();
    for k in 0..centered.cols() {
        let col = centered.col_mut(k);
        let m = col.iter().sum::<f64>() / t as f64;
        col.iter_mut().for_each(|x| *x -= m);
    }
    let total = centered.frobenius_norm_sq();
    if total <= 0.0 {
        return Err(FactorError::ZeroVariance);
    }
    let proj = centered.matmul(&f.loadings)?;
    let per_factor: Vec<f64> = (0..f.factor_count())
        .map(|k| {
            let n2: f64 = f.loadings.col(k).iter().map(|x| x * x).sum();
            if n2 == 0.0 {
                0.0
            } else {
                proj.col(k).iter().map(|x| x * x).sum::<f64>() / n2 / total
            }
        })
        .collect();
    Ok(ExplainedVariance {
        total: per_factor.iter().sum(),
        per_factor,
    })
}

/// `min(cev) / max(cev)`; 1 means the factors explain equal shares.
pub fn factor_balance(per_factor_cev: &[f64]) -> Result<f64, FactorError> {
    if per_factor_cev.len() < 2 {
        return Err(FactorError::TooFewFactors {
            needed: 2,
            got: per_factor_cev.len(),
        });
    }
    if let Some(&bad) = per_factor_cev.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(FactorError::InvalidVariance(bad));
    }
    let max = per_factor_cev.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(FactorError::AllZero);
    }
    let min = per_factor_cev.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(min / max)
}

/// Absolute Pearson correlation per column; `None` where either column has
/// zero variance.
pub fn aligned_factor_correlations(aligned: &DenseMatrix, truth: &DenseMatrix) -> Result<Vec<Option<f64>>, FactorError> {
    if aligned.shape() != truth.shape() {
        return Err(FactorError::Shape(format!(
            "aligned is {:?} but truth is {:?}",
            aligned.shape(),
            truth.shape()
        )));
    }
    Ok((0..aligned.cols())
        .map(|k| pearson(aligned.col(k), truth.col(k)).map(f64::abs))
        .collect())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn orthogonality_error(r: &DenseMatrix) -> f64 {
        r.t_matmul(r).unwrap().sub(&DenseMatrix::identity(r.cols())).unwrap().max_abs()
    }

    fn random_factors(seed: u64, t: usize, a: usize, r: usize) -> LatentFactors {
        let mut rng = SeededRng::new(seed);
        LatentFactors::new(rng.normal_matrix(t, r), rng.normal_matrix(a, r)).unwrap()
    }

    #[test]
    fn varimax_fixed_point_up_to_signed_permutation() {
        // One nonzero per row: already at the optimum.
        let b = DenseMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.8, 0.0, 0.0], &[0.0, 0.5, 0.0], &[0.0, 0.0, 1.2], &[0.0, 0.9, 0.0]]);
        let f = LatentFactors::new(DenseMatrix::zeros(4, 3), b).unwrap();
        let out = varimax_rotate(&f, VarimaxOptions::default()).unwrap();
        for i in 0..3 {
            let row = out.rotation.row(i);
            let big = row.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-10).count();
            let small = row.iter().filter(|x| x.abs() < 1e-10).count();
            assert_eq!((big, small), (1, 2), "{row:?}");
        }
    }

    #[test]
    fn varimax_recovers_planted_simple_structure() {
        let mut rng = SeededRng::new(4);
        let mut b = DenseMatrix::zeros(12, 3);
        for i in 0..12 {
            b[(i, i % 3)] = rng.uniform(0.5, 1.5);
        }
        let r0 = rng.orthogonal(3);
        let f = LatentFactors::new(rng.normal_matrix(5, 3), b.matmul(&r0).unwrap()).unwrap();
        let out = varimax_rotate(&f, VarimaxOptions::default()).unwrap();
        assert!(out.converged);
        let target = varimax_criterion(&b);
        assert!((varimax_criterion(&out.factors.loadings) - target).abs() < 1e-10);
    }

    #[test]
    fn varimax_preserves_column_space_and_fit() {
        let f = random_factors(8, 30, 10, 3);
        let out = varimax_rotate(&f, VarimaxOptions::default()).unwrap();
        assert!(orthogonality_error(&out.rotation) < 1e-10);
        let p0 = crate::linalg::left_projector(&f.loadings).unwrap();
        let p1 = crate::linalg::left_projector(&out.factors.loadings).unwrap();
        assert!(p0.sub(&p1).unwrap().max_abs() < 1e-10);
        let fit0 = f.scores.matmul_t(&f.loadings).unwrap();
        let fit1 = out.factors.scores.matmul_t(&out.factors.loadings).unwrap();
        assert!(fit0.sub(&fit1).unwrap().max_abs() < 1e-10);
        assert!(out.factors.rotation_applied);
    }

    #[test]
    fn varimax_kaiser_normalization_keeps_orthogonality() {
        let f = random_factors(12, 20, 9, 4);
        let opts = VarimaxOptions {
            kaiser_normalize: true,
            ..Default::default()
        };
        let out = varimax_rotate(&f, opts).unwrap();
        assert!(orthogonality_error(&out.rotation) < 1e-10);
        assert!(out.criterion_history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn varimax_flags_degenerate_pair() {
        // Unit rows at 45° spacing: the pair criterion ignores the angle.
        let s = 0.5f64.sqrt();
        let b = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[s, s], &[s, -s]]);
        let f = LatentFactors::new(DenseMatrix::zeros(3, 2), b).unwrap();
        let out = varimax_rotate(&f, VarimaxOptions::default()).unwrap();
        assert!(out.degenerate);
        assert!(orthogonality_error(&out.rotation) < 1e-12);
    }

    #[test]
    fn varimax_rejects_single_factor() {
        let f = random_factors(1, 5, 4, 1);
        assert!(matches!(
            varimax_rotate(&f, VarimaxOptions::default()),
            Err(FactorError::TooFewFactors { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn varimax_criterion_monotone(seed in 0u64..10_000, r in 2usize..5) {
            let f = random_factors(seed, 10, 8, r);
            let out = varimax_rotate(&f, VarimaxOptions::default()).unwrap();
            // Replay from the reported loadings, independent of the history.
            let before = varimax_criterion(&f.loadings);
            let after = varimax_criterion(&out.factors.loadings);
            prop_assert!(after >= before - 1e-12);
            for w in out.criterion_history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
            prop_assert!(orthogonality_error(&out.rotation) < 1e-10);
        }
    }

    #[test]
    fn procrustes_identity_target() {
        let z = SeededRng::new(3).normal_matrix(40, 3);
        let fit = procrustes_align(&z, &z).unwrap();
        assert!(fit.rotation.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-10);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn procrustes_recovers_planted_rotation() {
        let mut rng = SeededRng::new(5);
        let z = rng.normal_matrix(50, 4);
        let r0 = rng.orthogonal(4);
        let fit = procrustes_align(&z, &z.matmul(&r0).unwrap()).unwrap();
        assert!(fit.rotation.sub(&r0).unwrap().max_abs() < 1e-8);
        assert!(orthogonality_error(&fit.rotation) < 1e-10);
        let m = z.t_matmul(&z.matmul(&r0).unwrap()).unwrap();
        let tr = fit.rotation.t_matmul(&m).unwrap().trace();
        assert!((tr - fit.trace_optimum).abs() < 1e-8 * fit.trace_optimum);
    }

    #[test]
    fn procrustes_beats_random_rotations() {
        let mut rng = SeededRng::new(6);
        let z = rng.normal_matrix(30, 3);
        let target = rng.normal_matrix(30, 3);
        let fit = procrustes_align(&z, &target).unwrap();
        let best = fit.aligned.sub(&target).unwrap().frobenius_norm();
        for _ in 0..1000 {
            let q = rng.orthogonal(3);
            let cand = z.matmul(&q).unwrap().sub(&target).unwrap().frobenius_norm();
            assert!(best <= cand + 1e-12);
        }
    }

    #[test]
    fn procrustes_flags_rank_deficiency() {
        let mut rng = SeededRng::new(7);
        let mut z = rng.normal_matrix(20, 3);
        z.col_mut(2).iter_mut().for_each(|x| *x = 0.0);
        let fit = procrustes_align(&z, &rng.normal_matrix(20, 3)).unwrap();
        assert!(fit.rank_deficient);
        assert!(orthogonality_error(&fit.rotation) < 1e-10);
    }

    #[test]
    fn procrustes_shape_mismatch() {
        assert!(procrustes_align(&DenseMatrix::zeros(3, 2), &DenseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn explained_variance_in_factor_span() {
        let mut rng = SeededRng::new(9);
        let q = rng.orthogonal(6).columns(0..2);
        let z = rng.normal_matrix(100, 2);
        let data = z.matmul_t(&q).unwrap();
        let f = LatentFactors::new(z, q.clone()).unwrap();
        let ev = cumulative_explained_variance(&f, &data).unwrap();
        assert!((ev.total - 1.0).abs() < 1e-10);
        assert!(ev.per_factor.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // Orthogonal directions explain nothing.
        let q_perp = rng.orthogonal(6);
        let p = DenseMatrix::identity(6).sub(&q.matmul_t(&q).unwrap()).unwrap();
        let perp = p.matmul(&q_perp.columns(0..2)).unwrap();
        let g = LatentFactors::new(DenseMatrix::zeros(100, 2), perp).unwrap();
        assert!(cumulative_explained_variance(&g, &data).unwrap().total < 1e-12);
    }

    #[test]
    fn explained_variance_bounded_for_orthonormal_directions() {
        let mut rng = SeededRng::new(10);
        let data = rng.normal_matrix(80, 5);
        let f = LatentFactors::new(DenseMatrix::zeros(80, 5), rng.orthogonal(5)).unwrap();
        let ev = cumulative_explained_variance(&f, &data).unwrap();
        assert!((ev.total - 1.0).abs() < 1e-10);
        let f3 = LatentFactors::new(DenseMatrix::zeros(80, 3), rng.orthogonal(5).columns(0..3)).unwrap();
        assert!(cumulative_explained_variance(&f3, &data).unwrap().total <= 1.0 + 1e-10);
    }

    #[test]
    fn explained_variance_rejects_constant_data() {
        let f = LatentFactors::new(DenseMatrix::zeros(4, 1), DenseMatrix::identity(2).columns(0..1)).unwrap();
        let data = DenseMatrix::from_fn(4, 2, |_, j| j as f64);
        assert_eq!(cumulative_explained_variance(&f, &data), Err(FactorError::ZeroVariance));
    }

    #[test]
    fn balance_examples() {
        assert_eq!(factor_balance(&[0.3, 0.3, 0.3]).unwrap(), 1.0);
        assert!((factor_balance(&[0.2, 0.1]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(factor_balance(&[0.4, 0.0]).unwrap(), 0.0);
        assert_eq!(factor_balance(&[0.0, 0.0]), Err(FactorError::AllZero));
        assert!(factor_balance(&[0.5]).is_err());
        assert!(factor_balance(&[0.5, -0.1]).is_err());
    }

    #[test]
    fn correlations_identity_and_null() {
        let mut rng = SeededRng::new(11);
        let t = rng.normal_matrix(10_000, 3);
        let c = aligned_factor_correlations(&t, &t).unwrap();
        assert!(c.iter().all(|x| (x.unwrap() - 1.0).abs() < 1e-12));
        let other = rng.normal_matrix(10_000, 3);
        let c = aligned_factor_correlations(&other, &t).unwrap();
        assert!(c.iter().all(|x| x.unwrap() < 0.05), "{c:?}");
        let mut flat = t.clone();
        flat.col_mut(1).iter_mut().for_each(|x| *x = 2.0);
        assert_eq!(aligned_factor_correlations(&flat, &t).unwrap()[1], None);
    }

    #[test]
    fn planted_rotation_correlates_after_alignment() {
        let mut rng = SeededRng::new(12);
        let truth = rng.normal_matrix(500, 3);
        let r0 = rng.orthogonal(3);
        let noise = rng.normal_matrix(500, 3).scale(0.05);
        let z = truth.matmul(&r0).unwrap().add(&noise).unwrap();
        let fit = procrustes_align(&z, &truth).unwrap();
        let c = aligned_factor_correlations(&fit.aligned, &truth).unwrap();
        assert!(c.iter().all(|x| x.unwrap() > 0.95), "{c:?}");
    }

    #[test]
    fn encoder_factors_shapes() {
        let mut rng = SeededRng::new(13);
        let enc = rng.normal_matrix(3, 10);
        let data = rng.normal_matrix(10, 50);
        let f = LatentFactors::from_encoder(&enc, &data).unwrap();
        assert_eq!(f.scores.shape(), (50, 3));
        assert_eq!(f.loadings.shape(), (10, 3));
    }
}
