//! Sample-based moments and optimal-map estimators.
//!
//! Data matrices hold one sample per column. The least-squares estimators
//! never form moments: with the thin SVD `X = U Σ Vᵀ` over the numerical
//! rank, `(Y V Vᵀ)_r X† = (Y V)_r Σ⁻¹ Uᵀ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{svd, DenseMatrix, FactorStrategy, LinalgError, TruncatedProduct, TIE_TOLERANCE};
use crate::mappings::{Branch, ConstructionTrace, Form, MappingError, MomentModel, OptimalMap, ProblemKind, Task};

#[derive(Debug, Error)]
pub enum EmpiricalError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("data set has no observation matrix Y")]
    MissingObservations,
    #[error("X has {x} samples but Y has {y}")]
    SampleCountMismatch { x: usize, y: usize },
}

/// Paired samples: `x` is `n x J`, `y` (if present) is `m x J`.
#[derive(Clone, Debug)]
pub struct DataSet {
    pub x: DenseMatrix,
    pub y: Option<DenseMatrix>,
}

impl DataSet {
    pub fn new(x: DenseMatrix, y: Option<DenseMatrix>) -> Result<Self, EmpiricalError> {
        if x.cols() == 0 {
            return Err(EmpiricalError::InsufficientSamples { needed: 1, got: 0 });
        }
        if let Some(y) = &y {
            if y.cols() != x.cols() {
                return Err(EmpiricalError::SampleCountMismatch {
                    x: x.cols(),
                    y: y.cols(),
                });
            }
        }
        Ok(DataSet { x, y })
    }

    pub fn signals(x: DenseMatrix) -> Result<Self, EmpiricalError> {
        Self::new(x, None)
    }

    pub fn paired(x: DenseMatrix, y: DenseMatrix) -> Result<Self, EmpiricalError> {
        Self::new(x, Some(y))
    }

    pub fn sample_count(&self) -> usize {
        self.x.cols()
    }

    pub fn observations(&self) -> Result<&DenseMatrix, EmpiricalError> {
        self.y.as_ref().ok_or(EmpiricalError::MissingObservations)
    }

    /// `(x, y)` with roles swapped, for training inverse maps.
    pub fn swapped(&self) -> Result<DataSet, EmpiricalError> {
        Ok(DataSet {
            x: self.observations()?.clone(),
            y: Some(self.x.clone()),
        })
    }

    /// Samples `idx` only.
    pub fn select(&self, idx: &[usize]) -> DataSet {
        DataSet {
            x: self.x.select_columns(idx),
            y: self.y.as_ref().map(|y| y.select_columns(idx)),
        }
    }
}

/// Ridge added to empirical moment matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ridge {
    /// `c * mean(diag(moment))`
    Relative(f64),
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    pub fn resolve(self, moment: &DenseMatrix) -> f64 {
        match self {
            Ridge::Absolute(v) => v,
            Ridge::Relative(c) => {
                let n = moment.rows().max(1) as f64;
                c * moment.trace() / n
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentOptions {
    pub ridge: Ridge,
    pub strategy: FactorStrategy,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            ridge: Ridge::default(),
            strategy: FactorStrategy::PsdEigendecomposition,
        }
    }
}

impl MomentOptions {
    pub fn exact() -> Self {
        MomentOptions {
            ridge: Ridge::Absolute(0.0),
            ..Default::default()
        }
    }
}

fn raw_second_moment(x: &DenseMatrix) -> DenseMatrix {
    let mut g = x.gram_outer();
    g.scale_mut(1.0 / x.cols() as f64);
    g
}

fn centered(x: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let mu = x.column_mean();
    let mut c = x.clone();
    let neg: Vec<f64> = mu.iter().map(|m| -m).collect();
    c.add_to_columns(&neg);
    (c, mu)
}

/// `Γ = (1/J) X Xᵀ + ridge I`
pub fn empirical_second_moment(d: &DataSet, opts: MomentOptions) -> Result<MomentModel, EmpiricalError> {
    let g = raw_second_moment(&d.x);
    let ridge = opts.ridge.resolve(&g);
    Ok(MomentModel::second_moment(&g, opts.strategy, ridge)?)
}

/// `S = (1/(J−1)) (X − μ1ᵀ)(X − μ1ᵀ)ᵀ + ridge I`
pub fn empirical_covariance(d: &DataSet, opts: MomentOptions) -> Result<MomentModel, EmpiricalError> {
    let j = d.sample_count();
    if j < 2 {
        return Err(EmpiricalError::InsufficientSamples { needed: 2, got: j });
    }
    let (c, mu) = centered(&d.x);
    let mut s = c.gram_outer();
    s.scale_mut(1.0 / (j - 1) as f64);
    let ridge = opts.ridge.resolve(&s);
    Ok(MomentModel::covariance(&s, mu, opts.strategy, ridge)?)
}

/// `Γ_XY = (1/J) X Yᵀ`
pub fn cross_moment(d: &DataSet) -> Result<DenseMatrix, EmpiricalError> {
    let mut c = d.x.matmul_t(d.observations()?)?;
    c.scale_mut(1.0 / d.sample_count() as f64);
    Ok(c)
}

/// Least-squares rank-constrained regression of `output` on `input`,
/// factored once for any number of ranks.
pub struct EmpiricalProblem {
    kind: ProblemKind,
    product: TruncatedProduct,
    input: DenseMatrix,
    output: DenseMatrix,
    input_mean: Option<Vec<f64>>,
    output_mean: Option<Vec<f64>>,
    input_rank: usize,
}

impl EmpiricalProblem {
    /// Minimizes `(1/J) ‖A input + b 1ᵀ − output‖²` over rank-`r` maps `A`
    /// (and free `b` in the affine form).
    pub fn new(kind: ProblemKind, input: &DenseMatrix, output: &DenseMatrix) -> Result<Self, EmpiricalError> {
        if input.cols() != output.cols() {
            return Err(EmpiricalError::SampleCountMismatch {
                x: input.cols(),
                y: output.cols(),
            });
        }
        let (xin, xout, mi, mo) = if kind.is_affine() {
            if input.cols() < 2 {
                return Err(EmpiricalError::InsufficientSamples {
                    needed: 2,
                    got: input.cols(),
                });
            }
            let (ci, mi) = centered(input);
            let (co, mo) = centered(output);
            (ci, co, Some(mi), Some(mo))
        } else {
            (input.clone(), output.clone(), None, None)
        };
        let f = svd(&xin, 0.0)?;
        let k = f.effective_rank;
        let vk = f.v_leading(k);
        // Σ⁻¹ Uᵀ over the numerical rank.
        let mut right = f.u_leading(k).transpose();
        for i in 0..k {
            let s = 1.0 / f.sigma[i];
            for j in 0..right.cols() {
                right[(i, j)] *= s;
            }
        }
        let m = xout.matmul(&vk)?;
        Ok(EmpiricalProblem {
            kind,
            product: TruncatedProduct::new(&m, &right)?,
            input: input.clone(),
            output: output.clone(),
            input_mean: mi,
            output_mean: mo,
            input_rank: k,
        })
    }

    pub fn available_rank(&self) -> usize {
        self.product.core.effective_rank
    }

    pub fn map_at(&self, r: usize) -> Result<OptimalMap, EmpiricalError> {
        if r == 0 {
            return Err(MappingError::Contract("rank must be at least 1".into()).into());
        }
        let a = self.product.at_rank(r);
        let bias = match (&self.input_mean, &self.output_mean) {
            (Some(mi), Some(mo)) => {
                let ami = a.mul_vec(mi)?;
                Some(mo.iter().zip(ami).map(|(o, v)| o - v).collect::<Vec<_>>())
            }
            _ => None,
        };
        let mut pred = a.matmul(&self.input)?;
        if let Some(b) = &bias {
            pred.add_to_columns(b);
        }
        let risk = pred.sub(&self.output)?.frobenius_norm_sq() / self.input.cols() as f64;
        let trace = ConstructionTrace {
            branch: Branch::LeastSquares,
            requested_rank: r,
            used_rank: self.product.used_rank(r),
            available_rank: self.available_rank(),
            clamped: self.product.is_clamped(r),
            tie: self.product.core.has_tie_at(r, TIE_TOLERANCE),
            signal_factor_rank: self.input_rank,
            observation_factor: None,
        };
        Ok(OptimalMap {
            a,
            bias,
            rank: r,
            kind: self.kind,
            risk,
            trace,
        })
    }
}

/// Regression problem for `kind` on `d`: forward maps `X → Y`, inverse and
/// denoise map `Y → X`, autoencode maps `X → X`.
pub fn empirical_problem(d: &DataSet, kind: ProblemKind) -> Result<EmpiricalProblem, EmpiricalError> {
    match kind.task {
        Task::Forward => EmpiricalProblem::new(kind, &d.x, d.observations()?),
        Task::Inverse | Task::Denoise => EmpiricalProblem::new(kind, d.observations()?, &d.x),
        Task::Autoencode => EmpiricalProblem::new(kind, &d.x, &d.x),
    }
}

pub fn empirical_map(d: &DataSet, kind: ProblemKind, r: usize) -> Result<OptimalMap, EmpiricalError> {
    empirical_problem(d, kind)?.map_at(r)
}

/// `Â = (Y V_X V_Xᵀ)_r X†`
pub fn empirical_forward_map(d: &DataSet, r: usize) -> Result<OptimalMap, EmpiricalError> {
    empirical_map(d, ProblemKind::new(Task::Forward, Form::Linear), r)
}

/// `Â = (X V_Y V_Yᵀ)_r Y†`
pub fn empirical_inverse_map(d: &DataSet, r: usize) -> Result<OptimalMap, EmpiricalError> {
    empirical_map(d, ProblemKind::new(Task::Inverse, Form::Linear), r)
}

/// Moment plug-in inverse estimator `(Γ_XY L_Y^{†ᵀ})_r L_Y†` with
/// `Γ_Y = (1/J) Y Yᵀ + ridge I` factored per `opts`.
pub fn plugin_inverse_map(d: &DataSet, r: usize, opts: MomentOptions) -> Result<OptimalMap, EmpiricalError> {
    let swapped = d.swapped()?;
    plugin_map(&swapped, r, opts, ProblemKind::new(Task::Inverse, Form::Linear))
}

/// Moment plug-in forward estimator `(Γ_YX L_X^{†ᵀ})_r L_X†`.
pub fn plugin_forward_map(d: &DataSet, r: usize, opts: MomentOptions) -> Result<OptimalMap, EmpiricalError> {
    plugin_map(d, r, opts, ProblemKind::new(Task::Forward, Form::Linear))
}

/// Regresses `d.y` on `d.x` through moments of the input.
fn plugin_map(d: &DataSet, r: usize, opts: MomentOptions, kind: ProblemKind) -> Result<OptimalMap, EmpiricalError> {
    if r == 0 {
        return Err(MappingError::Contract("rank must be at least 1".into()).into());
    }
    let input = empirical_second_moment(&DataSet::signals(d.x.clone())?, opts)?;
    let swapped = d.swapped()?;
    let cross = cross_moment(&swapped)?; // (1/J) out inᵀ
    let lin_pinv = input.factor.pseudoinverse()?;
    let m = cross.matmul_t(&lin_pinv)?;
    let product = TruncatedProduct::new(&m, &lin_pinv)?;
    let a = product.at_rank(r);
    let out = d.observations()?;
    let risk = a.matmul(&d.x)?.sub(out)?.frobenius_norm_sq() / d.sample_count() as f64;
    Ok(OptimalMap {
        trace: ConstructionTrace {
            branch: Branch::General,
            requested_rank: r,
            used_rank: product.used_rank(r),
            available_rank: product.core.effective_rank,
            clamped: product.is_clamped(r),
            tie: product.has_tie_at(r),
            signal_factor_rank: input.factor.width(),
            observation_factor: Some(opts.strategy),
        },
        a,
        bias: None,
        rank: r,
        kind,
        risk,
    })
}
