//! Closed-form optimal rank-constrained maps for the forward, inverse,
//! autoencoding and denoising problems, in linear and affine form.
//!
//! Every solver has the shape `Â = (M)_r R` for a problem-specific pair
//! `(M, R)`:
//!
//! | task       | `M`                 | `R`     |
//! |------------|---------------------|---------|
//! | forward    | `F L_X`             | `L_X†`  |
//! | inverse    | `Γ_X Fᵀ L_Y^{†ᵀ}`   | `L_Y†`  |
//! | autoencode | `L_X`               | `L_X†`  |
//! | denoise    | `Γ_X L_Y^{†ᵀ}`      | `L_Y†`  |
//!
//! with `Γ_Y = F Γ_X Fᵀ + Γ_E`. Affine variants substitute covariances and
//! their factors `K` and add the bias that maps the signal mean correctly.

mod problem;

pub use problem::{Form, MomentModel, ProblemKind, ProblemSpec, Task};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{symmetric_factor, DenseMatrix, FactorStrategy, LinalgError, TruncatedProduct};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("expected a {expected} problem, got {got}")]
    KindMismatch { expected: ProblemKind, got: ProblemKind },
}

/// Which closed-form simplification the constructed map coincides with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Rank-limited general formula.
    General,
    /// Forward, `r ≥ rank(F L_X)` and `L_X` full rank: `Â = F`.
    OperatorRecovery,
    /// Forward, `r ≥ rank(F L_X)` and `rank(L_X) = k < n`: `Â = F U_k U_kᵀ`.
    ProjectedOperator,
    /// Linear inverse at full rank: `Â = Γ_X Fᵀ Γ_Y†`.
    FullRankInverse,
    /// Affine inverse at full rank: `Â = S_X Fᵀ S_Y†`.
    Foster,
    /// Denoising at full rank: `Â = Γ_X (Γ_X + Γ_E)†`.
    Wiener,
    /// Autoencoding with `r ≥ rank(L_X) = n`: `Â = I`.
    IdentityRecovery,
    /// Autoencoding below full rank: `Â = U_r U_rᵀ`.
    Projector,
    /// Sample least squares `(Y V Vᵀ)_r X†`.
    LeastSquares,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstructionTrace {
    pub branch: Branch,
    pub requested_rank: usize,
    /// `min(requested_rank, available_rank)`.
    pub used_rank: usize,
    /// Numerical rank of `M`.
    pub available_rank: usize,
    pub clamped: bool,
    /// `σ_r(M) = σ_{r+1}(M)`: the rank-`r` minimizer is not unique and the
    /// returned map is the deterministic choice of the SVD ordering.
    pub tie: bool,
    /// Column rank of the signal factor `L_X` / `K_X`.
    pub signal_factor_rank: usize,
    pub observation_factor: Option<FactorStrategy>,
}

#[derive(Clone, Debug)]
pub struct OptimalMap {
    pub a: DenseMatrix,
    pub bias: Option<Vec<f64>>,
    pub rank: usize,
    pub kind: ProblemKind,
    /// Bayes risk of `(a, bias)` under the moments it was built from.
    pub risk: f64,
    pub trace: ConstructionTrace,
}

impl OptimalMap {
    /// `A x + b` for every column of `x`.
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let mut y = self.a.matmul(x)?;
        if let Some(b) = &self.bias {
            y.add_to_columns(b);
        }
        Ok(y)
    }
}

/// A problem whose rank-independent factorizations are done, so maps at
/// many ranks cost one small product each.
pub struct PreparedProblem<'a> {
    spec: &'a ProblemSpec,
    product: TruncatedProduct,
    observation_factor: Option<FactorStrategy>,
}

/// Factors `Γ_Y = F Γ_X Fᵀ + Γ_E` (or its covariance analogue).
fn observation_factor(spec: &ProblemSpec) -> Result<crate::linalg::SymmetricFactor, MappingError> {
    let gx = &spec.signal.moment;
    let mut gy = match &spec.forward_operator {
        Some(f) => f.matmul(gx)?.matmul_t(f)?,
        None => gx.clone(),
    };
    if let Some(e) = &spec.noise {
        gy = gy.add(&e.moment)?;
    }
    Ok(symmetric_factor(
        &gy.symmetrize(),
        spec.observation_strategy,
        spec.observation_ridge,
    )?)
}

pub fn prepare(spec: &ProblemSpec) -> Result<PreparedProblem<'_>, MappingError> {
    spec.validate()?;
    let lx = &spec.signal.factor;
    let (m, right, obs) = match spec.kind.task {
        Task::Forward => {
            let f = spec.forward_operator.as_ref().expect("validated");
            (f.matmul(&lx.l)?, lx.pseudoinverse()?, None)
        }
        Task::Autoencode => (lx.l.clone(), lx.pseudoinverse()?, None),
        Task::Inverse | Task::Denoise => {
            let ly = observation_factor(spec)?;
            let ly_pinv = ly.pseudoinverse()?;
            let gx = &spec.signal.moment;
            let cross = match &spec.forward_operator {
                Some(f) => gx.matmul_t(f)?,
                None => gx.clone(),
            };
            (cross.matmul_t(&ly_pinv)?, ly_pinv, Some(ly.source_kind))
        }
    };
    Ok(PreparedProblem {
        spec,
        product: TruncatedProduct::new(&m, &right)?,
        observation_factor: obs,
    })
}

impl PreparedProblem<'_> {
    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    /// Numerical rank of `M`; ranks at or above it give the same map.
    pub fn available_rank(&self) -> usize {
        self.product.core.effective_rank
    }

    fn branch(&self, r: usize) -> Branch {
        let saturated = r >= self.available_rank();
        let n = self.spec.signal_dim();
        let k = self.spec.signal.factor.width();
        match self.spec.kind.task {
            Task::Forward if saturated && k == n => Branch::OperatorRecovery,
            Task::Forward if saturated => Branch::ProjectedOperator,
            Task::Inverse if saturated && self.spec.kind.is_affine() => Branch::Foster,
            Task::Inverse if saturated => Branch::FullRankInverse,
            Task::Denoise if saturated => Branch::Wiener,
            Task::Autoencode if saturated && k == n => Branch::IdentityRecovery,
            Task::Autoencode => Branch::Projector,
            _ => Branch::General,
        }
    }

    pub fn map_at(&self, r: usize) -> Result<OptimalMap, MappingError> {
        if r == 0 {
            return Err(MappingError::Contract("rank must be at least 1".into()));
        }
        let spec = self.spec;
        let a = match spec.kind.task {
            // `(L)_r L† = U_r U_rᵀ`; build the projector directly so it is
            // exactly symmetric.
            Task::Autoencode => self.product.core.u_leading(self.product.used_rank(r)).gram_outer(),
            _ => self.product.at_rank(r),
        };
        let bias = if spec.kind.is_affine() {
            let mu = spec.signal.mean.as_ref().expect("validated");
            Some(affine_bias(spec, &a, mu)?)
        } else {
            None
        };
        let trace = ConstructionTrace {
            branch: self.branch(r),
            requested_rank: r,
            used_rank: self.product.used_rank(r),
            available_rank: self.available_rank(),
            clamped: self.product.is_clamped(r),
            tie: self.product.has_tie_at(r),
            signal_factor_rank: spec.signal.factor.width(),
            observation_factor: self.observation_factor,
        };
        let mut map = OptimalMap {
            a,
            bias,
            rank: r,
            kind: spec.kind,
            risk: 0.0,
            trace,
        };
        map.risk = bayes_risk(&map, spec)?;
        Ok(map)
    }
}

/// Bias that makes the affine map exact on the mean.
fn affine_bias(spec: &ProblemSpec, a: &DenseMatrix, mu: &[f64]) -> Result<Vec<f64>, MappingError> {
    let amu = match (spec.kind.task, &spec.forward_operator) {
        // (I − A F) μ
        (Task::Inverse, Some(f)) => {
            let fmu = f.mul_vec(mu)?;
            let afmu = a.mul_vec(&fmu)?;
            return Ok(mu.iter().zip(afmu).map(|(m, v)| m - v).collect());
        }
        _ => a.mul_vec(mu)?,
    };
    // (F − A) μ for forward; (I − A) μ for autoencode and denoise.
    let target = match (spec.kind.task, &spec.forward_operator) {
        (Task::Forward, Some(f)) => f.mul_vec(mu)?,
        _ => mu.to_vec(),
    };
    Ok(target.iter().zip(amu).map(|(t, v)| t - v).collect())
}

fn require(spec: &ProblemSpec, task: Task, form: Form) -> Result<(), MappingError> {
    let expected = ProblemKind::new(task, form);
    if spec.kind != expected {
        return Err(MappingError::KindMismatch {
            expected,
            got: spec.kind,
        });
    }
    Ok(())
}

/// Optimal map for whatever kind `spec` declares.
pub fn optimal_map(spec: &ProblemSpec) -> Result<OptimalMap, MappingError> {
    prepare(spec)?.map_at(spec.rank)
}

/// `Â = (F L_X)_r L_X†`
pub fn optimal_forward(spec: &ProblemSpec) -> Result<OptimalMap, MappingError> {
    require(spec, Task::Forward, Form::Linear)?;
    optimal_map(spec)
}

/// `Â = (F K_X)_r K_X†`, `b̂ = (F − Â) μ_X`
pub fn optimal_forward_affine(spec: &ProblemSpec) -> Result<OptimalMap, MappingError> {
    require(spec, Task::Forward, Form::Affine)?;
    optimal_map(spec)
}

/// `Â = (Γ_X Fᵀ L_Y^{†ᵀ})_r L_Y†`
pub fn optimal_inverse(spec: &ProblemSpec) -> Result<OptimalMap, MappingError> {
    require(spec, Task::Inverse, Form::Linear)?;
    optimal_map(spec)
}

/// `Â = (S_X Fᵀ K_Y^{†ᵀ})_r K_Y†`, `b̂ = (I − Â F) μ_X`
pub fn optimal_inverse_affine(spec: &ProblemSpec) -> Result<OptimalMap, MappingError> {
    require(spec, Task::Inverse, Form::Affine)?;
    optimal_map(spec)
}

/// `Â = U_{L,r} U_{L,r}ᵀ`, plus `b̂ = (I − Â) μ_X` in the affine form.
pub fn optimal_autoencoder(spec: &ProblemSpec) -> Result<OptimalMap, MappingError> {
    if spec.kind.task != Task::Autoencode {
        return Err(MappingError::KindMismatch {
            expected: ProblemKind::new(Task::Autoencode, spec.kind.form),
            got: spec.kind,
        });
    }
    optimal_map(spec)
}

/// `Â = (Γ_X L_Y^{†ᵀ})_r L_Y†` with `Γ_Y = Γ_X + Γ_E`, plus `b̂ = (I − Â) μ_X`
/// in the affine form.
pub fn optimal_denoiser(spec: &ProblemSpec) -> Result<OptimalMap, MappingError> {
    if spec.kind.task != Task::Denoise {
        return Err(MappingError::KindMismatch {
            expected: ProblemKind::new(Task::Denoise, spec.kind.form),
            got: spec.kind,
        });
    }
    optimal_map(spec)
}

/// Expected squared error of `(A, b)` under the spec's moments, evaluated
/// through the symmetric factors so that every term is a squared norm.
///
/// * forward: `‖(A − F) L_X‖² + tr Γ_E`
/// * inverse: `‖(A F − I) L_X‖² + ‖A L_E‖²`
///
/// Autoencoding and denoising use `F = I`. Affine kinds add the squared
/// mean error `‖(A − F) μ + b‖²` or `‖(A F − I) μ + b‖²`.
pub fn bayes_risk(map: &OptimalMap, spec: &ProblemSpec) -> Result<f64, MappingError> {
    if map.kind != spec.kind {
        return Err(MappingError::KindMismatch {
            expected: spec.kind,
            got: map.kind,
        });
    }
    risk_of(&map.a, map.bias.as_deref(), spec)
}

/// [`bayes_risk`] for an arbitrary `(A, b)` of the right shape.
pub fn risk_of(a: &DenseMatrix, bias: Option<&[f64]>, spec: &ProblemSpec) -> Result<f64, MappingError> {
    let n = spec.signal_dim();
    let m = spec.observation_dim();
    let expected = match spec.kind.task {
        Task::Forward => (m, n),
        Task::Inverse => (n, m),
        Task::Autoencode | Task::Denoise => (n, n),
    };
    if a.shape() != expected {
        return Err(MappingError::Dimension(format!(
            "map is {:?} but {} expects {expected:?}",
            a.shape(),
            spec.kind
        )));
    }
    if spec.kind.is_affine() != bias.is_some() {
        return Err(MappingError::Contract(format!(
            "{} map {} a bias",
            spec.kind,
            if bias.is_some() { "must not carry" } else { "needs" }
        )));
    }
    let lx = &spec.signal.factor.l;
    // Signal error operator: A − F (forward) or A F − I (inverse side).
    let err_op = match spec.kind.task {
        Task::Forward => a.sub(spec.forward_operator.as_ref().expect("validated"))?,
        Task::Autoencode => a.add_identity(-1.0),
        Task::Inverse => a.matmul(spec.forward_operator.as_ref().expect("validated"))?.add_identity(-1.0),
        Task::Denoise => a.add_identity(-1.0),
    };
    let mut risk = err_op.matmul(lx)?.frobenius_norm_sq();
    if let Some(e) = &spec.noise {
        risk += match spec.kind.task {
            Task::Forward | Task::Autoencode => e.moment.trace(),
            Task::Inverse | Task::Denoise => a.matmul(&e.factor.l)?.frobenius_norm_sq(),
        };
    }
    if let Some(b) = bias {
        if b.len() != a.rows() {
            return Err(MappingError::Dimension(format!(
                "bias has length {} but map has {} rows",
                b.len(),
                a.rows()
            )));
        }
        let mu = spec.signal.mean.as_ref().expect("validated");
        let off = err_op.mul_vec(mu)?;
        risk += off.iter().zip(b).map(|(o, b)| (o + b) * (o + b)).sum::<f64>();
    }
    Ok(risk)
}

#[cfg(test)]
mod tests;
