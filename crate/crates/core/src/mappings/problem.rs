use serde::{Deserialize, Serialize};

use super::MappingError;
use crate::linalg::{symmetric_factor, DenseMatrix, FactorStrategy, SymmetricFactor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Forward,
    Inverse,
    Autoencode,
    Denoise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    Linear,
    Affine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemKind {
    pub task: Task,
    pub form: Form,
}

impl ProblemKind {
    pub const fn new(task: Task, form: Form) -> Self {
        ProblemKind { task, form }
    }

    pub fn is_affine(self) -> bool {
        self.form == Form::Affine
    }

    pub fn all() -> [ProblemKind; 8] {
        let mut out = [ProblemKind::new(Task::Forward, Form::Linear); 8];
        let tasks = [Task::Forward, Task::Inverse, Task::Autoencode, Task::Denoise];
        for (i, t) in tasks.into_iter().enumerate() {
            out[2 * i] = ProblemKind::new(t, Form::Linear);
            out[2 * i + 1] = ProblemKind::new(t, Form::Affine);
        }
        out
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = match self.task {
            Task::Forward => "forward",
            Task::Inverse => "inverse",
            Task::Autoencode => "autoencode",
            Task::Denoise => "denoise",
        };
        let k = match self.form {
            Form::Linear => "linear",
            Form::Affine => "affine",
        };
        write!(f, "{t}/{k}")
    }
}

/// A second moment `Γ` (uncentered) or covariance `S` (centered) with its
/// symmetric factor. `moment` holds the ridged matrix, so `factor` always
/// reproduces it.
#[derive(Clone, Debug)]
pub struct MomentModel {
    pub moment: DenseMatrix,
    pub factor: SymmetricFactor,
    pub mean: Option<Vec<f64>>,
    pub centered: bool,
}

impl MomentModel {
    /// Uncentered second moment `Γ`.
    pub fn second_moment(gamma: &DenseMatrix, strategy: FactorStrategy, ridge: f64) -> Result<Self, MappingError> {
        Self::build(gamma, None, false, strategy, ridge)
    }

    /// Covariance `S` with mean `μ`.
    pub fn covariance(
        s: &DenseMatrix,
        mean: Vec<f64>,
        strategy: FactorStrategy,
        ridge: f64,
    ) -> Result<Self, MappingError> {
        Self::build(s, Some(mean), true, strategy, ridge)
    }

    fn build(
        m: &DenseMatrix,
        mean: Option<Vec<f64>>,
        centered: bool,
        strategy: FactorStrategy,
        ridge: f64,
    ) -> Result<Self, MappingError> {
        if let Some(mu) = &mean {
            if mu.len() != m.rows() {
                return Err(MappingError::Dimension(format!(
                    "mean has length {} but moment is {}x{}",
                    mu.len(),
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let factor = symmetric_factor(m, strategy, ridge)?;
        let moment = if ridge > 0.0 { m.add_identity(ridge) } else { m.clone() };
        Ok(MomentModel {
            moment,
            factor,
            mean,
            centered,
        })
    }

    pub fn dim(&self) -> usize {
        self.moment.rows()
    }

    pub fn ridge(&self) -> f64 {
        self.factor.ridge
    }

    /// Same moment with `mean = μ`; the factor is reused.
    pub fn with_mean(mut self, mean: Vec<f64>) -> Self {
        self.mean = Some(mean);
        self
    }
}

/// Everything the closed-form solvers need: `F` (absent means identity),
/// the signal moments, optional noise moments, the rank and the kind.
///
/// Noise is taken to be zero-mean and independent of the signal, so its
/// second moment and covariance coincide.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub forward_operator: Option<DenseMatrix>,
    pub signal: MomentModel,
    pub noise: Option<MomentModel>,
    pub rank: usize,
    pub kind: ProblemKind,
    /// Factorization used for the observation moment `Γ_Y` / `S_Y`.
    pub observation_strategy: FactorStrategy,
    pub observation_ridge: f64,
}

impl ProblemSpec {
    pub fn new(
        kind: ProblemKind,
        forward_operator: Option<DenseMatrix>,
        signal: MomentModel,
        noise: Option<MomentModel>,
        rank: usize,
    ) -> Result<Self, MappingError> {
        let spec = ProblemSpec {
            forward_operator,
            signal,
            noise,
            rank,
            kind,
            observation_strategy: FactorStrategy::PsdEigendecomposition,
            observation_ridge: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Opt into a different factorization of the observation moment.
    pub fn with_observation_factor(mut self, strategy: FactorStrategy, ridge: f64) -> Self {
        self.observation_strategy = strategy;
        self.observation_ridge = ridge;
        self
    }

    pub fn with_rank(&self, rank: usize) -> Self {
        let mut s = self.clone();
        s.rank = rank;
        s
    }

    pub fn signal_dim(&self) -> usize {
        self.signal.dim()
    }

    pub fn observation_dim(&self) -> usize {
        self.forward_operator.as_ref().map_or(self.signal_dim(), |f| f.rows())
    }

    /// `F`, materializing the identity when absent.
    pub fn operator(&self) -> DenseMatrix {
        self.forward_operator
            .clone()
            .unwrap_or_else(|| DenseMatrix::identity(self.signal_dim()))
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        if self.rank == 0 {
            return Err(MappingError::Contract("rank must be at least 1".into()));
        }
        let n = self.signal_dim();
        if let Some(f) = &self.forward_operator {
            if f.cols() != n {
                return Err(MappingError::Dimension(format!(
                    "forward operator is {}x{} but signal dimension is {n}",
                    f.rows(),
                    f.cols()
                )));
            }
        }
        let m = self.observation_dim();
        if let Some(e) = &self.noise {
            if e.dim() != m {
                return Err(MappingError::Dimension(format!(
                    "noise dimension {} does not match observation dimension {m}",
                    e.dim()
                )));
            }
            if let Some(mu) = &e.mean {
                if mu.iter().any(|&x| x != 0.0) {
                    return Err(MappingError::Contract("noise must be zero-mean".into()));
                }
            }
        }
        match self.kind.task {
            Task::Forward | Task::Inverse => {
                if self.forward_operator.is_none() {
                    return Err(MappingError::Contract(format!("{} requires a forward operator", self.kind)));
                }
            }
            Task::Autoencode => {
                if self.forward_operator.is_some() {
                    return Err(MappingError::Contract("autoencoding takes no forward operator".into()));
                }
            }
            Task::Denoise => {
                if self.forward_operator.is_some() {
                    return Err(MappingError::Contract("denoising takes no forward operator".into()));
                }
                if self.noise.is_none() {
                    return Err(MappingError::Contract("denoising requires noise moments".into()));
                }
            }
        }
        match self.kind.form {
            Form::Linear if self.signal.centered => Err(MappingError::Contract(
                "linear kinds take an uncentered second moment".into(),
            )),
            Form::Affine if !self.signal.centered || self.signal.mean.is_none() => Err(MappingError::Contract(
                "affine kinds take a covariance with its mean".into(),
            )),
            _ => Ok(()),
        }
    }
}
