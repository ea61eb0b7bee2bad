//! Error metrics and risk-versus-rank sweep tables.

use serde::Serialize;
use thiserror::Error;

use crate::baselines::{train_encoder_decoder, TrainConfig, TrainError};
use crate::empirical::{empirical_problem, DataSet, EmpiricalError};
use crate::linalg::{DenseMatrix, LinalgError};
use crate::mappings::{ProblemKind, Task};
use crate::swe::VariableLayout;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: prediction {pred:?} vs truth {truth:?}")]
    Shape { pred: (usize, usize), truth: (usize, usize) },
    #[error("truth has zero norm")]
    ZeroTruth,
    #[error("no samples")]
    Empty,
    #[error("ranks must be positive and ascending, got {0:?}")]
    Ranks(Vec<usize>),
    #[error("at rank {rank}: {source}")]
    Builder {
        rank: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
}

fn check(pred: &DenseMatrix, truth: &DenseMatrix) -> Result<(), MetricsError> {
    if pred.shape() != truth.shape() {
        return Err(MetricsError::Shape {
            pred: pred.shape(),
            truth: truth.shape(),
        });
    }
    if truth.cols() == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// `(1/J) ‖pred − truth‖_F²`
pub fn mse(pred: &DenseMatrix, truth: &DenseMatrix) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    Ok(pred.sub(truth)?.frobenius_norm_sq() / truth.cols() as f64)
}

/// `‖pred − truth‖_F / ‖truth‖_F`
pub fn nrmse(pred: &DenseMatrix, truth: &DenseMatrix) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let t = truth.frobenius_norm();
    if t == 0.0 {
        return Err(MetricsError::ZeroTruth);
    }
    Ok(pred.sub(truth)?.frobenius_norm() / t)
}

/// Divisor applied to the elementwise ℓ₁ error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaeNormalization {
    /// Column count `J` only.
    #[default]
    PerSample,
    /// Rows times columns.
    PerEntry,
}

/// `(1/J) Σ |pred − truth|`. The divisor is the column count alone, so the
/// value grows with the row count.
pub fn mae(pred: &DenseMatrix, truth: &DenseMatrix) -> Result<f64, MetricsError> {
    mae_with(pred, truth, MaeNormalization::PerSample)
}

pub fn mae_with(pred: &DenseMatrix, truth: &DenseMatrix, norm: MaeNormalization) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let l1: f64 = pred.as_slice().iter().zip(truth.as_slice()).map(|(p, t)| (p - t).abs()).sum();
    let denom = match norm {
        MaeNormalization::PerSample => truth.cols(),
        MaeNormalization::PerEntry => truth.cols() * truth.rows().max(1),
    };
    Ok(l1 / denom as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub total_nrmse: f64,
    pub eta_nrmse: f64,
    pub u_mae: f64,
    pub v_mae: f64,
    pub mse: f64,
    pub sample_count: usize,
}

/// Scores a shallow-water reconstruction, slicing variables by `layout`.
pub fn swe_error_report(
    pred: &DenseMatrix,
    truth: &DenseMatrix,
    layout: &VariableLayout,
    norm: MaeNormalization,
) -> Result<ErrorReport, MetricsError> {
    check(pred, truth)?;
    if layout.eta.end > truth.rows() {
        return Err(MetricsError::Shape {
            pred: pred.shape(),
            truth: (layout.eta.end, truth.cols()),
        });
    }
    let slice = |m: &DenseMatrix, r: &std::ops::Range<usize>| m.row_range(r.clone());
    Ok(ErrorReport {
        total_nrmse: nrmse(pred, truth)?,
        eta_nrmse: nrmse(&slice(pred, &layout.eta), &slice(truth, &layout.eta))?,
        u_mae: mae_with(&slice(pred, &layout.u), &slice(truth, &layout.u), norm)?,
        v_mae: mae_with(&slice(pred, &layout.v), &slice(truth, &layout.v), norm)?,
        mse: mse(pred, truth)?,
        sample_count: truth.cols(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub rank: usize,
    pub optimal_risk: f64,
    pub learned_risk: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Largest increase of the optimal column between consecutive ranks.
    pub fn max_optimal_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].optimal_risk - w[0].optimal_risk)
            .fold(0.0, f64::max)
    }

    /// Ranks at which the learned risk falls below the optimal one by more
    /// than `slack`.
    pub fn learned_below_optimal(&self, slack: f64) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.learned_risk.is_some_and(|l| l < r.optimal_risk - slack))
            .map(|r| r.rank)
            .collect()
    }
}

type BoxedError = Box<dyn std::error::Error + Send + Sync>;

/// Tabulates `optimal(r)` and, when given, `learned(r)` over `ranks`.
pub fn risk_rank_sweep<F, G>(ranks: &[usize], mut optimal: F, mut learned: Option<G>) -> Result<SweepTable, MetricsError>
where
    F: FnMut(usize) -> Result<f64, BoxedError>,
    G: FnMut(usize) -> Result<f64, BoxedError>,
{
    if ranks.is_empty() || ranks[0] == 0 || ranks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::Ranks(ranks.to_vec()));
    }
    let mut rows = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let optimal_risk = optimal(rank).map_err(|source| MetricsError::Builder { rank, source })?;
        let learned_risk = match learned.as_mut() {
            Some(g) => Some(g(rank).map_err(|source| MetricsError::Builder { rank, source })?),
            None => None,
        };
        rows.push(SweepRow {
            rank,
            optimal_risk,
            learned_risk,
        });
    }
    Ok(SweepTable { rows })
}

/// `(input, target)` for `task`: forward `X → Y`, inverse and denoise
/// `Y → X`, autoencode `X → X`.
pub fn task_pair(d: &DataSet, task: Task) -> Result<(&DenseMatrix, &DenseMatrix), EmpiricalError> {
    Ok(match task {
        Task::Forward => (&d.x, d.observations()?),
        Task::Inverse | Task::Denoise => (d.observations()?, &d.x),
        Task::Autoencode => (&d.x, &d.x),
    })
}

/// Sweep of the empirical optimal map against the trained encoder-decoder,
/// both fitted on `train` and scored by MSE on `eval`.
pub fn empirical_rank_sweep(
    train: &DataSet,
    eval: &DataSet,
    kind: ProblemKind,
    ranks: &[usize],
    learned: Option<&TrainConfig>,
) -> Result<SweepTable, MetricsError> {
    let problem = empirical_problem(train, kind)?;
    let (eval_in, eval_out) = task_pair(eval, kind.task)?;
    let (train_in, train_out) = task_pair(train, kind.task)?;
    let oriented = DataSet::paired(train_in.clone(), train_out.clone())?;
    let optimal = |r: usize| -> Result<f64, BoxedError> {
        let map = problem.map_at(r)?;
        Ok(mse(&map.apply(eval_in)?, eval_out)?)
    };
    let learned = learned.map(|cfg| {
        let oriented = &oriented;
        move |r: usize| -> Result<f64, BoxedError> {
            let cfg = TrainConfig {
                rank: r,
                affine: kind.is_affine(),
                ..cfg.clone()
            };
            let map = train_encoder_decoder(oriented, &cfg).map_err(|e: TrainError| Box::new(e) as BoxedError)?;
            Ok(mse(&map.apply(eval_in)?, eval_out)?)
        }
    });
    risk_rank_sweep(ranks, optimal, learned)
}
