use serde::Serialize;

use crate::baselines::{train_encoder_decoder, TrainConfig};
use crate::datagen::{synthetic_market, SyntheticMarketSpec};
use crate::empirical::{empirical_map, DataSet};
use crate::error::Result;
use crate::factors::{
    aligned_factor_correlations, cumulative_explained_variance, factor_balance, procrustes_align, varimax_rotate,
    LatentFactors, VarimaxOptions,
};
use crate::linalg::{svd, DenseMatrix};
use crate::mappings::{Form, ProblemKind, Task};
use crate::metrics::mse;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinanceSeedResult {
    pub seed: u64,
    /// `(1/T) ‖Â X + b − X‖²` of the optimal affine autoencoder.
    pub optimal_mse: f64,
    pub learned_mse: Option<f64>,
    pub cev: Vec<f64>,
    pub total_cev: f64,
    pub factor_balance: f64,
    /// Post-alignment absolute correlation with each true factor; empty
    /// without ground truth.
    pub correlations: Vec<Option<f64>>,
    /// `max |RᵀR − I|` of the Varimax rotation.
    pub varimax_orthogonality: f64,
    pub varimax_degenerate: bool,
    pub procrustes_orthogonality: Option<f64>,
    pub procrustes_rank_deficient: Option<bool>,
}

/// Fitted quantities kept alongside the scores.
#[derive(Clone, Debug)]
pub struct FinanceFit {
    pub map: DenseMatrix,
    pub bias: Vec<f64>,
    /// Varimax-rotated loadings, `A x r`.
    pub loadings: DenseMatrix,
    /// Rotated scores, `T x r`.
    pub scores: DenseMatrix,
}

/// [`finance_returns`] on a freshly generated synthetic market.
pub fn finance_seed(
    spec: &SyntheticMarketSpec,
    rank: usize,
    training: Option<&TrainConfig>,
) -> Result<(FinanceSeedResult, FinanceFit)> {
    let market = synthetic_market(spec)?;
    finance_returns(&market.returns, Some(&market.true_factors), rank, training, spec.seed)
}

/// Optimal affine autoencoder of rank `rank` on returns (`T x A`), its
/// Varimax-rotated latent factors, their alignment to `truth` when known,
/// and an optional trained affine baseline.
pub fn finance_returns(
    returns: &DenseMatrix,
    truth: Option<&DenseMatrix>,
    rank: usize,
    training: Option<&TrainConfig>,
    seed: u64,
) -> Result<(FinanceSeedResult, FinanceFit)> {
    let x = returns.transpose();
    let d = DataSet::signals(x.clone())?;
    let map = empirical_map(&d, ProblemKind::new(Task::Autoencode, Form::Affine), rank)?;
    let optimal_mse = mse(&map.apply(&x)?, &x)?;

    let mu = x.column_mean();
    let mut centered = x.clone();
    centered.add_to_columns(&mu.iter().map(|m| -m).collect::<Vec<_>>());
    let basis = svd(&centered, 0.0)?.u_leading(rank);
    let latent = LatentFactors::from_encoder(&basis.transpose(), &centered)?;
    let rotated = varimax_rotate(&latent, VarimaxOptions::default())?;
    let ev = cumulative_explained_variance(&rotated.factors, returns)?;
    let balance = factor_balance(&ev.per_factor)?;
    let (correlations, procrustes_orthogonality, procrustes_rank_deficient) = match truth {
        Some(t) => {
            let fit = procrustes_align(&rotated.factors.scores, t)?;
            (
                aligned_factor_correlations(&fit.aligned, t)?,
                Some(orthogonality_error(&fit.rotation)),
                Some(fit.rank_deficient),
            )
        }
        None => (Vec::new(), None, None),
    };

    let learned_mse = match training {
        Some(cfg) => {
            let cfg = TrainConfig {
                rank,
                affine: true,
                seed,
                ..cfg.clone()
            };
            let t = train_encoder_decoder(&DataSet::paired(x.clone(), x.clone())?, &cfg)?;
            Some(mse(&t.apply(&x)?, &x)?)
        }
        None => None,
    };
    let result = FinanceSeedResult {
        seed,
        optimal_mse,
        learned_mse,
        total_cev: ev.total,
        cev: ev.per_factor,
        factor_balance: balance,
        correlations,
        varimax_orthogonality: orthogonality_error(&rotated.rotation),
        varimax_degenerate: rotated.degenerate,
        procrustes_orthogonality,
        procrustes_rank_deficient,
    };
    let fit = FinanceFit {
        map: map.a,
        bias: map.bias.unwrap_or_default(),
        loadings: rotated.factors.loadings,
        scores: rotated.factors.scores,
    };
    Ok((result, fit))
}

fn orthogonality_error(r: &DenseMatrix) -> f64 {
    r.t_matmul(r)
        .expect("square")
        .sub(&DenseMatrix::identity(r.cols()))
        .expect("same shape")
        .max_abs()
}
