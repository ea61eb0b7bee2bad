use serde::Serialize;

use crate::baselines::{train_encoder_decoder, TrainConfig};
use crate::empirical::{plugin_inverse_map, MomentOptions, Ridge};
use crate::error::Result;
use crate::linalg::{DenseMatrix, FactorStrategy};
use crate::metrics::{swe_error_report, ErrorReport, MaeNormalization};
use crate::rng::SeededRng;
use crate::swe::{build_swe_dataset, Family, SweDataset, SweDatasetSpec, SweParams};

#[derive(Clone, Debug)]
pub struct SweDatasets {
    pub train: SweDataset,
    pub test_in: SweDataset,
    pub test_out: SweDataset,
}

/// Training, in-distribution test and out-of-distribution test sets, each
/// from its own stream of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn swe_datasets(
    params: &SweParams,
    train_families: &[Family],
    ood_families: &[Family],
    train_per_family: usize,
    test_per_family: usize,
    ood_per_family: usize,
    noise_std: f64,
    observation_step: usize,
    seed: u64,
) -> Result<SweDatasets> {
    let root = SeededRng::new(seed);
    let build = |families: &[Family], count: usize, stream: u64| {
        build_swe_dataset(&SweDatasetSpec {
            count_per_family: count,
            families: families.to_vec(),
            params: params.clone(),
            noise_std,
            seed: root.split(stream).next_seed(),
            observation_step,
        })
    };
    Ok(SweDatasets {
        train: build(train_families, train_per_family, 0)?,
        test_in: build(train_families, test_per_family, 1)?,
        test_out: build(ood_families, ood_per_family, 2)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweInverseResult {
    pub rank: usize,
    pub optimal_in: ErrorReport,
    pub optimal_out: ErrorReport,
    pub learned_in: Option<ErrorReport>,
    pub learned_out: Option<ErrorReport>,
}

#[derive(Clone, Debug)]
pub struct SweMaps {
    pub optimal: DenseMatrix,
    /// `(encoder, decoder)`
    pub learned: Option<(DenseMatrix, DenseMatrix)>,
}

/// Plug-in inverse map `(Γ_XY L_Y^{-ᵀ})_r L_Y^{-1}` with
/// `Γ_Y = (1/J) Y Yᵀ + ridge I` Cholesky factored, against a trained
/// linear encoder-decoder, both scored on the two test sets.
pub fn swe_inverse(
    sets: &SweDatasets,
    rank: usize,
    ridge: f64,
    training: Option<&TrainConfig>,
    mae_norm: MaeNormalization,
) -> Result<(SweInverseResult, SweMaps)> {
    let opts = MomentOptions {
        ridge: Ridge::Absolute(ridge),
        strategy: FactorStrategy::CholeskyWithRidge,
    };
    let map = plugin_inverse_map(&sets.train.data, rank, opts)?;
    let layout = &sets.train.layout;
    let score = |pred: DenseMatrix, set: &SweDataset| swe_error_report(&pred, &set.data.x, layout, mae_norm);
    let optimal_in = score(map.apply(sets.test_in.data.observations()?)?, &sets.test_in)?;
    let optimal_out = score(map.apply(sets.test_out.data.observations()?)?, &sets.test_out)?;
    let mut learned_map = None;
    let (learned_in, learned_out) = match training {
        Some(cfg) => {
            let cfg = TrainConfig {
                rank,
                affine: false,
                ..cfg.clone()
            };
            let t = train_encoder_decoder(&sets.train.data.swapped()?, &cfg)?;
            let scores = (
                Some(score(t.apply(sets.test_in.data.observations()?)?, &sets.test_in)?),
                Some(score(t.apply(sets.test_out.data.observations()?)?, &sets.test_out)?),
            );
            learned_map = Some((t.encoder, t.decoder));
            scores
        }
        None => (None, None),
    };
    let result = SweInverseResult {
        rank,
        optimal_in,
        optimal_out,
        learned_in,
        learned_out,
    };
    Ok((
        result,
        SweMaps {
            optimal: map.a,
            learned: learned_map,
        },
    ))
}
