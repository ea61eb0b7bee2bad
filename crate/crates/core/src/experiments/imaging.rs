use serde::Serialize;

use crate::baselines::{train_encoder_decoder, TrainConfig};
use crate::datagen::{add_white_noise_with, build_blur_operator, synthetic_images, BlurSpec, ImageSpec};
use crate::empirical::DataSet;
use crate::error::Result;
use crate::linalg::{DenseMatrix, FactorStrategy};
use crate::mappings::{prepare, risk_of, Form, MomentModel, ProblemKind, ProblemSpec, Task};
use crate::metrics::mse;
use crate::rng::SeededRng;

/// Blurred, noisy synthetic images split into training and test sets.
#[derive(Clone, Debug)]
pub struct ImagingData {
    pub operator: DenseMatrix,
    pub noise_std: f64,
    pub train: DataSet,
    pub test: DataSet,
}

pub fn imaging_data(
    blur: &BlurSpec,
    images: &ImageSpec,
    noise_std: f64,
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<ImagingData> {
    let f = build_blur_operator(blur)?;
    let root = SeededRng::new(seed);
    let make = |count: usize, stream: u64| -> Result<DataSet> {
        let x = synthetic_images(images, count, &mut root.split(stream))?;
        let y = add_white_noise_with(&f.matmul(&x)?, noise_std, &mut root.split(stream + 1))?;
        Ok(DataSet::paired(x, y)?)
    };
    let train = make(train_count, 0)?;
    let test = make(test_count, 2)?;
    Ok(ImagingData {
        operator: f,
        noise_std,
        train,
        test,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImagingRow {
    pub task: Task,
    pub rank: usize,
    /// Bayes risk under the training moments.
    pub optimal_risk: f64,
    pub learned_risk: Option<f64>,
    pub optimal_test_mse: f64,
    pub learned_test_mse: Option<f64>,
}

/// Maps per task and rank, kept when requested.
#[derive(Clone, Debug, Default)]
pub struct ImagingMaps {
    /// `(task, rank, Â)`
    pub optimal: Vec<(Task, usize, DenseMatrix)>,
    /// `(task, rank, encoder, decoder)`
    pub learned: Vec<(Task, usize, DenseMatrix, DenseMatrix)>,
}

#[derive(Clone, Debug)]
pub struct ImagingSweep {
    pub rows: Vec<ImagingRow>,
    pub maps: ImagingMaps,
    /// Smallest rank whose leading eigenvalues of `Γ_X` hold 99.9% of its trace.
    pub effective_data_rank: usize,
}

/// Closed-form forward and inverse maps from the training second moment
/// `Γ_X` (ridged, Cholesky factored), the known blur and `Γ_E = s² I`,
/// compared with trained encoder-decoders at each rank.
pub fn imaging_sweep(
    data: &ImagingData,
    tasks: &[Task],
    ranks: &[usize],
    ridge: f64,
    training: Option<&TrainConfig>,
    keep_maps: bool,
) -> Result<ImagingSweep> {
    let train_x = DataSet::signals(data.train.x.clone())?;
    let gamma = {
        let mut g = train_x.x.gram_outer();
        g.scale_mut(1.0 / train_x.sample_count() as f64);
        g
    };
    let effective_data_rank = energy_rank(&gamma, 1e-3)?;
    let signal = MomentModel::second_moment(&gamma, FactorStrategy::CholeskyWithRidge, ridge)?;
    let m = data.operator.rows();
    let noise = MomentModel::second_moment(
        &DenseMatrix::identity(m).scale(data.noise_std * data.noise_std),
        FactorStrategy::PsdEigendecomposition,
        0.0,
    )?;
    let mut rows = Vec::new();
    let mut maps = ImagingMaps::default();
    for &task in tasks {
        let kind = ProblemKind::new(task, Form::Linear);
        let spec = ProblemSpec::new(
            kind,
            Some(data.operator.clone()),
            signal.clone(),
            Some(noise.clone()),
            ranks.first().copied().unwrap_or(1),
        )?
        .with_observation_factor(FactorStrategy::CholeskyWithRidge, 0.0);
        let prepared = prepare(&spec)?;
        let (train_in, train_out, test_in, test_out) = match task {
            Task::Forward => (&data.train.x, data.train.observations()?, &data.test.x, data.test.observations()?),
            _ => (data.train.observations()?, &data.train.x, data.test.observations()?, &data.test.x),
        };
        let oriented = DataSet::paired(train_in.clone(), train_out.clone())?;
        for &r in ranks {
            let map = prepared.map_at(r)?;
            let optimal_test_mse = mse(&map.a.matmul(test_in)?, test_out)?;
            let (mut learned_risk, mut learned_test_mse) = (None, None);
            if let Some(cfg) = training {
                let cfg = TrainConfig {
                    rank: r,
                    affine: false,
                    ..cfg.clone()
                };
                let t = train_encoder_decoder(&oriented, &cfg)?;
                let a = t.composed();
                learned_risk = Some(risk_of(&a, None, &spec)?);
                learned_test_mse = Some(mse(&a.matmul(test_in)?, test_out)?);
                if keep_maps {
                    maps.learned.push((task, r, t.encoder, t.decoder));
                }
            }
            rows.push(ImagingRow {
                task,
                rank: r,
                optimal_risk: map.risk,
                learned_risk,
                optimal_test_mse,
                learned_test_mse,
            });
            if keep_maps {
                maps.optimal.push((task, r, map.a));
            }
        }
    }
    Ok(ImagingSweep {
        rows,
        maps,
        effective_data_rank,
    })
}

fn energy_rank(gamma: &DenseMatrix, tail: f64) -> Result<usize> {
    let e = crate::linalg::symmetric_eigen(gamma)?;
    let total: f64 = e.values.iter().map(|v| v.max(0.0)).sum();
    let mut acc = 0.0;
    for (k, v) in e.values.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= (1.0 - tail) * total {
            return Ok(k + 1);
        }
    }
    Ok(e.values.len())
}
