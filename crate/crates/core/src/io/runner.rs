use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::matrix_file::{read_returns_csv, write_binary, write_table};
use super::IoError;
use crate::error::Result;
use crate::experiments::{
    finance_returns, finance_seed, imaging_data, imaging_sweep, swe_datasets, swe_inverse, ImagingRow,
};
use crate::linalg::DenseMatrix;
use crate::mappings::Task;
use crate::metrics::{empirical_rank_sweep, ErrorReport};
use crate::empirical::DataSet;

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "RKMP_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Datasets only.
    Generate,
    /// Datasets and fitted maps.
    Fit,
    /// Datasets and metric tables.
    Evaluate,
    /// Datasets and a risk-versus-rank table.
    Sweep,
    /// Everything the experiment produces.
    Run,
}

impl Stage {
    fn fits(self) -> bool {
        matches!(self, Stage::Fit | Stage::Run)
    }

    fn evaluates(self) -> bool {
        matches!(self, Stage::Evaluate | Stage::Run)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManifestFile {
    pub name: String,
    pub bytes: u64,
}

/// Written as `manifest.json`; contains no timestamps, so equal configs
/// give equal manifests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub library: String,
    pub version: String,
    pub stage: Stage,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub files: Vec<ManifestFile>,
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn matrix(&mut self, name: &str, m: &DenseMatrix) -> Result<()> {
        let p = self.path(name);
        Ok(write_binary(&p, m)?)
    }

    fn table<S: AsRef<str>>(&mut self, name: &str, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
        let p = self.path(name);
        Ok(write_table(&p, header, rows)?)
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn task_name(t: Task) -> &'static str {
    match t {
        Task::Forward => "forward",
        Task::Inverse => "inverse",
        Task::Autoencode => "autoencode",
        Task::Denoise => "denoise",
    }
}

/// Runs `stage` of the experiment in `cfg`, writing artifacts and
/// `manifest.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, stage: Stage, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(IoError::file(out_dir))?;
    let mut out = Out {
        dir: out_dir,
        written: Vec::new(),
    };
    match cfg.experiment {
        ExperimentKind::Imaging | ExperimentKind::Sweep => run_imaging(cfg, stage, &mut out)?,
        ExperimentKind::Finance => run_finance(cfg, stage, &mut out)?,
        ExperimentKind::Swe => run_swe(cfg, stage, &mut out)?,
    }
    let mut names = out.written.clone();
    names.sort();
    names.dedup();
    let files = names
        .into_iter()
        .map(|name| {
            let p = out_dir.join(&name);
            let bytes = std::fs::metadata(&p).map_err(IoError::file(&p))?.len();
            Ok(ManifestFile { name, bytes })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        library: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        stage,
        seed: cfg.seed,
        config: cfg.clone(),
        files,
    };
    let p = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(IoError::from)?;
    text.push('\n');
    std::fs::write(&p, text).map_err(IoError::file(&p))?;
    Ok(manifest)
}

fn imaging_rows(rows: &[ImagingRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                task_name(r.task).to_string(),
                r.rank.to_string(),
                num(r.optimal_risk),
                opt(r.learned_risk),
                num(r.optimal_test_mse),
                opt(r.learned_test_mse),
            ]
        })
        .collect()
}

const IMAGING_HEADER: [&str; 6] = [
    "task",
    "rank",
    "optimal_risk",
    "learned_risk",
    "optimal_test_mse",
    "learned_test_mse",
];

fn run_imaging(cfg: &ExperimentConfig, stage: Stage, out: &mut Out) -> Result<()> {
    let im = cfg.imaging.as_ref().expect("validated");
    let data = imaging_data(&im.blur, &im.images, im.noise_std, im.train_count, im.test_count, cfg.seed)?;
    out.matrix("operator.rkmp", &data.operator)?;
    out.matrix("x_train.rkmp", &data.train.x)?;
    out.matrix("y_train.rkmp", data.train.observations()?)?;
    out.matrix("x_test.rkmp", &data.test.x)?;
    out.matrix("y_test.rkmp", data.test.observations()?)?;
    if stage == Stage::Generate {
        return Ok(());
    }
    let training = cfg.training.to_train_config(cfg.seed);
    let sweep_only = stage == Stage::Sweep || cfg.experiment == ExperimentKind::Sweep;
    let tasks = if sweep_only {
        vec![cfg.sweep_kind().task]
    } else {
        vec![Task::Forward, Task::Inverse]
    };
    let result = imaging_sweep(&data, &tasks, &cfg.ranks, im.ridge, training.as_ref(), stage.fits())?;
    for (task, r, a) in &result.maps.optimal {
        out.matrix(&format!("map_{}_r{r}.rkmp", task_name(*task)), a)?;
    }
    for (task, r, e, d) in &result.maps.learned {
        out.matrix(&format!("learned_{}_r{r}_encoder.rkmp", task_name(*task)), e)?;
        out.matrix(&format!("learned_{}_r{r}_decoder.rkmp", task_name(*task)), d)?;
    }
    if sweep_only && stage != Stage::Fit {
        out.table("sweep.csv", &IMAGING_HEADER, &imaging_rows(&result.rows))?;
    } else if stage.evaluates() {
        out.table("imaging_risk.csv", &IMAGING_HEADER, &imaging_rows(&result.rows))?;
    }
    Ok(())
}

fn run_finance(cfg: &ExperimentConfig, stage: Stage, out: &mut Out) -> Result<()> {
    let fc = cfg.finance.as_ref().expect("validated");
    let training = cfg.training.to_train_config(cfg.seed);
    let learned = if stage.evaluates() { training.as_ref() } else { None };
    let mut results = Vec::new();
    let mut first_returns = None;
    if let Some(path) = &fc.returns_csv {
        let (_, returns) = read_returns_csv(path)?;
        out.matrix("returns.rkmp", &returns)?;
        if stage != Stage::Generate {
            let (res, fit) = finance_returns(&returns, None, fc.rank, learned, cfg.seed)?;
            if stage.fits() {
                out.matrix("map.rkmp", &fit.map)?;
                out.matrix("bias.rkmp", &DenseMatrix::column_vector(&fit.bias))?;
                out.matrix("loadings.rkmp", &fit.loadings)?;
            }
            results.push(res);
        }
        first_returns = Some(returns);
    } else {
        for k in 0..fc.repetitions {
            let mut spec = fc.market.clone();
            spec.seed = cfg.seed + k as u64;
            let market = crate::datagen::synthetic_market(&spec)?;
            out.matrix(&format!("returns_seed{}.rkmp", spec.seed), &market.returns)?;
            out.matrix(&format!("true_factors_seed{}.rkmp", spec.seed), &market.true_factors)?;
            if stage != Stage::Generate && stage != Stage::Sweep {
                let (res, fit) = finance_seed(&spec, fc.rank, learned)?;
                if stage.fits() {
                    out.matrix(&format!("map_seed{}.rkmp", spec.seed), &fit.map)?;
                    out.matrix(&format!("bias_seed{}.rkmp", spec.seed), &DenseMatrix::column_vector(&fit.bias))?;
                    out.matrix(&format!("loadings_seed{}.rkmp", spec.seed), &fit.loadings)?;
                }
                results.push(res);
            }
            if first_returns.is_none() {
                first_returns = Some(market.returns);
            }
        }
    }
    if stage == Stage::Sweep {
        let returns = first_returns.expect("at least one repetition");
        let d = DataSet::signals(returns.transpose())?;
        let ranks: Vec<usize> = if cfg.ranks.is_empty() {
            (1..=returns.cols()).collect()
        } else {
            cfg.ranks.clone()
        };
        let table = empirical_rank_sweep(&d, &d, cfg.sweep_kind(), &ranks, training.as_ref())?;
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| vec![r.rank.to_string(), num(r.optimal_risk), opt(r.learned_risk)])
            .collect();
        out.table("sweep.csv", &["rank", "optimal_risk", "learned_risk"], &rows)?;
    }
    if stage.evaluates() {
        let r = fc.rank;
        let mse_rows: Vec<Vec<String>> = results
            .iter()
            .map(|s| vec![s.seed.to_string(), num(s.optimal_mse), opt(s.learned_mse)])
            .collect();
        out.table("finance_mse.csv", &["seed", "optimal_mse", "learned_mse"], &mse_rows)?;

        let factor_cols: Vec<String> = (1..=r).map(|k| format!("factor_{k}")).collect();
        let mut header: Vec<&str> = vec!["seed"];
        header.extend(factor_cols.iter().map(String::as_str));
        let mut cev_header = header.clone();
        cev_header.extend(["total_cev", "factor_balance"]);
        let cev_rows: Vec<Vec<String>> = results
            .iter()
            .map(|s| {
                let mut row = vec![s.seed.to_string()];
                row.extend(s.cev.iter().map(|&v| num(v)));
                row.push(num(s.total_cev));
                row.push(num(s.factor_balance));
                row
            })
            .collect();
        out.table("finance_cev.csv", &cev_header, &cev_rows)?;

        let corr_rows: Vec<Vec<String>> = results
            .iter()
            .filter(|s| !s.correlations.is_empty())
            .map(|s| {
                let mut row = vec![s.seed.to_string()];
                row.extend(s.correlations.iter().map(|&c| opt(c)));
                row
            })
            .collect();
        if !corr_rows.is_empty() {
            out.table("finance_correlations.csv", &header, &corr_rows)?;
        }
    }
    Ok(())
}

fn report_row(model: &str, set: &str, r: &ErrorReport) -> Vec<String> {
    vec![
        model.to_string(),
        set.to_string(),
        num(r.total_nrmse),
        num(r.eta_nrmse),
        num(r.u_mae),
        num(r.v_mae),
        num(r.mse),
        r.sample_count.to_string(),
    ]
}

fn run_swe(cfg: &ExperimentConfig, stage: Stage, out: &mut Out) -> Result<()> {
    let s = cfg.swe.as_ref().expect("validated");
    let sets = swe_datasets(
        &s.params,
        &s.train_families,
        &s.ood_families,
        s.train_per_family,
        s.test_per_family,
        s.ood_per_family,
        s.noise_std,
        s.observation_step,
        cfg.seed,
    )?;
    for (name, set) in [("train", &sets.train), ("test_in", &sets.test_in), ("test_out", &sets.test_out)] {
        out.matrix(&format!("x_{name}.rkmp"), &set.data.x)?;
        out.matrix(&format!("y_{name}.rkmp"), set.data.observations()?)?;
    }
    if stage == Stage::Generate {
        return Ok(());
    }
    let training = cfg.training.to_train_config(cfg.seed);
    if stage == Stage::Sweep {
        let ranks = if cfg.ranks.is_empty() { vec![s.rank] } else { cfg.ranks.clone() };
        let mut rows = Vec::new();
        for &r in &ranks {
            let (res, _) = swe_inverse(&sets, r, s.ridge, training.as_ref(), s.mae_normalization)?;
            rows.push(vec![
                r.to_string(),
                num(res.optimal_in.total_nrmse),
                opt(res.learned_in.map(|l| l.total_nrmse)),
                num(res.optimal_out.total_nrmse),
                opt(res.learned_out.map(|l| l.total_nrmse)),
            ]);
        }
        let header = ["rank", "optimal_nrmse_in", "learned_nrmse_in", "optimal_nrmse_out", "learned_nrmse_out"];
        return out.table("sweep.csv", &header, &rows);
    }
    let (res, maps) = swe_inverse(&sets, s.rank, s.ridge, training.as_ref(), s.mae_normalization)?;
    if stage.fits() {
        out.matrix(&format!("map_inverse_r{}.rkmp", s.rank), &maps.optimal)?;
        if let Some((e, d)) = &maps.learned {
            out.matrix(&format!("learned_inverse_r{}_encoder.rkmp", s.rank), e)?;
            out.matrix(&format!("learned_inverse_r{}_decoder.rkmp", s.rank), d)?;
        }
    }
    if stage.evaluates() {
        let mut rows = vec![
            report_row("optimal", "in-distribution", &res.optimal_in),
            report_row("optimal", "out-of-distribution", &res.optimal_out),
        ];
        if let (Some(li), Some(lo)) = (&res.learned_in, &res.learned_out) {
            rows.push(report_row("learned", "in-distribution", li));
            rows.push(report_row("learned", "out-of-distribution", lo));
        }
        let header = ["model", "test_set", "total_nrmse", "eta_nrmse", "u_mae", "v_mae", "mse", "samples"];
        out.table("swe_errors.csv", &header, &rows)?;
    }
    Ok(())
}
