use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::baselines::{Optimizer, TrainConfig};
use crate::datagen::{BlurSpec, ImageSpec, SyntheticMarketSpec};
use crate::mappings::{Form, ProblemKind, Task};
use crate::metrics::MaeNormalization;
use crate::swe::{Family, SweParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Imaging,
    Finance,
    Swe,
    Sweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for TrainingConfig {
    /// Adam, `lr = 1e-3`, 200 full-batch epochs.
    fn default() -> Self {
        TrainingConfig {
            enabled: true,
            epochs: 200,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            batch_size: None,
        }
    }
}

impl TrainingConfig {
    /// Trainer settings for `seed`; the rank is filled in per fit.
    pub fn to_train_config(&self, seed: u64) -> Option<TrainConfig> {
        self.enabled.then_some(TrainConfig {
            rank: 1,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            batch_size: self.batch_size,
            seed,
            affine: false,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    pub blur: BlurSpec,
    #[serde(default)]
    pub images: ImageSpec,
    pub noise_std: f64,
    pub train_count: usize,
    pub test_count: usize,
    /// Ridge added to `Γ_X` before its Cholesky factorization.
    #[serde(default = "default_imaging_ridge")]
    pub ridge: f64,
}

fn default_imaging_ridge() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinanceConfig {
    /// The seed inside is replaced by `seed + k` for repetition `k`.
    pub market: SyntheticMarketSpec,
    pub repetitions: usize,
    pub rank: usize,
    /// Local returns file with a ticker header; replaces the generator.
    #[serde(default)]
    pub returns_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweConfig {
    pub params: SweParams,
    pub train_families: Vec<Family>,
    pub ood_families: Vec<Family>,
    pub train_per_family: usize,
    pub test_per_family: usize,
    pub ood_per_family: usize,
    pub noise_std: f64,
    pub observation_step: usize,
    pub rank: usize,
    pub ridge: f64,
    #[serde(default)]
    pub mae_normalization: MaeNormalization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ranks: Vec<usize>,
    /// Task and form for `sweep` runs.
    #[serde(default)]
    pub problem: Option<ProblemKind>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub imaging: Option<ImagingConfig>,
    #[serde(default)]
    pub finance: Option<FinanceConfig>,
    #[serde(default)]
    pub swe: Option<SweConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    PaperImaging,
    PaperSwe,
    DeskSwe,
    PaperFinance,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "paper-imaging" => Some(Preset::PaperImaging),
            "paper-swe" => Some(Preset::PaperSwe),
            "desk-swe" => Some(Preset::DeskSwe),
            "paper-finance" => Some(Preset::PaperFinance),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperImaging => "paper-imaging",
            Preset::PaperSwe => "paper-swe",
            Preset::DeskSwe => "desk-swe",
            Preset::PaperFinance => "paper-finance",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let base = ExperimentConfig {
            experiment: ExperimentKind::Imaging,
            seed: 0,
            ranks: Vec::new(),
            problem: None,
            training: TrainingConfig::default(),
            imaging: None,
            finance: None,
            swe: None,
            output_dir: None,
        };
        match self {
            Preset::PaperImaging => ExperimentConfig {
                ranks: (1..=31).map(|k| 25 * k).collect(),
                imaging: Some(ImagingConfig {
                    blur: BlurSpec::paper(),
                    images: ImageSpec::default(),
                    noise_std: 0.05,
                    train_count: 2000,
                    test_count: 500,
                    ridge: default_imaging_ridge(),
                }),
                ..base
            },
            Preset::PaperSwe | Preset::DeskSwe => {
                let paper = self == Preset::PaperSwe;
                ExperimentConfig {
                    experiment: ExperimentKind::Swe,
                    swe: Some(SweConfig {
                        params: if paper { SweParams::paper() } else { SweParams::desk() },
                        train_families: Family::IN_DISTRIBUTION.to_vec(),
                        ood_families: Family::OUT_OF_DISTRIBUTION.to_vec(),
                        train_per_family: if paper { 2500 } else { 50 },
                        test_per_family: if paper { 500 } else { 25 },
                        ood_per_family: if paper { 500 } else { 25 },
                        noise_std: 0.05,
                        observation_step: if paper { 1500 } else { 350 },
                        rank: if paper { 250 } else { 64 },
                        ridge: 1e-2,
                        mae_normalization: MaeNormalization::PerSample,
                    }),
                    ..base
                }
            }
            Preset::PaperFinance => ExperimentConfig {
                experiment: ExperimentKind::Finance,
                finance: Some(FinanceConfig {
                    market: SyntheticMarketSpec::paper(0),
                    repetitions: 20,
                    rank: 3,
                    returns_csv: None,
                }),
                ..base
            },
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, naming the offending field on failure, then validates.
    pub fn from_toml_str(text: &str) -> Result<Self, IoError> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| IoError::config("", e.to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            IoError::config(&path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(IoError::file(path))?;
        Self::from_toml_str(&text).map_err(|e| IoError::InFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Task and form swept by `sweep`.
    pub fn sweep_kind(&self) -> ProblemKind {
        self.problem.unwrap_or(match self.experiment {
            ExperimentKind::Finance => ProblemKind::new(Task::Autoencode, Form::Affine),
            _ => ProblemKind::new(Task::Inverse, Form::Linear),
        })
    }

    pub fn validate(&self) -> Result<(), IoError> {
        fn c(path: &str, message: impl Into<String>) -> IoError {
            IoError::config(path, message)
        }
        if self.ranks.contains(&0) || self.ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(c("ranks", "ranks must be positive and strictly ascending"));
        }
        let t = &self.training;
        if t.enabled {
            if t.epochs == 0 {
                return Err(c("training.epochs", "must be at least 1"));
            }
            if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
                return Err(c("training.learning_rate", "must be finite and nonnegative"));
            }
            if t.batch_size == Some(0) {
                return Err(c("training.batch_size", "must be positive"));
            }
        }
        match self.experiment {
            ExperimentKind::Imaging | ExperimentKind::Sweep => {
                let im = self.imaging.as_ref().ok_or_else(|| c("imaging", "section required for this experiment"))?;
                im.blur.validate().map_err(|e| c("imaging.blur", e.to_string()))?;
                if im.blur.image_side != im.images.side {
                    return Err(c("imaging.images.side", "must equal imaging.blur.image_side"));
                }
                if !(im.noise_std >= 0.0) {
                    return Err(c("imaging.noise_std", "must be nonnegative"));
                }
                if im.train_count < 2 || im.test_count < 1 {
                    return Err(c("imaging.train_count", "need at least two training and one test image"));
                }
                if !(im.ridge > 0.0) {
                    return Err(c("imaging.ridge", "must be positive for the Cholesky factor"));
                }
                if self.ranks.is_empty() {
                    return Err(c("ranks", "at least one rank is required"));
                }
                if let Some(&r) = self.ranks.iter().find(|&&r| r > im.blur.image_side.pow(2)) {
                    return Err(c("ranks", format!("rank {r} exceeds the image dimension")));
                }
                if let Some(k) = self.problem {
                    if !matches!(k.task, Task::Forward | Task::Inverse) || k.form != Form::Linear {
                        return Err(c("problem", "imaging sweeps take forward or inverse linear maps"));
                    }
                }
            }
            ExperimentKind::Finance => {
                let f = self.finance.as_ref().ok_or_else(|| c("finance", "section required for this experiment"))?;
                f.market.validate().map_err(|e| c("finance.market", e.to_string()))?;
                if f.repetitions == 0 {
                    return Err(c("finance.repetitions", "must be at least 1"));
                }
                if f.rank < 2 || f.rank > f.market.assets {
                    return Err(c("finance.rank", "must lie between 2 and the asset count"));
                }
            }
            ExperimentKind::Swe => {
                let s = self.swe.as_ref().ok_or_else(|| c("swe", "section required for this experiment"))?;
                s.params.validate().map_err(|e| c("swe.params", e.to_string()))?;
                if s.train_families.is_empty() || s.ood_families.is_empty() {
                    return Err(c("swe.train_families", "family lists must be nonempty"));
                }
                if s.train_per_family == 0 || s.test_per_family == 0 || s.ood_per_family == 0 {
                    return Err(c("swe.train_per_family", "instance counts must be positive"));
                }
                if !(s.noise_std >= 0.0) {
                    return Err(c("swe.noise_std", "must be nonnegative"));
                }
                if !(s.ridge > 0.0) {
                    return Err(c("swe.ridge", "must be positive for the Cholesky factor"));
                }
                if s.rank == 0 {
                    return Err(c("swe.rank", "must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::PaperImaging, Preset::PaperSwe, Preset::DeskSwe, Preset::PaperFinance] {
            let cfg = p.config();
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(back, cfg, "{}", p.name());
            assert_eq!(Preset::from_name(p.name()), Some(p));
        }
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = r#"
experiment = "swe"
[swe]
train_families = ["ring-wave"]
ood_families = ["step-wave"]
train_per_family = 1
test_per_family = 1
ood_per_family = 1
noise_std = 0.0
observation_step = 1
rank = 1
ridge = 0.01
[swe.params]
g = 9.8
depth = 100.0
f0 = 0.0
beta = 0.0
domain_len = 1.0e6
nx = 8
ny = 8
cfl_fraction = 0.1
colour = 3
"#;
        match ExperimentConfig::from_toml_str(text) {
            Err(IoError::Config { path, message }) => {
                assert_eq!(path, "swe.params.colour", "{message}");
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_names_its_path() {
        let text = "experiment = \"finance\"\nseed = \"seven\"\n";
        match ExperimentConfig::from_toml_str(text) {
            Err(IoError::Config { path, .. }) => assert_eq!(path, "seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_section_rejected() {
        let err = ExperimentConfig::from_toml_str("experiment = \"imaging\"\nranks = [5]\n").unwrap_err();
        assert!(err.to_string().contains("`imaging`"), "{err}");
    }

    #[test]
    fn bad_ranks_rejected() {
        let mut cfg = Preset::PaperImaging.config();
        cfg.ranks = vec![50, 25];
        assert!(cfg.validate().is_err());
        cfg.ranks = vec![0, 25];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cfl_violation_rejected_in_config() {
        let mut cfg = Preset::DeskSwe.config();
        let s = cfg.swe.as_mut().unwrap();
        s.params.dt = Some(10.0 * s.params.cfl_bound());
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("swe.params") && err.contains("CFL"), "{err}");
    }
}
