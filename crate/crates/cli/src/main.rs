use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rkmp_core::io::{run_experiment, ExperimentConfig, IoError, Preset, Stage, OUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "rkmp", version, about = "Optimal rank-constrained encoder-decoder experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Write the experiment's datasets.
    Generate(Args),
    /// Write datasets and fitted maps.
    Fit(Args),
    /// Write datasets and metric tables.
    Evaluate(Args),
    /// Write datasets and a risk-versus-rank table.
    Sweep(Args),
    /// Write everything the experiment produces.
    Run(Args),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    PaperImaging,
    PaperSwe,
    DeskSwe,
    PaperFinance,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::PaperImaging => Preset::PaperImaging,
            PresetArg::PaperSwe => Preset::PaperSwe,
            PresetArg::DeskSwe => Preset::DeskSwe,
            PresetArg::PaperFinance => Preset::PaperFinance,
        }
    }
}

#[derive(clap::Args, Debug)]
struct Args {
    /// TOML experiment configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Output directory; defaults to `$RKMP_OUT_DIR/<name>` or `rkmp-out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated ranks, e.g. `25,50,100`.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
}

fn load(args: &Args) -> Result<(ExperimentConfig, String), IoError> {
    let (mut cfg, name) = match (&args.config, args.preset) {
        (Some(path), _) => {
            let name = path.file_stem().map_or("experiment".into(), |s| s.to_string_lossy().into_owned());
            (ExperimentConfig::from_path(path)?, name)
        }
        (None, Some(p)) => {
            let p = Preset::from(p);
            (p.config(), p.name().to_string())
        }
        (None, None) => unreachable!("clap requires one of --config and --preset"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(ranks) = &args.ranks {
        cfg.ranks = ranks.clone();
    }
    cfg.validate()?;
    Ok((cfg, name))
}

fn out_dir(args: &Args, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if let Some(o) = &cfg.output_dir {
        return o.clone();
    }
    let root = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("rkmp-out"), PathBuf::from);
    root.join(name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match &cli.verb {
        Verb::Generate(a) => (Stage::Generate, a),
        Verb::Fit(a) => (Stage::Fit, a),
        Verb::Evaluate(a) => (Stage::Evaluate, a),
        Verb::Sweep(a) => (Stage::Sweep, a),
        Verb::Run(a) => (Stage::Run, a),
    };
    let (cfg, name) = match load(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: config: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = out_dir(args, &cfg, &name);
    match run_experiment(&cfg, stage, &dir) {
        Ok(manifest) => {
            println!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
