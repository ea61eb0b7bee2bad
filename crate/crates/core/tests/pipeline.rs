use std::collections::BTreeSet;
use std::path::Path;

use rkmp_core::datagen::{synthetic_market, SyntheticMarketSpec};
use rkmp_core::io::{read_binary, read_matrix, run_experiment, write_matrix, ExperimentConfig, Preset, Stage};
use rkmp_core::{DenseMatrix, Error, SeededRng};

fn names(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

fn small_finance() -> ExperimentConfig {
    let mut cfg = Preset::PaperFinance.config();
    cfg.finance.as_mut().unwrap().repetitions = 2;
    cfg.training.epochs = 5;
    cfg
}

fn small_swe() -> ExperimentConfig {
    let mut cfg = Preset::DeskSwe.config();
    let s = cfg.swe.as_mut().unwrap();
    s.train_per_family = 4;
    s.test_per_family = 2;
    s.ood_per_family = 2;
    s.observation_step = 20;
    s.rank = 6;
    cfg.training.epochs = 3;
    cfg
}

#[test]
fn matrix_files_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let m = SeededRng::new(1).normal_matrix(5, 3).scale(1e-3);
    for name in ["m.rkmp", "m.csv"] {
        let p = dir.path().join(name);
        write_matrix(&p, &m).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(back.as_slice(), m.as_slice(), "{name}");
    }
}

#[test]
fn stages_write_nested_artifact_sets() {
    let cfg = small_finance();
    let mut sets = Vec::new();
    for stage in [Stage::Generate, Stage::Fit, Stage::Evaluate, Stage::Run] {
        let dir = tempfile::tempdir().unwrap();
        let manifest = run_experiment(&cfg, stage, dir.path()).unwrap();
        let on_disk = names(dir.path());
        assert!(on_disk.contains("manifest.json"));
        for f in &manifest.files {
            assert!(on_disk.contains(&f.name), "{} missing", f.name);
            assert_eq!(std::fs::metadata(dir.path().join(&f.name)).unwrap().len(), f.bytes);
        }
        sets.push(on_disk);
    }
    let (generate, fit, evaluate, run) = (&sets[0], &sets[1], &sets[2], &sets[3]);
    assert!(generate.is_subset(fit) && generate.is_subset(evaluate));
    assert!(fit.is_subset(run) && evaluate.is_subset(run));
    assert!(fit.contains("map_seed0.rkmp") && !generate.contains("map_seed0.rkmp"));
    assert!(evaluate.contains("finance_mse.csv") && !fit.contains("finance_mse.csv"));
}

#[test]
fn generated_returns_match_the_generator() {
    let cfg = small_finance();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Stage::Generate, dir.path()).unwrap();
    let on_disk = read_binary(&dir.path().join("returns_seed1.rkmp")).unwrap();
    let mut spec = cfg.finance.unwrap().market;
    spec.seed = 1;
    assert_eq!(on_disk.as_slice(), synthetic_market(&spec).unwrap().returns.as_slice());
}

#[test]
fn returns_csv_replaces_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let market = synthetic_market(&SyntheticMarketSpec::paper(3)).unwrap();
    let r = &market.returns;
    let mut text = (0..r.cols()).map(|j| format!("T{j}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for i in 0..r.rows() {
        let row: Vec<String> = (0..r.cols()).map(|j| format!("{:?}", r[(i, j)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let csv = dir.path().join("returns.csv");
    std::fs::write(&csv, text).unwrap();
    let mut cfg = small_finance();
    cfg.finance.as_mut().unwrap().returns_csv = Some(csv);
    let out = dir.path().join("out");
    run_experiment(&cfg, Stage::Run, &out).unwrap();
    let files = names(&out);
    assert!(files.contains("returns.rkmp") && files.contains("map.rkmp"));
    assert!(!files.iter().any(|f| f.starts_with("returns_seed")));
    let back = read_binary(&out.join("returns.rkmp")).unwrap();
    assert_eq!(back.as_slice(), r.as_slice());
}

#[test]
fn swe_run_writes_error_table_and_maps() {
    let cfg = small_swe();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Stage::Run, dir.path()).unwrap();
    let files = names(dir.path());
    for f in ["x_train.rkmp", "y_test_out.rkmp", "map_inverse_r6.rkmp", "swe_errors.csv"] {
        assert!(files.contains(f), "{f} missing from {files:?}");
    }
    let map = read_binary(&dir.path().join("map_inverse_r6.rkmp")).unwrap();
    let y = read_binary(&dir.path().join("y_train.rkmp")).unwrap();
    assert_eq!(map.cols(), y.rows());
    let table = std::fs::read_to_string(dir.path().join("swe_errors.csv")).unwrap();
    assert!(table.lines().count() >= 3);
}

#[test]
fn config_round_trips_through_toml() {
    for p in [Preset::PaperImaging, Preset::PaperSwe, Preset::DeskSwe, Preset::PaperFinance] {
        let cfg = p.config();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg, "{}", p.name());
    }
}

#[test]
fn invalid_configs_fail_before_writing() {
    let mut cfg = small_finance();
    cfg.finance.as_mut().unwrap().rank = 0;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let err = run_experiment(&cfg, Stage::Run, &out).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err}");
    assert!(!out.exists());
}

#[test]
fn corrupt_matrix_file_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.rkmp");
    let mut bytes = rkmp_core::io::encode_binary(&DenseMatrix::identity(3));
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&p, bytes).unwrap();
    let msg = read_binary(&p).unwrap_err().to_string();
    assert!(msg.contains("bad.rkmp"), "{msg}");
}
