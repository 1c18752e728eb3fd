//! Experiment files on disk: loading, overrides, artifacts and the bundled configs.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use mmfuse_core::fusion::FilterKind;
use mmfuse_core::harness::{load_config, presets, read_positions_csv, run_experiment, ExperimentConfig};
use mmfuse_core::sim::presets::Drive;

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn repo_configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn bundled_config_files_match_presets() {
    for drive in [Drive::LowOutage, Drive::HighOutage] {
        let [ukf, ekf] = presets::ukf_vs_ekf(drive, &[1, 2, 3, 4, 5], Path::new("runs"));
        let [_, nosbr] = presets::sbr_ablation(drive, &[1, 2, 3, 4, 5], Path::new("runs"));
        for expected in [ukf, ekf, nosbr] {
            let path = repo_configs().join(format!("{}.toml", expected.name));
            let loaded = load_config(&path, std::iter::empty()).unwrap();
            assert_eq!(loaded.output_dir, repo_configs().join(&expected.output_dir));
            let mut loaded = loaded;
            loaded.output_dir = expected.output_dir.clone();
            assert_eq!(loaded, expected, "{} is out of date; regenerate with `mmfuse presets`", path.display());
        }
    }
}

#[test]
fn experiment_file_with_overrides_runs_and_hashes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("short.toml");
    fs::write(
        &cfg_path,
        "name = \"short\"\npreset = \"low_outage\"\nimu = \"tactical\"\nseeds = [1, 2]\noutput_dir = \"out\"\n\n[fusion]\noutput_interval = 1.0\n",
    )
    .unwrap();
    let vars = [
        ("MMFUSE__FILTER".to_string(), "ekf".to_string()),
        ("MMFUSE__FUSION__INNOVATION_GATE".to_string(), "0.9999".to_string()),
        ("UNRELATED".to_string(), "1".to_string()),
    ];
    let cfg: ExperimentConfig = load_config(&cfg_path, vars).unwrap();
    assert_eq!(cfg.filter, Some(FilterKind::Ekf));
    assert_eq!(cfg.fusion.innovation_gate, Some(0.9999));
    assert_eq!(cfg.output_dir, dir.path().join("out"));

    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(outcome.seeds.len(), 2);
    assert!(outcome.report.pct_sub_2m > 90.0, "{:?}", outcome.report.percentages());

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(cfg.output_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], cfg.digest());
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), outcome.files.len() - 1);
    for o in outputs {
        let bytes = fs::read(cfg.output_dir.join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"], hex(&bytes));
    }

    // the per-seed estimates read back through the evaluation reader
    let est = read_positions_csv(fs::File::open(cfg.output_dir.join("estimate_seed1.csv")).unwrap()).unwrap();
    assert_eq!(est.len(), outcome.seeds[0].report.errors.len());
}

#[test]
fn invalid_files_are_rejected_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "name = \"x\"\nseeds = [1]\noutput_dir = \"o\"\ncolour = \"red\"\n").unwrap();
    let err = load_config(&p, std::iter::empty()).unwrap_err().to_string();
    assert!(err.contains("bad.toml") && err.contains("colour"), "{err}");
}
