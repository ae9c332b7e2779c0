use rdness::config::{ExperimentConfig, EXPERIMENTS};
use rdness::experiments::{run_experiment, sha256_hex, MANIFEST_VERSION};

#[test]
fn every_experiment_has_a_valid_default() {
    for name in EXPERIMENTS {
        let cfg = ExperimentConfig::default_for(name).unwrap();
        assert_eq!(cfg.name(), name);
        cfg.validate().unwrap();
    }
    assert!(ExperimentConfig::default_for("nope").is_err());
}

#[test]
fn partial_toml_fills_defaults_and_rejects_unknown_keys() {
    let cfg = ExperimentConfig::from_toml("experiment = \"exact-audit\"\nseed = 9\n").unwrap();
    assert_eq!(cfg.seed(), 9);
    assert!(ExperimentConfig::from_toml("experiment = \"flow-audit\"\nbogus = 1\n").is_err());
}

#[test]
fn manifest_digests_match_the_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml("experiment = \"flow-audit\"\nscales = [2, 3, 4]\n").unwrap();
    let m = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(m.manifest_version, MANIFEST_VERSION);
    assert!(m.passed);
    assert!(!m.outputs.is_empty());
    for o in &m.outputs {
        let bytes = std::fs::read(dir.path().join(&o.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), o.sha256);
        assert_eq!(bytes.len(), o.bytes);
    }
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["experiment"], "flow-audit");
}

#[test]
fn shipped_configs_load_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap().validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= EXPERIMENTS.len());
}
