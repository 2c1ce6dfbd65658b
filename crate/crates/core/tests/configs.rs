use std::path::PathBuf;

use nonlocal_lab::experiments::{ExperimentConfig, ExperimentKind, RawConfig};

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_spell_out_the_defaults() {
    for kind in ExperimentKind::ALL {
        let path = config_dir().join(format!("{kind}.cfg"));
        let from_file = ExperimentConfig::load(kind, Some(&path), &[]).unwrap();
        let defaults = ExperimentConfig::resolve(kind, &RawConfig::default()).unwrap();
        assert_eq!(from_file, defaults, "{}", path.display());
    }
}

#[test]
fn a_config_for_one_experiment_is_rejected_by_another() {
    let path = config_dir().join("decay.cfg");
    assert!(ExperimentConfig::load(ExperimentKind::TailBounds, Some(&path), &[]).is_err());
}
