mod common;

use std::path::PathBuf;

use randschro::harness::ExperimentConfig;
use randschro::medium::RegimeLabel;
use randschro::Error;

use common::small_config;

const MINIMAL: &str = r#"
experiment_id = "minimal"
alpha = 2.6666666666666665
eps = [0.2]
probes = [[1.0]]
times = [0.5, 1.0]
n_realizations = 10
master_seed = 1

[medium]
d = 1
gamma = 0.75
beta = 0.5
mu = 1.0

[[grid]]
d = 1
n = 1024
length = 37.69911184307752

[packet]
width = 1.0
center = [0.0]
amplitude = 1.0
"#;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn minimal_file_fills_defaults() {
    let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
    assert_eq!(cfg.moments, vec![(1, 0), (1, 1), (2, 0), (2, 2)]);
    assert_eq!(cfg.step.safety, 0.1);
    assert_eq!(cfg.output.csv, "report.csv");
    assert_eq!(cfg.regime().unwrap().label, RegimeLabel::Homogenized);
    assert_eq!(cfg, small_config_from_minimal());
}

fn small_config_from_minimal() -> ExperimentConfig {
    let mut c = small_config(vec![0.2], 10);
    c.experiment_id = "minimal".into();
    c.master_seed = 1;
    c
}

#[test]
fn shipped_configs_validate() {
    let expect = [
        ("regime_i.toml", RegimeLabel::Homogenized),
        ("critical.toml", RegimeLabel::Critical),
        ("regime_iii.toml", RegimeLabel::FractionalPhase),
        ("regime_iv.toml", RegimeLabel::FractionalPhaseXi),
    ];
    for (name, label) in expect {
        let cfg = ExperimentConfig::load(&shipped(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.regime().unwrap().label, label, "{name}");
    }
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
    let b = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let c = ExperimentConfig::from_toml_str(&MINIMAL.replace("master_seed = 1", "master_seed = 2")).unwrap();
    assert_ne!(a.hash(), c.hash());
}

fn rejected(edit: impl Fn(&mut ExperimentConfig)) -> Error {
    let mut cfg = small_config(vec![0.2], 10);
    edit(&mut cfg);
    cfg.validate().unwrap_err()
}

#[test]
fn invalid_fields_are_rejected() {
    assert!(matches!(rejected(|c| c.eps.clear()), Error::Config(_)));
    assert!(matches!(rejected(|c| c.eps = vec![1.5]), Error::Config(_)));
    assert!(matches!(rejected(|c| c.n_realizations = 0), Error::Config(_)));
    assert!(matches!(rejected(|c| c.probes.clear()), Error::Config(_)));
    assert!(matches!(rejected(|c| c.moments.clear()), Error::Config(_)));
    assert!(matches!(rejected(|c| c.grid = vec![c.grid[0]; 3]), Error::Config(_)));
    assert!(matches!(rejected(|c| c.probes = vec![vec![1.01]]), Error::OffGrid(_)));
    assert!(matches!(rejected(|c| c.times = vec![1.0, 0.5]), Error::InvalidArgument(_)));
    assert!(matches!(rejected(|c| c.packet.width = 10.0), Error::InvalidArgument(_) | Error::InvalidGrid(_)));
}

#[test]
fn coarse_phase_grid_is_rejected() {
    let mut cfg = ExperimentConfig::load(&shipped("regime_iii.toml")).unwrap();
    cfg.times = vec![1.0];
    let err = cfg.validate().unwrap_err();
    assert!(err.to_string().contains("unwrapping"), "{err}");
}

#[test]
fn malformed_toml_is_a_toml_error() {
    assert!(matches!(ExperimentConfig::from_toml_str("alpha = ["), Err(Error::Toml(_))));
    let bad_medium = MINIMAL.replace("gamma = 0.75", "gamma = 1.5");
    assert!(ExperimentConfig::from_toml_str(&bad_medium).is_err());
}
