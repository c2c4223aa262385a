#![allow(dead_code)]

use randschro::harness::{ExperimentConfig, LimitConfig, OutputConfig};
use randschro::medium::MediumSpec;
use randschro::randfield::GridSpec;
use randschro::solver::{InitialPacket, StepRule};
use randschro::theory::REPORT_MOMENTS;

pub const TWELVE_PI: f64 = 12.0 * std::f64::consts::PI;

/// Medium A in the homogenized regime on a small grid.
pub fn small_config(eps: Vec<f64>, n_realizations: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment_id: "small".into(),
        medium: MediumSpec::medium_a(),
        alpha: 8.0 / 3.0,
        eps,
        grid: vec![GridSpec::new(1, 1024, TWELVE_PI).unwrap()],
        packet: InitialPacket::gaussian(1.0, vec![0.0], 1.0),
        probes: vec![vec![1.0]],
        times: vec![0.5, 1.0],
        n_realizations,
        master_seed: 99,
        step: StepRule::default(),
        moments: REPORT_MOMENTS.to_vec(),
        limit: LimitConfig::default(),
        output: OutputConfig::default(),
    }
}
