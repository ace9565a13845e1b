//! Fixtures for the criterion benchmarks in `benches/`.

use wws_core::mpc::{assemble_step, ControllerConfig, History, StepProblem};
use wws_core::predictor::{fit_edmd, generate_dataset, Dataset, DatasetConfig, LinearPredictor, ObservableSet};
use wws_core::{PlantModel, State};

/// Snapshot pairs from the bundled plant on the default distribution.
pub fn dataset(samples: usize, seed: u64) -> Dataset {
    let cfg = DatasetConfig {
        samples,
        seed,
        ..Default::default()
    };
    generate_dataset(&PlantModel::bundled(), &cfg).expect("dataset")
}

pub fn predictor(samples: usize, seed: u64) -> LinearPredictor {
    fit_edmd(&ObservableSet::default(), &dataset(samples, seed)).expect("fit").0
}

/// Step-`k` controller problem after a constant history at `x`.
pub fn step_problem(cfg: &ControllerConfig, p: &LinearPredictor, x: &State, k: usize) -> StepProblem {
    let history = History {
        y: vec![wws_core::output(x); k + 1],
        u: vec![cfg.initial_input; k],
    };
    let formulas = cfg.formulas().expect("specs");
    assemble_step(cfg, &formulas, p, &history, x, k).expect("assemble")
}
