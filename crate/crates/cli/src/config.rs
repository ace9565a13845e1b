use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use wws_core::mpc::{ControllerConfig, SweepGrid};
use wws_core::predictor::DatasetConfig;
use wws_core::stl;
use wws_core::{Integrator, PlantModel};

pub const ENV_PREFIX: &str = "WWS_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    #[serde(flatten)]
    pub dataset: DatasetConfig,
    /// Emit the local-linearization baseline instead of an EDMD fit.
    pub local: bool,
    /// Output temperature of the linearization point, °C.
    pub target_y: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            local: false,
            target_y: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Sampled initial conditions.
    pub rollouts: usize,
    /// Steps per rollout.
    pub steps: usize,
    /// Additional predictor files compared side by side with `predictor`.
    pub compare: Vec<PathBuf>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            rollouts: 50,
            steps: 10,
            compare: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Coefficient file; the bundled table when absent.
    pub plant: Option<PathBuf>,
    /// Integrator used to simulate the plant in `run`, `sweep` and `bench`.
    pub integrator: Integrator,
    /// Predictor file; `run` and `sweep` fit one in-process when absent.
    pub predictor: Option<PathBuf>,
    pub fit: FitSettings,
    pub controller: ControllerConfig,
    /// Formula file replacing `controller.specs`.
    pub spec_file: Option<PathBuf>,
    /// Uniform initial temperature of `run`, °C.
    pub initial_temp: f64,
    pub sweep: SweepGrid,
    pub bench: BenchSettings,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: None,
            integrator: Integrator::default(),
            predictor: None,
            fit: FitSettings::default(),
            controller: ControllerConfig::default(),
            spec_file: None,
            initial_temp: 15.0,
            sweep: SweepGrid::default(),
            bench: BenchSettings::default(),
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Defaults, overlaid by the config file, then by `WWS_*` variables.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut doc = serde_json::to_value(Self::default())?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let file: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut doc, file);
        }
        let mut env: Vec<_> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        env.sort();
        for (key, raw) in env {
            apply_env(&mut doc, &key[ENV_PREFIX.len()..], &raw).with_context(|| format!("applying {key}"))?;
        }
        let cfg: Self = serde_json::from_value(doc).context("invalid configuration")?;
        Ok(cfg)
    }

    pub fn plant_model(&self) -> Result<PlantModel> {
        match &self.plant {
            Some(p) => PlantModel::load(p).with_context(|| format!("loading plant {}", p.display())),
            None => Ok(PlantModel::bundled()),
        }
    }

    /// Resolves the spec file into `controller.specs`, then checks file
    /// references and physical ranges.
    pub fn finalize(mut self) -> Result<Self> {
        if let Some(path) = &self.spec_file {
            let formulas = stl::load_spec_file(path).with_context(|| format!("loading specs {}", path.display()))?;
            self.controller.specs = formulas.iter().map(ToString::to_string).collect();
        }
        self.fit.dataset.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        for (what, p) in [("plant", &self.plant), ("predictor", &self.predictor), ("spec", &self.spec_file)] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{what} file {} does not exist", p.display());
                }
            }
        }
        for p in &self.bench.compare {
            if !p.is_file() {
                bail!("predictor file {} does not exist", p.display());
            }
        }
        let temp_ok = |t: f64| (-50.0..=150.0).contains(&t);
        if !temp_ok(self.initial_temp) {
            bail!("initial temperature {} °C is outside [-50, 150]", self.initial_temp);
        }
        if let Some(bad) = self.sweep.initial_temps.iter().find(|t| !temp_ok(**t)) {
            bail!("sweep initial temperature {bad} °C is outside [-50, 150]");
        }
        let [lo, hi] = self.fit.dataset.state_range;
        if !(temp_ok(lo) && temp_ok(hi)) {
            bail!("state range [{lo}, {hi}] °C is outside [-50, 150]");
        }
        if !temp_ok(self.fit.target_y) {
            bail!("target output {} °C is outside [-50, 150]", self.fit.target_y);
        }
        let [ulo, uhi] = self.fit.dataset.u_band;
        if !(0.0..=1e3).contains(&ulo) || !(0.0..=1e3).contains(&uhi) {
            bail!("input band [{ulo}, {uhi}] kW must lie in [0, 1000]");
        }
        if !(self.controller.u_min >= 0.0 && self.controller.u_max <= 1e3) {
            bail!("controller input bounds must lie in [0, 1000] kW");
        }
        if !(self.fit.dataset.h > 0.0 && self.fit.dataset.h <= 3600.0) {
            bail!("fit sampling period {} s must lie in (0, 3600]", self.fit.dataset.h);
        }
        if self.bench.rollouts == 0 || self.bench.steps == 0 {
            bail!("bench needs at least one rollout of at least one step");
        }
        self.controller.validate()?;
        Ok(())
    }
}

/// Recursive object merge; non-object values replace.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `WWS_CONTROLLER__HORIZON=12` sets `controller.horizon`. Keys are matched
/// case-insensitively against the existing document; values are parsed as
/// JSON and fall back to plain strings.
fn apply_env(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    let parts: Vec<&str> = key.split("__").collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = slot else {
            bail!("`{}` is not a section", parts[..i].join("__"));
        };
        let name = map
            .keys()
            .find(|k| k.eq_ignore_ascii_case(part))
            .cloned()
            .with_context(|| format!("unknown key `{part}`"))?;
        slot = map.get_mut(&name).expect("key just found");
    }
    *slot = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::load(None, Vec::new()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.fit.dataset.samples, 10_000);
    }

    #[test]
    fn env_overrides_nested_keys() {
        let cfg = ExperimentConfig::load(
            None,
            env(&[
                ("WWS_CONTROLLER__HORIZON", "12"),
                ("WWS_FIT__K", "500"),
                ("WWS_OUT", "results"),
                ("WWS_SWEEP__INITIAL_TEMPS", "[5, 35]"),
                ("OTHER", "ignored"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.controller.horizon, 12);
        assert_eq!(cfg.fit.dataset.samples, 500);
        assert_eq!(cfg.out, PathBuf::from("results"));
        assert_eq!(cfg.sweep.initial_temps, vec![5.0, 35.0]);
    }

    #[test]
    fn unknown_env_key_is_an_error() {
        let err = ExperimentConfig::load(None, env(&[("WWS_CONTROLER__HORIZON", "3")])).unwrap_err();
        assert!(format!("{err:#}").contains("unknown key"));
    }

    #[test]
    fn out_of_range_units_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.initial_temp = 400.0;
        assert!(cfg.clone().finalize().is_err());
        cfg.initial_temp = 15.0;
        cfg.fit.dataset.u_band = [-1.0, 5.0];
        assert!(cfg.finalize().is_err());
    }

    #[test]
    fn missing_files_are_rejected() {
        let cfg = ExperimentConfig {
            predictor: Some(PathBuf::from("/nonexistent/predictor.json")),
            ..Default::default()
        };
        assert!(cfg.finalize().unwrap_err().to_string().contains("does not exist"));
    }
}
