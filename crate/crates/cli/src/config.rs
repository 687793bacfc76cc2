//! Experiment configuration (one TOML file per experiment).

use std::path::{Path, PathBuf};

use lpvrom::experiment::{FitOptions, Scenario, SpeedProfile};
use lpvrom::gramians::GramianOptions;
use lpvrom::lpv::Algorithm;
use lpvrom::signals::SignalSpec;
use lpvrom::{PlantConfig, SettleConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; training run `i` uses seed `seed + i`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plant: PlantConfig,
    /// Overrides `plant.grid_rhos`.
    pub grid: GridSpec,
    pub settle: SettleConfig,
    pub gramians: GramianOptions,
    pub training: TrainingSpec,
    pub fit: FitSpec,
    pub scenarios: Vec<Scenario>,
    pub eval: EvalSpec,
    pub mpc: MpcSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_g: usize,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    /// Excitation added to the trim input; its seed (if any) is replaced per
    /// training run.
    pub signal: SignalSpec,
    /// Snapshot pairs per grid point.
    pub n_s: usize,
    /// Number of independent training runs.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpec {
    pub algorithms: Vec<String>,
    /// Explicit model orders; mutually exclusive with `hankel_threshold`.
    /// Without either, orders 10, 12, …, 40 are fitted.
    pub n_z: Option<Vec<usize>>,
    /// Picks one order retaining this fraction of the Hankel energy.
    pub hankel_threshold: Option<f64>,
    /// Fit the next-input terms (`L`, `P`).
    pub algebraic: bool,
    /// DMDc truncation order is `n_z + r_offset`.
    pub r_offset: usize,
}

impl FitSpec {
    /// Explicit order list, if orders are not chosen from Hankel values.
    pub fn order_list(&self) -> Option<Vec<usize>> {
        match (&self.n_z, self.hankel_threshold) {
            (Some(l), _) => Some(l.clone()),
            (None, None) => Some((10..=40).step_by(2).collect()),
            (None, Some(_)) => None,
        }
    }

    pub fn options(&self) -> FitOptions {
        FitOptions {
            algebraic: self.algebraic,
            r_offset: self.r_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Order whose predictions are written as traces (falls back to the
    /// smallest fitted order).
    pub trace_n_z: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSpec {
    pub algorithms: Vec<String>,
    /// Must be fitted orders.
    pub n_z: Vec<usize>,
    pub horizon: usize,
    pub tracking: f64,
    pub input_weight: f64,
    pub rate_weight: f64,
    /// Symmetric bound on the controlled input deviations.
    pub bound: f64,
    pub controlled: Vec<usize>,
    pub len: usize,
    pub speed: SpeedProfile,
    /// Summed into the uncontrolled input deviations.
    pub disturbances: Vec<SignalSpec>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_g: 16, range: (20.0, 50.0) }
    }
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            signal: SignalSpec::ImpulseTrain {
                amplitude: 1.0,
                spacing: 20,
                seed: 0,
            },
            n_s: 500,
            seeds: 5,
        }
    }
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            algorithms: default_algorithms(),
            n_z: None,
            hankel_threshold: None,
            algebraic: FitOptions::default().algebraic,
            r_offset: FitOptions::default().r_offset,
        }
    }
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { trace_n_z: 10 }
    }
}

impl Default for MpcSpec {
    fn default() -> Self {
        Self {
            algorithms: default_algorithms(),
            n_z: vec![10, 20, 30, 40],
            horizon: 10,
            tracking: 13_000.0,
            input_weight: 10.0,
            rate_weight: 0.1,
            bound: 3.0,
            controlled: vec![0],
            len: 500,
            speed: SpeedProfile::Ramp { from: 27.0, to: 50.0 },
            disturbances: vec![
                SignalSpec::GustOneCosine {
                    channel: 1,
                    length_s: 0.5,
                    amplitude: 1.0,
                    start_s: 0.5,
                },
                SignalSpec::LowPassNoise {
                    channel: 1,
                    intensity: 0.1,
                    bandwidth_hz: 2.0,
                    seed: 3,
                },
            ],
        }
    }
}

fn default_algorithms() -> Vec<String> {
    ["admdc", "iorom", "bmd"].map(String::from).to_vec()
}

/// Sine, chirp and PRBS inputs over a 20 → 50 ramp.
pub fn default_scenarios() -> Vec<Scenario> {
    let ramp = SpeedProfile::Ramp { from: 20.0, to: 50.0 };
    vec![
        Scenario {
            name: "sine".into(),
            speed: ramp,
            len: 500,
            signal: SignalSpec::SineBank {
                channels: vec![0, 2, 4],
                factors: vec![1.0 / (5.0 * PI), 1.0 / (10.0 * PI), 1.0 / (20.0 * PI)],
                amplitudes: vec![1.0; 3],
            },
        },
        Scenario {
            name: "chirp".into(),
            speed: ramp,
            len: 500,
            signal: SignalSpec::Chirp {
                channels: (0..6).collect(),
                f0_factor: 1.0 / (50.0 * PI),
                f1_factor: 2.0 / (15.0 * PI),
                amplitude: 1.0,
            },
        },
        Scenario {
            name: "prbs".into(),
            speed: ramp,
            len: 500,
            signal: SignalSpec::Prbs9 {
                channels: (0..6).collect(),
                amplitude: 1.0,
                chip: 2,
                seed: 1,
            },
        },
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            plant: PlantConfig::default(),
            grid: GridSpec::default(),
            settle: SettleConfig::default(),
            gramians: GramianOptions::default(),
            training: TrainingSpec::default(),
            fit: FitSpec::default(),
            scenarios: default_scenarios(),
            eval: EvalSpec::default(),
            mpc: MpcSpec::default(),
        }
    }
}

fn parse_algorithms(tags: &[String], what: &str) -> Result<Vec<Algorithm>, CliError> {
    if tags.is_empty() {
        return Err(CliError::Config(format!("{what}: no algorithms listed")));
    }
    let mut out: Vec<Algorithm> = Vec::new();
    for t in tags {
        let a = Algorithm::from_tag(t).map_err(|_| CliError::Config(format!("{what}: unknown algorithm '{t}'")))?;
        if a == Algorithm::Exact {
            return Err(CliError::Config(format!("{what}: the exact model is not a fitted algorithm")));
        }
        if out.contains(&a) {
            return Err(CliError::Config(format!("{what}: algorithm '{t}' listed twice")));
        }
        out.push(a);
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Plant configuration with the grid applied.
    pub fn plant_config(&self) -> PlantConfig {
        let (lo, hi) = self.grid.range;
        let n = self.grid.n_g;
        let mut p = self.plant.clone();
        p.grid_rhos = (0..n)
            .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect();
        p
    }

    pub fn fit_algorithms(&self) -> Result<Vec<Algorithm>, CliError> {
        parse_algorithms(&self.fit.algorithms, "fit")
    }

    pub fn mpc_algorithms(&self) -> Result<Vec<Algorithm>, CliError> {
        parse_algorithms(&self.mpc.algorithms, "mpc")
    }

    pub fn training_seeds(&self) -> Vec<u64> {
        (0..self.training.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn needs_gramians(&self) -> bool {
        self.fit.algorithms.iter().any(|a| a == "bmd") || self.fit.hankel_threshold.is_some()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let n_x = self.plant.n_x;
        let (lo, hi) = self.grid.range;
        if self.grid.n_g < 2 {
            return bad("grid.n_g must be at least 2".into());
        }
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return bad("grid.range must be increasing and positive".into());
        }
        if self.training.n_s == 0 || self.training.seeds == 0 {
            return bad("training.n_s and training.seeds must be positive".into());
        }
        let fit_algs = self.fit_algorithms()?;
        match (&self.fit.n_z, self.fit.hankel_threshold) {
            (Some(_), Some(_)) => return bad("fit: give either n_z or hankel_threshold, not both".into()),
            (list, None) => {
                let list = list.clone().unwrap_or_else(|| self.fit.order_list().unwrap_or_default());
                if list.is_empty() {
                    return bad("fit.n_z is empty".into());
                }
                if let Some(&n) = list.iter().find(|&&n| n == 0 || n > n_x) {
                    return bad(format!("fit.n_z value {n} outside 1..={n_x}"));
                }
                let mut sorted = list.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != list.len() {
                    return bad("fit.n_z has duplicates".into());
                }
            }
            (None, Some(t)) => {
                if !(t > 0.0 && t <= 1.0) {
                    return bad("fit.hankel_threshold must lie in (0, 1]".into());
                }
            }
        }
        if self.scenarios.is_empty() {
            return bad("at least one evaluation scenario is required".into());
        }
        let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.scenarios.len() {
            return bad("scenario names must be unique".into());
        }
        if let Some(s) = self
            .scenarios
            .iter()
            .find(|s| s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return bad(format!("scenario name '{}' must be non-empty [A-Za-z0-9_-]", s.name));
        }
        if self.scenarios.iter().any(|s| s.len < 2) {
            return bad("scenario lengths must be at least 2".into());
        }
        let mpc_algs = self.mpc_algorithms()?;
        if let Some(a) = mpc_algs.iter().find(|a| !fit_algs.contains(a)) {
            return bad(format!("mpc algorithm '{}' is not fitted", a.tag()));
        }
        if self.mpc.n_z.is_empty() {
            return bad("mpc.n_z is empty".into());
        }
        if let Some(list) = self.fit.order_list() {
            if let Some(n) = self.mpc.n_z.iter().find(|n| !list.contains(n)) {
                return bad(format!("mpc.n_z value {n} is not in fit.n_z"));
            }
        }
        if self.mpc.horizon == 0 || self.mpc.len == 0 {
            return bad("mpc.horizon and mpc.len must be positive".into());
        }
        if self.mpc.controlled.is_empty() || self.mpc.controlled.iter().any(|&c| c >= self.plant.n_u) {
            return bad("mpc.controlled must list input channels of the plant".into());
        }
        for (what, w) in [
            ("tracking", self.mpc.tracking),
            ("input_weight", self.mpc.input_weight),
            ("rate_weight", self.mpc.rate_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("mpc.{what} must be finite and non-negative"));
            }
        }
        if !(self.mpc.bound.is_finite() && self.mpc.bound > 0.0) {
            return bad("mpc.bound must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn default_grid_matches_plant_default() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.plant_config().grid_rhos, PlantConfig::default().grid_rhos);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_order_list_is_rejected() {
        let e = ExperimentConfig::from_toml("[fit]\nn_z = []\n").unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn order_above_state_dimension_is_rejected() {
        assert!(ExperimentConfig::from_toml("[fit]\nn_z = [10, 201]\n").is_err());
    }

    #[test]
    fn threshold_and_list_are_exclusive() {
        assert!(ExperimentConfig::from_toml("[fit]\nn_z = [10]\nhankel_threshold = 0.9\n").is_err());
        let cfg = ExperimentConfig::from_toml("[fit]\nhankel_threshold = 0.9\n[mpc]\nn_z = [10]\n").unwrap();
        assert!(cfg.fit.order_list().is_none());
        assert_eq!(ExperimentConfig::default().fit.order_list().unwrap().len(), 16);
    }

    #[test]
    fn unknown_keys_and_algorithms_are_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[fit]\nalgorithms = [\"pod\"]\n").is_err());
    }

    #[test]
    fn mpc_orders_must_be_fitted() {
        assert!(ExperimentConfig::from_toml("[mpc]\nn_z = [11]\n").is_err());
    }

    #[test]
    fn training_seeds_follow_master_seed() {
        let cfg = ExperimentConfig::from_toml("seed = 9\n[training]\nseeds = 3\n").unwrap();
        assert_eq!(cfg.training_seeds(), vec![9, 10, 11]);
    }
}
