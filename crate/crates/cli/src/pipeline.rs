//! The `generate → fit → eval / mpc → report` pipeline.
//!
//! Every stage reads its inputs from the content-addressed cache and fails
//! with [`CliError::Missing`] (naming the command to run) if they are absent.
//! Outputs depend only on the configuration, never on thread count or
//! timing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lpvrom::bmd::{select_order_from_hankel, BalancingData};
use lpvrom::dmdc::Readout;
use lpvrom::experiment::{
    fit_grid_rom, generate_training, predict, prediction_error, simulate_truth, trim_outputs, FitCache, TrainingData,
    Truth,
};
use lpvrom::gramians::{grid_gramians, GramianPair};
use lpvrom::io::{
    gramians_from_bundle, gramians_to_bundle, grid_rom_from_bundle, grid_rom_to_bundle, plant_from_bundle,
    plant_to_bundle, read_trajectory, trims_from_bundle, trims_to_bundle, write_atomic, write_trajectory, Bundle,
};
use lpvrom::lpv::{Algorithm, GridRom};
use lpvrom::mpc::{closed_loop_run, ClosedLoopResult, ClosedLoopScenario, MpcConfig};
use lpvrom::signals::{generate, SignalContext, SignalSpec, DEFAULT_CHORD};
use lpvrom::{make_benchmark_plant, Plant, Trim};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{cache_key, canonical, sha256_hex, InputDigest, Layout};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Files written and cache entries reused by one command.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Summary {
    pub written: Vec<PathBuf>,
    pub reused: usize,
}

impl Summary {
    fn merge(&mut self, other: Summary) {
        self.written.extend(other.written);
        self.reused += other.reused;
    }
}

/// Fitted orders, algorithms and seeds, recorded by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub orders: Vec<usize>,
    pub algorithms: Vec<String>,
    pub seeds: Vec<u64>,
}

/// Replaces the seed of a stochastic signal.
pub fn with_seed(spec: &SignalSpec, new_seed: u64) -> SignalSpec {
    let mut s = spec.clone();
    match &mut s {
        SignalSpec::ImpulseTrain { seed, .. } | SignalSpec::Prbs9 { seed, .. } | SignalSpec::LowPassNoise { seed, .. } => {
            *seed = new_seed
        }
        _ => {}
    }
    s
}

/// Median of finite and infinite values; the mean of the middle pair for
/// even counts. NaN sorts last.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub layout: Layout,
    config_hash: String,
    config_label: String,
}

impl Pipeline {
    /// `out` overrides `cfg.out_dir`; `cache` defaults to `<out>/cache`.
    pub fn new(cfg: ExperimentConfig, label: &str, out: Option<PathBuf>, cache: Option<PathBuf>) -> CliResult<Self> {
        cfg.validate()?;
        let out = out.unwrap_or_else(|| cfg.out_dir.clone());
        let cache = cache.unwrap_or_else(|| out.join("cache"));
        let plant_key = cache_key(&[("plant", canonical(&cfg.plant_config())), ("settle", canonical(&cfg.settle))]);
        let gramian_key = cache_key(&[("plant", plant_key.clone()), ("gramians", canonical(&cfg.gramians))]);
        let training_key = cache_key(&[
            ("plant", plant_key.clone()),
            ("signal", canonical(&cfg.training.signal)),
            ("n_s", cfg.training.n_s.to_string()),
        ]);
        let mut fit_parts = vec![
            ("training", training_key.clone()),
            ("fit", canonical(&cfg.fit)),
            ("seeds", canonical(&cfg.training_seeds())),
        ];
        if cfg.needs_gramians() {
            fit_parts.push(("gramians", gramian_key.clone()));
        }
        let fit_key = cache_key(&fit_parts);
        // The output location is not part of the experiment.
        let mut hashed = cfg.clone();
        hashed.out_dir = PathBuf::new();
        let config_hash = sha256_hex(toml::to_string(&hashed).map_err(|e| CliError::Config(e.to_string()))?.as_bytes());
        Ok(Self {
            layout: Layout {
                out,
                cache,
                plant_key,
                gramian_key,
                training_key,
                fit_key,
            },
            cfg,
            config_hash,
            config_label: label.to_string(),
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self, command: &str, inputs: InputDigest) -> String {
        format!(
            "# lpvrom {command}\n# config = {}\n# config_sha256 = {}\n# inputs_sha256 = {}\n",
            self.config_label,
            self.config_hash,
            inputs.finish()
        )
    }

    fn digest(&self, files: &[PathBuf]) -> CliResult<InputDigest> {
        let mut d = InputDigest::default();
        for f in files {
            d.add_file(&self.layout.cache, f)?;
        }
        Ok(d)
    }

    fn require(path: &Path, what: &str, command: &'static str) -> CliResult<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(CliError::Missing {
                what: format!("{what} ({})", path.display()),
                command,
            })
        }
    }

    fn load_plant(&self) -> CliResult<(Plant, Vec<Trim<f64>>)> {
        let (pf, tf) = (self.layout.plant_file(), self.layout.trims_file());
        Self::require(&pf, "plant", "generate")?;
        Self::require(&tf, "trims", "generate")?;
        let plant = plant_from_bundle(&Bundle::read(&pf)?)?;
        let trims = trims_from_bundle(&Bundle::read(&tf)?)?;
        Ok((plant, trims))
    }

    fn load_gramians(&self) -> CliResult<Vec<GramianPair<f64>>> {
        let gf = self.layout.gramians_file();
        Self::require(&gf, "Gramians", "generate")?;
        Ok(gramians_from_bundle(&Bundle::read(&gf)?)?)
    }

    fn load_training(&self, plant: &Plant, seed: u64) -> CliResult<TrainingData<f64>> {
        let trajectories = (0..plant.grid().len())
            .into_par_iter()
            .map(|j| {
                let path = self.layout.trajectory_file(seed, j);
                Self::require(&path, "training trajectory", "generate")?;
                Ok(read_trajectory(&path)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(TrainingData::from_trajectories(plant.grid().clone(), trajectories)?)
    }

    fn load_manifest(&self) -> CliResult<FitManifest> {
        let path = self.layout.orders_file();
        Self::require(&path, "fitted models", "fit")?;
        toml::from_str(&fs::read_to_string(&path)?).map_err(|e| CliError::Rom(lpvrom::RomError::Parse(e.to_string())))
    }

    fn readout(plant: &Plant) -> Readout<f64> {
        Readout {
            matrix: plant.model(0).c.clone(),
        }
    }

    /// Builds the plant, trims, Gramians and training runs; existing cache
    /// entries are kept.
    pub fn generate(&self) -> CliResult<Summary> {
        let mut summary = Summary::default();
        let l = &self.layout;
        let plant: Plant = if l.plant_file().exists() {
            summary.reused += 1;
            plant_from_bundle(&Bundle::read(&l.plant_file())?)?
        } else {
            let p = make_benchmark_plant(&self.cfg.plant_config())?;
            plant_to_bundle(&p).write(&l.plant_file())?;
            summary.written.push(l.plant_file());
            p
        };
        let trims = if l.trims_file().exists() {
            summary.reused += 1;
            trims_from_bundle(&Bundle::read(&l.trims_file())?)?
        } else {
            let t = plant.grid_trims(&self.cfg.settle)?;
            trims_to_bundle(&t).write(&l.trims_file())?;
            summary.written.push(l.trims_file());
            t
        };
        if self.cfg.needs_gramians() {
            if l.gramians_file().exists() {
                summary.reused += 1;
            } else {
                let g = grid_gramians(&plant, &self.cfg.gramians)?;
                gramians_to_bundle(&g).write(&l.gramians_file())?;
                summary.written.push(l.gramians_file());
            }
        }
        for seed in self.cfg.training_seeds() {
            let files: Vec<PathBuf> = (0..plant.grid().len()).map(|j| l.trajectory_file(seed, j)).collect();
            let missing: Vec<usize> = (0..files.len()).filter(|&j| !files[j].exists()).collect();
            summary.reused += files.len() - missing.len();
            if missing.is_empty() {
                continue;
            }
            let signal = with_seed(&self.cfg.training.signal, seed);
            let data = generate_training(&plant, &trims, &signal, self.cfg.training.n_s)?;
            for j in missing {
                write_trajectory(&files[j], &data.trajectories[j])?;
                summary.written.push(files[j].clone());
            }
        }
        Ok(summary)
    }

    /// Orders to fit: the configured list or the Hankel-threshold choice.
    pub fn resolve_orders(&self) -> CliResult<Vec<usize>> {
        match (self.cfg.fit.order_list(), self.cfg.fit.hankel_threshold) {
            (Some(list), _) => Ok(list),
            (None, Some(t)) => {
                let hankel = BalancingData::new(&self.load_gramians()?)?.hankel();
                Ok(vec![select_order_from_hankel(&hankel, t)?])
            }
            (None, None) => Err(CliError::Config("no model orders configured".into())),
        }
    }

    /// Fits one grid ROM per (seed, algorithm, order).
    pub fn fit(&self) -> CliResult<Summary> {
        let mut summary = Summary::default();
        let l = &self.layout;
        let (plant, _) = self.load_plant()?;
        let algorithms = self.cfg.fit_algorithms()?;
        let orders = self.resolve_orders()?;
        let gramians = if algorithms.contains(&Algorithm::Bmd) {
            Some(self.load_gramians()?)
        } else {
            None
        };
        let opts = self.cfg.fit.options();
        for seed in self.cfg.training_seeds() {
            let cells: Vec<(Algorithm, usize)> = algorithms
                .iter()
                .flat_map(|&a| orders.iter().map(move |&n| (a, n)))
                .filter(|&(a, n)| {
                    let done = l.rom_file(seed, a.tag(), n).exists() || l.rom_failure_file(seed, a.tag(), n).exists();
                    if done {
                        summary.reused += 1;
                    }
                    !done
                })
                .collect();
            if cells.is_empty() {
                continue;
            }
            let data = self.load_training(&plant, seed)?;
            let cache = FitCache::new(&data, gramians.as_deref())?;
            let written = cells
                .par_iter()
                .map(|&(alg, n_z)| -> CliResult<PathBuf> {
                    match fit_grid_rom(alg, &data, &cache, n_z, &opts) {
                        Ok(rom) => {
                            let path = l.rom_file(seed, alg.tag(), n_z);
                            grid_rom_to_bundle(&rom).write(&path)?;
                            Ok(path)
                        }
                        Err(e) => {
                            let path = l.rom_failure_file(seed, alg.tag(), n_z);
                            write_atomic(&path, &format!("{e}\n"))?;
                            Ok(path)
                        }
                    }
                })
                .collect::<CliResult<Vec<_>>>()?;
            summary.written.extend(written);
        }
        let manifest = FitManifest {
            orders,
            algorithms: algorithms.iter().map(|a| a.tag().to_string()).collect(),
            seeds: self.cfg.training_seeds(),
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        if fs::read_to_string(l.orders_file()).ok().as_deref() != Some(text.as_str()) {
            write_atomic(&l.orders_file(), &text)?;
            summary.written.push(l.orders_file());
        }
        Ok(summary)
    }

    /// Loads a fitted ROM; `Ok(None)` if its fit failed.
    fn load_rom(&self, seed: u64, alg: Algorithm, n_z: usize) -> CliResult<Option<(GridRom<f64>, PathBuf)>> {
        let path = self.layout.rom_file(seed, alg.tag(), n_z);
        if path.exists() {
            return Ok(Some((grid_rom_from_bundle(&Bundle::read(&path)?)?, path)));
        }
        let failed = self.layout.rom_failure_file(seed, alg.tag(), n_z);
        if failed.exists() {
            return Ok(None);
        }
        Err(CliError::Missing {
            what: format!("{} model of order {n_z} for seed {seed}", alg.tag()),
            command: "fit",
        })
    }

    fn error_table(&self, orders: &[usize], algorithms: &[Algorithm], value: impl Fn(usize, Algorithm) -> Vec<f64>) -> String {
        let mut out = String::from("n_z");
        for a in algorithms {
            let t = a.tag();
            let _ = write!(out, ",{t}_median,{t}_min,{t}_max");
        }
        out.push('\n');
        for &n in orders {
            out += &n.to_string();
            for &a in algorithms {
                let v = value(n, a);
                let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let _ = write!(out, ",{},{},{}", fmt(median(&v)), fmt(min), fmt(max));
            }
            out.push('\n');
        }
        out
    }

    /// Relative output-prediction error per scenario, order and algorithm,
    /// plus prediction traces at one order.
    pub fn eval(&self) -> CliResult<Summary> {
        let l = &self.layout;
        let manifest = self.load_manifest()?;
        let (plant, trims) = self.load_plant()?;
        let algorithms: Vec<Algorithm> = manifest
            .algorithms
            .iter()
            .map(|t| Algorithm::from_tag(t))
            .collect::<lpvrom::Result<_>>()?;
        let truths: Vec<Truth<f64>> = self
            .cfg
            .scenarios
            .par_iter()
            .map(|s| simulate_truth(&plant, &trims, s))
            .collect::<lpvrom::Result<_>>()?;
        let readout = Self::readout(&plant);
        let mut cells: Vec<(u64, Algorithm, usize)> = Vec::new();
        for &s in &manifest.seeds {
            for &a in &algorithms {
                cells.extend(manifest.orders.iter().map(|&n| (s, a, n)));
            }
        }
        let results = cells
            .par_iter()
            .map(|&(seed, alg, n_z)| -> CliResult<(Vec<f64>, Option<PathBuf>)> {
                match self.load_rom(seed, alg, n_z)? {
                    None => Ok((vec![f64::INFINITY; truths.len()], None)),
                    Some((rom, path)) => {
                        let errs = truths
                            .iter()
                            .map(|t| prediction_error(&rom, t, &readout))
                            .collect::<lpvrom::Result<Vec<_>>>()?;
                        Ok((errs, Some(path)))
                    }
                }
            })
            .collect::<CliResult<Vec<_>>>()?;
        let mut table: BTreeMap<(&'static str, usize), Vec<Vec<f64>>> = BTreeMap::new();
        let mut inputs = vec![l.plant_file(), l.trims_file()];
        for (&(_, alg, n_z), (errs, path)) in cells.iter().zip(&results) {
            table.entry((alg.tag(), n_z)).or_default().push(errs.clone());
            inputs.extend(path.clone());
        }
        let digest_files = inputs;
        let mut summary = Summary::default();
        for (s, scenario) in self.cfg.scenarios.iter().enumerate() {
            let body = self.error_table(&manifest.orders, &algorithms, |n, a| {
                table[&(a.tag(), n)].iter().map(|e| e[s]).collect()
            });
            let path = l.eval_dir().join(format!("errors-{}.csv", scenario.name));
            write_atomic(&path, &(self.header("eval", self.digest(&digest_files)?) + &body))?;
            summary.written.push(path);
        }
        summary.merge(self.eval_traces(&manifest, &algorithms, &plant, &truths, &readout)?);
        Ok(summary)
    }

    fn eval_traces(
        &self,
        manifest: &FitManifest,
        algorithms: &[Algorithm],
        plant: &Plant,
        truths: &[Truth<f64>],
        readout: &Readout<f64>,
    ) -> CliResult<Summary> {
        let l = &self.layout;
        let order = if manifest.orders.contains(&self.cfg.eval.trace_n_z) {
            self.cfg.eval.trace_n_z
        } else {
            *manifest.orders.iter().min().expect("validated non-empty")
        };
        let seed = manifest.seeds[0];
        let mut files = vec![l.plant_file(), l.trims_file()];
        let mut roms = Vec::new();
        for &a in algorithms {
            let rom = self.load_rom(seed, a, order)?;
            if let Some((_, p)) = &rom {
                files.push(p.clone());
            }
            roms.push(rom.map(|(r, _)| r));
        }
        let mut summary = Summary::default();
        let dt = plant.dt();
        for (scenario, truth) in self.cfg.scenarios.iter().zip(truths) {
            let n_y = truth.y_dev.nrows();
            let preds: Vec<Option<DMatrix<f64>>> = roms
                .iter()
                .map(|r| r.as_ref().map(|rom| predict(rom, truth, readout)).transpose())
                .collect::<lpvrom::Result<_>>()?;
            let mut body = String::from("t,rho");
            for i in 1..=n_y {
                let _ = write!(body, ",truth_{i}");
            }
            for a in algorithms {
                for i in 1..=n_y {
                    let _ = write!(body, ",{}_{i}", a.tag());
                }
            }
            body.push('\n');
            for k in 0..truth.rho.len() {
                let _ = write!(body, "{},{}", fmt(k as f64 * dt), fmt(truth.rho[k]));
                for i in 0..n_y {
                    let _ = write!(body, ",{}", fmt(truth.y_dev[(i, k)]));
                }
                for p in &preds {
                    for i in 0..n_y {
                        let v = p.as_ref().map_or(f64::NAN, |p| p[(i, k)]);
                        let _ = write!(body, ",{}", fmt(v));
                    }
                }
                body.push('\n');
            }
            let path = l.eval_dir().join("traces").join(format!("{}-nz{order:03}.csv", scenario.name));
            write_atomic(&path, &(self.header("eval", self.digest(&files)?) + &body))?;
            summary.written.push(path);
        }
        Ok(summary)
    }

    /// Closed-loop scenario of the MPC study: trim reference along the speed
    /// profile and the summed disturbances.
    pub fn mpc_scenario(&self, plant: &Plant, trims: &[Trim<f64>]) -> CliResult<ClosedLoopScenario<f64>> {
        let spec = &self.cfg.mpc;
        let speed = spec.speed.samples(spec.len);
        let ctx = SignalContext {
            n_u: plant.n_u(),
            len: spec.len,
            dt: plant.dt(),
            chord: DEFAULT_CHORD,
        };
        let mut disturbance = DMatrix::zeros(plant.n_u(), spec.len);
        for d in &spec.disturbances {
            disturbance += generate(d, &ctx, &speed)?;
        }
        let reference = trim_outputs(plant.grid(), trims, &speed)?;
        Ok(ClosedLoopScenario {
            rho: speed,
            reference,
            disturbance,
        })
    }

    pub fn mpc_config(&self, n_y: usize) -> MpcConfig<f64> {
        let s = &self.cfg.mpc;
        MpcConfig::uniform(s.horizon, n_y, s.controlled.clone(), s.tracking, s.input_weight, s.rate_weight, s.bound)
    }

    fn trace_csv(&self, r: &ClosedLoopResult<f64>, dt: f64) -> String {
        let controlled = &self.cfg.mpc.controlled;
        let n_y = r.y.nrows();
        let mut body = String::from("t,rho");
        for prefix in ["r", "y"] {
            for i in 1..=n_y {
                let _ = write!(body, ",{prefix}_{i}");
            }
        }
        for &c in controlled {
            let _ = write!(body, ",u_{}", c + 1);
        }
        body += ",stage_cost\n";
        for k in 0..r.rho.len() {
            let _ = write!(body, "{},{}", fmt(k as f64 * dt), fmt(r.rho[k]));
            for i in 0..n_y {
                let _ = write!(body, ",{}", fmt(r.reference[(i, k)]));
            }
            for i in 0..n_y {
                let _ = write!(body, ",{}", fmt(r.y[(i, k)]));
            }
            for &c in controlled {
                let _ = write!(body, ",{}", fmt(r.u[(c, k)]));
            }
            let _ = writeln!(body, ",{}", fmt(r.stage_cost[k]));
        }
        body
    }

    /// Closed-loop cost of every MPC cell, normalised by the median BMD cost
    /// at the largest order (the exact-model cost if BMD is not run).
    pub fn mpc(&self) -> CliResult<Summary> {
        let l = &self.layout;
        let manifest = self.load_manifest()?;
        let (plant, trims) = self.load_plant()?;
        let algorithms = self.cfg.mpc_algorithms()?;
        // Hankel-selected orders are only known after fitting.
        let mpc_orders = if self.cfg.fit.order_list().is_some() {
            self.cfg.mpc.n_z.clone()
        } else {
            manifest.orders.clone()
        };
        if let Some(n) = mpc_orders.iter().find(|n| !manifest.orders.contains(n)) {
            return Err(CliError::Missing {
                what: format!("fitted models of order {n}"),
                command: "fit",
            });
        }
        let scenario = self.mpc_scenario(&plant, &trims)?;
        let mcfg = self.mpc_config(plant.n_y());
        let readout = Self::readout(&plant);
        let exact_rom = GridRom::exact(&plant, &trims)?;
        let exact = closed_loop_run(&plant, &exact_rom, None, &scenario, &mcfg)?;

        let cells: Vec<(Algorithm, usize, u64)> = algorithms
            .iter()
            .flat_map(|&a| {
                let seeds = &manifest.seeds;
                mpc_orders.iter().flat_map(move |&n| seeds.iter().map(move |&s| (a, n, s)))
            })
            .collect();
        type Cell = (Option<ClosedLoopResult<f64>>, String, Option<PathBuf>);
        let runs = cells
            .par_iter()
            .map(|&(alg, n_z, seed)| -> CliResult<Cell> {
                Ok(match self.load_rom(seed, alg, n_z)? {
                    None => (None, "fit_failed".into(), None),
                    Some((rom, path)) => match closed_loop_run(&plant, &rom, Some(&readout), &scenario, &mcfg) {
                        Ok(r) => (Some(r), "ok".into(), Some(path)),
                        Err(e) => (None, format!("failed: {e}").replace(',', ";"), Some(path)),
                    },
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let cost_of = |r: &Cell| r.0.as_ref().map_or(f64::INFINITY, |r| if r.cost.is_finite() { r.cost } else { f64::INFINITY });

        let mut files = vec![l.plant_file(), l.trims_file()];
        files.extend(runs.iter().filter_map(|r| r.2.clone()));
        let largest = *mpc_orders.iter().max().expect("validated non-empty");
        let normalizer = if algorithms.contains(&Algorithm::Bmd) {
            let v: Vec<f64> = cells
                .iter()
                .zip(&runs)
                .filter(|((a, n, _), _)| *a == Algorithm::Bmd && *n == largest)
                .map(|(_, r)| cost_of(r))
                .collect();
            (format!("bmd median at n_z = {largest}"), median(&v))
        } else {
            ("exact model".to_string(), exact.cost)
        };
        let mut summary = Summary::default();
        let mut orders = mpc_orders.clone();
        orders.sort_unstable();

        let mut cost = String::from("n_z,exact");
        let mut raw = String::from("n_z,exact");
        for a in &algorithms {
            let t = a.tag();
            for s in [&mut cost, &mut raw] {
                let _ = write!(s, ",{t}_median,{t}_min,{t}_max");
            }
        }
        cost.push('\n');
        raw.push('\n');
        for &n in &orders {
            let _ = write!(cost, "{n},{}", fmt(exact.cost / normalizer.1));
            let _ = write!(raw, "{n},{}", fmt(exact.cost));
            for &a in &algorithms {
                let v: Vec<f64> = cells
                    .iter()
                    .zip(&runs)
                    .filter(|((ca, cn, _), _)| *ca == a && *cn == n)
                    .map(|(_, r)| cost_of(r))
                    .collect();
                let (med, min, max) = (
                    median(&v),
                    v.iter().copied().fold(f64::INFINITY, f64::min),
                    v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                );
                let _ = write!(cost, ",{},{},{}", fmt(med / normalizer.1), fmt(min / normalizer.1), fmt(max / normalizer.1));
                let _ = write!(raw, ",{},{},{}", fmt(med), fmt(min), fmt(max));
            }
            cost.push('\n');
            raw.push('\n');
        }
        let norm_line = format!("# normalizer = {} = {}\n", normalizer.0, fmt(normalizer.1));
        let header = self.header("mpc", self.digest(&files)?);
        for (name, body) in [("cost.csv", &cost), ("cost-raw.csv", &raw)] {
            let path = l.mpc_dir().join(name);
            write_atomic(&path, &(header.clone() + &norm_line + body))?;
            summary.written.push(path);
        }

        let mut diag = String::from("algorithm,n_z,seed,cost,max_condensation_error,max_kkt,solves,status\n");
        let _ = writeln!(
            diag,
            "exact,{},,{},{},{},{},ok",
            plant.n_x(),
            fmt(exact.cost),
            fmt(exact.max_condensation_error),
            fmt(exact.max_kkt),
            exact.solves
        );
        for ((a, n, s), r) in cells.iter().zip(&runs) {
            match &r.0 {
                Some(res) => {
                    let _ = writeln!(
                        diag,
                        "{},{n},{s},{},{},{},{},{}",
                        a.tag(),
                        fmt(res.cost),
                        fmt(res.max_condensation_error),
                        fmt(res.max_kkt),
                        res.solves,
                        r.1
                    );
                }
                None => {
                    let _ = writeln!(diag, "{},{n},{s},inf,,,0,{}", a.tag(), r.1);
                }
            }
        }
        let path = l.mpc_dir().join("diagnostics.csv");
        write_atomic(&path, &(header.clone() + &diag))?;
        summary.written.push(path);

        let dt = plant.dt();
        let trace_dir = l.mpc_dir().join("traces");
        let path = trace_dir.join("exact.csv");
        write_atomic(&path, &(header.clone() + &self.trace_csv(&exact, dt)))?;
        summary.written.push(path);
        for ((a, n, s), r) in cells.iter().zip(&runs) {
            if let Some(res) = &r.0 {
                let path = trace_dir.join(format!("{}-nz{n:03}-seed{s}.csv", a.tag()));
                write_atomic(&path, &(header.clone() + &self.trace_csv(res, dt)))?;
                summary.written.push(path);
            }
        }
        Ok(summary)
    }

    /// Merges the error and cost tables into one long-format CSV
    /// (`table,row,column,value`).
    pub fn report(&self) -> CliResult<Summary> {
        let l = &self.layout;
        let mut tables: Vec<PathBuf> = Vec::new();
        for dir in [l.eval_dir(), l.mpc_dir()] {
            if let Ok(entries) = fs::read_dir(&dir) {
                for e in entries {
                    let p = e?.path();
                    if p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n != "diagnostics.csv") {
                        tables.push(p);
                    }
                }
            }
        }
        if tables.is_empty() {
            return Err(CliError::Missing {
                what: "evaluation or MPC tables".into(),
                command: "eval",
            });
        }
        tables.sort();
        let mut digest = InputDigest::default();
        let mut body = String::from("table,row,column,value\n");
        for t in &tables {
            digest.add_file(&l.out, t)?;
            let name = t.strip_prefix(&l.out).unwrap_or(t).to_string_lossy().replace('\\', "/");
            let text = fs::read_to_string(t)?;
            let mut lines = text.lines().filter(|s| !s.starts_with('#'));
            let Some(head) = lines.next() else { continue };
            let cols: Vec<&str> = head.split(',').collect();
            for line in lines {
                let vals: Vec<&str> = line.split(',').collect();
                for (c, v) in cols.iter().zip(&vals).skip(1) {
                    let _ = writeln!(body, "{name},{},{c},{v}", vals[0]);
                }
            }
        }
        let path = l.out.join("report.csv");
        write_atomic(&path, &(self.header("report", digest) + &body))?;
        Ok(Summary {
            written: vec![path],
            reused: 0,
        })
    }

    /// `generate`, `fit`, `eval`, `mpc` and `report` in order.
    pub fn run_all(&self) -> CliResult<Summary> {
        let mut s = self.generate()?;
        s.merge(self.fit()?);
        s.merge(self.eval()?);
        s.merge(self.mpc()?);
        s.merge(self.report()?);
        Ok(s)
    }
}
