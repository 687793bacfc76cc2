//! Grid-level training, fitting and evaluation against the plant.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bmd::{BalancingData, ObliqueProjector};
use crate::dmdc::{admdc_lpv_predict, default_r, DmdcDecomposition, Readout};
use crate::error::{dim_err, Result, RomError};
use crate::gramians::{grid_gramians, GramianOptions, GramianPair};
use crate::grid::{interp_vector, ParamGrid};
use crate::iorom::{iorom_fit, projected_fit, SharedPod};
use crate::lpv::{Algorithm, GridRom};
use crate::plant::HighOrderPlant;
use crate::scalar::{lit, to_f64, Scalar};
use crate::signals::{generate, relative_error, SignalContext, SignalSpec, DEFAULT_CHORD};
use crate::snapshots::{build_snapshots, SettleConfig, SnapshotSet, TrajectorySet, Trim};

/// Frozen-parameter training runs, one per grid point.
#[derive(Debug, Clone)]
pub struct TrainingData<T: Scalar> {
    pub grid: ParamGrid<T>,
    pub trims: Vec<Trim<T>>,
    pub snapshots: Vec<SnapshotSet<T>>,
    /// Raw runs behind `snapshots`, grid order.
    pub trajectories: Vec<TrajectorySet<T>>,
    pub dt: T,
}

impl<T: Scalar> TrainingData<T> {
    /// Rebuilds training data from stored runs, one per grid point in grid
    /// order.
    pub fn from_trajectories(grid: ParamGrid<T>, trajectories: Vec<TrajectorySet<T>>) -> Result<Self> {
        if trajectories.len() != grid.len() {
            return dim_err("one trajectory per grid point required");
        }
        if let Some((j, _)) = trajectories
            .iter()
            .enumerate()
            .find(|(j, t)| t.rho() != grid.points()[*j])
        {
            return Err(RomError::Parameter(format!("trajectory {j} was recorded off its grid point")));
        }
        let dt = trajectories[0].dt();
        if trajectories.iter().any(|t| t.dt() != dt) {
            return Err(RomError::Parameter("trajectories disagree on the time step".into()));
        }
        let snapshots = trajectories.par_iter().map(build_snapshots).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            trims: trajectories.iter().map(|t| t.trim().clone()).collect(),
            snapshots,
            trajectories,
            dt,
        })
    }
}

/// Simulates `n_s + 1` samples of `signal` (added to the trim input) from
/// the trim at every grid point.
pub fn generate_training<T: Scalar>(
    plant: &HighOrderPlant<T>,
    trims: &[Trim<T>],
    signal: &SignalSpec,
    n_s: usize,
) -> Result<TrainingData<T>> {
    if trims.len() != plant.grid().len() {
        return dim_err("one trim per grid point required");
    }
    let ctx = SignalContext {
        n_u: plant.n_u(),
        len: n_s + 1,
        dt: to_f64(plant.dt()),
        chord: DEFAULT_CHORD,
    };
    let trajectories = plant
        .grid()
        .points()
        .par_iter()
        .zip(trims.par_iter())
        .map(|(&rho, trim)| {
            let dev = generate(signal, &ctx, &[to_f64(rho)])?.map(lit::<T>);
            let mut u = dev;
            for mut col in u.column_iter_mut() {
                col += &trim.u;
            }
            let sim = plant.simulate(&u, &vec![rho; n_s + 1], &trim.x)?;
            sim.into_trajectory(plant.dt(), trim.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    TrainingData::from_trajectories(plant.grid().clone(), trajectories)
}

/// Options shared by the grid fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Fit the algebraic next-input terms (`L`, `P`).
    pub algebraic: bool,
    /// DMDc truncation order is `n_z + r_offset`.
    pub r_offset: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            algebraic: true,
            r_offset: default_r(0),
        }
    }
}

/// Order-independent decompositions of one training set.
pub struct FitCache<T: Scalar> {
    pub dmdc: Vec<DmdcDecomposition<T>>,
    pub admdc: Vec<DmdcDecomposition<T>>,
    pub pod: SharedPod<T>,
    pub balancing: Option<BalancingData<T>>,
}

impl<T: Scalar> FitCache<T> {
    /// Computes all data decompositions; balancing data are attached when
    /// Gramians are supplied.
    pub fn new(data: &TrainingData<T>, gramians: Option<&[GramianPair<T>]>) -> Result<Self> {
        let dmdc = data
            .snapshots
            .par_iter()
            .map(|s| DmdcDecomposition::new(s, false))
            .collect::<Result<Vec<_>>>()?;
        let admdc = data
            .snapshots
            .par_iter()
            .map(|s| DmdcDecomposition::new(s, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dmdc,
            admdc,
            pod: SharedPod::new(&data.snapshots)?,
            balancing: gramians.map(BalancingData::new).transpose()?,
        })
    }
}

/// Fits one grid ROM of order `n_z`.
pub fn fit_grid_rom<T: Scalar>(
    algorithm: Algorithm,
    data: &TrainingData<T>,
    cache: &FitCache<T>,
    n_z: usize,
    opts: &FitOptions,
) -> Result<GridRom<T>> {
    let grid = data.grid.clone();
    match algorithm {
        Algorithm::Dmdc | Algorithm::Admdc => {
            let decomps = if algorithm == Algorithm::Dmdc { &cache.dmdc } else { &cache.admdc };
            let models = decomps
                .par_iter()
                .map(|d| d.fit(n_z + opts.r_offset, n_z))
                .collect::<Result<Vec<_>>>()?;
            GridRom::from_models(algorithm, grid, models, &data.trims, None, data.dt)
        }
        Algorithm::Iorom => {
            let q = cache.pod.basis(n_z)?;
            let models = data
                .snapshots
                .par_iter()
                .map(|s| iorom_fit(s, &q, opts.algebraic))
                .collect::<Result<Vec<_>>>()?;
            GridRom::from_models(algorithm, grid, models, &data.trims, None, data.dt)
        }
        Algorithm::Bmd => {
            let balancing = cache
                .balancing
                .as_ref()
                .ok_or_else(|| RomError::Parameter("BMD fit requires Gramians".into()))?;
            let proj = balancing.spaces(n_z)?;
            bmd_grid_rom(data, &proj, opts)
        }
        Algorithm::Exact => Err(RomError::Parameter("the exact model is not fitted".into())),
    }
}

/// BMD grid ROM from precomputed spaces.
pub fn bmd_grid_rom<T: Scalar>(data: &TrainingData<T>, proj: &ObliqueProjector<T>, opts: &FitOptions) -> Result<GridRom<T>> {
    if proj.w.len() != data.snapshots.len() {
        return dim_err("one test space per grid point required");
    }
    let models = data
        .snapshots
        .par_iter()
        .zip(proj.w.par_iter())
        .map(|(s, w)| projected_fit(s, w, &proj.v, opts.algebraic))
        .collect::<Result<Vec<_>>>()?;
    GridRom::from_models(
        Algorithm::Bmd,
        data.grid.clone(),
        models,
        &data.trims,
        Some(proj.w.clone()),
        data.dt,
    )
}

/// Speed schedule of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant { speed: f64 },
    Ramp { from: f64, to: f64 },
}

impl SpeedProfile {
    pub fn samples(&self, len: usize) -> Vec<f64> {
        match *self {
            Self::Constant { speed } => vec![speed; len],
            Self::Ramp { from, to } => {
                let span = (len.max(2) - 1) as f64;
                (0..len).map(|k| from + (to - from) * k as f64 / span).collect()
            }
        }
    }
}

/// Open-loop evaluation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub speed: SpeedProfile,
    pub signal: SignalSpec,
    pub len: usize,
}

/// Plant response to a scenario, started from the trim at the first speed.
#[derive(Debug, Clone)]
pub struct Truth<T: Scalar> {
    pub rho: Vec<T>,
    pub u: DMatrix<T>,
    pub x0: DVector<T>,
    /// Output deviation from the interpolated trim output.
    pub y_dev: DMatrix<T>,
    pub y_trim: DMatrix<T>,
}

/// Trim outputs interpolated along a parameter trajectory.
pub fn trim_outputs<T: Scalar>(grid: &ParamGrid<T>, trims: &[Trim<T>], rho: &[T]) -> Result<DMatrix<T>> {
    let ys: Vec<DVector<T>> = trims.iter().map(|t| t.y.clone()).collect();
    let n_y = ys.first().map_or(0, |y| y.len());
    let mut out = DMatrix::zeros(n_y, rho.len());
    for (k, &r) in rho.iter().enumerate() {
        out.set_column(k, &interp_vector(&ys, grid.locate(r)?));
    }
    Ok(out)
}

pub fn simulate_truth<T: Scalar>(plant: &HighOrderPlant<T>, trims: &[Trim<T>], scenario: &Scenario) -> Result<Truth<T>> {
    let speed = scenario.speed.samples(scenario.len);
    let rho: Vec<T> = speed.iter().map(|&v| lit(v)).collect();
    let ctx = SignalContext {
        n_u: plant.n_u(),
        len: scenario.len,
        dt: to_f64(plant.dt()),
        chord: DEFAULT_CHORD,
    };
    let mut u = generate(&scenario.signal, &ctx, &speed)?.map(lit::<T>);
    for mut col in u.column_iter_mut() {
        col += plant.trim_input();
    }
    let x0 = interp_vector(
        &trims.iter().map(|t| t.x.clone()).collect::<Vec<_>>(),
        plant.grid().locate(rho[0])?,
    );
    let sim = plant.simulate(&u, &rho, &x0)?;
    let y_trim = trim_outputs(plant.grid(), trims, &rho)?;
    Ok(Truth {
        y_dev: &sim.outputs - &y_trim,
        y_trim,
        rho,
        u,
        x0,
    })
}

/// Predicted output deviation of a grid ROM for the scenario behind `truth`.
/// DMDc-family ROMs use the parallel predictor with `readout`.
pub fn predict<T: Scalar>(rom: &GridRom<T>, truth: &Truth<T>, readout: &Readout<T>) -> Result<DMatrix<T>> {
    match rom.algorithm {
        Algorithm::Dmdc | Algorithm::Admdc => {
            let p = admdc_lpv_predict(rom, readout, &truth.u, &truth.rho, &truth.x0)?;
            Ok(p.outputs - &truth.y_trim)
        }
        _ => {
            let z0 = rom.project_state(&truth.x0, truth.rho[0])?;
            let sim = rom.simulate_lpv(&truth.u, &truth.rho, &z0)?;
            let y = sim
                .y
                .ok_or_else(|| RomError::Parameter("ROM has no output equation".into()))?;
            Ok(y - &truth.y_trim)
        }
    }
}

/// Relative output-prediction error of a ROM on a scenario.
pub fn prediction_error<T: Scalar>(rom: &GridRom<T>, truth: &Truth<T>, readout: &Readout<T>) -> Result<f64> {
    let pred = predict(rom, truth, readout)?;
    if pred.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    relative_error(&pred, &truth.y_dev)
}

/// Gramians of every grid model with the given options.
pub fn plant_gramians<T: Scalar>(plant: &HighOrderPlant<T>, opts: &GramianOptions) -> Result<Vec<GramianPair<T>>> {
    grid_gramians(plant, opts)
}

/// Trims at every grid point.
pub fn plant_trims<T: Scalar>(plant: &HighOrderPlant<T>, settle: &SettleConfig) -> Result<Vec<Trim<T>>> {
    plant.grid_trims(settle)
}
