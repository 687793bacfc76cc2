//! Synthetic high-order parameter-varying plant.
//!
//! The plant is linear at every frozen parameter value, with matrices stored
//! at grid points and interpolated entrywise in between. It is the data
//! source for every fit and the reference for every error metric, and it
//! hosts the model-based balanced-truncation oracle.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, RomError};
use crate::grid::{interp_matrix, Bracket, ParamGrid};
use crate::linalg::{discrete_lyapunov, psd_factor, spectral_radius, thin_svd};
use crate::model::ReducedModel;
use crate::scalar::{lit, to_f64, Scalar};
use crate::snapshots::{compute_trim, SettleConfig, Trim, TrajectorySet};
use crate::system::{DiscreteSystem, StateSpace};

/// Parameter-varying linear plant defined on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HighOrderPlant<T: Scalar> {
    grid: ParamGrid<T>,
    models: Vec<StateSpace<T>>,
    dt: T,
    trim_input: DVector<T>,
}

/// Recorded response of a (possibly parameter-varying) simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation<T: Scalar> {
    pub states: DMatrix<T>,
    pub inputs: DMatrix<T>,
    pub outputs: DMatrix<T>,
    pub rho: Vec<T>,
}

impl<T: Scalar> Simulation<T> {
    /// Packages a frozen-parameter simulation as a trajectory set.
    pub fn into_trajectory(self, dt: T, trim: Trim<T>) -> Result<TrajectorySet<T>> {
        let rho = self.rho[0];
        if self.rho.iter().any(|&r| r != rho) {
            return Err(RomError::Parameter(
                "trajectory sets require a frozen parameter".into(),
            ));
        }
        TrajectorySet::new(self.states, self.inputs, self.outputs, dt, rho, trim)
    }
}

impl<T: Scalar> HighOrderPlant<T> {
    pub fn new(grid: ParamGrid<T>, models: Vec<StateSpace<T>>, dt: T, trim_input: DVector<T>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(RomError::Parameter("plant grid needs at least two points".into()));
        }
        if models.len() != grid.len() {
            return dim_err(format!("{} grid points but {} models", grid.len(), models.len()));
        }
        let shape = |m: &StateSpace<T>| (m.a.shape(), m.b.shape(), m.c.shape());
        let s0 = shape(&models[0]);
        if models.iter().any(|m| shape(m) != s0) {
            return dim_err("grid models do not share dimensions");
        }
        if trim_input.len() != models[0].n_u() {
            return dim_err("trim input length differs from n_u");
        }
        if !(dt > T::zero()) {
            return Err(RomError::Parameter("dt must be positive".into()));
        }
        for (j, m) in models.iter().enumerate() {
            let radius = spectral_radius(&m.a);
            if !(radius < T::one()) {
                return Err(RomError::Unstable {
                    grid_index: j,
                    radius: to_f64(radius),
                });
            }
        }
        Ok(Self {
            grid,
            models,
            dt,
            trim_input,
        })
    }

    pub fn grid(&self) -> &ParamGrid<T> {
        &self.grid
    }
    pub fn models(&self) -> &[StateSpace<T>] {
        &self.models
    }
    pub fn model(&self, j: usize) -> &StateSpace<T> {
        &self.models[j]
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn trim_input(&self) -> &DVector<T> {
        &self.trim_input
    }
    pub fn n_x(&self) -> usize {
        self.models[0].n_x()
    }
    pub fn n_u(&self) -> usize {
        self.models[0].n_u()
    }
    pub fn n_y(&self) -> usize {
        self.models[0].n_y()
    }
    pub fn is_algebraic(&self) -> bool {
        self.models.iter().any(|m| m.has_algebraic())
    }

    /// Frozen matrices at `rho`, entrywise interpolated between grid points.
    pub fn at(&self, rho: T) -> Result<StateSpace<T>> {
        let br = self.grid.locate(rho)?;
        Ok(self.at_bracket(br))
    }

    fn at_bracket(&self, br: Bracket<T>) -> StateSpace<T> {
        if let Bracket::Knot(j) = br {
            return self.models[j].clone();
        }
        let pick = |f: fn(&StateSpace<T>) -> &DMatrix<T>| -> DMatrix<T> {
            let fam: Vec<DMatrix<T>> = match br {
                Bracket::Between { lower, .. } => {
                    vec![f(&self.models[lower]).clone(), f(&self.models[lower + 1]).clone()]
                }
                Bracket::Knot(_) => unreachable!(),
            };
            let local = match br {
                Bracket::Between { weight, .. } => Bracket::Between { lower: 0, weight },
                k => k,
            };
            interp_matrix(&fam, local)
        };
        StateSpace {
            a: pick(|m| &m.a),
            b: pick(|m| &m.b),
            c: pick(|m| &m.c),
            d: pick(|m| &m.d),
            r: pick(|m| &m.r),
            p: pick(|m| &m.p),
        }
    }

    /// Largest spectral radius over the grid.
    pub fn max_pole_radius(&self) -> T {
        self.models
            .iter()
            .map(|m| spectral_radius(&m.a))
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Smallest horizon after which the slowest pole envelope `|λ|^T` falls
    /// below `envelope`.
    pub fn settling_horizon(&self, envelope: f64) -> usize {
        let r = to_f64(self.max_pole_radius());
        if r <= 0.0 {
            return 1;
        }
        ((envelope.ln() / r.ln()).ceil() as usize).max(1)
    }

    /// Simulates `x_{k+1} = A(ρ_k)x_k + B(ρ_k)u_k + R(ρ_k)u_{k+1}` and
    /// `y_k = C(ρ_k)x_k + D(ρ_k)u_k + P(ρ_k)u_{k+1}` over the columns of `u`.
    /// The input after the last sample is held.
    pub fn simulate(&self, u: &DMatrix<T>, rho_traj: &[T], x0: &DVector<T>) -> Result<Simulation<T>> {
        let n = u.ncols();
        if rho_traj.len() != n {
            return dim_err(format!("{} input samples but {} parameter samples", n, rho_traj.len()));
        }
        if u.nrows() != self.n_u() || x0.len() != self.n_x() {
            return dim_err("input rows or initial state length do not match the plant");
        }
        if n == 0 {
            return dim_err("empty input sequence");
        }
        let brackets = rho_traj
            .iter()
            .map(|&r| self.grid.locate(r))
            .collect::<Result<Vec<_>>>()?;
        let mut states = DMatrix::zeros(self.n_x(), n);
        let mut outputs = DMatrix::zeros(self.n_y(), n);
        let mut x = x0.clone();
        let mut cached: Option<(Bracket<T>, StateSpace<T>)> = None;
        for k in 0..n {
            let br = brackets[k];
            let sys = match &cached {
                Some((b, s)) if *b == br => s,
                _ => {
                    cached = Some((br, self.at_bracket(br)));
                    &cached.as_ref().expect("just set").1
                }
            };
            let uk = u.column(k).clone_owned();
            let un = u.column((k + 1).min(n - 1)).clone_owned();
            states.set_column(k, &x);
            outputs.set_column(k, &sys.output(&x, &uk, &un));
            x = sys.step(&x, &uk, &un);
        }
        Ok(Simulation {
            states,
            inputs: u.clone(),
            outputs,
            rho: rho_traj.to_vec(),
        })
    }

    /// Trim at `rho` from a settling simulation with the plant's held input.
    pub fn trim_at(&self, rho: T, settle: &SettleConfig) -> Result<Trim<T>> {
        compute_trim(&self.at(rho)?, &self.trim_input, settle)
    }

    /// Trims at every grid point (computed concurrently, returned in grid order).
    pub fn grid_trims(&self, settle: &SettleConfig) -> Result<Vec<Trim<T>>> {
        self.models
            .par_iter()
            .map(|m| compute_trim(m, &self.trim_input, settle))
            .collect()
    }

    /// Model-based square-root balanced truncation at grid point `j`.
    pub fn balanced_truncation_oracle(&self, j: usize, n_z: usize) -> Result<BalancedTruncation<T>> {
        let m = self
            .models
            .get(j)
            .ok_or_else(|| RomError::Parameter(format!("grid index {j} out of range")))?;
        balanced_truncation(m, n_z, self.grid.points()[j])
    }
}

/// Output of the balanced-truncation oracle.
#[derive(Debug, Clone)]
pub struct BalancedTruncation<T: Scalar> {
    /// Reduced `(F, G, H, D)`; `lift` holds the right projection `T`.
    pub model: ReducedModel<T>,
    /// Left projection `T_i` with `T_i · T = I`.
    pub left: DMatrix<T>,
    /// All Hankel singular values, non-increasing.
    pub hankel: Vec<T>,
    pub wc: DMatrix<T>,
    pub wo: DMatrix<T>,
}

/// Exact controllability and observability Gramians of a stable plain
/// state space, from the discrete Lyapunov equations.
pub fn lyapunov_gramians<T: Scalar>(sys: &StateSpace<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let tol: T = lit(1e-12);
    let wc = discrete_lyapunov(&sys.a, &(&sys.b * sys.b.transpose()), tol, 64)?;
    let wo = discrete_lyapunov(&sys.a.transpose(), &(sys.c.transpose() * &sys.c), tol, 64)?;
    Ok((wc, wo))
}

/// Square-root balanced truncation of a plain (non-algebraic) state space.
pub fn balanced_truncation<T: Scalar>(sys: &StateSpace<T>, n_z: usize, rho: T) -> Result<BalancedTruncation<T>> {
    if sys.has_algebraic() {
        return Err(RomError::Parameter(
            "balanced-truncation oracle supports plants without algebraic terms only".into(),
        ));
    }
    let n_x = sys.n_x();
    if n_z == 0 || n_z > n_x {
        return Err(RomError::Parameter(format!("n_z = {n_z} must lie in 1..={n_x}")));
    }
    let (wc, wo) = lyapunov_gramians(sys)?;
    let neg_tol: T = lit(1e-10);
    let lc = psd_factor(&wc, neg_tol)?.factor;
    let lo = psd_factor(&wo, neg_tol)?.factor;
    let svd = thin_svd(&(lo.transpose() * &lc), true);
    let hankel = svd.singular_values.clone();
    let rank = svd.numerical_rank(lit::<T>(n_x as f64) * T::machine_eps());
    if n_z > rank {
        return Err(RomError::Rank {
            index: n_z,
            rank,
            context: "Hankel singular values".into(),
        });
    }
    let v = svd.v.as_ref().expect("v requested");
    let mut scale = DVector::zeros(n_z);
    for i in 0..n_z {
        scale[i] = T::one() / hankel[i].sqrt();
    }
    let mut right = &lc * v.columns(0, n_z);
    for (i, mut col) in right.column_iter_mut().enumerate() {
        col *= scale[i];
    }
    let mut left = svd.u.columns(0, n_z).transpose() * lo.transpose();
    for (i, mut row) in left.row_iter_mut().enumerate() {
        row *= scale[i];
    }
    let model = ReducedModel {
        f: &left * &sys.a * &right,
        g: &left * &sys.b,
        h: Some(&sys.c * &right),
        d: Some(sys.d.clone()),
        l: None,
        p: None,
        lift: right,
        rho,
        identifiable: true,
    };
    Ok(BalancedTruncation {
        model,
        left,
        hankel,
        wc,
        wo,
    })
}

/// Configuration of the synthetic benchmark plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub grid_rhos: Vec<f64>,
    pub dt: f64,
    /// Frequency of the designated first mode (output channel 0), Hz.
    pub first_mode_hz: f64,
    /// Range for the remaining modal frequencies, Hz.
    pub freq_range_hz: (f64, f64),
    /// Range of modal damping ratios.
    pub modal_damping_range: (f64, f64),
    /// Relative change of frequency and damping across the parameter range.
    pub parameter_sensitivity: f64,
    /// Scale of the strictly block-upper-triangular coupling.
    pub nonnormal_coupling_strength: f64,
    /// Spread (decades) of per-mode input gains.
    pub input_gain_decades: f64,
    /// Spread (decades) of per-mode coupling gains.
    pub coupling_gain_decades: f64,
    /// Oscillators right after the first mode that feed it strongly.
    pub relevant_units: usize,
    /// Lightly damped, strongly forced oscillators that barely reach the
    /// outputs. They follow the relevant units.
    pub distractor_units: usize,
    /// Input-gain multiplier of the distractors.
    pub distractor_input_gain: f64,
    /// Coupling-gain multiplier of the distractors.
    pub distractor_coupling: f64,
    /// Input-gain multiplier of every remaining oscillator.
    pub bulk_input_gain: f64,
    /// Adds the algebraic input term `R` (10% of `‖B‖`, same per-mode gains).
    pub algebraic: bool,
    /// Input held at every trim point.
    pub trim_input: Vec<f64>,
    pub seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            n_x: 200,
            n_u: 6,
            n_y: 1,
            grid_rhos: (0..16).map(|i| 20.0 + 2.0 * i as f64).collect(),
            dt: 0.006,
            first_mode_hz: 10.0,
            freq_range_hz: (2.0, 60.0),
            modal_damping_range: (0.03, 0.25),
            parameter_sensitivity: 0.3,
            nonnormal_coupling_strength: 0.1,
            input_gain_decades: 2.0,
            coupling_gain_decades: 2.0,
            relevant_units: 6,
            distractor_units: 6,
            distractor_input_gain: 10.0,
            distractor_coupling: 0.01,
            bulk_input_gain: 0.01,
            algebraic: true,
            trim_input: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            seed: 7,
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let t: f64 = rng.random();
    (lo.ln() + t * (hi.ln() - lo.ln())).exp()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Builds the benchmark plant.
///
/// Each grid model is a block-diagonal set of discrete 2×2 oscillators (one
/// real pole when `n_x` is odd) whose frequency and damping vary affinely
/// with the parameter, plus a strictly block-upper-triangular coupling that
/// leaves the spectrum unchanged. Output 0 reads the first coordinate of the
/// first oscillator ("first mode amplitude"); other outputs are random.
///
/// Oscillators are grouped in tiers: the first mode, `relevant_units` that
/// feed it, `distractor_units` carrying most of the input energy but barely
/// coupled to the rest, and a weakly forced bulk.
pub fn make_benchmark_plant<T: Scalar>(cfg: &PlantConfig) -> Result<HighOrderPlant<T>> {
    let (n_x, n_u, n_y) = (cfg.n_x, cfg.n_u, cfg.n_y);
    if n_x < 2 || n_u == 0 || n_y == 0 {
        return Err(RomError::Parameter("benchmark plant needs n_x ≥ 2, n_u ≥ 1, n_y ≥ 1".into()));
    }
    if cfg.trim_input.len() != n_u {
        return dim_err(format!("trim_input has {} entries, n_u = {}", cfg.trim_input.len(), n_u));
    }
    let (zmin, zmax) = cfg.modal_damping_range;
    if !(zmin > 0.0 && zmax >= zmin && zmax < 1.0) {
        return Err(RomError::Parameter("modal damping range must lie in (0, 1)".into()));
    }
    let grid = ParamGrid::new(cfg.grid_rhos.iter().map(|&r| lit::<T>(r)).collect())?;
    let rho_lo = cfg.grid_rhos[0];
    let rho_hi = *cfg.grid_rhos.last().expect("non-empty grid");
    let span = if rho_hi > rho_lo { rho_hi - rho_lo } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_blocks = n_x / 2;
    let n_units = n_blocks + n_x % 2;

    struct Mode {
        freq: f64,
        damping: f64,
        kf: f64,
        kz: f64,
    }
    let (flo, fhi) = cfg.freq_range_hz;
    #[derive(Clone, Copy, PartialEq)]
    enum Tier {
        Output,
        Relevant,
        Distractor,
        Bulk,
    }
    let tier = |i: usize| {
        if i == 0 {
            Tier::Output
        } else if i <= cfg.relevant_units {
            Tier::Relevant
        } else if i <= cfg.relevant_units + cfg.distractor_units {
            Tier::Distractor
        } else {
            Tier::Bulk
        }
    };
    let modes: Vec<Mode> = (0..n_units)
        .map(|i| Mode {
            freq: if i == 0 { cfg.first_mode_hz } else { log_uniform(&mut rng, flo, fhi) },
            damping: match tier(i) {
                Tier::Distractor => {
                    let _ = rng.random::<f64>();
                    zmin
                }
                _ => log_uniform(&mut rng, zmin, zmax),
            },
            kf: rng.random_range(-1.0..1.0),
            kz: rng.random_range(-1.0..1.0),
        })
        .collect();
    let unit_rows = |i: usize| -> std::ops::Range<usize> {
        if i < n_blocks {
            2 * i..2 * i + 2
        } else {
            2 * n_blocks..n_x
        }
    };

    let input_gain: Vec<f64> = (0..n_units)
        .map(|i| {
            let scale = match tier(i) {
                Tier::Distractor => cfg.distractor_input_gain,
                Tier::Bulk => cfg.bulk_input_gain,
                _ => 1.0,
            };
            scale * 10f64.powf(-cfg.input_gain_decades * rng.random::<f64>())
        })
        .collect();
    let coupling_gain: Vec<f64> = (0..n_units)
        .map(|i| {
            let draw = 10f64.powf(-cfg.coupling_gain_decades * rng.random::<f64>());
            match tier(i) {
                Tier::Distractor => cfg.distractor_coupling * draw,
                _ => draw,
            }
        })
        .collect();

    let mut b0 = DMatrix::<f64>::zeros(n_x, n_u);
    for i in 0..n_units {
        for r in unit_rows(i) {
            for c in 0..n_u {
                b0[(r, c)] = input_gain[i] * normal(&mut rng);
            }
        }
    }
    let coupling_scale = cfg.nonnormal_coupling_strength * cfg.dt * 2.0 * std::f64::consts::PI * 10.0;
    let mut coupling = DMatrix::<f64>::zeros(n_x, n_x);
    for i in 0..n_units {
        for j in (i + 1)..n_units {
            for r in unit_rows(i) {
                for c in unit_rows(j) {
                    coupling[(r, c)] = coupling_scale * coupling_gain[j] * rng.random_range(-1.0..1.0);
                }
            }
        }
    }
    let mut c0 = DMatrix::<f64>::zeros(n_y, n_x);
    c0[(0, 0)] = 1.0;
    for i in 1..n_y {
        for j in 0..n_x {
            c0[(i, j)] = normal(&mut rng) / (n_x as f64).sqrt();
        }
    }
    let r0 = if cfg.algebraic {
        let mut raw = DMatrix::<f64>::from_fn(n_x, n_u, |_, _| normal(&mut rng));
        for i in 0..n_units {
            for r in unit_rows(i) {
                raw.row_mut(r).scale_mut(input_gain[i]);
            }
        }
        let target = 0.1 * b0.norm();
        let n = raw.norm();
        if n > 0.0 {
            raw * (target / n)
        } else {
            raw
        }
    } else {
        DMatrix::zeros(n_x, n_u)
    };

    let mut models = Vec::with_capacity(grid.len());
    for &rho in &cfg.grid_rhos {
        let s = (rho - rho_lo) / span - 0.5;
        let mut a = coupling.clone() * (1.0 + 0.5 * s);
        for (i, m) in modes.iter().enumerate() {
            let freq = m.freq * (1.0 + cfg.parameter_sensitivity * m.kf * s);
            let zeta = (m.damping * (1.0 + cfg.parameter_sensitivity * m.kz * s)).clamp(zmin, zmax);
            let omega = 2.0 * std::f64::consts::PI * freq;
            let radius = (-zeta * omega * cfg.dt).exp();
            let rows = unit_rows(i);
            if rows.len() == 2 {
                let theta = omega * (1.0 - zeta * zeta).sqrt() * cfg.dt;
                let (re, im) = (radius * theta.cos(), radius * theta.sin());
                let r = rows.start;
                a[(r, r)] = re;
                a[(r, r + 1)] = im;
                a[(r + 1, r)] = -im;
                a[(r + 1, r + 1)] = re;
            } else {
                a[(rows.start, rows.start)] = radius;
            }
        }
        let b = &b0 * (1.0 + 0.3 * s);
        let sys = StateSpace::with_algebraic(
            a.map(lit::<T>),
            b.map(lit::<T>),
            c0.map(lit::<T>),
            DMatrix::zeros(n_y, n_u),
            r0.map(lit::<T>),
            DMatrix::zeros(n_y, n_u),
        )?;
        models.push(sys);
    }
    let trim_input = DVector::from_iterator(n_u, cfg.trim_input.iter().map(|&v| lit::<T>(v)));
    HighOrderPlant::new(grid, models, lit(cfg.dt), trim_input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> PlantConfig {
        PlantConfig {
            n_x: 12,
            n_u: 2,
            n_y: 2,
            grid_rhos: vec![20.0, 30.0, 40.0],
            trim_input: vec![1.0, 0.0],
            ..PlantConfig::default()
        }
    }

    fn scalar_plant(a: f64, b: f64, r: f64) -> HighOrderPlant<f64> {
        let m = StateSpace::with_algebraic(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, r),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        HighOrderPlant::new(
            ParamGrid::new(vec![0.0, 1.0]).unwrap(),
            vec![m.clone(), m],
            0.1,
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn zero_coupling_gives_designed_poles() {
        let cfg = PlantConfig {
            nonnormal_coupling_strength: 0.0,
            ..small_cfg()
        };
        let plant = make_benchmark_plant::<f64>(&cfg).unwrap();
        let a = &plant.model(0).a;
        // block diagonal
        for i in 0..12 {
            for j in 0..12 {
                if i / 2 != j / 2 {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
        // first block has the designed 10 Hz pole (parameter offset −0.5 at grid start)
        let block = a.view((0, 0), (2, 2));
        let radius = (block[(0, 0)].powi(2) + block[(0, 1)].powi(2)).sqrt();
        let eig = spectral_radius(&block.clone_owned());
        assert!((eig - radius).abs() < 1e-12);
    }

    #[test]
    fn coupling_preserves_spectrum() {
        let plain = make_benchmark_plant::<f64>(&PlantConfig {
            nonnormal_coupling_strength: 0.0,
            ..small_cfg()
        })
        .unwrap();
        let coupled = make_benchmark_plant::<f64>(&PlantConfig {
            nonnormal_coupling_strength: 2.0,
            ..small_cfg()
        })
        .unwrap();
        let r1 = spectral_radius(&plain.model(1).a);
        let r2 = spectral_radius(&coupled.model(1).a);
        assert!((r1 - r2).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_plant() {
        let p1 = make_benchmark_plant::<f64>(&small_cfg()).unwrap();
        let p2 = make_benchmark_plant::<f64>(&small_cfg()).unwrap();
        assert_eq!(p1, p2);
        let p3 = make_benchmark_plant::<f64>(&PlantConfig {
            seed: 8,
            ..small_cfg()
        })
        .unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn default_benchmark_scale() {
        let cfg = PlantConfig::default();
        assert_eq!(cfg.grid_rhos.len(), 16);
        assert_eq!(cfg.grid_rhos[15], 50.0);
        let plant = make_benchmark_plant::<f64>(&cfg).unwrap();
        assert_eq!(plant.n_x(), 200);
        assert_eq!(plant.n_u(), 6);
        assert!(plant.max_pole_radius() < 1.0);
        // algebraic term at 10% of ‖B‖ at the mid-grid reference
        let m = plant.model(0);
        assert!(m.r.norm() > 0.0);
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let plant = make_benchmark_plant::<f64>(&small_cfg()).unwrap();
        let u = DMatrix::zeros(2, 40);
        let rho: Vec<f64> = (0..40).map(|k| 20.0 + 0.5 * k as f64).collect();
        let sim = plant.simulate(&u, &rho, &DVector::zeros(12)).unwrap();
        assert!(sim.states.iter().all(|v| *v == 0.0));
        assert!(sim.outputs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_impulse_response() {
        let plant = scalar_plant(0.5, 1.0, 0.0);
        let mut u = DMatrix::zeros(1, 6);
        u[(0, 0)] = 1.0;
        let sim = plant.simulate(&u, &[0.5; 6], &DVector::zeros(1)).unwrap();
        assert_eq!(sim.states.as_slice(), &[0.0, 1.0, 0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn algebraic_term_uses_next_input() {
        let plant = scalar_plant(0.5, 1.0, 0.2);
        let mut u = DMatrix::zeros(1, 4);
        u[(0, 1)] = 1.0;
        let sim = plant.simulate(&u, &[0.0; 4], &DVector::zeros(1)).unwrap();
        // x1 = R u1, x2 = A x1 + B u1
        assert!((sim.states[(0, 1)] - 0.2).abs() < 1e-15);
        assert!((sim.states[(0, 2)] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn frozen_knot_matches_lti() {
        let plant = make_benchmark_plant::<f64>(&small_cfg()).unwrap();
        let n = 30;
        let u = DMatrix::from_fn(2, n, |i, k| ((k * 7 + i * 3) % 5) as f64 - 2.0);
        let x0 = DVector::from_fn(12, |i, _| i as f64 * 0.1);
        let sim = plant.simulate(&u, &vec![30.0; n], &x0).unwrap();
        let m = plant.model(1);
        let mut x = x0.clone();
        for k in 0..n {
            assert_eq!(sim.states.column(k), x.column(0));
            let un = u.column((k + 1).min(n - 1)).clone_owned();
            x = m.step(&x, &u.column(k).clone_owned(), &un);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let plant = make_benchmark_plant::<f64>(&small_cfg()).unwrap();
        let u = DMatrix::zeros(2, 3);
        let err = plant.simulate(&u, &[20.0, 41.0, 30.0], &DVector::zeros(12)).unwrap_err();
        assert!(matches!(err, RomError::OutOfRange { .. }));
    }

    #[test]
    fn oracle_scalar_hankel() {
        let plant = scalar_plant(0.5, 1.0, 0.0);
        let bt = plant.balanced_truncation_oracle(0, 1).unwrap();
        assert_eq!(bt.hankel.len(), 1);
        assert!((bt.hankel[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((bt.wc[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_full_order_is_similar() {
        let cfg = PlantConfig {
            algebraic: false,
            ..small_cfg()
        };
        let plant = make_benchmark_plant::<f64>(&cfg).unwrap();
        let bt = plant.balanced_truncation_oracle(1, 12).unwrap();
        let m1 = plant.model(1).markov_parameters(40);
        let m2 = bt.model.output_markov(40).unwrap();
        assert!(crate::system::markov_relative_error(&m2, &m1) < 1e-9);
        // Hankel values are non-negative and non-increasing
        assert!(bt.hankel.windows(2).all(|w| w[0] >= w[1]));
        assert!(bt.hankel.iter().all(|&h| h >= 0.0));
    }

    #[test]
    fn simulation_is_linear() {
        let plant = make_benchmark_plant::<f64>(&small_cfg()).unwrap();
        let n = 25;
        let rho: Vec<f64> = (0..n).map(|k| 20.0 + 0.8 * k as f64).collect();
        let u1 = DMatrix::from_fn(2, n, |i, k| ((k + i) as f64).sin());
        let u2 = DMatrix::from_fn(2, n, |i, k| ((2 * k + i) as f64).cos());
        let x1 = DVector::from_fn(12, |i, _| i as f64);
        let x2 = DVector::from_fn(12, |i, _| 1.0 - i as f64 * 0.3);
        let s1 = plant.simulate(&u1, &rho, &x1).unwrap();
        let s2 = plant.simulate(&u2, &rho, &x2).unwrap();
        let s12 = plant.simulate(&(&u1 + &u2), &rho, &(&x1 + &x2)).unwrap();
        let diff = (&s12.states - (&s1.states + &s2.states)).norm();
        assert!(diff <= 1e-12 * s12.states.norm());
    }
}
