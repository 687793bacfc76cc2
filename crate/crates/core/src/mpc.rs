//! Finite-horizon MPC on a grid ROM with box input bounds, and closed-loop
//! runs against the high-order plant.
//!
//! Stage cost `‖ỹ_k − r_k‖²_N + ‖ũ_k‖²_M + ‖ũ_k − ũ_{k−1}‖²_{MΔ}` over the
//! controlled channels, summed over `k < N_c`. The parameter is frozen at its
//! measured value over each horizon.
//!
//! With an algebraic input term the state at step `k` depends on `u_k`, so
//! the controller is fed the pre-input state `ζ_k` and predicts
//! `z_k = ζ_k + L ũ_k`.

use nalgebra::{DMatrix, DVector};

use crate::dmdc::Readout;
use crate::error::{dim_err, Result, RomError};
use crate::grid::{bracket_weights, interp_vector};
use crate::linalg::sym_min_eigenvalue;
use crate::lpv::{FrozenRom, GridRom};
use crate::model::ReducedModel;
use crate::plant::HighOrderPlant;
use crate::qp::{solve_box_qp, QpOptions};
use crate::scalar::{lit, to_f64, Scalar};

/// Relative tolerance of the condensed-versus-simulated cost check.
pub const CONDENSATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig<T: Scalar> {
    /// Horizon `N_c`.
    pub horizon: usize,
    /// Output weight `N` (`n_y × n_y`).
    pub tracking: DMatrix<T>,
    /// Input weight `M` (`n_c × n_c`).
    pub input_weight: DMatrix<T>,
    /// Input-rate weight `M_Δ` (`n_c × n_c`).
    pub rate_weight: DMatrix<T>,
    /// Bounds on the controlled input deviations.
    pub u_min: DVector<T>,
    pub u_max: DVector<T>,
    /// Input channels chosen by the controller; the rest carry disturbances.
    pub controlled: Vec<usize>,
    pub qp: QpOptions,
}

impl<T: Scalar> MpcConfig<T> {
    /// Scalar weights on every output and controlled channel.
    pub fn uniform(horizon: usize, n_y: usize, controlled: Vec<usize>, n: f64, m: f64, m_delta: f64, bound: f64) -> Self {
        let n_c = controlled.len();
        Self {
            horizon,
            tracking: DMatrix::identity(n_y, n_y) * lit::<T>(n),
            input_weight: DMatrix::identity(n_c, n_c) * lit::<T>(m),
            rate_weight: DMatrix::identity(n_c, n_c) * lit::<T>(m_delta),
            u_min: DVector::from_element(n_c, lit(-bound)),
            u_max: DVector::from_element(n_c, lit(bound)),
            controlled,
            qp: QpOptions::default(),
        }
    }

    pub fn n_c(&self) -> usize {
        self.controlled.len()
    }

    pub fn validate(&self, n_u: usize, n_y: usize) -> Result<()> {
        let n_c = self.n_c();
        if self.horizon == 0 {
            return Err(RomError::Parameter("horizon must be at least one step".into()));
        }
        if n_c == 0 || self.controlled.iter().any(|&c| c >= n_u) {
            return Err(RomError::Parameter("controlled channels must be non-empty and < n_u".into()));
        }
        let mut sorted = self.controlled.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n_c {
            return Err(RomError::Parameter("controlled channels must be distinct".into()));
        }
        if self.tracking.shape() != (n_y, n_y)
            || self.input_weight.shape() != (n_c, n_c)
            || self.rate_weight.shape() != (n_c, n_c)
            || self.u_min.len() != n_c
            || self.u_max.len() != n_c
        {
            return dim_err("MPC weight or bound dimensions do not match the model");
        }
        for (name, w) in [("N", &self.tracking), ("M", &self.input_weight), ("M_delta", &self.rate_weight)] {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(RomError::Parameter(format!("weight {name} is not finite")));
            }
            let asym = to_f64((w - w.transpose()).amax());
            let tol = 1e-12 * to_f64(w.amax()).max(1.0);
            if asym > tol || to_f64(sym_min_eigenvalue(w)) < -tol {
                return Err(RomError::Parameter(format!("weight {name} must be symmetric positive semidefinite")));
            }
        }
        if (0..n_c).any(|i| !(self.u_min[i] < self.u_max[i])) {
            return Err(RomError::Parameter("input bounds must satisfy u_min < u_max".into()));
        }
        Ok(())
    }
}

/// Reduced state handed to the controller.
#[derive(Debug, Clone, PartialEq)]
pub enum PreState<T: Scalar> {
    /// One pre-input state of a state-consistent ROM.
    Shared(DVector<T>),
    /// One pre-input state per grid model (parallel prediction).
    PerModel(Vec<DVector<T>>),
}

/// Optimal horizon input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution<T: Scalar> {
    /// Controlled input deviations, `n_c × N_c`.
    pub inputs: DMatrix<T>,
    /// Predicted horizon cost.
    pub cost: f64,
    pub kkt: f64,
    pub qp_iterations: usize,
    /// `|J_condensed − J_simulated| / max(1, |J_simulated|)` at the optimum.
    pub condensation_error: f64,
}

struct ParallelPart<'a, T: Scalar> {
    index: usize,
    weight: T,
    model: &'a ReducedModel<T>,
    u_trim: &'a DVector<T>,
    /// Read-out of the lift and of the full-state trim.
    read_lift: DMatrix<T>,
    read_trim: DVector<T>,
}

enum Predictor<'a, T: Scalar> {
    Shared {
        frozen: FrozenRom<T>,
        zeta: &'a DVector<T>,
    },
    Parallel {
        parts: Vec<ParallelPart<'a, T>>,
        y_trim: DVector<T>,
        u_trim: DVector<T>,
        zeta: &'a [DVector<T>],
    },
}

impl<'a, T: Scalar> Predictor<'a, T> {
    fn new(rom: &'a GridRom<T>, readout: Option<&Readout<T>>, state: &'a PreState<T>, rho: T) -> Result<Self> {
        let frozen = rom.interpolate_at(rho)?;
        match state {
            PreState::Shared(zeta) => {
                if !rom.algorithm.is_state_consistent() {
                    return Err(RomError::Parameter("a single reduced state needs a state-consistent ROM".into()));
                }
                if zeta.len() != rom.n_z() {
                    return dim_err("reduced state length differs from the ROM order");
                }
                Ok(Self::Shared { frozen, zeta })
            }
            PreState::PerModel(zeta) => {
                let readout =
                    readout.ok_or_else(|| RomError::Parameter("parallel prediction needs a read-out map".into()))?;
                let x_trim = rom
                    .x_trim
                    .as_ref()
                    .ok_or_else(|| RomError::Parameter("parallel prediction needs full-state trims".into()))?;
                if zeta.len() != rom.models.len()
                    || readout.matrix.ncols() != rom.n_x()
                    || readout.matrix.nrows() != frozen.y_trim.len()
                {
                    return dim_err("need one reduced state per grid model and an n_y × n_x read-out");
                }
                let parts = bracket_weights(rom.grid.locate(rho)?)
                    .into_iter()
                    .map(|(j, w)| {
                        let m = &rom.models[j];
                        if zeta[j].len() != m.n_z() {
                            return dim_err("reduced state length differs from its grid model");
                        }
                        Ok(ParallelPart {
                            index: j,
                            weight: w,
                            model: m,
                            u_trim: &rom.u_trim[j],
                            read_lift: &readout.matrix * &m.lift,
                            read_trim: readout.apply(&x_trim[j]),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::Parallel {
                    parts,
                    y_trim: frozen.y_trim,
                    u_trim: frozen.u_trim,
                    zeta,
                })
            }
        }
    }

    fn n_y(&self) -> usize {
        match self {
            Self::Shared { frozen, .. } => frozen.y_trim.len(),
            Self::Parallel { y_trim, .. } => y_trim.len(),
        }
    }

    /// Output deviations `ỹ_0..ỹ_{N_c−1}` for input deviations `u`
    /// (`n_u × (N_c+1)`, the last column repeating the previous one).
    fn outputs(&self, u: &DMatrix<T>, horizon: usize) -> Result<Vec<DVector<T>>> {
        match self {
            Self::Shared { frozen, zeta } => {
                let m = &frozen.model;
                let mut z = (*zeta).clone();
                if let Some(l) = &m.l {
                    z += l * u.column(0);
                }
                let mut ys = Vec::with_capacity(horizon);
                for k in 0..horizon {
                    let (uk, un) = (u.column(k).clone_owned(), u.column(k + 1).clone_owned());
                    ys.push(
                        m.output(&z, &uk, &un)
                            .ok_or_else(|| RomError::Parameter("ROM has no output equation".into()))?,
                    );
                    z = m.step(&z, &uk, &un);
                }
                Ok(ys)
            }
            Self::Parallel { parts, y_trim, u_trim, zeta } => {
                let mut ys = vec![-y_trim.clone(); horizon];
                for p in parts {
                    let shift = u_trim - p.u_trim;
                    let dev = |k: usize| u.column(k) + &shift;
                    let mut z = zeta[p.index].clone();
                    if let Some(l) = &p.model.l {
                        z += l * dev(0);
                    }
                    for (k, y) in ys.iter_mut().enumerate() {
                        *y += (&p.read_lift * &z + &p.read_trim) * p.weight;
                        z = p.model.step(&z, &dev(k), &dev(k + 1));
                    }
                }
                Ok(ys)
            }
        }
    }
}

/// Full-channel input deviations over the horizon: controlled channels from
/// `v` (`n_c × N_c`), the others held at `d`; the final column repeats.
fn horizon_inputs<T: Scalar>(v: &DMatrix<T>, d: &DVector<T>, controlled: &[usize]) -> DMatrix<T> {
    let h = v.ncols();
    let mut u = DMatrix::zeros(d.len(), h + 1);
    for k in 0..=h {
        u.set_column(k, d);
        for (c, &ch) in controlled.iter().enumerate() {
            u[(ch, k)] = v[(c, k.min(h - 1))];
        }
    }
    u
}

/// Horizon cost evaluated by direct simulation.
fn simulated_cost<T: Scalar>(
    pred: &Predictor<'_, T>,
    v: &DMatrix<T>,
    d: &DVector<T>,
    u_prev: &DVector<T>,
    r: &DMatrix<T>,
    cfg: &MpcConfig<T>,
) -> Result<T> {
    let ys = pred.outputs(&horizon_inputs(v, d, &cfg.controlled), cfg.horizon)?;
    let mut j = T::zero();
    let mut prev = u_prev.clone();
    for (k, y) in ys.iter().enumerate() {
        let e = y - r.column(k);
        let vk = v.column(k).clone_owned();
        let dv = &vk - &prev;
        j += (&cfg.tracking * &e).dot(&e) + (&cfg.input_weight * &vk).dot(&vk) + (&cfg.rate_weight * &dv).dot(&dv);
        prev = vk;
    }
    Ok(j)
}

/// Optimal controlled-input deviations over the horizon.
///
/// * `state` — pre-input reduced state(s) at the current step;
/// * `u_prev` — controlled input deviation applied at the previous step;
/// * `d` — deviations of all input channels, held over the horizon (the
///   controlled entries are ignored);
/// * `r` — output reference deviations, `n_y × N_c`.
///
/// Parallel (per-model) states require `readout`.
#[allow(clippy::too_many_arguments)]
pub fn solve_horizon<T: Scalar>(
    rom: &GridRom<T>,
    readout: Option<&Readout<T>>,
    state: &PreState<T>,
    u_prev: &DVector<T>,
    d: &DVector<T>,
    rho: T,
    r: &DMatrix<T>,
    cfg: &MpcConfig<T>,
) -> Result<HorizonSolution<T>> {
    let pred = Predictor::new(rom, readout, state, rho)?;
    let n_y = pred.n_y();
    cfg.validate(rom.n_u(), n_y)?;
    let (n_c, h) = (cfg.n_c(), cfg.horizon);
    if u_prev.len() != n_c || d.len() != rom.n_u() || r.shape() != (n_y, h) {
        return dim_err("previous input, disturbance or reference dimensions do not match");
    }
    let mut d = d.clone();
    for &c in &cfg.controlled {
        d[c] = T::zero();
    }

    // Affine condensation: Y = Φ v + y_free.
    let nv = n_c * h;
    let stack = |ys: Vec<DVector<T>>| DVector::from_iterator(n_y * h, ys.into_iter().flat_map(|y| y.data.as_vec().clone()));
    let y_free = stack(pred.outputs(&horizon_inputs(&DMatrix::zeros(n_c, h), &d, &cfg.controlled), h)?);
    let mut phi = DMatrix::zeros(n_y * h, nv);
    for i in 0..nv {
        let mut v = DMatrix::zeros(n_c, h);
        v[(i % n_c, i / n_c)] = T::one();
        let y = stack(pred.outputs(&horizon_inputs(&v, &d, &cfg.controlled), h)?);
        phi.set_column(i, &(y - &y_free));
    }

    let block_diag = |w: &DMatrix<T>| {
        let s = w.nrows();
        let mut out = DMatrix::zeros(s * h, s * h);
        for k in 0..h {
            out.view_mut((k * s, k * s), (s, s)).copy_from(w);
        }
        out
    };
    let nbar = block_diag(&cfg.tracking);
    let mbar = block_diag(&cfg.input_weight);
    let mdbar = block_diag(&cfg.rate_weight);
    // Δv = Dm v − c with c = [u_prev; 0; …].
    let mut dm = DMatrix::<T>::identity(nv, nv);
    for i in n_c..nv {
        dm[(i, i - n_c)] = -T::one();
    }
    let mut c = DVector::zeros(nv);
    c.rows_mut(0, n_c).copy_from(u_prev);
    let rstack = DVector::from_iterator(n_y * h, r.iter().copied());
    let e = &y_free - &rstack;

    let two: T = lit(2.0);
    let phit_n = phi.transpose() * &nbar;
    let dmt_md = dm.transpose() * &mdbar;
    let mut hess = (&phit_n * &phi + &mbar + &dmt_md * &dm) * two;
    hess = (&hess + hess.transpose()) * lit::<T>(0.5);
    let grad = (&phit_n * &e - &dmt_md * &c) * two;
    let constant = (&nbar * &e).dot(&e) + (&mdbar * &c).dot(&c);
    if hess.iter().chain(grad.iter()).any(|v| !v.is_finite()) || !constant.is_finite() {
        return Err(RomError::Parameter("condensed MPC matrices are not finite".into()));
    }

    let lo = DVector::from_fn(nv, |i, _| cfg.u_min[i % n_c]);
    let hi = DVector::from_fn(nv, |i, _| cfg.u_max[i % n_c]);
    let sol = solve_box_qp(&hess, &grad, &lo, &hi, None, &cfg.qp)?;
    let v = DMatrix::from_column_slice(n_c, h, sol.x.as_slice());
    let j_qp = sol.objective + constant;
    let j_sim = simulated_cost(&pred, &v, &d, u_prev, r, cfg)?;
    let condensation_error = to_f64((j_qp - j_sim).abs()) / to_f64(j_sim.abs()).max(1.0);
    Ok(HorizonSolution {
        inputs: v,
        cost: to_f64(j_sim),
        kkt: sol.kkt,
        qp_iterations: sol.iterations,
        condensation_error,
    })
}

/// Closed-loop scenario: parameter trajectory, absolute output reference,
/// and input deviations added to the trim on the uncontrolled channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopScenario<T: Scalar> {
    pub rho: Vec<T>,
    pub reference: DMatrix<T>,
    pub disturbance: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult<T: Scalar> {
    /// Accumulated closed-loop cost `J_CL` of the plant.
    pub cost: f64,
    pub stage_cost: Vec<f64>,
    /// Absolute plant outputs and inputs.
    pub y: DMatrix<T>,
    pub u: DMatrix<T>,
    pub reference: DMatrix<T>,
    pub rho: Vec<T>,
    pub max_condensation_error: f64,
    pub max_kkt: f64,
    pub solves: usize,
}

/// Runs the MPC loop on the plant from the trim at the first parameter
/// value. State-consistent ROMs are fed the projected true pre-input state;
/// DMDc-family ROMs run all grid models in parallel from the applied inputs
/// (needs `readout`).
pub fn closed_loop_run<T: Scalar>(
    plant: &HighOrderPlant<T>,
    rom: &GridRom<T>,
    readout: Option<&Readout<T>>,
    scenario: &ClosedLoopScenario<T>,
    cfg: &MpcConfig<T>,
) -> Result<ClosedLoopResult<T>> {
    let n = scenario.rho.len();
    let (n_x, n_u, n_y) = (plant.n_x(), plant.n_u(), plant.n_y());
    if n == 0 || scenario.reference.shape() != (n_y, n) || scenario.disturbance.shape() != (n_u, n) {
        return dim_err("scenario sequences must share a non-zero length and match the plant");
    }
    let parallel = !rom.algorithm.is_state_consistent();
    let rom_n_y = if parallel { readout.map_or(0, |r| r.matrix.nrows()) } else { rom.n_y() };
    if rom.n_x() != n_x || rom.n_u() != n_u || rom_n_y != n_y {
        return dim_err("ROM (or read-out) and plant dimensions differ");
    }
    cfg.validate(n_u, n_y)?;
    let x_trim = rom
        .x_trim
        .as_ref()
        .ok_or_else(|| RomError::Parameter("closed-loop runs need full-state trims on the ROM".into()))?;
    let ubar = plant.trim_input().clone();
    let n_c = cfg.n_c();
    let h = cfg.horizon;

    let sys0 = plant.at(scenario.rho[0])?;
    let x0 = interp_vector(x_trim, rom.grid.locate(scenario.rho[0])?);
    // Pre-input state ξ with x_k = ξ_k + R u_k.
    let mut xi = &x0 - &sys0.r * &ubar;
    let mut r_prev = sys0.r.clone();
    let mut zeta: Vec<DVector<T>> = if parallel {
        rom.models
            .iter()
            .zip(x_trim)
            .map(|(m, xt)| m.lift.transpose() * (&x0 - xt))
            .collect()
    } else {
        Vec::new()
    };
    // x0 is a trim and ũ₋₁ = 0, so the pre-input deviations are the
    // projected state deviations.

    let mut ys = DMatrix::zeros(n_y, n);
    let mut us = DMatrix::zeros(n_u, n);
    let mut p_prev: Option<DMatrix<T>> = None;
    let mut v_prev = DVector::<T>::zeros(n_c);
    let mut max_cond = 0.0f64;
    let mut max_kkt = 0.0f64;
    for k in 0..n {
        let rho = scenario.rho[k];
        let sys = plant.at(rho)?;
        let state = if parallel {
            PreState::PerModel(zeta.clone())
        } else {
            PreState::Shared(rom.project_state(&(&xi + &sys.r * &ubar), rho)?)
        };
        let frozen = rom.interpolate_at(rho)?;
        let mut r = DMatrix::zeros(n_y, h);
        for i in 0..h {
            r.set_column(i, &(scenario.reference.column((k + i).min(n - 1)) - &frozen.y_trim));
        }
        let d = scenario.disturbance.column(k).clone_owned();
        let sol = solve_horizon(rom, readout, &state, &v_prev, &d, rho, &r, cfg)?;
        max_cond = max_cond.max(sol.condensation_error);
        max_kkt = max_kkt.max(sol.kkt);

        let mut u = &ubar + &d;
        for (c, &ch) in cfg.controlled.iter().enumerate() {
            u[ch] = ubar[ch] + sol.inputs[(c, 0)];
        }
        if let Some(p) = p_prev.take() {
            let mut col = ys.column_mut(k - 1);
            col += p * &u;
        }
        let x = &xi + &r_prev * &u;
        ys.set_column(k, &(&sys.c * &x + &sys.d * &u));
        us.set_column(k, &u);
        p_prev = Some(sys.p.clone());
        xi = &sys.a * &x + &sys.b * &u;
        r_prev = sys.r.clone();
        if parallel {
            zeta = rom
                .models
                .iter()
                .zip(&rom.u_trim)
                .zip(&zeta)
                .map(|((m, ut), zj)| {
                    let dev = &u - ut;
                    let mut z = zj.clone();
                    if let Some(l) = &m.l {
                        z += l * &dev;
                    }
                    &m.f * z + &m.g * dev
                })
                .collect();
        }
        v_prev = DVector::from_fn(n_c, |c, _| u[cfg.controlled[c]] - ubar[cfg.controlled[c]]);
    }
    if let Some(p) = p_prev {
        let last = us.column(n - 1).clone_owned();
        let mut col = ys.column_mut(n - 1);
        col += p * last;
    }

    let mut stage_cost = Vec::with_capacity(n);
    let mut prev = DVector::<T>::zeros(n_c);
    for k in 0..n {
        let e = ys.column(k) - scenario.reference.column(k);
        let v = DVector::from_fn(n_c, |c, _| us[(cfg.controlled[c], k)] - ubar[cfg.controlled[c]]);
        let dv = &v - &prev;
        let j = (&cfg.tracking * &e).dot(&e) + (&cfg.input_weight * &v).dot(&v) + (&cfg.rate_weight * &dv).dot(&dv);
        stage_cost.push(to_f64(j));
        prev = v;
    }
    Ok(ClosedLoopResult {
        cost: stage_cost.iter().sum(),
        stage_cost,
        y: ys,
        u: us,
        reference: scenario.reference.clone(),
        rho: scenario.rho.clone(),
        max_condensation_error: max_cond,
        max_kkt,
        solves: n,
    })
}
