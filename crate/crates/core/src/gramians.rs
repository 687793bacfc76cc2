//! Empirical (trajectory-based) controllability and observability Gramians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, RomError};
use crate::linalg::{sym_min_eigenvalue, symmetrize};
use crate::plant::HighOrderPlant;
use crate::scalar::{lit, to_f64, Scalar};
use crate::system::{DiscreteSystem, StateSpace};

/// Trailing/peak state-norm ratio above which a horizon counts as truncated.
pub const TRUNCATION_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservabilityMethod {
    /// Impulse responses of the adjoint system `(Aᵀ, Cᵀ)`.
    AdjointImpulse,
    /// Zero-input responses from each unit initial state.
    Perturbation,
}

impl ObservabilityMethod {
    pub fn tag(self) -> &'static str {
        match self {
            Self::AdjointImpulse => "adjoint_impulse",
            Self::Perturbation => "perturbation",
        }
    }
}

/// One empirical Gramian plus whether its horizon cut off a live response.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGramian<T: Scalar> {
    pub gramian: DMatrix<T>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianPair<T: Scalar> {
    pub wc: DMatrix<T>,
    pub wo: DMatrix<T>,
    pub horizon: usize,
    pub method_o: ObservabilityMethod,
    /// Set when either Gramian's horizon was too short.
    pub truncated: bool,
}

impl<T: Scalar> GramianPair<T> {
    /// Checks symmetry (1e−12 relative) and PSD-ness up to roundoff.
    pub fn validate(&self) -> Result<()> {
        for w in [&self.wc, &self.wo] {
            let scale = w.norm().max(T::one());
            if (w - w.transpose()).norm() > lit::<T>(1e-12) * scale {
                return Err(RomError::Numerical("Gramian is not symmetric".into()));
            }
            let min_eig = sym_min_eigenvalue(w);
            let tol = lit::<T>(1e-10) * scale;
            if min_eig < -tol {
                return Err(RomError::Gramian {
                    min_eig: to_f64(min_eig),
                    tol: to_f64(tol),
                });
            }
        }
        Ok(())
    }
}

/// States of the unit impulse response of channel `channel`.
///
/// The impulse sits one sample after the zero initial state, so that the
/// first column is the instantaneous algebraic response `R e_i` (zero without
/// an algebraic term) and the following `horizon` columns are the regular
/// response `A^k (B + A R) e_i`-style propagation. Only samples with index in
/// `window` are stored.
fn impulse_states<T: Scalar, S: DiscreteSystem<T> + ?Sized>(
    sys: &S,
    channel: usize,
    window: std::ops::Range<usize>,
) -> (DMatrix<T>, T, T) {
    let (n_x, n_u) = (sys.n_x(), sys.n_u());
    let zero_u = DVector::zeros(n_u);
    let mut e = DVector::zeros(n_u);
    e[channel] = T::one();
    let mut out = DMatrix::zeros(n_x, window.len());
    let mut x = sys.step(&DVector::zeros(n_x), &zero_u, &e);
    let mut peak = T::zero();
    let mut last = T::zero();
    for k in 0..window.end {
        let norm = x.norm();
        if norm > peak {
            peak = norm;
        }
        last = norm;
        if k >= window.start {
            out.set_column(k - window.start, &x);
        }
        let u = if k == 0 { &e } else { &zero_u };
        x = sys.step(&x, u, &zero_u);
    }
    (out, peak, last)
}

/// `Σ_i X_i X_iᵀ` over channels `0..n_u`, accumulated in channel order.
fn accumulate<T: Scalar>(blocks: Vec<DMatrix<T>>, n_x: usize) -> DMatrix<T> {
    let mut w = DMatrix::zeros(n_x, n_x);
    for x in blocks {
        w.gemm(T::one(), &x, &x.transpose(), T::one());
    }
    symmetrize(&w)
}

/// Empirical controllability Gramian over `horizon` samples of every input
/// channel's impulse response. For plain state spaces this is the partial
/// Lyapunov sum `Σ_{k<horizon} A^k B Bᵀ A^kᵀ`; the algebraic term adds its
/// instantaneous response column.
pub fn empirical_controllability<T: Scalar, S: DiscreteSystem<T> + ?Sized>(
    sys: &S,
    horizon: usize,
) -> Result<EmpiricalGramian<T>> {
    if horizon == 0 {
        return Err(RomError::Parameter("Gramian horizon must be at least 1".into()));
    }
    let runs: Vec<(DMatrix<T>, T, T)> = (0..sys.n_u())
        .into_par_iter()
        .map(|i| impulse_states(sys, i, 0..horizon + 1))
        .collect();
    let ratio = lit::<T>(TRUNCATION_RATIO);
    let truncated = runs.iter().any(|(_, peak, last)| *last > ratio * *peak);
    let blocks = runs.into_iter().map(|r| r.0).collect();
    Ok(EmpiricalGramian {
        gramian: accumulate(blocks, sys.n_x()),
        truncated,
    })
}

/// Contribution of impulse-response samples `start..end` (same indexing as
/// [`empirical_controllability`], whose horizon `T` covers `0..T+1`).
///
/// Computing `Wc(T₂) − Wc(T₁)` this way avoids the cancellation of
/// subtracting two nearly equal Gramians.
pub fn controllability_window<T: Scalar, S: DiscreteSystem<T> + ?Sized>(
    sys: &S,
    start: usize,
    end: usize,
) -> Result<DMatrix<T>> {
    if end < start {
        return Err(RomError::Parameter("window end precedes start".into()));
    }
    let blocks = (0..sys.n_u())
        .into_par_iter()
        .map(|i| impulse_states(sys, i, start..end).0)
        .collect();
    Ok(accumulate(blocks, sys.n_x()))
}

fn adjoint<T: Scalar>(sys: &StateSpace<T>) -> StateSpace<T> {
    StateSpace {
        a: sys.a.transpose(),
        b: sys.c.transpose(),
        c: DMatrix::zeros(1, sys.n_x()),
        d: DMatrix::zeros(1, sys.n_y()),
        r: DMatrix::zeros(sys.n_x(), sys.n_y()),
        p: DMatrix::zeros(1, sys.n_y()),
    }
}

/// Empirical observability Gramian `Σ_{k<horizon} A^kᵀ Cᵀ C A^k`.
pub fn empirical_observability<T: Scalar>(
    sys: &StateSpace<T>,
    horizon: usize,
    method: ObservabilityMethod,
) -> Result<EmpiricalGramian<T>> {
    if horizon == 0 {
        return Err(RomError::Parameter("Gramian horizon must be at least 1".into()));
    }
    match method {
        ObservabilityMethod::AdjointImpulse => empirical_controllability(&adjoint(sys), horizon),
        ObservabilityMethod::Perturbation => {
            let (n_x, n_u, n_y) = (sys.n_x(), sys.n_u(), sys.n_y());
            let zero_u = DVector::zeros(n_u);
            let ratio = lit::<T>(TRUNCATION_RATIO);
            // column i of the stacked output matrix M is the response to e_i
            let runs: Vec<(DMatrix<T>, bool)> = (0..n_x)
                .into_par_iter()
                .map(|i| {
                    let mut x = DVector::zeros(n_x);
                    x[i] = T::one();
                    let mut col = DMatrix::zeros(n_y, horizon);
                    let (mut peak, mut last) = (T::zero(), T::zero());
                    for k in 0..horizon {
                        col.set_column(k, &sys.output(&x, &zero_u, &zero_u));
                        last = x.norm();
                        if last > peak {
                            peak = last;
                        }
                        x = sys.step(&x, &zero_u, &zero_u);
                    }
                    (col, last > ratio * peak)
                })
                .collect();
            let truncated = runs.iter().any(|r| r.1);
            let mut m = DMatrix::zeros(n_y * horizon, n_x);
            for (i, (col, _)) in runs.into_iter().enumerate() {
                for k in 0..horizon {
                    for r in 0..n_y {
                        m[(k * n_y + r, i)] = col[(r, k)];
                    }
                }
            }
            Ok(EmpiricalGramian {
                gramian: symmetrize(&(m.transpose() * &m)),
                truncated,
            })
        }
    }
}

/// Both Gramians of one frozen plant.
pub fn empirical_gramians<T: Scalar>(
    sys: &StateSpace<T>,
    horizon: usize,
    method: ObservabilityMethod,
) -> Result<GramianPair<T>> {
    let wc = empirical_controllability(sys, horizon)?;
    let wo = empirical_observability(sys, horizon, method)?;
    Ok(GramianPair {
        wc: wc.gramian,
        wo: wo.gramian,
        horizon,
        method_o: method,
        truncated: wc.truncated || wo.truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GramianOptions {
    /// Explicit horizon; `None` derives it from the plant's slowest pole.
    pub horizon: Option<usize>,
    /// Envelope level defining the default horizon.
    pub envelope: f64,
    pub method: ObservabilityMethod,
}

impl Default for GramianOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            envelope: 1e-6,
            method: ObservabilityMethod::AdjointImpulse,
        }
    }
}

/// Gramians at every grid point of a plant (grid order).
pub fn grid_gramians<T: Scalar>(plant: &HighOrderPlant<T>, opts: &GramianOptions) -> Result<Vec<GramianPair<T>>> {
    if !(opts.envelope > 0.0 && opts.envelope < 1.0) {
        return Err(RomError::Parameter("Gramian envelope must lie in (0, 1)".into()));
    }
    let horizon = opts.horizon.unwrap_or_else(|| plant.settling_horizon(opts.envelope));
    plant
        .models()
        .par_iter()
        .map(|m| empirical_gramians(m, horizon, opts.method))
        .collect()
}

/// Ensures a set of Gramian pairs shares one state dimension.
pub fn check_shared_dimension<T: Scalar>(pairs: &[GramianPair<T>]) -> Result<usize> {
    let n = pairs
        .first()
        .map(|p| p.wc.nrows())
        .ok_or_else(|| RomError::Parameter("no Gramians supplied".into()))?;
    for p in pairs {
        if p.wc.shape() != (n, n) || p.wo.shape() != (n, n) {
            return dim_err("Gramian pairs disagree on n_x");
        }
    }
    Ok(n)
}
