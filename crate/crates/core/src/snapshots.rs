//! Trajectory data, trim points and the shifted snapshot matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, RomError};
use crate::scalar::{lit, to_f64, Scalar};
use crate::system::DiscreteSystem;

/// Equilibrium `(x̄, ū, ȳ)` at a frozen parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct Trim<T: Scalar> {
    pub x: DVector<T>,
    pub u: DVector<T>,
    pub y: DVector<T>,
}

impl<T: Scalar> Trim<T> {
    pub fn zeros(n_x: usize, n_u: usize, n_y: usize) -> Self {
        Self {
            x: DVector::zeros(n_x),
            u: DVector::zeros(n_u),
            y: DVector::zeros(n_y),
        }
    }
}

/// Recorded state, input and output samples `0..=n_s` at a frozen parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet<T: Scalar> {
    states: DMatrix<T>,
    inputs: DMatrix<T>,
    outputs: DMatrix<T>,
    dt: T,
    rho: T,
    trim: Trim<T>,
}

impl<T: Scalar> TrajectorySet<T> {
    pub fn new(
        states: DMatrix<T>,
        inputs: DMatrix<T>,
        outputs: DMatrix<T>,
        dt: T,
        rho: T,
        trim: Trim<T>,
    ) -> Result<Self> {
        let n = states.ncols();
        if n < 2 {
            return dim_err(format!("trajectory needs at least 2 samples, got {n}"));
        }
        if inputs.ncols() != n || outputs.ncols() != n {
            return dim_err(format!(
                "sample counts differ: states {n}, inputs {}, outputs {}",
                inputs.ncols(),
                outputs.ncols()
            ));
        }
        if !(dt > T::zero()) {
            return Err(RomError::Parameter(format!(
                "sampling time must be positive, got {}",
                to_f64(dt)
            )));
        }
        if trim.x.len() != states.nrows()
            || trim.u.len() != inputs.nrows()
            || trim.y.len() != outputs.nrows()
        {
            return dim_err(format!(
                "trim dimensions ({}, {}, {}) do not match trajectory ({}, {}, {})",
                trim.x.len(),
                trim.u.len(),
                trim.y.len(),
                states.nrows(),
                inputs.nrows(),
                outputs.nrows()
            ));
        }
        Ok(Self {
            states,
            inputs,
            outputs,
            dt,
            rho,
            trim,
        })
    }

    pub fn states(&self) -> &DMatrix<T> {
        &self.states
    }
    pub fn inputs(&self) -> &DMatrix<T> {
        &self.inputs
    }
    pub fn outputs(&self) -> &DMatrix<T> {
        &self.outputs
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn rho(&self) -> T {
        self.rho
    }
    pub fn trim(&self) -> &Trim<T> {
        &self.trim
    }
    /// Number of transitions `n_s` (one less than the number of samples).
    pub fn n_steps(&self) -> usize {
        self.states.ncols() - 1
    }
    pub fn n_x(&self) -> usize {
        self.states.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.inputs.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.outputs.nrows()
    }
}

/// Trim-subtracted, shifted data matrices `X₀, X₁, U₀, U₁, Y₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet<T: Scalar> {
    pub x0: DMatrix<T>,
    pub x1: DMatrix<T>,
    pub u0: DMatrix<T>,
    pub u1: DMatrix<T>,
    pub y0: DMatrix<T>,
    pub rho: T,
    pub trim: Trim<T>,
}

impl<T: Scalar> SnapshotSet<T> {
    pub fn n_x(&self) -> usize {
        self.x0.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.u0.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.y0.nrows()
    }
    pub fn n_s(&self) -> usize {
        self.x0.ncols()
    }
}

fn subtract_trim<T: Scalar>(m: &DMatrix<T>, start: usize, count: usize, trim: &DVector<T>) -> DMatrix<T> {
    let mut out = m.columns(start, count).clone_owned();
    for mut col in out.column_iter_mut() {
        col -= trim;
    }
    out
}

/// Column `k` of `X₀` is `x_k − x̄`, of `X₁` is `x_{k+1} − x̄`, and likewise for
/// the inputs; `Y₀` holds `y_k − ȳ`, all for `k = 0..n_s`.
pub fn build_snapshots<T: Scalar>(traj: &TrajectorySet<T>) -> Result<SnapshotSet<T>> {
    let n_s = traj.n_steps();
    let tr = &traj.trim;
    if tr.x.len() != traj.n_x() || tr.u.len() != traj.n_u() || tr.y.len() != traj.n_y() {
        return dim_err("trim dimensions do not match trajectory");
    }
    Ok(SnapshotSet {
        x0: subtract_trim(&traj.states, 0, n_s, &tr.x),
        x1: subtract_trim(&traj.states, 1, n_s, &tr.x),
        u0: subtract_trim(&traj.inputs, 0, n_s, &tr.u),
        u1: subtract_trim(&traj.inputs, 1, n_s, &tr.u),
        y0: subtract_trim(&traj.outputs, 0, n_s, &tr.y),
        rho: traj.rho,
        trim: tr.clone(),
    })
}

/// Settling-simulation parameters for trim computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettleConfig {
    /// Upper bound on simulated steps.
    pub max_steps: usize,
    /// Convergence threshold on the per-step state increment norm,
    /// relative to `max(1, ‖x‖)`.
    pub tolerance: f64,
}

impl Default for SettleConfig {
    fn default() -> Self {
        Self {
            max_steps: 200_000,
            tolerance: 1e-10,
        }
    }
}

/// Finds the trim of a frozen system by holding `held_input` from the zero
/// state until the state increment per step drops below the tolerance
/// (relative to `max(1, ‖x‖)`).
pub fn compute_trim<T: Scalar, S: DiscreteSystem<T> + ?Sized>(
    sys: &S,
    held_input: &DVector<T>,
    settle: &SettleConfig,
) -> Result<Trim<T>> {
    if held_input.len() != sys.n_u() {
        return dim_err(format!(
            "held input has length {}, system expects {}",
            held_input.len(),
            sys.n_u()
        ));
    }
    if settle.max_steps == 0 {
        return Err(RomError::Parameter("settle_steps must be at least 1".into()));
    }
    let tol: T = lit(settle.tolerance);
    let mut x = DVector::zeros(sys.n_x());
    let mut residual = T::zero();
    for _ in 0..settle.max_steps {
        let next = sys.step(&x, held_input, held_input);
        let scale = next.norm().max(T::one());
        residual = (&next - &x).norm();
        x = next;
        if residual < tol * scale {
            let y = sys.output(&x, held_input, held_input);
            return Ok(Trim {
                x,
                u: held_input.clone(),
                y,
            });
        }
    }
    Err(RomError::NotSettled {
        steps: settle.max_steps,
        residual: to_f64(residual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::StateSpace;
    use proptest::prelude::*;

    fn scalar_traj() -> TrajectorySet<f64> {
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.5]);
        let u = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        TrajectorySet::new(x.clone(), u, x, 0.1, 30.0, Trim::zeros(1, 1, 1)).unwrap()
    }

    #[test]
    fn scalar_bookkeeping() {
        let s = build_snapshots(&scalar_traj()).unwrap();
        assert_eq!(s.x0.as_slice(), &[0.0, 1.0]);
        assert_eq!(s.x1.as_slice(), &[1.0, 0.5]);
        assert_eq!(s.u0.as_slice(), &[1.0, 0.0]);
        assert_eq!(s.u1.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.y0.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn equilibrium_trajectory_gives_zero_snapshots() {
        let trim = Trim {
            x: DVector::from_vec(vec![1.5, -2.0]),
            u: DVector::from_vec(vec![0.25]),
            y: DVector::from_vec(vec![3.0]),
        };
        let n = 6;
        let states = DMatrix::from_fn(2, n, |i, _| trim.x[i]);
        let inputs = DMatrix::from_fn(1, n, |_, _| trim.u[0]);
        let outputs = DMatrix::from_fn(1, n, |_, _| trim.y[0]);
        let traj = TrajectorySet::new(states, inputs, outputs, 0.006, 20.0, trim).unwrap();
        let s = build_snapshots(&traj).unwrap();
        for m in [&s.x0, &s.x1, &s.u0, &s.u1, &s.y0] {
            assert!(m.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn benchmark_scale_shapes() {
        let (n_x, n_u, n_s) = (618, 6, 500);
        let traj = TrajectorySet::new(
            DMatrix::<f64>::zeros(n_x, n_s + 1),
            DMatrix::zeros(n_u, n_s + 1),
            DMatrix::zeros(1, n_s + 1),
            0.006,
            30.0,
            Trim::zeros(n_x, n_u, 1),
        )
        .unwrap();
        let s = build_snapshots(&traj).unwrap();
        assert_eq!(s.x0.shape(), (618, 500));
        assert_eq!(s.u1.shape(), (6, 500));
    }

    #[test]
    fn dimension_errors() {
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.5]);
        let u = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let bad_trim = Trim::zeros(2, 1, 1);
        assert!(matches!(
            TrajectorySet::new(x.clone(), u.clone(), x.clone(), 0.1, 0.0, bad_trim),
            Err(RomError::Dimension(_))
        ));
        let short = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(TrajectorySet::new(x.clone(), short, x.clone(), 0.1, 0.0, Trim::zeros(1, 1, 1)).is_err());
        assert!(TrajectorySet::new(x.clone(), u, x, 0.0, 0.0, Trim::zeros(1, 1, 1)).is_err());
    }

    fn scalar_sys(a: f64, b: f64) -> StateSpace<f64> {
        StateSpace::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn trim_of_zero_input_is_origin() {
        let sys = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let t = compute_trim(&sys, &DVector::zeros(1), &SettleConfig::default()).unwrap();
        assert!(t.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trim_scalar_fixed_point() {
        let t = compute_trim(&scalar_sys(0.5, 1.0), &DVector::from_element(1, 1.0), &SettleConfig::default())
            .unwrap();
        assert!((t.x[0] - 2.0).abs() < 1e-9);
        assert!((t.y[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn trim_matches_linear_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.7]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let sys = StateSpace::new(a.clone(), b.clone(), DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let u = DVector::from_element(1, 0.8);
        let settle = SettleConfig {
            max_steps: 10_000,
            tolerance: 1e-14,
        };
        let t = compute_trim(&sys, &u, &settle).unwrap();
        let oracle = (DMatrix::identity(2, 2) - a).lu().solve(&(b * &u)).unwrap();
        assert!((t.x - oracle).norm() < 1e-12);
    }

    #[test]
    fn trim_reports_non_settling() {
        let settle = SettleConfig {
            max_steps: 5,
            tolerance: 1e-10,
        };
        let err = compute_trim(&scalar_sys(0.99, 1.0), &DVector::from_element(1, 1.0), &settle).unwrap_err();
        match err {
            RomError::NotSettled { steps, residual } => {
                assert_eq!(steps, 5);
                assert!(residual > 0.9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn shift_and_round_trip(
            vals in proptest::collection::vec(-1e3f64..1e3, 2 * 7),
            us in proptest::collection::vec(-10f64..10.0, 7),
            tx in -5f64..5.0,
        ) {
            let states = DMatrix::from_row_slice(2, 7, &vals);
            let inputs = DMatrix::from_row_slice(1, 7, &us);
            let outputs = states.rows(0, 1).clone_owned();
            let trim = Trim { x: DVector::from_vec(vec![tx, 0.0]), u: DVector::zeros(1), y: DVector::from_element(1, tx) };
            let traj = TrajectorySet::new(states.clone(), inputs.clone(), outputs, 0.01, 1.0, trim).unwrap();
            let s = build_snapshots(&traj).unwrap();
            // shift property is exact
            prop_assert_eq!(s.x1.columns(0, 5).clone_owned(), s.x0.columns(1, 5).clone_owned());
            prop_assert_eq!(s.u1.columns(0, 5).clone_owned(), s.u0.columns(1, 5).clone_owned());
            // zero-trim rows and inputs round-trip bit-exactly; shifted rows to within one rounding
            for k in 0..6 {
                prop_assert_eq!(s.x0[(1, k)], states[(1, k)]);
                prop_assert_eq!(s.u0[(0, k)], inputs[(0, k)]);
                let back = s.x0[(0, k)] + tx;
                prop_assert!((back - states[(0, k)]).abs() <= 4.0 * f64::EPSILON * (states[(0, k)].abs() + tx.abs()));
            }
        }
    }
}
