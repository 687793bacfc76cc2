//! Dynamic mode decomposition with control (DMDc) and its algebraic variant.
//!
//! Both fit the state equation only. The regression `[A B (R)] ≈ X₁ Ω⁺` over
//! the regressor `Ω = [X₀; U₀; (U₁)]` is truncated at order `r`, and the
//! result is projected onto the leading `n_z` POD modes of `X₁`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{dim_err, Result, RomError};
use crate::grid::bracket_weights;
use crate::linalg::{default_pinv_rtol, thin_svd, vstack, ThinSvd};
use crate::lpv::GridRom;
use crate::model::ReducedModel;
use crate::scalar::{lit, Scalar};
use crate::snapshots::SnapshotSet;

/// Relative level below which singular values count as zero when checking
/// requested truncation orders.
pub const RANK_RTOL: f64 = 1e-12;

/// Default truncation order of the regressor SVD.
pub fn default_r(n_z: usize) -> usize {
    n_z + 10
}

/// Both SVDs of a snapshot set, reusable across `(r, n_z)` choices.
#[derive(Debug, Clone)]
pub struct DmdcDecomposition<T: Scalar> {
    regressor: ThinSvd<T>,
    x1_pod: ThinSvd<T>,
    x1: DMatrix<T>,
    n_x: usize,
    n_u: usize,
    algebraic: bool,
    identifiable: bool,
    rho: T,
}

impl<T: Scalar> DmdcDecomposition<T> {
    pub fn new(snap: &SnapshotSet<T>, algebraic: bool) -> Result<Self> {
        if snap.n_s() == 0 {
            return Err(RomError::Dimension("empty snapshot set".into()));
        }
        let regressor = if algebraic {
            vstack(&[&snap.x0, &snap.u0, &snap.u1])?
        } else {
            vstack(&[&snap.x0, &snap.u0])?
        };
        let svd = thin_svd(&regressor, true);
        let pinv_rank = svd.numerical_rank(default_pinv_rtol(regressor.nrows(), regressor.ncols()));
        Ok(Self {
            identifiable: pinv_rank == regressor.nrows(),
            regressor: svd,
            x1_pod: thin_svd(&snap.x1, false),
            x1: snap.x1.clone(),
            n_x: snap.n_x(),
            n_u: snap.n_u(),
            algebraic,
            rho: snap.rho,
        })
    }

    /// Singular values of the regressor `Ω`.
    pub fn regressor_singular_values(&self) -> &[T] {
        &self.regressor.singular_values
    }

    /// Leading `n_z` POD modes of `X₁`.
    pub fn pod_modes(&self, n_z: usize) -> Result<DMatrix<T>> {
        let rank = self.x1_pod.numerical_rank(lit(RANK_RTOL));
        if n_z == 0 || n_z > rank {
            return Err(RomError::Rank {
                index: n_z,
                rank,
                context: "POD basis of X1".into(),
            });
        }
        Ok(self.x1_pod.leading_u(n_z))
    }

    pub fn fit(&self, r: usize, n_z: usize) -> Result<ReducedModel<T>> {
        if r <= n_z {
            return Err(RomError::Parameter(format!("truncation order r = {r} must exceed n_z = {n_z}")));
        }
        let rank = self.regressor.numerical_rank(lit(RANK_RTOL));
        if r > rank {
            return Err(RomError::Rank {
                index: r,
                rank,
                context: "regressor [X0; U0(; U1)]".into(),
            });
        }
        let basis = self.pod_modes(n_z)?;
        let v = self.regressor.v.as_ref().expect("v computed");
        // K = X₁ V_r Σ_r⁻¹, so that [A B R] ≈ K U_rᵀ
        let mut k = &self.x1 * v.columns(0, r);
        for (j, mut col) in k.column_iter_mut().enumerate() {
            col /= self.regressor.singular_values[j];
        }
        let uk = basis.transpose() * k;
        let ur = self.regressor.u.columns(0, r);
        let u_x = ur.rows(0, self.n_x);
        let u_u = ur.rows(self.n_x, self.n_u);
        let f = &uk * u_x.transpose() * &basis;
        let g = &uk * u_u.transpose();
        let l = self
            .algebraic
            .then(|| &uk * ur.rows(self.n_x + self.n_u, self.n_u).transpose());
        Ok(ReducedModel {
            f,
            g,
            h: None,
            d: None,
            l,
            p: None,
            lift: basis,
            rho: self.rho,
            identifiable: self.identifiable,
        })
    }
}

/// DMDc at truncation order `r` and model order `n_z`.
pub fn dmdc_fit<T: Scalar>(snap: &SnapshotSet<T>, r: usize, n_z: usize) -> Result<ReducedModel<T>> {
    DmdcDecomposition::new(snap, false)?.fit(r, n_z)
}

/// Algebraic DMDc: the regressor also carries `U₁`, yielding `L`.
pub fn admdc_fit<T: Scalar>(snap: &SnapshotSet<T>, r: usize, n_z: usize) -> Result<ReducedModel<T>> {
    DmdcDecomposition::new(snap, true)?.fit(r, n_z)
}

/// Linear read-out from full states to predicted outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout<T: Scalar> {
    pub matrix: DMatrix<T>,
}

impl<T: Scalar> Readout<T> {
    /// Selects the given state indices.
    pub fn select(indices: &[usize], n_x: usize) -> Result<Self> {
        let mut matrix = DMatrix::zeros(indices.len(), n_x);
        for (r, &i) in indices.iter().enumerate() {
            if i >= n_x {
                return Err(RomError::Parameter(format!("read-out index {i} exceeds n_x = {n_x}")));
            }
            matrix[(r, i)] = T::one();
        }
        Ok(Self { matrix })
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.matrix * x
    }
}

/// All grid models stepped side by side, each from its own projected
/// initial state; predictions interpolate the lifted full states.
#[derive(Debug, Clone)]
pub struct ParallelPredictor<'a, T: Scalar> {
    rom: &'a GridRom<T>,
    x_trim: &'a [DVector<T>],
    z: Vec<DVector<T>>,
    model_steps: usize,
}

impl<'a, T: Scalar> ParallelPredictor<'a, T> {
    pub fn new(rom: &'a GridRom<T>, x0: &DVector<T>) -> Result<Self> {
        let x_trim = rom
            .x_trim
            .as_deref()
            .ok_or_else(|| RomError::Parameter("parallel prediction needs full-state trims".into()))?;
        let mut p = Self {
            rom,
            x_trim,
            z: Vec::new(),
            model_steps: 0,
        };
        p.reset(x0)?;
        Ok(p)
    }

    /// Re-projects every model onto `x`: `zⱼ = liftⱼᵀ (x − x̄ⱼ)`.
    pub fn reset(&mut self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.rom.n_x() {
            return dim_err("state length differs from the ROM's n_x");
        }
        self.z = self
            .rom
            .models
            .iter()
            .zip(self.x_trim)
            .map(|(m, xt)| m.lift.transpose() * (x - xt))
            .collect();
        Ok(())
    }

    /// Current reduced states, one per grid model.
    pub fn states(&self) -> &[DVector<T>] {
        &self.z
    }

    /// Interpolated lifted full state at `rho`.
    pub fn lifted(&self, rho: T) -> Result<DVector<T>> {
        let mut x = DVector::zeros(self.rom.n_x());
        for (j, w) in bracket_weights(self.rom.grid.locate(rho)?) {
            x += (&self.rom.models[j].lift * &self.z[j] + &self.x_trim[j]) * w;
        }
        Ok(x)
    }

    /// Advances every grid model with absolute inputs `u_k`, `u_{k+1}`.
    pub fn advance(&mut self, u: &DVector<T>, u_next: &DVector<T>) {
        let rom = self.rom;
        self.z = self
            .z
            .par_iter()
            .enumerate()
            .map(|(j, z)| {
                let ut = &rom.u_trim[j];
                rom.models[j].step(z, &(u - ut), &(u_next - ut))
            })
            .collect();
        self.model_steps += self.z.len();
    }

    /// Number of single-model steps taken so far.
    pub fn model_steps(&self) -> usize {
        self.model_steps
    }
}

/// Parallel-model prediction output.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPrediction<T: Scalar> {
    pub states: DMatrix<T>,
    pub outputs: DMatrix<T>,
    pub model_steps: usize,
}

/// Predicts a parameter-varying run with the parallel grid models from the
/// absolute initial state `x0` and absolute inputs `u` (`n_u × N`).
pub fn admdc_lpv_predict<T: Scalar>(
    rom: &GridRom<T>,
    readout: &Readout<T>,
    u: &DMatrix<T>,
    rho_traj: &[T],
    x0: &DVector<T>,
) -> Result<ParallelPrediction<T>> {
    let n = u.ncols();
    if rho_traj.len() != n || n == 0 {
        return dim_err("inputs and parameter trajectory must be non-empty and equally long");
    }
    if u.nrows() != rom.n_u() || readout.matrix.ncols() != rom.n_x() {
        return dim_err("inputs or read-out do not match the ROM");
    }
    let mut p = ParallelPredictor::new(rom, x0)?;
    let mut states = DMatrix::zeros(rom.n_x(), n);
    let mut outputs = DMatrix::zeros(readout.matrix.nrows(), n);
    for k in 0..n {
        let x = p.lifted(rho_traj[k])?;
        outputs.set_column(k, &readout.apply(&x));
        states.set_column(k, &x);
        let un = u.column((k + 1).min(n - 1)).clone_owned();
        p.advance(&u.column(k).clone_owned(), &un);
    }
    Ok(ParallelPrediction {
        states,
        outputs,
        model_steps: p.model_steps(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::Trim;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snap(x0: &[f64], u0: &[f64], x1: &[f64], u1: &[f64], n_x: usize, n_u: usize) -> SnapshotSet<f64> {
        let n = x0.len() / n_x;
        SnapshotSet {
            x0: DMatrix::from_column_slice(n_x, n, x0),
            x1: DMatrix::from_column_slice(n_x, n, x1),
            u0: DMatrix::from_column_slice(n_u, n, u0),
            u1: DMatrix::from_column_slice(n_u, n, u1),
            y0: DMatrix::zeros(1, n),
            rho: 0.0,
            trim: Trim::zeros(n_x, n_u, 1),
        }
    }

    #[test]
    fn scalar_closed_form() {
        let s = snap(&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.5], &[0.0, 0.0], 1, 1);
        let m = dmdc_fit(&s, 2, 1).unwrap();
        assert!((m.f[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((m.g[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(m.h.is_none() && m.l.is_none());
        assert!(m.identifiable);
    }

    fn scalar_algebraic_data(r_alg: f64) -> SnapshotSet<f64> {
        // x_{k+1} = 0.5 x_k + u_k + r u_{k+1}, a varied input sequence
        let u = [1.0, 0.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0];
        let mut x = vec![0.0];
        for k in 0..u.len() - 1 {
            let next = 0.5 * x[k] + u[k] + r_alg * u[k + 1];
            x.push(next);
        }
        let n = u.len() - 1;
        snap(&x[..n], &u[..n], &x[1..=n], &u[1..=n], 1, 1)
    }

    #[test]
    fn algebraic_scalar_recovery() {
        let s = scalar_algebraic_data(0.2);
        let m = admdc_fit(&s, 3, 1).unwrap();
        assert!((m.f[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((m.g[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((m.l.as_ref().unwrap()[(0, 0)] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn algebraic_fit_without_algebraic_term() {
        let s = scalar_algebraic_data(0.0);
        let m = admdc_fit(&s, 3, 1).unwrap();
        assert!(m.l.as_ref().unwrap().norm() <= 1e-8 * m.g.norm());
    }

    #[test]
    fn collinear_inputs_are_not_identifiable() {
        // constant input: U1 equals U0
        let mut x = vec![0.0];
        for k in 0..6 {
            x.push(0.5 * x[k] + 1.0);
        }
        let u = vec![1.0; 6];
        let s = snap(&x[..6], &u, &x[1..7], &u, 1, 1);
        let d = DmdcDecomposition::new(&s, true).unwrap();
        assert!(!d.identifiable);
        let rank = d.regressor.numerical_rank(1e-12);
        assert_eq!(rank, 2);
        let m = d.fit(2, 1).unwrap();
        assert!(!m.identifiable);
        // minimum-norm split of the input gain between u_k and u_{k+1}
        let g = m.g[(0, 0)];
        let l = m.l.as_ref().unwrap()[(0, 0)];
        assert!((g - l).abs() < 1e-10);
        assert!((g + l - 1.0).abs() < 1e-10);
    }

    #[test]
    fn order_checks() {
        let s = snap(&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.5], &[0.0, 0.0], 1, 1);
        assert!(matches!(dmdc_fit(&s, 1, 1), Err(RomError::Parameter(_))));
        match dmdc_fit(&s, 3, 1) {
            Err(RomError::Rank { index, rank, .. }) => {
                assert_eq!(index, 3);
                assert_eq!(rank, 2);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn lift_is_orthonormal() {
        let n_x = 5;
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draw = |r: usize| DMatrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
        let x0 = draw(n_x);
        let u0 = draw(2);
        let x1 = draw(n_x);
        let s = SnapshotSet {
            u1: u0.clone(),
            x0,
            x1,
            u0,
            y0: DMatrix::zeros(1, n),
            rho: 1.0,
            trim: Trim {
                x: DVector::zeros(n_x),
                u: DVector::zeros(2),
                y: DVector::zeros(1),
            },
        };
        let m = dmdc_fit(&s, 6, 3).unwrap();
        let gram = m.lift.transpose() * &m.lift;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
        m.validate().unwrap();
    }
    fn scalar_grid_rom(n_g: usize) -> GridRom<f64> {
        use crate::grid::ParamGrid;
        use crate::lpv::Algorithm;
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let models = (0..n_g)
            .map(|j| ReducedModel {
                f: m(0.5 + 0.1 * j as f64),
                g: m(1.0),
                h: None,
                d: None,
                l: Some(m(0.1)),
                p: None,
                lift: m(1.0),
                rho: j as f64,
                identifiable: true,
            })
            .collect();
        let trims: Vec<_> = (0..n_g)
            .map(|j| Trim {
                x: DVector::from_element(1, j as f64),
                u: DVector::zeros(1),
                y: DVector::zeros(1),
            })
            .collect();
        let grid = ParamGrid::new((0..n_g).map(|j| j as f64).collect()).unwrap();
        GridRom::from_models(Algorithm::Admdc, grid, models, &trims, None, 0.1).unwrap()
    }

    #[test]
    fn predictor_at_knot_is_single_model() {
        let rom = scalar_grid_rom(3);
        let u = DMatrix::from_row_slice(1, 5, &[1.0, 0.0, -1.0, 2.0, 0.5]);
        let x0 = DVector::from_element(1, 1.5);
        let readout = Readout::select(&[0], 1).unwrap();
        let pred = admdc_lpv_predict(&rom, &readout, &u, &[1.0; 5], &x0).unwrap();
        let (z, _) = rom.models[1].simulate(&u, &DVector::from_element(1, 0.5)).unwrap();
        for k in 0..5 {
            assert_eq!(pred.states[(0, k)], z[(0, k)] + 1.0);
        }
        assert_eq!(pred.model_steps, 3 * 5);
    }
}
