//! Input-output reduced-order models (IOROM) on a shared POD basis.

use nalgebra::DMatrix;

use crate::dmdc::RANK_RTOL;
use crate::error::{dim_err, Result, RomError};
use crate::linalg::{hstack, lstsq_right, thin_svd, vstack, ThinSvd};
use crate::model::ReducedModel;
use crate::scalar::{lit, Scalar};
use crate::snapshots::SnapshotSet;

/// SVD of the column-stacked `X₀` blocks of all grid points, reusable for
/// any basis size.
#[derive(Debug, Clone)]
pub struct SharedPod<T: Scalar> {
    svd: ThinSvd<T>,
    columns: usize,
}

impl<T: Scalar> SharedPod<T> {
    pub fn new(snaps: &[SnapshotSet<T>]) -> Result<Self> {
        if snaps.is_empty() {
            return dim_err("no snapshot sets supplied");
        }
        let blocks: Vec<&DMatrix<T>> = snaps.iter().map(|s| &s.x0).collect();
        let fat = hstack(&blocks)?;
        Ok(Self {
            svd: thin_svd(&fat, false),
            columns: fat.ncols(),
        })
    }

    pub fn singular_values(&self) -> &[T] {
        &self.svd.singular_values
    }

    /// Leading `n_z` POD modes.
    pub fn basis(&self, n_z: usize) -> Result<DMatrix<T>> {
        if self.columns < n_z {
            return Err(RomError::Rank {
                index: n_z,
                rank: self.columns,
                context: "stacked snapshot matrix has too few columns".into(),
            });
        }
        let rank = self.svd.numerical_rank(lit(RANK_RTOL));
        if n_z == 0 || n_z > rank {
            return Err(RomError::Rank {
                index: n_z,
                rank,
                context: "stacked snapshot matrix X0".into(),
            });
        }
        Ok(self.svd.leading_u(n_z))
    }
}

/// Leading `n_z` left singular vectors of the column-stacked `X₀` blocks.
pub fn build_shared_pod_basis<T: Scalar>(snaps: &[SnapshotSet<T>], n_z: usize) -> Result<DMatrix<T>> {
    SharedPod::new(snaps)?.basis(n_z)
}

/// Least-squares fit of the projected model
/// `[F G (L); H D (P)] = [projᵀX₁; Y₀] [projᵀX₀; U₀; (U₁)]⁺`.
///
/// `proj` is the test space, `lift` the basis recorded on the model.
pub fn projected_fit<T: Scalar>(
    snap: &SnapshotSet<T>,
    proj: &DMatrix<T>,
    lift: &DMatrix<T>,
    algebraic: bool,
) -> Result<ReducedModel<T>> {
    if snap.n_s() == 0 {
        return dim_err("empty snapshot set");
    }
    if proj.nrows() != snap.n_x() || lift.shape() != proj.shape() {
        return dim_err("projection and lift must both be n_x × n_z");
    }
    let (n_z, n_u, n_y) = (proj.ncols(), snap.n_u(), snap.n_y());
    let pt = proj.transpose();
    let target = vstack(&[&(&pt * &snap.x1), &snap.y0])?;
    let z0 = &pt * &snap.x0;
    let regressor = if algebraic {
        vstack(&[&z0, &snap.u0, &snap.u1])?
    } else {
        vstack(&[&z0, &snap.u0])?
    };
    let sol = lstsq_right(&target, &regressor, None)?;
    let s = &sol.solution;
    let block = |r0: usize, nr: usize, c0: usize, nc: usize| s.view((r0, c0), (nr, nc)).clone_owned();
    Ok(ReducedModel {
        f: block(0, n_z, 0, n_z),
        g: block(0, n_z, n_z, n_u),
        h: Some(block(n_z, n_y, 0, n_z)),
        d: Some(block(n_z, n_y, n_z, n_u)),
        l: algebraic.then(|| block(0, n_z, n_z + n_u, n_u)),
        p: algebraic.then(|| block(n_z, n_y, n_z + n_u, n_u)),
        lift: lift.clone(),
        rho: snap.rho,
        identifiable: sol.identifiable,
    })
}

/// IOROM fit at one grid point with the shared basis `q`.
pub fn iorom_fit<T: Scalar>(snap: &SnapshotSet<T>, q: &DMatrix<T>, algebraic: bool) -> Result<ReducedModel<T>> {
    projected_fit(snap, q, q, algebraic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::principal_angle_sines;
    use crate::snapshots::Trim;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_snap(y: bool) -> SnapshotSet<f64> {
        SnapshotSet {
            x0: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            x1: DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
            u0: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            u1: DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            y0: if y {
                DMatrix::from_row_slice(1, 2, &[0.0, 1.0])
            } else {
                DMatrix::zeros(1, 2)
            },
            rho: 0.0,
            trim: Trim::zeros(1, 1, 1),
        }
    }

    fn subspace_snap(seed: u64) -> (SnapshotSet<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let coeffs = DMatrix::from_fn(3, 40, |_, _| rng.random_range(-1.0..1.0));
        let x0 = &basis * coeffs;
        let s = SnapshotSet {
            x1: x0.clone(),
            u0: DMatrix::zeros(1, 40),
            u1: DMatrix::zeros(1, 40),
            y0: DMatrix::zeros(1, 40),
            x0,
            rho: 0.0,
            trim: Trim::zeros(8, 1, 1),
        };
        (s, basis)
    }

    #[test]
    fn scalar_closed_form() {
        let q = DMatrix::identity(1, 1);
        let m = iorom_fit(&scalar_snap(true), &q, false).unwrap();
        assert!((m.f[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((m.g[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((m.h.as_ref().unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(m.d.as_ref().unwrap()[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn zero_outputs_give_zero_output_equation() {
        let q = DMatrix::identity(1, 1);
        let m = iorom_fit(&scalar_snap(false), &q, false).unwrap();
        assert_eq!(m.h.unwrap()[(0, 0)], 0.0);
        assert_eq!(m.d.unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn basis_recovers_data_subspace() {
        let (s, basis) = subspace_snap(1);
        let q = build_shared_pod_basis(&[s], 3).unwrap();
        let sines = principal_angle_sines(&q, &basis).unwrap();
        assert!(sines.iter().all(|&v| v <= 1e-10));
        assert!(((q.transpose() * &q) - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn duplicated_blocks_do_not_rotate_basis() {
        let (s, _) = subspace_snap(2);
        let q1 = build_shared_pod_basis(std::slice::from_ref(&s), 3).unwrap();
        let q2 = build_shared_pod_basis(&[s.clone(), s], 3).unwrap();
        assert!((q1 - q2).norm() < 1e-12);
    }

    #[test]
    fn order_beyond_rank_is_rejected() {
        let (s, _) = subspace_snap(3);
        assert!(matches!(build_shared_pod_basis(&[s], 4), Err(RomError::Rank { index: 4, rank: 3, .. })));
    }

    #[test]
    fn residual_is_first_order_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 60;
        let mut draw = |r: usize| DMatrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
        let s = SnapshotSet {
            x0: draw(6),
            x1: draw(6),
            u0: draw(2),
            u1: draw(2),
            y0: draw(1),
            rho: 0.0,
            trim: Trim::zeros(6, 2, 1),
        };
        let q = build_shared_pod_basis(std::slice::from_ref(&s), 3).unwrap();
        let m = iorom_fit(&s, &q, false).unwrap();
        let objective = |f: &DMatrix<f64>, g: &DMatrix<f64>, h: &DMatrix<f64>, d: &DMatrix<f64>| {
            let z0 = q.transpose() * &s.x0;
            let r1 = q.transpose() * &s.x1 - f * &z0 - g * &s.u0;
            let r2 = &s.y0 - h * &z0 - d * &s.u0;
            r1.norm_squared() + r2.norm_squared()
        };
        let (h, d) = (m.h.clone().unwrap(), m.d.clone().unwrap());
        let best = objective(&m.f, &m.g, &h, &d);
        for k in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k);
            let eps = 1e-4;
            let mut pert = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| eps * rng.random_range(-1.0..1.0));
            let worse = objective(&(&m.f + pert(3, 3)), &(&m.g + pert(3, 2)), &(&h + pert(1, 3)), &(&d + pert(1, 2)));
            assert!(worse > best);
        }
    }

    #[test]
    fn algebraic_fit_without_direct_term_has_zero_p() {
        // x_{k+1} = 0.5 x_k + u_k + 0.3 u_{k+1}, y_k = x_k
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..41).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = vec![0.0];
        for k in 0..40 {
            x.push(0.5 * x[k] + u[k] + 0.3 * u[k + 1]);
        }
        let s = SnapshotSet {
            x0: DMatrix::from_row_slice(1, 40, &x[..40]),
            x1: DMatrix::from_row_slice(1, 40, &x[1..41]),
            u0: DMatrix::from_row_slice(1, 40, &u[..40]),
            u1: DMatrix::from_row_slice(1, 40, &u[1..41]),
            y0: DMatrix::from_row_slice(1, 40, &x[..40]),
            rho: 0.0,
            trim: Trim::zeros(1, 1, 1),
        };
        let m = iorom_fit(&s, &DMatrix::identity(1, 1), true).unwrap();
        assert!(m.p.as_ref().unwrap().norm() <= 1e-8);
        assert!((m.l.as_ref().unwrap()[(0, 0)] - 0.3).abs() < 1e-10);
    }
}
