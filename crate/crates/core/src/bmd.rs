//! Balanced mode decomposition: a fixed basis space `V` shared by the whole
//! parameter grid and per-grid test spaces `W(ρʲ)` built from empirical
//! Gramians, followed by an oblique-projection least-squares fit.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dmdc::RANK_RTOL;
use crate::error::{dim_err, Result, RomError};
use crate::gramians::{check_shared_dimension, GramianPair};
use crate::iorom::projected_fit;
use crate::linalg::{hstack, psd_factor, thin_qr, thin_svd};
use crate::model::ReducedModel;
use crate::scalar::{lit, to_f64, Scalar};
use crate::snapshots::SnapshotSet;
use crate::system::{DiscreteSystem, StateSpace};

/// Eigenvalue level (relative to `max(1, λ_max)`) below which Gramian
/// eigenvalues are clamped to zero before factorization.
pub const PSD_CLAMP: f64 = 1e-10;
/// Relative size of an `R` diagonal entry below which `W` is not built.
pub const R_DIAG_RTOL: f64 = 1e-10;

/// Oblique projector `Π = V Wᵀ` per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueProjector<T: Scalar> {
    pub v: DMatrix<T>,
    pub w: Vec<DMatrix<T>>,
    pub hankel: Vec<Vec<T>>,
    /// Non-fatal remarks, e.g. tied Hankel values at the truncation edge.
    pub warnings: Vec<String>,
}

impl<T: Scalar> ObliqueProjector<T> {
    pub fn n_z(&self) -> usize {
        self.v.ncols()
    }

    /// `‖W(ρʲ)ᵀV − I‖_F`.
    pub fn biorthogonality_error(&self, j: usize) -> T {
        let n = self.n_z();
        (self.w[j].transpose() * &self.v - DMatrix::identity(n, n)).norm()
    }

    /// `‖Π² − Π‖_F / ‖Π‖_F`.
    pub fn idempotence_error(&self, j: usize) -> T {
        let pi = &self.v * self.w[j].transpose();
        let norm = pi.norm();
        if norm == T::zero() {
            return T::zero();
        }
        (&pi * &pi - &pi).norm() / norm
    }

    /// Checks the bi-orthogonality, orthonormality and ordering invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_z();
        if (self.v.transpose() * &self.v - DMatrix::identity(n, n)).norm() > lit(1e-12) {
            return Err(RomError::Projection {
                grid_index: 0,
                detail: "V does not have orthonormal columns".into(),
            });
        }
        for j in 0..self.w.len() {
            let e = self.biorthogonality_error(j);
            if !(e <= lit(1e-8)) {
                return Err(RomError::Projection {
                    grid_index: j,
                    detail: format!("‖WᵀV − I‖ = {:e}", to_f64(e)),
                });
            }
            let h = &self.hankel[j];
            if h.iter().any(|&s| s < T::zero()) || h.windows(2).any(|p| p[1] > p[0]) {
                return Err(RomError::Projection {
                    grid_index: j,
                    detail: "Hankel values are not non-negative and non-increasing".into(),
                });
            }
        }
        Ok(())
    }
}

/// Per-grid-point balancing quantities that do not depend on `n_z`.
#[derive(Debug, Clone)]
pub struct BalancingPoint<T: Scalar> {
    pub lc: DMatrix<T>,
    pub lo: DMatrix<T>,
    /// Left singular vectors of `H = L_cᵀ L_o`.
    pub h_left: DMatrix<T>,
    pub hankel: Vec<T>,
}

/// Gramian factors and Hankel decompositions over the grid, reusable for
/// any model order.
#[derive(Debug, Clone)]
pub struct BalancingData<T: Scalar> {
    pub points: Vec<BalancingPoint<T>>,
}

impl<T: Scalar> BalancingData<T> {
    pub fn new(gramians: &[GramianPair<T>]) -> Result<Self> {
        check_shared_dimension(gramians)?;
        let points = gramians
            .par_iter()
            .map(|g| {
                let lc = psd_factor(&g.wc, lit(PSD_CLAMP))?.factor;
                let lo = psd_factor(&g.wo, lit(PSD_CLAMP))?.factor;
                let svd = thin_svd(&(lc.transpose() * &lo), false);
                Ok(BalancingPoint {
                    lc,
                    lo,
                    h_left: svd.u,
                    hankel: svd.singular_values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points })
    }

    pub fn hankel(&self) -> Vec<Vec<T>> {
        self.points.iter().map(|p| p.hankel.clone()).collect()
    }

    /// Basis and test spaces of order `n_z`.
    pub fn spaces(&self, n_z: usize) -> Result<ObliqueProjector<T>> {
        let mut warnings = Vec::new();
        for (j, p) in self.points.iter().enumerate() {
            let cut = lit::<T>(RANK_RTOL) * p.hankel.first().copied().unwrap_or_else(T::zero);
            let rank = p.hankel.iter().filter(|&&s| s > cut).count();
            if n_z == 0 || n_z > rank {
                return Err(RomError::Rank {
                    index: n_z,
                    rank,
                    context: format!("Hankel matrix at grid point {j}"),
                });
            }
            if let Some(&next) = p.hankel.get(n_z) {
                let edge = p.hankel[n_z - 1];
                if edge - next <= lit::<T>(1e-10) * p.hankel[0] {
                    warnings.push(format!(
                        "grid point {j}: Hankel values {n_z} and {} tie at the truncation edge; kept index order",
                        n_z + 1
                    ));
                }
            }
        }
        // leading left singular vectors of L_c Ũ per grid point, stacked
        let blocks = self
            .points
            .par_iter()
            .map(|p| {
                let lcu = &p.lc * p.h_left.columns(0, n_z);
                thin_svd(&lcu, false).leading_u(n_z)
            })
            .collect::<Vec<_>>();
        let refs: Vec<&DMatrix<T>> = blocks.iter().collect();
        let q_bar = hstack(&refs)?;
        let v = thin_svd(&q_bar, false).leading_u(n_z);
        let w = self
            .points
            .par_iter()
            .enumerate()
            .map(|(j, p)| test_space(&p.lo, &v, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(ObliqueProjector {
            v,
            w,
            hankel: self.hankel(),
            warnings,
        })
    }
}

/// `W = L_o Q (Rᵀ)⁻¹` from the thin QR of `L_oᵀ V`, so that `WᵀV = I`.
fn test_space<T: Scalar>(lo: &DMatrix<T>, v: &DMatrix<T>, j: usize) -> Result<DMatrix<T>> {
    let (q, r) = thin_qr(&(lo.transpose() * v));
    let n = v.ncols();
    let max_diag = (0..n).map(|i| r[(i, i)].abs()).fold(T::zero(), |a, b| if b > a { b } else { a });
    for i in 0..n {
        if !(r[(i, i)].abs() > lit::<T>(R_DIAG_RTOL) * max_diag) {
            return Err(RomError::Projection {
                grid_index: j,
                detail: format!("L_oᵀV is rank deficient (R[{i},{i}] = {:e})", to_f64(r[(i, i)])),
            });
        }
    }
    // Wᵀ = R⁻¹ (L_o Q)ᵀ by back substitution
    let loq_t = (lo * q).transpose();
    let wt = r
        .solve_upper_triangular(&loq_t)
        .ok_or_else(|| RomError::Projection {
            grid_index: j,
            detail: "triangular solve failed".into(),
        })?;
    Ok(wt.transpose())
}

/// Fixed basis `V` and grid test spaces `W(ρʲ)` of order `n_z`.
pub fn bmd_spaces<T: Scalar>(gramians: &[GramianPair<T>], n_z: usize) -> Result<ObliqueProjector<T>> {
    BalancingData::new(gramians)?.spaces(n_z)
}

/// BMD fit at one grid point: oblique projection through `w`, lift `v`.
pub fn bmd_fit<T: Scalar>(
    snap: &SnapshotSet<T>,
    v: &DMatrix<T>,
    w: &DMatrix<T>,
    algebraic: bool,
) -> Result<ReducedModel<T>> {
    projected_fit(snap, w, v, algebraic)
}

/// Petrov–Galerkin projection of known plant matrices: `(WᵀAV, WᵀB, CV, D)`.
pub fn project_state_space<T: Scalar>(sys: &StateSpace<T>, v: &DMatrix<T>, w: &DMatrix<T>, rho: T) -> Result<ReducedModel<T>> {
    if v.nrows() != sys.n_x() || w.shape() != v.shape() {
        return dim_err("projection spaces do not match the plant");
    }
    let wt = w.transpose();
    Ok(ReducedModel {
        f: &wt * &sys.a * v,
        g: &wt * &sys.b,
        h: Some(&sys.c * v),
        d: Some(sys.d.clone()),
        l: sys.has_algebraic().then(|| &wt * &sys.r),
        p: sys.has_algebraic().then(|| sys.p.clone()),
        lift: v.clone(),
        rho,
        identifiable: true,
    })
}

/// Largest per-grid count of Hankel values at or above
/// `threshold_fraction · σ₁(ρʲ)`.
pub fn select_order_from_hankel<T: Scalar>(hankel: &[Vec<T>], threshold_fraction: f64) -> Result<usize> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(RomError::Parameter("threshold fraction must lie in (0, 1)".into()));
    }
    if hankel.is_empty() {
        return Err(RomError::Parameter("no Hankel vectors supplied".into()));
    }
    let mut best = 0;
    for (j, h) in hankel.iter().enumerate() {
        let first = *h
            .first()
            .ok_or_else(|| RomError::Parameter(format!("empty Hankel vector at grid point {j}")))?;
        let cut = lit::<T>(threshold_fraction) * first;
        best = best.max(h.iter().filter(|&&s| s >= cut).count());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramians::ObservabilityMethod;
    use crate::plant::{balanced_truncation, lyapunov_gramians, make_benchmark_plant, PlantConfig};
    use crate::system::markov_relative_error;

    fn pair(wc: DMatrix<f64>, wo: DMatrix<f64>) -> GramianPair<f64> {
        GramianPair {
            wc,
            wo,
            horizon: 1,
            method_o: ObservabilityMethod::AdjointImpulse,
            truncated: false,
        }
    }

    fn small_sys() -> StateSpace<f64> {
        let cfg = PlantConfig {
            n_x: 16,
            n_u: 3,
            n_y: 2,
            grid_rhos: vec![20.0, 30.0],
            trim_input: vec![0.0; 3],
            algebraic: false,
            ..PlantConfig::default()
        };
        make_benchmark_plant::<f64>(&cfg).unwrap().model(1).clone()
    }

    #[test]
    fn identity_gramians_give_orthogonal_projector() {
        let g = pair(DMatrix::identity(5, 5), DMatrix::identity(5, 5));
        let p = bmd_spaces(&[g], 2).unwrap();
        assert!((&p.w[0] - &p.v).norm() < 1e-12);
        assert!(p.biorthogonality_error(0) < 1e-12);
        // all Hankel values tie → warning recorded
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn scalar_hankel_value() {
        let sys = StateSpace::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let (wc, wo) = lyapunov_gramians(&sys).unwrap();
        let p = bmd_spaces(&[pair(wc, wo)], 1).unwrap();
        assert!((p.hankel[0][0] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_reproduces_balanced_truncation() {
        let sys = small_sys();
        let (wc, wo) = lyapunov_gramians(&sys).unwrap();
        let data = BalancingData::new(&[pair(wc, wo)]).unwrap();
        for n_z in [2, 4, 7] {
            let p = data.spaces(n_z).unwrap();
            p.validate().unwrap();
            let rom = project_state_space(&sys, &p.v, &p.w[0], 0.0).unwrap();
            let bt = balanced_truncation(&sys, n_z, 0.0).unwrap();
            let m1 = rom.output_markov(50).unwrap();
            let m2 = bt.model.output_markov(50).unwrap();
            assert!(markov_relative_error(&m1, &m2) < 1e-8, "n_z = {n_z}");
        }
    }

    #[test]
    fn factor_choice_does_not_matter() {
        let sys = small_sys();
        let (wc, wo) = lyapunov_gramians(&sys).unwrap();
        let p1 = bmd_spaces(&[pair(wc.clone(), wo.clone())], 4).unwrap();
        // a rotated square root L·Θ represents the same Gramian
        let lc = psd_factor(&wc, 1e-10).unwrap().factor;
        let (theta, _) = thin_qr(&DMatrix::from_fn(16, 16, |i, j| ((i * 3 + j * 5) % 7) as f64 + (i == j) as u8 as f64));
        let lc_rot = &lc * theta;
        let point = BalancingPoint {
            h_left: thin_svd(&(lc_rot.transpose() * psd_factor(&wo, 1e-10).unwrap().factor), false).u,
            lc: lc_rot,
            lo: psd_factor(&wo, 1e-10).unwrap().factor,
            hankel: p1.hankel[0].clone(),
        };
        let p2 = BalancingData { points: vec![point] }.spaces(4).unwrap();
        let pi1 = &p1.v * p1.w[0].transpose();
        let pi2 = &p2.v * p2.w[0].transpose();
        assert!((pi1 - pi2).norm() < 1e-8);
    }

    #[test]
    fn projector_invariants_across_grid() {
        let cfg = PlantConfig {
            n_x: 16,
            n_u: 3,
            n_y: 1,
            grid_rhos: vec![20.0, 30.0, 40.0, 50.0],
            trim_input: vec![0.0; 3],
            algebraic: false,
            ..PlantConfig::default()
        };
        let plant = make_benchmark_plant::<f64>(&cfg).unwrap();
        let gramians: Vec<_> = plant
            .models()
            .iter()
            .map(|m| {
                let (wc, wo) = lyapunov_gramians(m).unwrap();
                pair(wc, wo)
            })
            .collect();
        let p = bmd_spaces(&gramians, 5).unwrap();
        p.validate().unwrap();
        for j in 0..4 {
            assert!(p.biorthogonality_error(j) <= 1e-8);
            assert!(p.idempotence_error(j) <= 1e-8);
        }
    }

    #[test]
    fn oblique_fit_with_orthogonal_spaces_is_iorom() {
        use crate::iorom::iorom_fit;
        use crate::snapshots::Trim;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50;
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
        let (q, _) = thin_qr(&DMatrix::from_fn(6, 3, |i, j| (i + 2 * j) as f64 + (i == j) as u8 as f64));
        let a = bmd_fit(&s, &q, &q, false).unwrap();
        let b = iorom_fit(&s, &q, false).unwrap();
        assert!((a.f - b.f).norm() < 1e-12);
        assert!((a.h.unwrap() - b.h.unwrap()).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_test_space_is_reported() {
        // unobservable second state: L_o has a zero column direction
        let wc = DMatrix::identity(2, 2);
        let wo = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let err = bmd_spaces(&[pair(wc, wo)], 2).unwrap_err();
        assert!(matches!(err, RomError::Rank { index: 2, rank: 1, .. }));
    }

    #[test]
    fn order_selection() {
        let h = vec![vec![4.0, 2.0, 1.0, 0.5]];
        assert_eq!(select_order_from_hankel(&h, 0.999).unwrap(), 1);
        assert_eq!(select_order_from_hankel(&h, 0.01).unwrap(), 4);
        let two = vec![vec![1.0, 0.5, 0.3, 0.01, 0.0], vec![1.0, 0.6, 0.5, 0.4, 0.3]];
        assert_eq!(select_order_from_hankel(&two, 0.25).unwrap(), 5);
        assert_eq!(select_order_from_hankel(&two, 0.29).unwrap(), 5);
        assert_eq!(select_order_from_hankel(&two, 0.35).unwrap(), 4);
        assert!(select_order_from_hankel::<f64>(&[vec![]], 0.5).is_err());
        assert!(select_order_from_hankel(&h, 1.5).is_err());
    }
}
