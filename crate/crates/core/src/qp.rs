//! Small dense box-constrained convex quadratic programs
//! `min ½xᵀHx + gᵀx  s.t. lo ≤ x ≤ hi`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result, RomError};
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Stationarity tolerance on the scaled projected-gradient residual.
    pub tol: f64,
    pub max_newton: usize,
    pub max_gradient: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_newton: 200,
            max_gradient: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpMethod {
    ProjectedNewton,
    Fista,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Scalar> {
    pub x: DVector<T>,
    pub objective: T,
    /// Scaled KKT residual at `x`, see [`kkt_residual`].
    pub kkt: f64,
    pub iterations: usize,
    pub method: QpMethod,
}

/// `‖x − Π(x − ∇f)‖∞ / max(1, ‖g‖∞, ‖H‖∞‖x‖∞)`.
pub fn kkt_residual<T: Scalar>(h: &DMatrix<T>, g: &DVector<T>, lo: &DVector<T>, hi: &DVector<T>, x: &DVector<T>) -> f64 {
    let grad = h * x + g;
    let mut res = 0.0f64;
    for i in 0..x.len() {
        let p = (x[i] - grad[i]).max(lo[i]).min(hi[i]);
        res = res.max(to_f64((x[i] - p).abs()));
    }
    let h_inf = h.row_iter().map(|r| to_f64(r.iter().fold(T::zero(), |a, v| a + v.abs()))).fold(0.0, f64::max);
    let scale = 1f64.max(to_f64(g.amax())).max(h_inf * to_f64(x.amax()));
    res / scale
}

fn objective<T: Scalar>(h: &DMatrix<T>, g: &DVector<T>, x: &DVector<T>) -> T {
    (h * x).dot(x) * lit(0.5) + g.dot(x)
}

fn clamp<T: Scalar>(x: &DVector<T>, lo: &DVector<T>, hi: &DVector<T>) -> DVector<T> {
    DVector::from_fn(x.len(), |i, _| x[i].max(lo[i]).min(hi[i]))
}

/// Solves the box QP with `H` symmetric positive definite. Projected Newton
/// steps on the free variables, falling back to accelerated projected
/// gradient (FISTA with restarts) if the line search stalls.
pub fn solve_box_qp<T: Scalar>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    lo: &DVector<T>,
    hi: &DVector<T>,
    x0: Option<&DVector<T>>,
    opts: &QpOptions,
) -> Result<QpSolution<T>> {
    let n = g.len();
    if h.shape() != (n, n) || lo.len() != n || hi.len() != n {
        return dim_err("QP data dimensions disagree");
    }
    if (0..n).any(|i| !(lo[i] <= hi[i])) {
        return Err(RomError::Parameter("QP bounds must satisfy lo ≤ hi".into()));
    }
    if h.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(RomError::Parameter("QP data are not finite".into()));
    }
    let mut x = clamp(&x0.cloned().unwrap_or_else(|| DVector::zeros(n)), lo, hi);
    if n == 0 {
        return Ok(QpSolution { x, objective: T::zero(), kkt: 0.0, iterations: 0, method: QpMethod::ProjectedNewton });
    }
    let mut f = objective(h, g, &x);
    for it in 0..opts.max_newton {
        let kkt = kkt_residual(h, g, lo, hi, &x);
        if kkt <= opts.tol {
            return Ok(QpSolution { x, objective: f, kkt, iterations: it, method: QpMethod::ProjectedNewton });
        }
        let grad = h * &x + g;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lo[i] && grad[i] > T::zero()) || (x[i] >= hi[i] && grad[i] < T::zero())))
            .collect();
        if free.is_empty() {
            break;
        }
        let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let gf = DVector::from_fn(free.len(), |a, _| -grad[free[a]]);
        let Some(chol) = hff.cholesky() else { break };
        let df = chol.solve(&gf);
        let mut d = DVector::zeros(n);
        for (a, &i) in free.iter().enumerate() {
            d[i] = df[a];
        }
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let trial = clamp(&(&x + &d * alpha), lo, hi);
            let ft = objective(h, g, &trial);
            if ft <= f + grad.dot(&(&trial - &x)) * lit(1e-4) {
                let moved = (&trial - &x).amax();
                x = trial;
                f = ft;
                accepted = moved > T::zero();
                break;
            }
            alpha *= lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    fista(h, g, lo, hi, x, opts)
}

fn fista<T: Scalar>(
    h: &DMatrix<T>,
    g: &DVector<T>,
    lo: &DVector<T>,
    hi: &DVector<T>,
    x0: DVector<T>,
    opts: &QpOptions,
) -> Result<QpSolution<T>> {
    // Lipschitz bound: the Frobenius norm dominates the spectral norm.
    let lip = h.norm().max(T::default_epsilon());
    let step = T::one() / lip;
    let mut x = x0.clone();
    let mut y = x0;
    let mut t = T::one();
    let mut f_prev = objective(h, g, &x);
    let mut kkt = f64::INFINITY;
    for it in 0..opts.max_gradient {
        let grad = h * &y + g;
        let next = clamp(&(&y - grad * step), lo, hi);
        let f_next = objective(h, g, &next);
        if f_next > f_prev {
            // adaptive restart
            t = T::one();
            y = x.clone();
            continue;
        }
        let t_next = (T::one() + (T::one() + t * t * lit(4.0)).sqrt()) * lit(0.5);
        y = &next + (&next - &x) * ((t - T::one()) / t_next);
        x = next;
        t = t_next;
        f_prev = f_next;
        if it % 16 == 0 {
            kkt = kkt_residual(h, g, lo, hi, &x);
            if kkt <= opts.tol {
                return Ok(QpSolution { objective: f_prev, x, kkt, iterations: it + 1, method: QpMethod::Fista });
            }
        }
    }
    kkt = kkt.min(kkt_residual(h, g, lo, hi, &x));
    if kkt <= opts.tol {
        return Ok(QpSolution { objective: f_prev, x, kkt, iterations: opts.max_gradient, method: QpMethod::Fista });
    }
    Err(RomError::Convergence {
        iterations: opts.max_newton + opts.max_gradient,
        residual: kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn unconstrained_matches_linear_solve() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = v(&[1.0, -2.0]);
        let s = solve_box_qp(&h, &g, &v(&[-1e3, -1e3]), &v(&[1e3, 1e3]), None, &QpOptions::default()).unwrap();
        let oracle = h.clone().lu().solve(&(-&g)).unwrap();
        assert!((s.x - oracle).norm() < 1e-12);
        assert_eq!(s.method, QpMethod::ProjectedNewton);
    }

    #[test]
    fn scalar_bound_is_projection() {
        let h = DMatrix::from_element(1, 1, 2.0);
        let g = v(&[-10.0]);
        let s = solve_box_qp(&h, &g, &v(&[-3.0]), &v(&[3.0]), None, &QpOptions::default()).unwrap();
        assert_eq!(s.x[0], 3.0);
    }

    #[test]
    fn random_problems_satisfy_kkt_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 10;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let h = a.transpose() * &a * 1e4 + DMatrix::identity(n, n) * 1e-1;
            let g = DVector::from_fn(n, |_, _| rng.random_range(-1e4..1e4));
            let lo = DVector::from_element(n, -3.0);
            let hi = DVector::from_element(n, 3.0);
            let s = solve_box_qp(&h, &g, &lo, &hi, None, &QpOptions::default()).unwrap();
            assert!(s.kkt <= 1e-8);
            assert!(s.x.iter().all(|&x| (-3.0..=3.0).contains(&x)));
        }
    }

    #[test]
    fn fista_fallback_converges() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = v(&[-4.0, 1.0]);
        let lo = v(&[-1.0, -1.0]);
        let hi = v(&[1.0, 1.0]);
        let s = fista(&h, &g, &lo, &hi, DVector::zeros(2), &QpOptions::default()).unwrap();
        let n = solve_box_qp(&h, &g, &lo, &hi, None, &QpOptions::default()).unwrap();
        assert!((s.x - n.x).norm() < 1e-7);
    }

    #[test]
    fn rejects_inverted_bounds() {
        let h = DMatrix::identity(1, 1);
        assert!(solve_box_qp(&h, &v(&[0.0]), &v(&[1.0]), &v(&[0.0]), None, &QpOptions::default()).is_err());
    }
}
