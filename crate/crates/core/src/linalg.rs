//! Dense linear-algebra helpers on top of nalgebra.
//!
//! Everything that feeds a fitted model goes through [`thin_svd`], which
//! fixes the ordering and sign of singular vectors so that fits are
//! reproducible bit-for-bit across runs.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{dim_err, Result, RomError};
use crate::scalar::{lit, to_f64, Scalar};

/// Thin singular value decomposition `M = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct ThinSvd<T: Scalar> {
    /// Left singular vectors, `m × k` with `k = min(m, n)`.
    pub u: DMatrix<T>,
    /// Singular values in non-increasing order.
    pub singular_values: Vec<T>,
    /// Right singular vectors (`n × k`, not transposed) when requested.
    pub v: Option<DMatrix<T>>,
}

impl<T: Scalar> ThinSvd<T> {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn sigma_max(&self) -> T {
        self.singular_values.first().copied().unwrap_or_else(T::zero)
    }

    /// Number of singular values strictly above `rtol · σ_max`.
    pub fn numerical_rank(&self, rtol: T) -> usize {
        let cut = rtol * self.sigma_max();
        self.singular_values.iter().filter(|&&s| s > cut).count()
    }

    /// First `k` left singular vectors.
    pub fn leading_u(&self, k: usize) -> DMatrix<T> {
        self.u.columns(0, k).clone_owned()
    }
}

/// Thin SVD with deterministic conventions.
///
/// Singular values are sorted in non-increasing order with ties kept in the
/// order produced by the underlying routine, and each left singular vector is
/// flipped so that its largest-magnitude entry (first one on ties) is positive.
pub fn thin_svd<T: Scalar>(m: &DMatrix<T>, compute_v: bool) -> ThinSvd<T> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return ThinSvd {
            u: DMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            v: compute_v.then(|| DMatrix::zeros(cols, 0)),
        };
    }
    let svd = SVD::new_unordered(m.clone(), true, compute_v);
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(Ordering::Equal));

    let u_raw = svd.u.expect("left singular vectors requested");
    let mut u = DMatrix::zeros(rows, k);
    let mut v = compute_v.then(|| DMatrix::zeros(cols, k));
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let col = u_raw.column(src);
        let mut best = 0;
        for i in 1..rows {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let flip = col[best] < T::zero();
        let sign = if flip { -T::one() } else { T::one() };
        u.set_column(dst, &(col * sign));
        if let (Some(v), Some(vt)) = (v.as_mut(), svd.v_t.as_ref()) {
            v.set_column(dst, &(vt.row(src).transpose() * sign));
        }
        values.push(s[src]);
    }
    ThinSvd {
        u,
        singular_values: values,
        v,
    }
}

/// Default pseudo-inverse cut-off: `max(m, n) · ε · σ_max`, returned as a
/// fraction of `σ_max`.
pub fn default_pinv_rtol<T: Scalar>(rows: usize, cols: usize) -> T {
    lit::<T>(rows.max(cols) as f64) * T::machine_eps()
}

/// Result of a right-hand least-squares solve `X · regressor ≈ target`.
#[derive(Debug, Clone)]
pub struct LstsqSolution<T: Scalar> {
    pub solution: DMatrix<T>,
    /// Numerical rank of the regressor under the truncation tolerance.
    pub rank: usize,
    /// Whether the regressor has full row rank (the minimiser is unique).
    pub identifiable: bool,
}

/// Minimum-norm solution of `min_X ‖target − X · regressor‖_F`, i.e.
/// `target · regressor⁺`.
pub fn lstsq_right<T: Scalar>(
    target: &DMatrix<T>,
    regressor: &DMatrix<T>,
    rtol: Option<T>,
) -> Result<LstsqSolution<T>> {
    if target.ncols() != regressor.ncols() {
        return dim_err(format!(
            "target has {} columns, regressor has {}",
            target.ncols(),
            regressor.ncols()
        ));
    }
    if regressor.ncols() == 0 || regressor.nrows() == 0 {
        return dim_err("empty regressor");
    }
    let rtol = rtol.unwrap_or_else(|| default_pinv_rtol(regressor.nrows(), regressor.ncols()));
    let svd = thin_svd(regressor, true);
    let rank = svd.numerical_rank(rtol);
    let v = svd.v.as_ref().expect("v requested");
    // target · V_r · Σ_r⁻¹ · U_rᵀ
    let mut tv = target * v.columns(0, rank);
    for (j, mut col) in tv.column_iter_mut().enumerate() {
        col /= svd.singular_values[j];
    }
    let solution = tv * svd.u.columns(0, rank).transpose();
    Ok(LstsqSolution {
        solution,
        rank,
        identifiable: rank == regressor.nrows(),
    })
}

/// Stacks matrices vertically (all must share the column count).
pub fn vstack<T: Scalar>(blocks: &[&DMatrix<T>]) -> Result<DMatrix<T>> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    if blocks.iter().any(|b| b.ncols() != cols) {
        return dim_err("vstack: column counts differ");
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    Ok(out)
}

/// Stacks matrices horizontally (all must share the row count).
pub fn hstack<T: Scalar>(blocks: &[&DMatrix<T>]) -> Result<DMatrix<T>> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    if blocks.iter().any(|b| b.nrows() != rows) {
        return dim_err("hstack: row counts differ");
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(*b);
        c0 += b.ncols();
    }
    Ok(out)
}

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Square factor `L` with `L Lᵀ = W` of a symmetric positive semidefinite matrix.
#[derive(Debug, Clone)]
pub struct PsdFactor<T: Scalar> {
    pub factor: DMatrix<T>,
    /// True when a Cholesky factorization succeeded; false when the
    /// eigendecomposition square root was used.
    pub cholesky: bool,
    /// Number of slightly negative eigenvalues clamped to zero.
    pub clamped: usize,
}

/// Factors a symmetric PSD matrix.
///
/// Tries Cholesky first. If that fails the matrix is eigendecomposed;
/// eigenvalues in `[-neg_tol·max(1, λ_max), 0)` are clamped to zero and the
/// factor `Q·diag(√λ)` is returned. More negative eigenvalues are an error.
pub fn psd_factor<T: Scalar>(w: &DMatrix<T>, neg_tol: T) -> Result<PsdFactor<T>> {
    if !w.is_square() {
        return dim_err("psd_factor: matrix is not square");
    }
    let sym = symmetrize(w);
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(PsdFactor {
            factor: ch.unpack(),
            cholesky: true,
            clamped: 0,
        });
    }
    let eig = SymmetricEigen::new(sym);
    let lmax = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let tol = neg_tol * if lmax > T::one() { lmax } else { T::one() };
    let mut clamped = 0;
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -tol {
            return Err(RomError::Gramian {
                min_eig: to_f64(l),
                tol: to_f64(tol),
            });
        }
        if l < T::zero() {
            clamped += 1;
        } else {
            roots[i] = l.sqrt();
        }
    }
    let mut factor = eig.eigenvectors;
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    Ok(PsdFactor {
        factor,
        cholesky: false,
        clamped,
    })
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn sym_min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(T::one), |a, b| if b < a { b } else { a })
}

/// Solves `X = A X Aᵀ + Q` by squared Smith (doubling) iteration.
pub fn discrete_lyapunov<T: Scalar>(
    a: &DMatrix<T>,
    q: &DMatrix<T>,
    rtol: T,
    max_doublings: usize,
) -> Result<DMatrix<T>> {
    if !a.is_square() || a.shape() != q.shape() {
        return dim_err("discrete_lyapunov: A and Q must be square and equally sized");
    }
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..max_doublings {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        let inc_norm = inc.norm();
        let x_norm = x.norm();
        if inc_norm <= rtol * x_norm || x_norm == T::zero() {
            return Ok(symmetrize(&x));
        }
        ak = &ak * &ak;
    }
    Err(RomError::Convergence {
        iterations: max_doublings,
        residual: to_f64((&ak * &x * ak.transpose()).norm()),
    })
}

/// Spectral radius of a square matrix.
///
/// Uses the real Schur form; if the QR iteration stalls (it can on exactly
/// repeated eigenvalues) the Gelfand limit `‖A^(2^m)‖^(1/2^m)` is used
/// instead.
pub fn spectral_radius<T: Scalar>(a: &DMatrix<T>) -> T {
    let n = a.nrows();
    if n == 0 {
        return T::zero();
    }
    if let Some(schur) = nalgebra::Schur::try_new(a.clone(), T::machine_eps(), 1000 * n) {
        return schur
            .complex_eigenvalues()
            .iter()
            .map(|c| (c.re * c.re + c.im * c.im).sqrt())
            .fold(T::zero(), |m, v| if v > m { v } else { m });
    }
    gelfand_radius(a)
}

fn gelfand_radius<T: Scalar>(a: &DMatrix<T>) -> T {
    let norm = a.norm();
    if norm == T::zero() {
        return T::zero();
    }
    // A^(2^m) = exp(log_scale) · b with ‖b‖ = 1.
    let mut b = a / norm;
    let mut log_scale = to_f64(norm).ln();
    let mut power = 1.0f64;
    for _ in 0..60 {
        let sq = &b * &b;
        let s = sq.norm();
        if s == T::zero() {
            return T::zero();
        }
        b = sq / s;
        log_scale = 2.0 * log_scale + to_f64(s).ln();
        power *= 2.0;
    }
    lit((log_scale / power).exp())
}

/// Thin QR: `Q` is `m × k`, `R` is `k × n` with `k = min(m, n)`.
pub fn thin_qr<T: Scalar>(m: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// Sines of the principal angles between `span(a)` and `span(b)`, largest
/// first. Sines rather than angles keep resolution near zero.
pub fn principal_angle_sines<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<Vec<T>> {
    if a.nrows() != b.nrows() {
        return dim_err("principal angles: ambient dimensions differ");
    }
    let (qa, _) = thin_qr(a);
    let (qb, _) = thin_qr(b);
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let mut s = thin_svd(&residual, false).singular_values;
    s.truncate(qa.ncols().min(qb.ncols()));
    Ok(s)
}

/// Block of `m` given by a contiguous row range.
pub fn rows_of<T: Scalar>(m: &DMatrix<T>, start: usize, count: usize) -> DMatrix<T> {
    m.rows(start, count).clone_owned()
}

/// Block of `m` given by a contiguous column range.
pub fn cols_of<T: Scalar>(m: &DMatrix<T>, start: usize, count: usize) -> DMatrix<T> {
    m.columns(start, count).clone_owned()
}
