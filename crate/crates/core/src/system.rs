//! Discrete-time state-space systems with an optional algebraic input term.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result};
use crate::scalar::Scalar;

/// A frozen discrete-time system that can be stepped as a black box.
///
/// `step` receives the input at the current step and the next one, so that
/// algebraic couplings `x_{k+1} = … + R u_{k+1}` can be represented.
pub trait DiscreteSystem<T: Scalar>: Sync {
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn step(&self, x: &DVector<T>, u: &DVector<T>, u_next: &DVector<T>) -> DVector<T>;
    fn output(&self, x: &DVector<T>, u: &DVector<T>, u_next: &DVector<T>) -> DVector<T>;
}

/// `x_{k+1} = A x_k + B u_k + R u_{k+1}`, `y_k = C x_k + D u_k + P u_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub r: DMatrix<T>,
    pub p: DMatrix<T>,
}

impl<T: Scalar> StateSpace<T> {
    /// Plain state space without algebraic terms.
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let (n_x, n_u, n_y) = (a.nrows(), b.ncols(), c.nrows());
        Self::with_algebraic(a, b, c, d, DMatrix::zeros(n_x, n_u), DMatrix::zeros(n_y, n_u))
    }

    pub fn with_algebraic(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        r: DMatrix<T>,
        p: DMatrix<T>,
    ) -> Result<Self> {
        let n_x = a.nrows();
        let n_u = b.ncols();
        let n_y = c.nrows();
        if !a.is_square()
            || b.nrows() != n_x
            || c.ncols() != n_x
            || d.shape() != (n_y, n_u)
            || r.shape() != (n_x, n_u)
            || p.shape() != (n_y, n_u)
        {
            return dim_err(format!(
                "inconsistent state-space shapes: A {:?}, B {:?}, C {:?}, D {:?}, R {:?}, P {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape(),
                r.shape(),
                p.shape()
            ));
        }
        Ok(Self { a, b, c, d, r, p })
    }

    pub fn has_algebraic(&self) -> bool {
        self.r.iter().any(|v| *v != T::zero()) || self.p.iter().any(|v| *v != T::zero())
    }

    /// Markov parameters `C A^k B` for `k = 0..count` (the feed-through `D` is
    /// not included).
    pub fn markov_parameters(&self, count: usize) -> Vec<DMatrix<T>> {
        markov_parameters(&self.a, &self.b, &self.c, count)
    }
}

/// `C A^k B` for `k = 0..count`.
pub fn markov_parameters<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    count: usize,
) -> Vec<DMatrix<T>> {
    let mut out = Vec::with_capacity(count);
    let mut akb = b.clone();
    for _ in 0..count {
        out.push(c * &akb);
        akb = a * akb;
    }
    out
}

/// Relative distance between two Markov sequences, measured on the stacked
/// sequence: `‖M₁ − M₂‖_F / ‖M₂‖_F`.
pub fn markov_relative_error<T: Scalar>(m1: &[DMatrix<T>], m2: &[DMatrix<T>]) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for (a, b) in m1.iter().zip(m2) {
        num += (a - b).norm_squared();
        den += b.norm_squared();
    }
    if den == T::zero() {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

impl<T: Scalar> DiscreteSystem<T> for StateSpace<T> {
    fn n_x(&self) -> usize {
        self.a.nrows()
    }
    fn n_u(&self) -> usize {
        self.b.ncols()
    }
    fn n_y(&self) -> usize {
        self.c.nrows()
    }
    fn step(&self, x: &DVector<T>, u: &DVector<T>, u_next: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b * u + &self.r * u_next
    }
    fn output(&self, x: &DVector<T>, u: &DVector<T>, u_next: &DVector<T>) -> DVector<T> {
        &self.c * x + &self.d * u + &self.p * u_next
    }
}
