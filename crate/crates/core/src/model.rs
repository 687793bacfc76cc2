//! Frozen reduced-order models shared by all fitting algorithms.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::system::StateSpace;

/// Reduced model at one grid point:
///
/// ```text
/// z_{k+1} = F z_k + G u_k + L u_{k+1}
/// y_k     = H z_k + D u_k + P u_{k+1}
/// ```
///
/// The DMDc family fits the state equation only, so `h`/`d` are absent there.
/// `lift` maps reduced coordinates back to the full state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel<T: Scalar> {
    pub f: DMatrix<T>,
    pub g: DMatrix<T>,
    pub h: Option<DMatrix<T>>,
    pub d: Option<DMatrix<T>>,
    pub l: Option<DMatrix<T>>,
    pub p: Option<DMatrix<T>>,
    pub lift: DMatrix<T>,
    pub rho: T,
    /// False when the regression was rank deficient and the minimum-norm
    /// solution was returned.
    pub identifiable: bool,
}

impl<T: Scalar> ReducedModel<T> {
    pub fn n_z(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.h.as_ref().map_or(0, |h| h.nrows())
    }

    pub fn n_x(&self) -> usize {
        self.lift.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n_z, n_u) = (self.n_z(), self.n_u());
        if !self.f.is_square() || self.g.nrows() != n_z || self.lift.ncols() != n_z {
            return dim_err("reduced model: F, G and lift disagree on n_z");
        }
        if self.lift.nrows() < n_z {
            return dim_err("reduced model: n_z exceeds n_x");
        }
        if let Some(l) = &self.l {
            if l.shape() != (n_z, n_u) {
                return dim_err("reduced model: L has wrong shape");
            }
        }
        match (&self.h, &self.d) {
            (Some(h), Some(d)) => {
                if h.ncols() != n_z || d.shape() != (h.nrows(), n_u) {
                    return dim_err("reduced model: H/D have wrong shape");
                }
                if let Some(p) = &self.p {
                    if p.shape() != d.shape() {
                        return dim_err("reduced model: P has wrong shape");
                    }
                }
            }
            (None, None) => {}
            _ => return dim_err("reduced model: H and D must both be present or absent"),
        }
        Ok(())
    }

    pub fn step(&self, z: &DVector<T>, u: &DVector<T>, u_next: &DVector<T>) -> DVector<T> {
        let mut next = &self.f * z + &self.g * u;
        if let Some(l) = &self.l {
            next += l * u_next;
        }
        next
    }

    pub fn output(&self, z: &DVector<T>, u: &DVector<T>, u_next: &DVector<T>) -> Option<DVector<T>> {
        let h = self.h.as_ref()?;
        let d = self.d.as_ref()?;
        let mut y = h * z + d * u;
        if let Some(p) = &self.p {
            y += p * u_next;
        }
        Some(y)
    }

    /// Simulates deviation inputs `u` (`n_u × N`) from `z0`; the input after the
    /// last sample is held. Returns reduced states and, when available, outputs.
    pub fn simulate(&self, u: &DMatrix<T>, z0: &DVector<T>) -> Result<(DMatrix<T>, Option<DMatrix<T>>)> {
        if u.nrows() != self.n_u() || z0.len() != self.n_z() {
            return dim_err("reduced simulation: input or initial state has wrong size");
        }
        let n = u.ncols();
        let mut zs = DMatrix::zeros(self.n_z(), n);
        let mut ys = self.h.as_ref().map(|h| DMatrix::zeros(h.nrows(), n));
        let mut z = z0.clone();
        for k in 0..n {
            let uk = u.column(k).clone_owned();
            let un = u.column((k + 1).min(n - 1)).clone_owned();
            zs.set_column(k, &z);
            if let Some(ys) = ys.as_mut() {
                ys.set_column(k, &self.output(&z, &uk, &un).expect("output equation present"));
            }
            z = self.step(&z, &uk, &un);
        }
        Ok((zs, ys))
    }

    /// Lifted state impulse-response coefficients `lift · F^k · G`.
    pub fn lifted_state_markov(&self, count: usize) -> Vec<DMatrix<T>> {
        crate::system::markov_parameters(&self.f, &self.g, &self.lift, count)
    }

    /// Output Markov parameters `H F^k G`, when an output equation exists.
    pub fn output_markov(&self, count: usize) -> Option<Vec<DMatrix<T>>> {
        let h = self.h.as_ref()?;
        Some(crate::system::markov_parameters(&self.f, &self.g, h, count))
    }

    /// Plain state-space view (requires an output equation).
    pub fn to_state_space(&self) -> Option<StateSpace<T>> {
        let h = self.h.clone()?;
        let d = self.d.clone()?;
        let (n_z, n_u, n_y) = (self.n_z(), self.n_u(), h.nrows());
        StateSpace::with_algebraic(
            self.f.clone(),
            self.g.clone(),
            h,
            d,
            self.l.clone().unwrap_or_else(|| DMatrix::zeros(n_z, n_u)),
            self.p.clone().unwrap_or_else(|| DMatrix::zeros(n_y, n_u)),
        )
        .ok()
    }
}
