//! Scheduling-parameter grids and entrywise linear interpolation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};
use crate::scalar::{to_f64, Scalar};

/// Strictly increasing list of scheduling-parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid<T: Scalar> {
    points: Vec<T>,
}

/// Position of a parameter value relative to the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bracket<T> {
    /// Exactly on grid point `i`.
    Knot(usize),
    /// Strictly between `lower` and `lower + 1`; `weight` is the share of the
    /// upper point, in `(0, 1)`.
    Between { lower: usize, weight: T },
}

impl<T: Scalar> ParamGrid<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(RomError::Parameter("parameter grid is empty".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RomError::Parameter(
                "parameter grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> T {
        self.points[0]
    }

    pub fn max(&self) -> T {
        self.points[self.points.len() - 1]
    }

    /// Locates `rho`; values outside `[min, max]` are rejected (no extrapolation).
    pub fn locate(&self, rho: T) -> Result<Bracket<T>> {
        if !(rho >= self.min() && rho <= self.max()) {
            return Err(RomError::OutOfRange {
                rho: to_f64(rho),
                min: to_f64(self.min()),
                max: to_f64(self.max()),
            });
        }
        // partition_point: first index with point > rho
        let upper = self.points.partition_point(|&p| p <= rho);
        let lower = upper - 1;
        if self.points[lower] == rho {
            return Ok(Bracket::Knot(lower));
        }
        let (a, b) = (self.points[lower], self.points[upper]);
        Ok(Bracket::Between {
            lower,
            weight: (rho - a) / (b - a),
        })
    }
}

/// Interpolates a per-grid-point matrix family at `bracket`.
/// At a knot the stored matrix is returned unchanged.
pub fn interp_matrix<T: Scalar>(family: &[DMatrix<T>], bracket: Bracket<T>) -> DMatrix<T> {
    match bracket {
        Bracket::Knot(i) => family[i].clone(),
        Bracket::Between { lower, weight } => {
            &family[lower] * (T::one() - weight) + &family[lower + 1] * weight
        }
    }
}

pub fn interp_vector<T: Scalar>(family: &[DVector<T>], bracket: Bracket<T>) -> DVector<T> {
    match bracket {
        Bracket::Knot(i) => family[i].clone(),
        Bracket::Between { lower, weight } => {
            &family[lower] * (T::one() - weight) + &family[lower + 1] * weight
        }
    }
}

/// Interpolation weights as `(index, weight)` pairs.
pub fn bracket_weights<T: Scalar>(bracket: Bracket<T>) -> Vec<(usize, T)> {
    match bracket {
        Bracket::Knot(i) => vec![(i, T::one())],
        Bracket::Between { lower, weight } => {
            vec![(lower, T::one() - weight), (lower + 1, weight)]
        }
    }
}
