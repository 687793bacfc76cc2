//! Grid-based LPV reduced models: entrywise interpolation and simulation with
//! the trim-correction term.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result, RomError};
use crate::grid::{bracket_weights, Bracket, ParamGrid};
use crate::model::ReducedModel;
use crate::plant::HighOrderPlant;
use crate::scalar::Scalar;
use crate::snapshots::Trim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Dmdc,
    Admdc,
    Iorom,
    Bmd,
    /// The full-order plant itself.
    Exact,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Dmdc, Self::Admdc, Self::Iorom, Self::Bmd, Self::Exact];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Dmdc => "dmdc",
            Self::Admdc => "admdc",
            Self::Iorom => "iorom",
            Self::Bmd => "bmd",
            Self::Exact => "exact",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == tag)
            .ok_or_else(|| RomError::Parse(format!("unknown algorithm tag '{tag}'")))
    }

    /// Whether every grid model shares one lift matrix.
    pub fn is_state_consistent(self) -> bool {
        matches!(self, Self::Iorom | Self::Bmd | Self::Exact)
    }
}

/// Grid of frozen reduced models with their trims.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRom<T: Scalar> {
    pub algorithm: Algorithm,
    pub grid: ParamGrid<T>,
    pub models: Vec<ReducedModel<T>>,
    /// Reduced trims `z̄(ρʲ)`.
    pub z_trim: Vec<DVector<T>>,
    pub u_trim: Vec<DVector<T>>,
    pub y_trim: Vec<DVector<T>>,
    /// Full-state trims, when attached.
    pub x_trim: Option<Vec<DVector<T>>>,
    /// Test spaces used to project full states (BMD); the lift otherwise.
    pub test_spaces: Option<Vec<DMatrix<T>>>,
    pub dt: T,
}

/// Instantaneous matrices and trims at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenRom<T: Scalar> {
    pub model: ReducedModel<T>,
    pub z_trim: DVector<T>,
    pub u_trim: DVector<T>,
    pub y_trim: DVector<T>,
    pub x_trim: Option<DVector<T>>,
    pub bracket: Bracket<T>,
}

/// Result of an LPV reduced simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvSimulation<T: Scalar> {
    /// Reduced deviation states `z̃_k`.
    pub z: DMatrix<T>,
    /// Absolute outputs `ỹ_k + ȳ(ρ_k)` (absent without an output equation).
    pub y: Option<DMatrix<T>>,
    /// Lifted absolute states `lift·z̃_k + x̄(ρ_k)` when full trims are attached.
    pub x: Option<DMatrix<T>>,
}

fn lerp_opt<T: Scalar>(a: &Option<DMatrix<T>>, b: &Option<DMatrix<T>>, w: T) -> Option<DMatrix<T>> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a * (T::one() - w) + b * w),
        _ => None,
    }
}

impl<T: Scalar> GridRom<T> {
    /// Assembles a grid ROM; reduced trims are `projᵀ x̄(ρʲ)` where `proj`
    /// is the test space when given and the lift otherwise.
    pub fn from_models(
        algorithm: Algorithm,
        grid: ParamGrid<T>,
        models: Vec<ReducedModel<T>>,
        trims: &[Trim<T>],
        test_spaces: Option<Vec<DMatrix<T>>>,
        dt: T,
    ) -> Result<Self> {
        if trims.len() != models.len() {
            return dim_err("one trim per grid model required");
        }
        if let Some(ws) = &test_spaces {
            if ws.len() != models.len() {
                return dim_err("one test space per grid model required");
            }
        }
        let z_trim = models
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let proj = test_spaces.as_ref().map_or(&m.lift, |ws| &ws[j]);
                if proj.nrows() != trims[j].x.len() {
                    return dim_err("trim state length differs from lift rows");
                }
                Ok(proj.transpose() * &trims[j].x)
            })
            .collect::<Result<Vec<_>>>()?;
        let rom = Self {
            algorithm,
            grid,
            z_trim,
            u_trim: trims.iter().map(|t| t.u.clone()).collect(),
            y_trim: trims.iter().map(|t| t.y.clone()).collect(),
            x_trim: Some(trims.iter().map(|t| t.x.clone()).collect()),
            models,
            test_spaces,
            dt,
        };
        rom.validate()?;
        Ok(rom)
    }

    /// The full-order plant wrapped as a grid "ROM" with identity lift.
    pub fn exact(plant: &HighOrderPlant<T>, trims: &[Trim<T>]) -> Result<Self> {
        let n_x = plant.n_x();
        let models = plant
            .models()
            .iter()
            .zip(plant.grid().points())
            .map(|(m, &rho)| ReducedModel {
                f: m.a.clone(),
                g: m.b.clone(),
                h: Some(m.c.clone()),
                d: Some(m.d.clone()),
                l: Some(m.r.clone()),
                p: Some(m.p.clone()),
                lift: DMatrix::identity(n_x, n_x),
                rho,
                identifiable: true,
            })
            .collect();
        Self::from_models(Algorithm::Exact, plant.grid().clone(), models, trims, None, plant.dt())
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .models
            .first()
            .ok_or_else(|| RomError::Parameter("grid ROM has no models".into()))?;
        if self.models.len() != self.grid.len()
            || self.z_trim.len() != self.grid.len()
            || self.u_trim.len() != self.grid.len()
            || self.y_trim.len() != self.grid.len()
        {
            return dim_err("grid ROM: per-grid lists differ in length from the grid");
        }
        let dims = |m: &ReducedModel<T>| (m.n_z(), m.n_u(), m.n_y(), m.n_x(), m.l.is_some(), m.p.is_some());
        for m in &self.models {
            m.validate()?;
            if dims(m) != dims(first) {
                return dim_err("grid ROM: models disagree on dimensions");
            }
            if self.algorithm.is_state_consistent() && m.lift != first.lift {
                return Err(RomError::Parameter(format!(
                    "{} grid ROM requires one shared lift",
                    self.algorithm.tag()
                )));
            }
        }
        Ok(())
    }

    pub fn n_z(&self) -> usize {
        self.models[0].n_z()
    }
    pub fn n_u(&self) -> usize {
        self.models[0].n_u()
    }
    pub fn n_y(&self) -> usize {
        self.models[0].n_y()
    }
    pub fn n_x(&self) -> usize {
        self.models[0].n_x()
    }

    /// Entrywise interpolation of every matrix and trim between the
    /// bracketing grid points; knots return stored values bit-exactly.
    pub fn interpolate_at(&self, rho: T) -> Result<FrozenRom<T>> {
        let br = self.grid.locate(rho)?;
        Ok(self.frozen(br))
    }

    fn frozen(&self, br: Bracket<T>) -> FrozenRom<T> {
        match br {
            Bracket::Knot(j) => FrozenRom {
                model: self.models[j].clone(),
                z_trim: self.z_trim[j].clone(),
                u_trim: self.u_trim[j].clone(),
                y_trim: self.y_trim[j].clone(),
                x_trim: self.x_trim.as_ref().map(|x| x[j].clone()),
                bracket: br,
            },
            Bracket::Between { lower, weight: w } => {
                let (a, b) = (&self.models[lower], &self.models[lower + 1]);
                let one = T::one() - w;
                let lerp = |x: &DMatrix<T>, y: &DMatrix<T>| x * one + y * w;
                let lerpv = |x: &DVector<T>, y: &DVector<T>| x * one + y * w;
                let lift = if a.lift == b.lift { a.lift.clone() } else { lerp(&a.lift, &b.lift) };
                FrozenRom {
                    model: ReducedModel {
                        f: lerp(&a.f, &b.f),
                        g: lerp(&a.g, &b.g),
                        h: lerp_opt(&a.h, &b.h, w),
                        d: lerp_opt(&a.d, &b.d, w),
                        l: lerp_opt(&a.l, &b.l, w),
                        p: lerp_opt(&a.p, &b.p, w),
                        lift,
                        rho: a.rho * one + b.rho * w,
                        identifiable: a.identifiable && b.identifiable,
                    },
                    z_trim: lerpv(&self.z_trim[lower], &self.z_trim[lower + 1]),
                    u_trim: lerpv(&self.u_trim[lower], &self.u_trim[lower + 1]),
                    y_trim: lerpv(&self.y_trim[lower], &self.y_trim[lower + 1]),
                    x_trim: self
                        .x_trim
                        .as_ref()
                        .map(|x| lerpv(&x[lower], &x[lower + 1])),
                    bracket: br,
                }
            }
        }
    }

    /// Frozen models along a parameter trajectory, reusing the previous one
    /// while the bracket is unchanged.
    pub fn frozen_sequence(&self, rho_traj: &[T]) -> Result<Vec<std::sync::Arc<FrozenRom<T>>>> {
        let mut out: Vec<std::sync::Arc<FrozenRom<T>>> = Vec::with_capacity(rho_traj.len());
        for &rho in rho_traj {
            let br = self.grid.locate(rho)?;
            match out.last() {
                Some(prev) if prev.bracket == br => {
                    let p = prev.clone();
                    out.push(p);
                }
                _ => out.push(std::sync::Arc::new(self.frozen(br))),
            }
        }
        Ok(out)
    }

    /// Projects an absolute full state onto reduced deviation coordinates at
    /// `rho`: `Σ_j w_j projⱼᵀ (x − x̄ⱼ)` over the bracketing grid points.
    pub fn project_state(&self, x: &DVector<T>, rho: T) -> Result<DVector<T>> {
        let xt = self
            .x_trim
            .as_ref()
            .ok_or_else(|| RomError::Parameter("grid ROM carries no full-state trims".into()))?;
        if x.len() != self.n_x() {
            return dim_err("state length differs from the ROM's n_x");
        }
        let mut z = DVector::zeros(self.n_z());
        for (j, w) in bracket_weights(self.grid.locate(rho)?) {
            let proj = self.test_spaces.as_ref().map_or(&self.models[j].lift, |ws| &ws[j]);
            z += (proj.transpose() * (x - &xt[j])) * w;
        }
        Ok(z)
    }

    /// Steps
    /// `z̃_{k+1} = F z̃_k + G ũ_k + L ũ_{k+1} + (z̄(ρ_k) − z̄(ρ_{k+1}))`
    /// with all matrices at `ρ_k`, where `ũ = u − ū(ρ_k)` for absolute inputs
    /// `u`. The final parameter and input samples are held.
    pub fn simulate_lpv(&self, u: &DMatrix<T>, rho_traj: &[T], z0: &DVector<T>) -> Result<LpvSimulation<T>> {
        let n = u.ncols();
        if rho_traj.len() != n || n == 0 {
            return dim_err("inputs and parameter trajectory must be non-empty and equally long");
        }
        if u.nrows() != self.n_u() || z0.len() != self.n_z() {
            return dim_err("input rows or initial reduced state do not match the ROM");
        }
        let frozen = self.frozen_sequence(rho_traj)?;
        let has_y = self.models[0].h.is_some();
        let mut zs = DMatrix::zeros(self.n_z(), n);
        let mut ys = has_y.then(|| DMatrix::zeros(self.n_y(), n));
        let mut xs = self.x_trim.as_ref().map(|_| DMatrix::zeros(self.n_x(), n));
        let mut z = z0.clone();
        for k in 0..n {
            let fr = &frozen[k];
            let next = &frozen[(k + 1).min(n - 1)];
            let uk = u.column(k) - &fr.u_trim;
            let un = u.column((k + 1).min(n - 1)) - &fr.u_trim;
            zs.set_column(k, &z);
            if let Some(ys) = ys.as_mut() {
                let y = fr.model.output(&z, &uk, &un).expect("output equation present") + &fr.y_trim;
                ys.set_column(k, &y);
            }
            if let (Some(xs), Some(xt)) = (xs.as_mut(), fr.x_trim.as_ref()) {
                xs.set_column(k, &(&fr.model.lift * &z + xt));
            }
            z = fr.model.step(&z, &uk, &un) + (&fr.z_trim - &next.z_trim);
        }
        Ok(LpvSimulation { z: zs, y: ys, x: xs })
    }
}
