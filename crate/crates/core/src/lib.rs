//! Data-driven reduced-order LPV models: DMDc, IOROM and balanced mode
//! decomposition, with evaluation and MPC tooling.

pub mod bmd;
pub mod dmdc;
pub mod error;
pub mod experiment;
pub mod gramians;
pub mod grid;
pub mod io;
pub mod iorom;
pub mod linalg;
pub mod lpv;
pub mod model;
pub mod mpc;
pub mod plant;
pub mod qp;
pub mod scalar;
pub mod signals;
pub mod snapshots;
pub mod system;

pub use error::{Result, RomError};
pub use grid::{Bracket, ParamGrid};
pub use model::ReducedModel;
pub use plant::{make_benchmark_plant, HighOrderPlant, PlantConfig, Simulation};
pub use scalar::Scalar;
pub use snapshots::{build_snapshots, compute_trim, SettleConfig, SnapshotSet, TrajectorySet, Trim};
pub use system::{DiscreteSystem, StateSpace};

/// Double-precision aliases.
pub type Plant = HighOrderPlant<f64>;
pub type Model = ReducedModel<f64>;
pub type Trajectories = TrajectorySet<f64>;
pub type Snapshots = SnapshotSet<f64>;
