//! Lagrangian particle solver for one-dimensional and multi-dimensional gas
//! dynamics based on a variational time discretization.
//!
//! Each timestep transports the particle cloud by a monotone map. In the
//! pressureless case the map is the weighted metric projection of the free
//! transport update `x + τu` onto the cone of monotone maps, and particles
//! that land on the same point stick together (barycentric velocity). In the
//! polytropic case the map minimizes the acceleration cost plus the internal
//! energy of the transported gas over the same cone.
//!
//! The crate is `no_std` (it needs `alloc`); file formats and the command line
//! live in the `gasflow` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub mod linalg;
pub mod matrix;
pub mod monotone;
pub mod numeric;
pub mod polytropic;
pub mod pressureless;
pub mod state;
pub mod timeloop;

pub use error::{Error, Result};
pub use monotone::{
    halfspace_correct, is_monotone, project, project_1d, project_nd, MonotoneCheck,
    ProjectionProblem, ProjectionResult, ProjectionSettings,
};
pub use polytropic::{EnergyDiscretization, Optimality, PolytropicStep, SolverConfig, SolverKind};
pub use pressureless::PressurelessStep;
pub use state::{
    kinetic_energy, push_forward, push_forward_grouped, total_momentum, EntropyMode, FluidState,
    GasLaw, GasMode, MergeTolerance, StepReport, TransportMap,
};
pub use timeloop::{
    interpolate, kantorovich_norm_1d, lipschitz_report, simulate, wasserstein2_1d, Frame,
    LedgerSums, LipschitzReport, SimConfig, Simulation, Trajectory,
};
