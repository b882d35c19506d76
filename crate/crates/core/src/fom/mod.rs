//! Incompressible full-order solver producing snapshot data.

pub mod field;
pub mod grid;
pub mod ops;
pub mod poisson;
pub mod solver;

pub use field::{Field, FieldKind};
pub use grid::{BoundarySpec, Dir, DirichletPart, Edge, EdgeCondition, Grid, Neighbor};
pub use ops::DiscreteOps;
pub use poisson::{poisson_solve, PoissonBc};
pub use solver::{init_scenario, run_fom, step_fom, FomConfig, FomSolver, FomState, Scenario, SnapshotSet, StepReport};
