//! Reduced-order modelling of incompressible flow: snapshot generation, POD
//! with supremizer enrichment, Galerkin operators, data-driven corrections,
//! reduced time integration and error metrics.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the double-precision types used by the pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fom;
pub mod closure;
pub mod linalg;
pub mod metrics;
pub mod operators;
pub mod pod;
pub mod rom;
pub mod pipeline;
pub mod scalar;
pub mod store;

pub use error::{Result, RomError};
pub use scalar::Real;

pub type Field = fom::Field<f64>;
pub type SnapshotSet = fom::SnapshotSet<f64>;
pub type Csr = linalg::Csr<f64>;
pub type Tensor3 = linalg::Tensor3<f64>;
