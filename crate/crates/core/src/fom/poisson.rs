use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::fom::field::{Field, FieldKind};
use crate::fom::grid::Grid;
use crate::fom::ops::{scalar_laplacian, ScalarBc};
use crate::linalg::{conjugate_gradient, norm2, CgOptions};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonBc {
    DirichletZero,
    NeumannCompatible,
}

/// Solves the 5-point problem `Δf = rhs` on the fluid cells.
///
/// Dirichlet data is zero on every non-periodic face, solid faces included.
/// On a grid without any such face the problem is singular and is solved in
/// the zero-mean subspace, exactly like the Neumann case.
pub fn poisson_solve<T: Real>(grid: &Grid, rhs: &Field<T>, bc: PoissonBc) -> Result<Field<T>> {
    if rhs.kind != FieldKind::Scalar {
        return Err(RomError::Config("poisson_solve expects a scalar field".into()));
    }
    rhs.check(grid)?;
    let n = grid.n_fluid();
    let singular = bc == PoissonBc::NeumannCompatible || grid.is_fully_periodic();
    if singular {
        let mean = rhs.values.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize(n).unwrap();
        let rms = norm2(&rhs.values) / T::from_usize(n).unwrap().sqrt();
        if mean.abs() > T::tol(1e-10) * rms {
            return Err(RomError::IncompatibleRhs {
                mean: mean.to_f64_lossy(),
            });
        }
    }
    let stencil_bc = match bc {
        PoissonBc::DirichletZero => ScalarBc::DirichletZero,
        PoissonBc::NeumannCompatible => ScalarBc::Neumann,
    };
    // CG wants a positive operator
    let mut a = scalar_laplacian::<T>(grid, stencil_bc);
    a.scale(-T::one());
    let b: Vec<T> = rhs.values.iter().map(|&v| -v).collect();
    let mut x = vec![T::zero(); n];
    let opts = CgOptions {
        rel_tol: 1e-11,
        ..CgOptions::default()
    };
    conjugate_gradient(&a, &b, &mut x, opts, singular)?;
    Ok(Field::scalar(x))
}
