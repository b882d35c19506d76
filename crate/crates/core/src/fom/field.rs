use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::fom::grid::Grid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Vector2,
}

/// Samples on the fluid cells of a grid. Vector fields store all
/// x-components first, then all y-components.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub kind: FieldKind,
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn scalar(values: Vec<T>) -> Self {
        Field {
            kind: FieldKind::Scalar,
            values,
        }
    }

    pub fn vector(values: Vec<T>) -> Self {
        Field {
            kind: FieldKind::Vector2,
            values,
        }
    }

    pub fn zeros(kind: FieldKind, n_fluid: usize) -> Self {
        let len = match kind {
            FieldKind::Scalar => n_fluid,
            FieldKind::Vector2 => 2 * n_fluid,
        };
        Field {
            kind,
            values: vec![T::zero(); len],
        }
    }

    /// Samples `f(x, y)` at every fluid cell centre.
    pub fn from_scalar_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Field::scalar(
            (0..grid.n_fluid())
                .map(|d| {
                    let (x, y) = grid.center(d);
                    T::lit(f(x, y))
                })
                .collect(),
        )
    }

    pub fn from_vector_fn(grid: &Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let n = grid.n_fluid();
        let mut values = vec![T::zero(); 2 * n];
        for d in 0..n {
            let (x, y) = grid.center(d);
            let (u, v) = f(x, y);
            values[d] = T::lit(u);
            values[n + d] = T::lit(v);
        }
        Field::vector(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        let expected = match self.kind {
            FieldKind::Scalar => grid.n_fluid(),
            FieldKind::Vector2 => 2 * grid.n_fluid(),
        };
        if self.values.len() != expected {
            return Err(RomError::shape("field length", expected, self.values.len()));
        }
        if !self.is_finite() {
            return Err(RomError::NonFinite("field".into()));
        }
        Ok(())
    }

    /// Weighted L² inner product with uniform cell weights.
    pub fn inner(&self, other: &Self, grid: &Grid) -> T {
        T::lit(grid.cell_area()) * crate::linalg::dot(&self.values, &other.values)
    }

    pub fn norm(&self, grid: &Grid) -> T {
        self.inner(self, grid).sqrt()
    }
}
