//! Central-difference operators on the collocated grid.
//!
//! Ghost values across a face are affine in the owning cell:
//! `ghost = coef * u[cell] + bc`. Fluid neighbours use their own value,
//! prescribed-velocity faces mirror (`2 U - u`) and outlets copy.

use crate::fom::grid::{Dir, Grid, Neighbor};
use crate::linalg::Csr;
use crate::scalar::Real;

/// Velocity value across one face, per component.
#[derive(Debug, Clone, Copy)]
pub struct VelocityGhost {
    pub cell: usize,
    pub coef: f64,
    pub bc: (f64, f64),
}

impl VelocityGhost {
    #[inline]
    pub fn eval<T: Real>(&self, u: &[T], n: usize, affine: bool) -> (T, T) {
        let c = T::lit(self.coef);
        let (mut x, mut y) = (c * u[self.cell], c * u[n + self.cell]);
        if affine {
            x += T::lit(self.bc.0);
            y += T::lit(self.bc.1);
        }
        (x, y)
    }
}

pub fn velocity_ghost(grid: &Grid, dof: usize, dir: Dir) -> VelocityGhost {
    match grid.neighbor(dof, dir) {
        Neighbor::Fluid(n) => VelocityGhost {
            cell: n,
            coef: 1.0,
            bc: (0.0, 0.0),
        },
        Neighbor::Dirichlet { velocity, .. } => VelocityGhost {
            cell: dof,
            coef: -1.0,
            bc: (2.0 * velocity.0, 2.0 * velocity.1),
        },
        Neighbor::Outlet => VelocityGhost {
            cell: dof,
            coef: 1.0,
            bc: (0.0, 0.0),
        },
    }
}

/// Ghost rule for scalar Poisson problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarBc {
    /// Zero value on every non-periodic face (mirror ghost).
    DirichletZero,
    /// Zero normal derivative on every non-periodic face (copy ghost).
    Neumann,
}

/// `(cell, coef)` of the scalar value across a face.
pub fn scalar_ghost(grid: &Grid, dof: usize, dir: Dir, bc: ScalarBc) -> (usize, f64) {
    match grid.neighbor(dof, dir) {
        Neighbor::Fluid(n) => (n, 1.0),
        _ => match bc {
            ScalarBc::DirichletZero => (dof, -1.0),
            ScalarBc::Neumann => (dof, 1.0),
        },
    }
}

fn inv_2h(grid: &Grid, dir: Dir) -> f64 {
    match dir {
        Dir::East => 0.5 / grid.dx,
        Dir::West => -0.5 / grid.dx,
        Dir::North => 0.5 / grid.dy,
        Dir::South => -0.5 / grid.dy,
    }
}

fn normal_component(dir: Dir) -> usize {
    match dir {
        Dir::East | Dir::West => 0,
        Dir::North | Dir::South => 1,
    }
}

/// 5-point scalar Laplacian with the given ghost rule.
pub fn scalar_laplacian<T: Real>(grid: &Grid, bc: ScalarBc) -> Csr<T> {
    let n = grid.n_fluid();
    let (ix2, iy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let mut trip = Vec::with_capacity(5 * n);
    for d in 0..n {
        trip.push((d, d, T::lit(-2.0 * (ix2 + iy2))));
        for dir in Dir::ALL {
            let h2 = if normal_component(dir) == 0 { ix2 } else { iy2 };
            let (cell, coef) = scalar_ghost(grid, d, dir, bc);
            trip.push((d, cell, T::lit(coef * h2)));
        }
    }
    Csr::from_triplets(n, n, &trip)
}

/// Linear divergence operator `N × 2N` and its affine boundary part.
pub fn divergence<T: Real>(grid: &Grid) -> (Csr<T>, Vec<T>) {
    let n = grid.n_fluid();
    let mut trip = Vec::with_capacity(4 * n);
    let mut bc = vec![T::zero(); n];
    for d in 0..n {
        for dir in Dir::ALL {
            let g = velocity_ghost(grid, d, dir);
            let s = inv_2h(grid, dir);
            let comp = normal_component(dir);
            trip.push((d, comp * n + g.cell, T::lit(s * g.coef)));
            let b = if comp == 0 { g.bc.0 } else { g.bc.1 };
            bc[d] += T::lit(s * b);
        }
    }
    (Csr::from_triplets(n, 2 * n, &trip), bc)
}

/// Componentwise 5-point vector Laplacian `2N × 2N` and affine part.
pub fn vector_laplacian<T: Real>(grid: &Grid) -> (Csr<T>, Vec<T>) {
    let n = grid.n_fluid();
    let (ix2, iy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let mut trip = Vec::with_capacity(10 * n);
    let mut bc = vec![T::zero(); 2 * n];
    for d in 0..n {
        for comp in 0..2 {
            let row = comp * n + d;
            trip.push((row, row, T::lit(-2.0 * (ix2 + iy2))));
            for dir in Dir::ALL {
                let h2 = if normal_component(dir) == 0 { ix2 } else { iy2 };
                let g = velocity_ghost(grid, d, dir);
                trip.push((row, comp * n + g.cell, T::lit(g.coef * h2)));
                let b = if comp == 0 { g.bc.0 } else { g.bc.1 };
                bc[row] += T::lit(b * h2);
            }
        }
    }
    (Csr::from_triplets(2 * n, 2 * n, &trip), bc)
}

/// Divergence-form convection `∇·(a ⊗ b)`, component `m` being
/// `∂x(a_x b_m) + ∂y(a_y b_m)`, with ghost values for both factors.
pub fn convection<T: Real>(grid: &Grid, a: &[T], b: &[T], affine: bool) -> Vec<T> {
    let n = grid.n_fluid();
    let mut out = vec![T::zero(); 2 * n];
    for d in 0..n {
        let (mut cx, mut cy) = (T::zero(), T::zero());
        for dir in Dir::ALL {
            let g = velocity_ghost(grid, d, dir);
            let av = g.eval(a, n, affine);
            let bv = g.eval(b, n, affine);
            let an = if normal_component(dir) == 0 { av.0 } else { av.1 };
            let s = T::lit(inv_2h(grid, dir));
            cx += s * an * bv.0;
            cy += s * an * bv.1;
        }
        out[d] = cx;
        out[n + d] = cy;
    }
    out
}

/// Scalar vorticity `∂x v − ∂y u` with linear (homogeneous) ghosts.
pub fn curl<T: Real>(grid: &Grid, u: &[T]) -> Vec<T> {
    let n = grid.n_fluid();
    (0..n)
        .map(|d| {
            let mut w = T::zero();
            for dir in Dir::ALL {
                let g = velocity_ghost(grid, d, dir);
                let (gx, gy) = g.eval(u, n, false);
                let s = T::lit(inv_2h(grid, dir));
                w += match normal_component(dir) {
                    0 => s * gy,
                    _ => -s * gx,
                };
            }
            w
        })
        .collect()
}

/// Operators shared by the full-order stepper and the Galerkin assembly.
#[derive(Debug, Clone)]
pub struct DiscreteOps<T> {
    pub n: usize,
    pub div: Csr<T>,
    pub div_bc: Vec<T>,
    /// Cell-centred gradient, the negative adjoint of `div`.
    pub grad: Csr<T>,
    pub lap: Csr<T>,
    pub lap_bc: Vec<T>,
    /// `div · divᵀ`, the projection operator.
    pub proj: Csr<T>,
}

impl<T: Real> DiscreteOps<T> {
    pub fn new(grid: &Grid) -> Self {
        let (div, div_bc) = divergence(grid);
        let mut grad = div.transpose();
        grad.scale(-T::one());
        let (lap, lap_bc) = vector_laplacian(grid);
        let proj = div.matmul(&div.transpose());
        DiscreteOps {
            n: grid.n_fluid(),
            div,
            div_bc,
            grad,
            lap,
            lap_bc,
            proj,
        }
    }

    /// Divergence including boundary data.
    pub fn divergence(&self, u: &[T]) -> Vec<T> {
        let mut out = self.div.apply(u);
        for (o, b) in out.iter_mut().zip(&self.div_bc) {
            *o += *b;
        }
        out
    }
}
