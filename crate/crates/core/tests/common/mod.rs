//! Shared fixtures: a loop-based quadrature oracle that works on `(i, j)`
//! cell indices and resolves every boundary face from the edge conditions
//! directly, plus seeded random bases.

#![allow(dead_code)]

pub mod checks;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romlab::fom::{BoundarySpec, Edge, EdgeCondition, Grid};
use romlab::pod::{BasisKind, PodBasis};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// A basis with random (non-orthogonal) modes of roughly unit weighted
/// norm, for operator checks.
pub fn random_basis(rng: &mut ChaCha8Rng, dof: usize, n: usize, weight: f64, kind: BasisKind) -> PodBasis<f64> {
    let scale = (3.0 / (weight * dof as f64)).sqrt();
    PodBasis {
        modes: random_matrix(rng, dof, n) * scale,
        eigenvalues: vec![1.0; n],
        spectrum: vec![1.0; n],
        weights: vec![weight; dof],
        kind,
    }
}

/// 16×16 channel: inlet west, outlet east, moving south wall, fixed north
/// wall and a 3×2 solid block.
pub fn channel_grid() -> Grid {
    let bc = BoundarySpec {
        west: EdgeCondition::Inlet { speed: 1.0 },
        east: EdgeCondition::Outlet,
        south: EdgeCondition::NoSlip { tangential: 0.7 },
        north: EdgeCondition::NoSlip { tangential: 0.0 },
    };
    Grid::new(16, 16, 0.5, 0.4, bc).unwrap().with_solid_block(5, 8, 6, 8).unwrap()
}

/// Periodic in x, walls in y, with a solid block.
pub fn periodic_grid() -> Grid {
    let bc = BoundarySpec {
        west: EdgeCondition::Periodic,
        east: EdgeCondition::Periodic,
        south: EdgeCondition::NoSlip { tangential: -0.5 },
        north: EdgeCondition::NoSlip { tangential: 0.5 },
    };
    Grid::new(12, 10, 0.3, 0.35, bc).unwrap().with_solid_block(4, 6, 3, 5).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Across {
    Cell(usize, usize),
    /// Prescribed velocity; `edge` is `None` for solid-cell faces.
    Wall { velocity: (f64, f64), edge: Option<Edge> },
    Outlet,
}

/// Offsets east, west, north, south.
pub const STEPS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

pub struct Oracle<'a> {
    pub g: &'a Grid,
}

impl<'a> Oracle<'a> {
    pub fn new(g: &'a Grid) -> Self {
        Oracle { g }
    }

    pub fn fluid_cells(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for j in 0..self.g.ny {
            for i in 0..self.g.nx {
                if !self.g.is_solid(i, j) {
                    v.push((i, j));
                }
            }
        }
        v
    }

    pub fn n(&self) -> usize {
        self.g.n_fluid()
    }

    pub fn across(&self, i: usize, j: usize, step: (isize, isize)) -> Across {
        let (nx, ny) = (self.g.nx as isize, self.g.ny as isize);
        let (mut ni, mut nj) = (i as isize + step.0, j as isize + step.1);
        let edge = if ni < 0 {
            Some(Edge::West)
        } else if ni >= nx {
            Some(Edge::East)
        } else if nj < 0 {
            Some(Edge::South)
        } else if nj >= ny {
            Some(Edge::North)
        } else {
            None
        };
        if let Some(e) = edge {
            match self.g.boundary.edge(e) {
                EdgeCondition::Periodic => {
                    ni = ni.rem_euclid(nx);
                    nj = nj.rem_euclid(ny);
                }
                EdgeCondition::Outlet => return Across::Outlet,
                EdgeCondition::NoSlip { tangential } => {
                    let velocity = if step.0 != 0 { (0.0, tangential) } else { (tangential, 0.0) };
                    return Across::Wall { velocity, edge: Some(e) };
                }
                EdgeCondition::Inlet { speed } => {
                    // Inward normal is minus the step direction.
                    let velocity = (-(step.0 as f64) * speed, -(step.1 as f64) * speed);
                    return Across::Wall { velocity, edge: Some(e) };
                }
            }
        }
        let (ni, nj) = (ni as usize, nj as usize);
        if self.g.is_solid(ni, nj) {
            Across::Wall {
                velocity: (0.0, 0.0),
                edge: None,
            }
        } else {
            Across::Cell(ni, nj)
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        self.g.dof(i, j).unwrap()
    }

    /// Homogeneous ghost value of component `comp` of velocity `u`.
    pub fn ghost(&self, u: &[f64], comp: usize, i: usize, j: usize, step: (isize, isize)) -> f64 {
        let n = self.n();
        let own = u[comp * n + self.idx(i, j)];
        match self.across(i, j, step) {
            Across::Cell(a, b) => u[comp * n + self.idx(a, b)],
            Across::Wall { .. } => -own,
            Across::Outlet => own,
        }
    }

    fn h(&self, step: (isize, isize)) -> f64 {
        if step.0 != 0 {
            self.g.dx
        } else {
            self.g.dy
        }
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; 2 * n];
        for (i, j) in self.fluid_cells() {
            for comp in 0..2 {
                let own = u[comp * n + self.idx(i, j)];
                let mut acc = 0.0;
                for s in STEPS {
                    let h = self.h(s);
                    acc += (self.ghost(u, comp, i, j, s) - own) / (h * h);
                }
                out[comp * n + self.idx(i, j)] = acc;
            }
        }
        out
    }

    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (i, j) in self.fluid_cells() {
            let ddx = (self.ghost(u, 0, i, j, (1, 0)) - self.ghost(u, 0, i, j, (-1, 0))) / (2.0 * self.g.dx);
            let ddy = (self.ghost(u, 1, i, j, (0, 1)) - self.ghost(u, 1, i, j, (0, -1))) / (2.0 * self.g.dy);
            out[self.idx(i, j)] = ddx + ddy;
        }
        out
    }

    /// Divergence of the boundary data alone (zero velocity inside).
    pub fn divergence_bc(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (i, j) in self.fluid_cells() {
            for s in STEPS {
                if let Across::Wall { velocity, .. } = self.across(i, j, s) {
                    let (vn, h) = if s.0 != 0 { (velocity.0, self.g.dx) } else { (velocity.1, self.g.dy) };
                    let sign = (s.0 + s.1) as f64;
                    out[self.idx(i, j)] += sign * 2.0 * vn / (2.0 * h);
                }
            }
        }
        out
    }

    /// Gradient as the negative adjoint of the divergence, by scattering
    /// each divergence stencil entry.
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; 2 * n];
        for (i, j) in self.fluid_cells() {
            let row = self.idx(i, j);
            for s in STEPS {
                let comp = if s.0 != 0 { 0 } else { 1 };
                let coef = (s.0 + s.1) as f64 / (2.0 * self.h(s));
                let (target, sign) = match self.across(i, j, s) {
                    Across::Cell(a, b) => (self.idx(a, b), 1.0),
                    Across::Wall { .. } => (row, -1.0),
                    Across::Outlet => (row, 1.0),
                };
                out[comp * n + target] -= coef * sign * p[row];
            }
        }
        out
    }

    /// `∇·(a ⊗ b)` with homogeneous ghosts.
    pub fn convection(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; 2 * n];
        for (i, j) in self.fluid_cells() {
            for m in 0..2 {
                let mut acc = 0.0;
                for s in STEPS {
                    let comp = if s.0 != 0 { 0 } else { 1 };
                    let sign = (s.0 + s.1) as f64;
                    acc += sign * self.ghost(a, comp, i, j, s) * self.ghost(b, m, i, j, s) / (2.0 * self.h(s));
                }
                out[m * n + self.idx(i, j)] = acc;
            }
        }
        out
    }

    pub fn curl(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (i, j) in self.fluid_cells() {
            let dvdx = (self.ghost(u, 1, i, j, (1, 0)) - self.ghost(u, 1, i, j, (-1, 0))) / (2.0 * self.g.dx);
            let dudy = (self.ghost(u, 0, i, j, (0, 1)) - self.ghost(u, 0, i, j, (0, -1))) / (2.0 * self.g.dy);
            out[self.idx(i, j)] = dvdx - dudy;
        }
        out
    }

    pub fn area(&self) -> f64 {
        self.g.dx * self.g.dy
    }

    /// `Σ_cells |cell| f·g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..f.len() {
            acc += self.area() * f[k] * g[k];
        }
        acc
    }

    /// Edges carrying a nonzero prescribed velocity, in west, east, south,
    /// north order.
    pub fn moving_edges(&self) -> Vec<(Edge, (f64, f64))> {
        let mut v = Vec::new();
        for e in [Edge::West, Edge::East, Edge::South, Edge::North] {
            let step = match e {
                Edge::West => (-1, 0),
                Edge::East => (1, 0),
                Edge::South => (0, -1),
                Edge::North => (0, 1),
            };
            let (i, j) = match e {
                Edge::West => (0, 0),
                Edge::East => (self.g.nx - 1, 0),
                Edge::South => (0, 0),
                Edge::North => (0, self.g.ny - 1),
            };
            if let Across::Wall { velocity, .. } = self.across(i, j, step) {
                if velocity != (0.0, 0.0) {
                    v.push((e, velocity));
                }
            }
        }
        v
    }

    /// Face-midpoint penalty integrals `(E_k, D_k)` per moving edge.
    pub fn penalty(&self, phi: &[Vec<f64>]) -> Vec<(DMatrix<f64>, Vec<f64>)> {
        let n = self.n();
        let r = phi.len();
        self.moving_edges()
            .into_iter()
            .map(|(edge, vel)| {
                let speed = (vel.0 * vel.0 + vel.1 * vel.1).sqrt();
                let dir = (vel.0 / speed, vel.1 / speed);
                let mut e = DMatrix::zeros(r, r);
                let mut d = vec![0.0; r];
                for (i, j) in self.fluid_cells() {
                    for s in STEPS {
                        let Across::Wall { edge: Some(e2), .. } = self.across(i, j, s) else {
                            continue;
                        };
                        if e2 != edge {
                            continue;
                        }
                        let len = if s.0 != 0 { self.g.dy } else { self.g.dx };
                        let c = self.idx(i, j);
                        for a in 0..r {
                            d[a] += len * (phi[a][c] * dir.0 + phi[a][n + c] * dir.1);
                            for b in 0..r {
                                e[(a, b)] += len * (phi[a][c] * phi[b][c] + phi[a][n + c] * phi[b][n + c]);
                            }
                        }
                    }
                }
                (e, d)
            })
            .collect()
    }

    /// `Σ_{non-fluid faces} |f| (n × ∇χ)·ω(φ)` evaluated at the owning cell.
    pub fn boundary_curl(&self, chi: &[f64], phi: &[f64]) -> f64 {
        let n = self.n();
        let grad = self.gradient(chi);
        let vort = self.curl(phi);
        let mut acc = 0.0;
        for (i, j) in self.fluid_cells() {
            let c = self.idx(i, j);
            for s in STEPS {
                if let Across::Cell(..) = self.across(i, j, s) {
                    continue;
                }
                let len = if s.0 != 0 { self.g.dy } else { self.g.dx };
                let (nx, ny) = (s.0 as f64, s.1 as f64);
                acc += len * (nx * grad[n + c] - ny * grad[c]) * vort[c];
            }
        }
        acc
    }
}

pub fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect()
}
