use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};

/// Condition imposed on one edge of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EdgeCondition {
    Periodic,
    /// No-slip wall moving tangentially at `tangential` (m/s).
    NoSlip { tangential: f64 },
    /// Uniform inflow with inward normal speed `speed` (m/s).
    Inlet { speed: f64 },
    /// Zero-gradient outflow.
    Outlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    West,
    East,
    South,
    North,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub west: EdgeCondition,
    pub east: EdgeCondition,
    pub south: EdgeCondition,
    pub north: EdgeCondition,
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        BoundarySpec {
            west: EdgeCondition::Periodic,
            east: EdgeCondition::Periodic,
            south: EdgeCondition::Periodic,
            north: EdgeCondition::Periodic,
        }
    }

    pub fn walls() -> Self {
        let wall = EdgeCondition::NoSlip { tangential: 0.0 };
        BoundarySpec {
            west: wall,
            east: wall,
            south: wall,
            north: wall,
        }
    }

    pub fn edge(&self, e: Edge) -> EdgeCondition {
        match e {
            Edge::West => self.west,
            Edge::East => self.east,
            Edge::South => self.south,
            Edge::North => self.north,
        }
    }

    pub fn periodic_x(&self) -> bool {
        self.west == EdgeCondition::Periodic
    }

    pub fn periodic_y(&self) -> bool {
        self.south == EdgeCondition::Periodic
    }
}

/// Neighbour directions, in stencil order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    East,
    West,
    North,
    South,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::East, Dir::West, Dir::North, Dir::South];

    /// Outward unit normal of the face shared with this neighbour.
    pub fn normal(self) -> (f64, f64) {
        match self {
            Dir::East => (1.0, 0.0),
            Dir::West => (-1.0, 0.0),
            Dir::North => (0.0, 1.0),
            Dir::South => (0.0, -1.0),
        }
    }
}

/// What lies across a cell face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighbor {
    Fluid(usize),
    /// Prescribed velocity (walls, solid faces, inlets); `part` indexes
    /// [`Grid::dirichlet_parts`] when the prescribed velocity is nonzero.
    Dirichlet {
        velocity: (f64, f64),
        part: Option<usize>,
    },
    Outlet,
}

/// A connected piece of boundary carrying a nonzero prescribed velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletPart {
    pub edge: Edge,
    pub velocity: (f64, f64),
}

impl DirichletPart {
    pub fn speed(&self) -> f64 {
        self.velocity.0.hypot(self.velocity.1)
    }

    pub fn direction(&self) -> (f64, f64) {
        let s = self.speed();
        (self.velocity.0 / s, self.velocity.1 / s)
    }
}

/// Uniform cell-centred Cartesian grid with an optional solid mask.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    solid: Vec<bool>,
    pub boundary: BoundarySpec,
    dof_of_cell: Vec<Option<usize>>,
    cell_of_dof: Vec<(usize, usize)>,
    neighbors: Vec<[Neighbor; 4]>,
    parts: Vec<DirichletPart>,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, boundary: BoundarySpec) -> Result<Self> {
        Self::with_mask(nx, ny, dx, dy, boundary, vec![false; nx * ny])
    }

    /// `solid[i + nx * j]` marks cell `(i, j)` as solid.
    pub fn with_mask(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        boundary: BoundarySpec,
        solid: Vec<bool>,
    ) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(RomError::Config(format!("grid must be at least 4x4, got {nx}x{ny}")));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(RomError::Config("cell sizes must be positive".into()));
        }
        if solid.len() != nx * ny {
            return Err(RomError::shape("solid mask", nx * ny, solid.len()));
        }
        let px = boundary.west == EdgeCondition::Periodic;
        let px2 = boundary.east == EdgeCondition::Periodic;
        let py = boundary.south == EdgeCondition::Periodic;
        let py2 = boundary.north == EdgeCondition::Periodic;
        if px != px2 || py != py2 {
            return Err(RomError::Config("periodic edges must come in opposing pairs".into()));
        }
        for j in 0..ny {
            for i in 0..nx {
                if !solid[i + nx * j] {
                    continue;
                }
                let on_px = px && (i == 0 || i == nx - 1);
                let on_py = py && (j == 0 || j == ny - 1);
                if on_px || on_py {
                    return Err(RomError::Config(format!(
                        "solid cell ({i}, {j}) touches a periodic edge"
                    )));
                }
            }
        }

        let mut dof_of_cell = vec![None; nx * ny];
        let mut cell_of_dof = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if !solid[i + nx * j] {
                    dof_of_cell[i + nx * j] = Some(cell_of_dof.len());
                    cell_of_dof.push((i, j));
                }
            }
        }
        if cell_of_dof.is_empty() {
            return Err(RomError::Config("grid has no fluid cells".into()));
        }

        let mut parts = Vec::new();
        let mut part_of_edge = |e: Edge| -> Option<usize> {
            let v = edge_velocity(e, boundary.edge(e))?;
            if v.0 == 0.0 && v.1 == 0.0 {
                return None;
            }
            parts.push(DirichletPart { edge: e, velocity: v });
            Some(parts.len() - 1)
        };
        let edge_parts = [
            part_of_edge(Edge::West),
            part_of_edge(Edge::East),
            part_of_edge(Edge::South),
            part_of_edge(Edge::North),
        ];

        let mut grid = Grid {
            nx,
            ny,
            dx,
            dy,
            solid,
            boundary,
            dof_of_cell,
            cell_of_dof,
            neighbors: Vec::new(),
            parts,
        };
        let neighbors = (0..grid.n_fluid())
            .map(|d| {
                let (i, j) = grid.cell_of_dof[d];
                Dir::ALL.map(|dir| grid.resolve(i, j, dir, &edge_parts))
            })
            .collect();
        grid.neighbors = neighbors;
        Ok(grid)
    }

    fn resolve(&self, i: usize, j: usize, dir: Dir, edge_parts: &[Option<usize>; 4]) -> Neighbor {
        let (edge, at_edge) = match dir {
            Dir::East => (Edge::East, i == self.nx - 1),
            Dir::West => (Edge::West, i == 0),
            Dir::North => (Edge::North, j == self.ny - 1),
            Dir::South => (Edge::South, j == 0),
        };
        let (ni, nj) = if at_edge {
            match self.boundary.edge(edge) {
                EdgeCondition::Periodic => match dir {
                    Dir::East => (0, j),
                    Dir::West => (self.nx - 1, j),
                    Dir::North => (i, 0),
                    Dir::South => (i, self.ny - 1),
                },
                EdgeCondition::Outlet => return Neighbor::Outlet,
                cond => {
                    let idx = match edge {
                        Edge::West => 0,
                        Edge::East => 1,
                        Edge::South => 2,
                        Edge::North => 3,
                    };
                    return Neighbor::Dirichlet {
                        velocity: edge_velocity(edge, cond).unwrap_or((0.0, 0.0)),
                        part: edge_parts[idx],
                    };
                }
            }
        } else {
            match dir {
                Dir::East => (i + 1, j),
                Dir::West => (i - 1, j),
                Dir::North => (i, j + 1),
                Dir::South => (i, j - 1),
            }
        };
        match self.dof_of_cell[ni + self.nx * nj] {
            Some(d) => Neighbor::Fluid(d),
            None => Neighbor::Dirichlet {
                velocity: (0.0, 0.0),
                part: None,
            },
        }
    }

    /// Marks the block `[i0, i1) x [j0, j1)` solid and rebuilds the grid.
    pub fn with_solid_block(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> Result<Self> {
        if i1 > self.nx || j1 > self.ny || i0 >= i1 || j0 >= j1 {
            return Err(RomError::Config("solid block outside the grid".into()));
        }
        let mut solid = self.solid.clone();
        for j in j0..j1 {
            for i in i0..i1 {
                solid[i + self.nx * j] = true;
            }
        }
        Grid::with_mask(self.nx, self.ny, self.dx, self.dy, self.boundary, solid)
    }

    pub fn n_fluid(&self) -> usize {
        self.cell_of_dof.len()
    }

    pub fn n_solid(&self) -> usize {
        self.solid.iter().filter(|&&s| s).count()
    }

    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.solid[i + self.nx * j]
    }

    pub fn dof(&self, i: usize, j: usize) -> Option<usize> {
        self.dof_of_cell[i + self.nx * j]
    }

    pub fn cell(&self, dof: usize) -> (usize, usize) {
        self.cell_of_dof[dof]
    }

    /// Cell-centre coordinates of a fluid dof.
    pub fn center(&self, dof: usize) -> (f64, f64) {
        let (i, j) = self.cell_of_dof[dof];
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    #[inline]
    pub fn neighbor(&self, dof: usize, dir: Dir) -> Neighbor {
        self.neighbors[dof][dir as usize]
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn face_length(&self, dir: Dir) -> f64 {
        match dir {
            Dir::East | Dir::West => self.dy,
            Dir::North | Dir::South => self.dx,
        }
    }

    pub fn fluid_area(&self) -> f64 {
        self.n_fluid() as f64 * self.cell_area()
    }

    pub fn dirichlet_parts(&self) -> &[DirichletPart] {
        &self.parts
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.boundary.periodic_x() && self.boundary.periodic_y() && self.n_solid() == 0
    }
}

fn edge_velocity(edge: Edge, cond: EdgeCondition) -> Option<(f64, f64)> {
    match cond {
        EdgeCondition::Periodic | EdgeCondition::Outlet => None,
        EdgeCondition::NoSlip { tangential } => Some(match edge {
            Edge::West | Edge::East => (0.0, tangential),
            Edge::South | Edge::North => (tangential, 0.0),
        }),
        EdgeCondition::Inlet { speed } => Some(match edge {
            Edge::West => (speed, 0.0),
            Edge::East => (-speed, 0.0),
            Edge::South => (0.0, speed),
            Edge::North => (0.0, -speed),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grid_and_unpaired_periodic() {
        assert!(Grid::new(3, 8, 1.0, 1.0, BoundarySpec::walls()).is_err());
        let mut b = BoundarySpec::periodic();
        b.east = EdgeCondition::Outlet;
        assert!(Grid::new(8, 8, 1.0, 1.0, b).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0, BoundarySpec::walls()).is_err());
    }

    #[test]
    fn solid_block_reduces_fluid_count() {
        let g = Grid::new(32, 16, 0.1, 0.1, BoundarySpec::walls()).unwrap();
        let g = g.with_solid_block(4, 12, 4, 12).unwrap();
        assert_eq!(g.n_fluid(), 32 * 16 - 64);
    }

    #[test]
    fn solid_next_to_periodic_edge_is_rejected() {
        let g = Grid::new(8, 8, 1.0, 1.0, BoundarySpec::periodic()).unwrap();
        assert!(g.with_solid_block(0, 2, 3, 5).is_err());
        assert!(g.with_solid_block(2, 4, 3, 5).is_ok());
    }

    #[test]
    fn periodic_neighbours_wrap() {
        let g = Grid::new(4, 4, 1.0, 1.0, BoundarySpec::periodic()).unwrap();
        let d = g.dof(0, 0).unwrap();
        assert_eq!(g.neighbor(d, Dir::West), Neighbor::Fluid(g.dof(3, 0).unwrap()));
        assert_eq!(g.neighbor(d, Dir::South), Neighbor::Fluid(g.dof(0, 3).unwrap()));
    }

    #[test]
    fn lid_is_a_dirichlet_part() {
        let mut b = BoundarySpec::walls();
        b.north = EdgeCondition::NoSlip { tangential: 1.0 };
        let g = Grid::new(4, 4, 0.25, 0.25, b).unwrap();
        assert_eq!(g.dirichlet_parts().len(), 1);
        let d = g.dof(1, 3).unwrap();
        assert_eq!(
            g.neighbor(d, Dir::North),
            Neighbor::Dirichlet {
                velocity: (1.0, 0.0),
                part: Some(0)
            }
        );
    }
}
