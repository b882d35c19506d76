use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::fom::field::{Field, FieldKind};
use crate::fom::grid::{BoundarySpec, EdgeCondition, Grid};
use crate::fom::ops::{convection, DiscreteOps};
use crate::linalg::{conjugate_gradient, norm2, CgOptions};
use crate::scalar::Real;

/// CFL bound checked against the nominal speed when a run is configured.
pub const CONFIG_CFL_LIMIT: f64 = 0.5;
/// CFL bound checked against the actual velocity before every step.
pub const STEP_CFL_LIMIT: f64 = 1.0;
/// Post-projection divergence bound relative to the velocity norm.
pub const DIVERGENCE_TOL: f64 = 1e-8;

const PRESSURE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TaylorGreen,
    LidCavity,
    ChannelObstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FomConfig {
    pub scenario: Scenario,
    pub nx: usize,
    pub ny: usize,
    pub nu: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub save_every: usize,
    /// Inflow speed for the channel, lid speed for the cavity.
    #[serde(default = "one")]
    pub inlet_speed: f64,
    /// Steps run before the first saved interval.
    #[serde(default)]
    pub warmup_steps: usize,
    /// Edge length of the square obstacle in cells; one obstacle diameter is
    /// the unit of length in the channel.
    #[serde(default = "default_obstacle")]
    pub obstacle_cells: usize,
}

fn one() -> f64 {
    1.0
}

fn default_obstacle() -> usize {
    8
}

impl FomConfig {
    pub fn taylor_green(n: usize, nu: f64, dt: f64, n_steps: usize, save_every: usize) -> Self {
        FomConfig {
            scenario: Scenario::TaylorGreen,
            nx: n,
            ny: n,
            nu,
            dt,
            n_steps,
            save_every,
            inlet_speed: 1.0,
            warmup_steps: 0,
            obstacle_cells: default_obstacle(),
        }
    }

    fn reference_speed(&self) -> f64 {
        match self.scenario {
            Scenario::TaylorGreen => 1.0,
            _ => self.inlet_speed.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(RomError::Config("nu must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(RomError::Config("dt must be positive".into()));
        }
        if self.save_every == 0 {
            return Err(RomError::Config("save_every must be at least 1".into()));
        }
        if !self.inlet_speed.is_finite() {
            return Err(RomError::Config("inlet_speed must be finite".into()));
        }
        let grid = self.grid()?;
        let cfl = self.reference_speed() * self.dt / grid.dx.min(grid.dy);
        if cfl > CONFIG_CFL_LIMIT {
            return Err(RomError::Cfl {
                cfl,
                limit: CONFIG_CFL_LIMIT,
            });
        }
        Ok(())
    }

    /// Builds the scenario grid.
    pub fn grid(&self) -> Result<Grid> {
        let (nx, ny) = (self.nx, self.ny);
        match self.scenario {
            Scenario::TaylorGreen => {
                Grid::new(nx, ny, 2.0 * PI / nx as f64, 2.0 * PI / ny as f64, BoundarySpec::periodic())
            }
            Scenario::LidCavity => {
                let mut b = BoundarySpec::walls();
                b.north = EdgeCondition::NoSlip {
                    tangential: self.inlet_speed,
                };
                Grid::new(nx, ny, 1.0 / nx as f64, 1.0 / ny as f64, b)
            }
            Scenario::ChannelObstacle => {
                let k = self.obstacle_cells;
                let i0 = nx / 5;
                // one cell off the centreline so the wake loses symmetry early
                let j0 = (ny.saturating_sub(k)) / 2 + 1;
                if k == 0 || i0 == 0 || i0 + k + 2 > nx || j0 + k + 1 > ny {
                    return Err(RomError::Config(format!(
                        "a {k}x{k} obstacle does not fit a {nx}x{ny} channel"
                    )));
                }
                let u = self.inlet_speed;
                let b = BoundarySpec {
                    west: EdgeCondition::Inlet { speed: u },
                    east: EdgeCondition::Outlet,
                    south: EdgeCondition::NoSlip { tangential: u },
                    north: EdgeCondition::NoSlip { tangential: u },
                };
                let h = 1.0 / k as f64;
                Grid::new(nx, ny, h, h, b)?.with_solid_block(i0, i0 + k, j0, j0 + k)
            }
        }
    }
}

/// Grid plus initial velocity and pressure for a scenario.
pub fn init_scenario<T: Real>(config: &FomConfig) -> Result<(Grid, Field<T>, Field<T>)> {
    config.validate()?;
    let grid = config.grid()?;
    let n = grid.n_fluid();
    let (u, p) = match config.scenario {
        Scenario::TaylorGreen => (
            Field::from_vector_fn(&grid, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin())),
            Field::from_scalar_fn(&grid, |x, y| -0.25 * ((2.0 * x).cos() + (2.0 * y).cos())),
        ),
        Scenario::LidCavity | Scenario::ChannelObstacle => {
            (Field::zeros(FieldKind::Vector2, n), Field::zeros(FieldKind::Scalar, n))
        }
    };
    Ok((grid, u, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FomState<T> {
    pub u: Field<T>,
    pub p: Field<T>,
    pub t: f64,
    pub step: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub cg_iterations: usize,
    /// `‖div u‖_w / ‖u‖_w` after projection.
    pub divergence: f64,
}

/// Explicit Chorin projection stepper.
#[derive(Debug, Clone)]
pub struct FomSolver<T> {
    pub config: FomConfig,
    pub grid: Grid,
    pub ops: DiscreteOps<T>,
}

impl<T: Real> FomSolver<T> {
    pub fn new(config: FomConfig) -> Result<(Self, FomState<T>)> {
        let (grid, u, p) = init_scenario::<T>(&config)?;
        let ops = DiscreteOps::new(&grid);
        let state = FomState { u, p, t: 0.0, step: 0 };
        Ok((FomSolver { config, grid, ops }, state))
    }

    pub fn cfl(&self, u: &Field<T>) -> f64 {
        let vmax = u.values.iter().fold(T::zero(), |m, v| m.max(v.abs())).to_f64_lossy();
        vmax * self.config.dt / self.grid.dx.min(self.grid.dy)
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut FomState<T>) -> Result<StepReport> {
        let n = self.ops.n;
        if !state.u.is_finite() || !state.p.is_finite() {
            return Err(RomError::NonFinite(format!("state at step {}", state.step)));
        }
        let cfl = self.cfl(&state.u);
        if cfl > STEP_CFL_LIMIT {
            return Err(RomError::Cfl {
                cfl,
                limit: STEP_CFL_LIMIT,
            });
        }
        let dt = T::lit(self.config.dt);
        let nu = T::lit(self.config.nu);
        let u = &state.u.values;

        let conv = convection(&self.grid, u, u, true);
        let lap = self.ops.lap.apply(u);
        let mut ustar = u.clone();
        for i in 0..2 * n {
            ustar[i] += dt * (nu * (lap[i] + self.ops.lap_bc[i]) - conv[i]);
        }

        let rhs: Vec<T> = self.ops.divergence(&ustar).into_iter().map(|v| -v / dt).collect();
        let opts = CgOptions {
            rel_tol: PRESSURE_TOL,
            ..CgOptions::default()
        };
        let report = conjugate_gradient(&self.ops.proj, &rhs, &mut state.p.values, opts, false)?;

        let dtp = self.ops.div.transpose().apply(&state.p.values);
        for i in 0..2 * n {
            ustar[i] += dt * dtp[i];
        }
        let unorm = norm2(&ustar);
        let divergence = if unorm > T::zero() {
            (norm2(&self.ops.divergence(&ustar)) / unorm).to_f64_lossy()
        } else {
            0.0
        };
        if !ustar.iter().all(|v| v.is_finite()) {
            return Err(RomError::NonFinite(format!("velocity after step {}", state.step + 1)));
        }
        if divergence > DIVERGENCE_TOL.max(T::EPS.sqrt()) {
            return Err(RomError::NotConverged {
                iterations: report.iterations,
                residual: divergence,
            });
        }
        state.u.values = ustar;
        state.step += 1;
        state.t = state.step as f64 * self.config.dt;
        Ok(StepReport {
            cg_iterations: report.iterations,
            divergence,
        })
    }
}

/// One projection step, returning the new state.
pub fn step_fom<T: Real>(state: &FomState<T>, solver: &FomSolver<T>) -> Result<FomState<T>> {
    let mut next = state.clone();
    solver.step(&mut next)?;
    Ok(next)
}

/// Time-ordered velocity and pressure snapshots on one grid.
#[derive(Debug, Clone)]
pub struct SnapshotSet<T> {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub velocity: Vec<Field<T>>,
    pub pressure: Vec<Field<T>>,
    /// Quadrature weight per fluid cell.
    pub weights: Vec<T>,
}

impl<T: Real> SnapshotSet<T> {
    pub fn new(grid: Grid, times: Vec<f64>, velocity: Vec<Field<T>>, pressure: Vec<Field<T>>) -> Result<Self> {
        let weights = vec![T::lit(grid.cell_area()); grid.n_fluid()];
        let set = SnapshotSet {
            grid,
            times,
            velocity,
            pressure,
            weights,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.times.len();
        if self.velocity.len() != m || self.pressure.len() != m {
            return Err(RomError::shape("snapshot count", m, format!("{}/{}", self.velocity.len(), self.pressure.len())));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RomError::Config("snapshot times must be strictly increasing".into()));
        }
        for f in self.velocity.iter().chain(&self.pressure) {
            f.check(&self.grid)?;
        }
        if self.weights.len() != self.grid.n_fluid() || self.weights.iter().any(|&w| !(w > T::zero())) {
            return Err(RomError::Config("weights must be positive, one per fluid cell".into()));
        }
        let total: f64 = self.weights.iter().map(|w| w.to_f64_lossy()).sum();
        let area = self.grid.fluid_area();
        if (total - area).abs() > 1e-12f64.max(T::EPS * 8.0 * self.weights.len() as f64) * area {
            return Err(RomError::Config("weights do not sum to the fluid area".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Weights repeated per velocity component.
    pub fn velocity_weights(&self) -> Vec<T> {
        let mut w = self.weights.clone();
        w.extend_from_slice(&self.weights);
        w
    }

    pub fn velocity_matrix(&self) -> DMatrix<T> {
        columns(&self.velocity)
    }

    pub fn pressure_matrix(&self) -> DMatrix<T> {
        columns(&self.pressure)
    }

    /// Snapshots with indices in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(RomError::Config(format!("snapshot window {range:?} out of bounds")));
        }
        Ok(SnapshotSet {
            grid: self.grid.clone(),
            times: self.times[range.clone()].to_vec(),
            velocity: self.velocity[range.clone()].to_vec(),
            pressure: self.pressure[range].to_vec(),
            weights: self.weights.clone(),
        })
    }
}

fn columns<T: Real>(fields: &[Field<T>]) -> DMatrix<T> {
    let rows = fields.first().map_or(0, |f| f.len());
    DMatrix::from_fn(rows, fields.len(), |i, j| fields[j].values[i])
}

/// Runs the configured scenario, saving every `save_every` steps after the
/// warm-up.
pub fn run_fom<T: Real>(config: &FomConfig) -> Result<SnapshotSet<T>> {
    let (solver, mut state) = FomSolver::<T>::new(config.clone())?;
    for _ in 0..config.warmup_steps {
        solver.step(&mut state)?;
    }
    let mut times = Vec::new();
    let mut velocity = Vec::new();
    let mut pressure = Vec::new();
    for k in 1..=config.n_steps {
        solver.step(&mut state)?;
        if k % config.save_every == 0 {
            times.push(state.t);
            velocity.push(state.u.clone());
            pressure.push(state.p.clone());
        }
    }
    log::debug!("fom: {} snapshots, t_end = {}", times.len(), state.t);
    SnapshotSet::new(solver.grid, times, velocity, pressure)
}
