//! Error measures between reduced solutions and full-order references.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::pod::weighted_dot;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    RelVelocity,
    RelPressure,
    ReconstructionVelocity,
    ReconstructionPressure,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::RelVelocity => "rel_velocity",
            ErrorKind::RelPressure => "rel_pressure",
            ErrorKind::ReconstructionVelocity => "reconstruction_velocity",
            ErrorKind::ReconstructionPressure => "reconstruction_pressure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub kind: ErrorKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ErrorSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            s.push_str(&format!("{t},{v:e}\n"));
        }
        s
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

const TIME_SLACK: f64 = 1e-9;

fn check_times(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() > b.len() {
        return Err(RomError::shape("reference time levels", a.len(), b.len()));
    }
    for (i, (ta, tb)) in a.iter().zip(b).enumerate() {
        if (ta - tb).abs() > TIME_SLACK * (1.0 + tb.abs()) {
            return Err(RomError::Config(format!("time level {i} misaligned: {ta} vs {tb}")));
        }
    }
    Ok(())
}

/// A basis with its coefficient history over a shared time grid.
#[derive(Debug, Clone, Copy)]
pub struct FieldHistory<'a, T: Real> {
    pub modes: &'a DMatrix<T>,
    /// One row per time level.
    pub coefficients: &'a DMatrix<T>,
    pub times: &'a [f64],
}

impl<T: Real> FieldHistory<'_, T> {
    fn field(&self, row: usize) -> DVector<T> {
        self.modes * self.coefficients.row(row).transpose()
    }
}

fn magnitudes<T: Real>(u: &DVector<T>) -> Vec<T> {
    let n = u.len() / 2;
    (0..n).map(|i| (u[i] * u[i] + u[n + i] * u[n + i]).sqrt()).collect()
}

fn rel<T: Real>(w: &[T], x: &[T], reference: &[T]) -> f64 {
    let diff: Vec<T> = x.iter().zip(reference).map(|(&a, &b)| a - b).collect();
    let den = weighted_dot(w, reference, reference).sqrt();
    let num = weighted_dot(w, &diff, &diff).sqrt();
    if den > T::zero() {
        (num / den).to_f64_lossy()
    } else if num > T::zero() {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Relative velocity (on magnitude fields) and pressure errors per time level.
///
/// `cell_weights` holds one weight per fluid cell.
pub fn relative_errors<T: Real>(
    rom_velocity: FieldHistory<'_, T>,
    rom_pressure: FieldHistory<'_, T>,
    ref_velocity: FieldHistory<'_, T>,
    ref_pressure: FieldHistory<'_, T>,
    cell_weights: &[T],
) -> Result<(ErrorSeries, ErrorSeries)> {
    check_times(rom_velocity.times, ref_velocity.times)?;
    check_times(rom_pressure.times, ref_pressure.times)?;
    let n = rom_velocity.times.len();
    let mut ev = Vec::with_capacity(n);
    let mut ep = Vec::with_capacity(n);
    for j in 0..n {
        let ur = magnitudes(&rom_velocity.field(j));
        let ud = magnitudes(&ref_velocity.field(j));
        ev.push(rel(cell_weights, &ur, &ud));
        let pr = rom_pressure.field(j);
        let pd = ref_pressure.field(j);
        ep.push(rel(cell_weights, pr.as_slice(), pd.as_slice()));
    }
    Ok((
        ErrorSeries {
            kind: ErrorKind::RelVelocity,
            times: rom_velocity.times.to_vec(),
            values: ev,
        },
        ErrorSeries {
            kind: ErrorKind::RelPressure,
            times: rom_pressure.times.to_vec(),
            values: ep,
        },
    ))
}

/// `Σ_j ‖Φ(c_j − c*_j)‖_w = Σ_j sqrt(δ_jᵀ M δ_j)` with `M` the mass matrix
/// of the trial basis and `c*` the best-approximation coefficients of the
/// full-order fields.
pub fn summed_l2_metric<T: Real>(rom: &DMatrix<T>, projected: &DMatrix<T>, mass: &DMatrix<T>, rom_times: &[f64], ref_times: &[f64]) -> Result<f64> {
    check_times(rom_times, ref_times)?;
    if rom.ncols() != projected.ncols() || mass.nrows() != rom.ncols() {
        return Err(RomError::shape("metric coefficients", projected.ncols(), rom.ncols()));
    }
    if rom.nrows() > projected.nrows() {
        return Err(RomError::shape("metric time levels", rom.nrows(), projected.nrows()));
    }
    let mut total = 0.0;
    for j in 0..rom.nrows() {
        let delta = (rom.row(j) - projected.row(j)).transpose();
        let e2 = (delta.transpose() * mass * &delta)[(0, 0)].max(T::zero());
        total += e2.sqrt().to_f64_lossy();
    }
    Ok(total)
}

/// Velocity metric over the trial basis (mass matrix `mass`).
pub fn error_metric_u<T: Real>(rom_a: &DMatrix<T>, projected_a: &DMatrix<T>, mass: &DMatrix<T>, rom_times: &[f64], ref_times: &[f64]) -> Result<f64> {
    summed_l2_metric(rom_a, projected_a, mass, rom_times, ref_times)
}

/// Pressure metric over an orthonormal pressure basis.
pub fn error_metric_p<T: Real>(rom_b: &DMatrix<T>, projected_b: &DMatrix<T>, rom_times: &[f64], ref_times: &[f64]) -> Result<f64> {
    let q = rom_b.ncols();
    summed_l2_metric(rom_b, projected_b, &DMatrix::identity(q, q), rom_times, ref_times)
}

/// Relative errors of the leading `(r, q)`-mode projections against the
/// `(d, d_p)` references, on vector fields so that they are monotone in the
/// mode count.
pub fn reconstruction_errors<T: Real>(
    velocity_modes: &DMatrix<T>,
    a_d: &DMatrix<T>,
    pressure_modes: &DMatrix<T>,
    b_dp: &DMatrix<T>,
    r: usize,
    q: usize,
    cell_weights: &[T],
    times: &[f64],
) -> Result<(ErrorSeries, ErrorSeries)> {
    if r > a_d.ncols() || q > b_dp.ncols() {
        return Err(RomError::RankOrder(format!("reconstruction ranks ({r}, {q}) exceed ({}, {})", a_d.ncols(), b_dp.ncols())));
    }
    let mut vw = cell_weights.to_vec();
    vw.extend_from_slice(cell_weights);
    let mut ev = Vec::with_capacity(times.len());
    let mut ep = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        let ud = velocity_modes * a_d.row(j).transpose();
        let ur = velocity_modes.columns(0, r) * a_d.row(j).columns(0, r).transpose();
        ev.push(rel(&vw, ur.as_slice(), ud.as_slice()));
        let pd = pressure_modes * b_dp.row(j).transpose();
        let pr = pressure_modes.columns(0, q) * b_dp.row(j).columns(0, q).transpose();
        ep.push(rel(cell_weights, pr.as_slice(), pd.as_slice()));
    }
    Ok((
        ErrorSeries {
            kind: ErrorKind::ReconstructionVelocity,
            times: times.to_vec(),
            values: ev,
        },
        ErrorSeries {
            kind: ErrorKind::ReconstructionPressure,
            times: times.to_vec(),
            values: ep,
        },
    ))
}
