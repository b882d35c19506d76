use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::linalg::Tensor3;
use crate::operators::DataRankOperators;
use crate::pod::PodBasis;
use crate::scalar::Real;

/// Snapshot coefficients at the data ranks, one row per time.
#[derive(Debug, Clone)]
pub struct CoefficientHistory<T> {
    pub a_d: DMatrix<T>,
    pub b_dp: DMatrix<T>,
    pub times: Vec<f64>,
}

impl<T: Real> CoefficientHistory<T> {
    pub fn new(a_d: DMatrix<T>, b_dp: DMatrix<T>, times: Vec<f64>) -> Result<Self> {
        if a_d.nrows() != times.len() || b_dp.nrows() != times.len() {
            return Err(RomError::shape("coefficient history rows", times.len(), format!("{}/{}", a_d.nrows(), b_dp.nrows())));
        }
        if a_d.iter().chain(b_dp.iter()).any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("coefficient history".into()));
        }
        Ok(CoefficientHistory { a_d, b_dp, times })
    }

    /// Projects velocity and pressure snapshot columns onto the data-rank bases.
    pub fn from_snapshots(
        velocity: &DMatrix<T>,
        pressure: &DMatrix<T>,
        velocity_d: &PodBasis<T>,
        pressure_dp: &PodBasis<T>,
        times: Vec<f64>,
    ) -> Result<Self> {
        Self::new(velocity_d.project_columns(velocity)?, pressure_dp.project_columns(pressure)?, times)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn d(&self) -> usize {
        self.a_d.ncols()
    }

    pub fn d_p(&self) -> usize {
        self.b_dp.ncols()
    }

    /// Leading `r` velocity coefficients.
    pub fn a(&self, r: usize) -> DMatrix<T> {
        self.a_d.columns(0, r).clone_owned()
    }

    pub fn b(&self, q: usize) -> DMatrix<T> {
        self.b_dp.columns(0, q).clone_owned()
    }

    /// Rows `range`.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(RomError::Config(format!("window {range:?} outside {} samples", self.len())));
        }
        let n = range.len();
        Ok(CoefficientHistory {
            a_d: self.a_d.rows(range.start, n).clone_owned(),
            b_dp: self.b_dp.rows(range.start, n).clone_owned(),
            times: self.times[range].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionTarget {
    TauU,
    TauP1,
    TauP2,
    TauD,
    TauG,
    /// `τ_D + τ_G`
    TauDg,
    /// `[τ_u, τ_D + τ_G]`
    TauUDg,
}

/// Exact correction values, one row per time.
#[derive(Debug, Clone)]
pub struct ExactCorrectionSeries<T> {
    pub values: DMatrix<T>,
    pub target: CorrectionTarget,
}

impl<T: Real> ExactCorrectionSeries<T> {
    pub fn out_dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Rowwise sum of two series with matching shapes.
    pub fn sum(&self, other: &Self, target: CorrectionTarget) -> Result<Self> {
        if self.values.shape() != other.values.shape() {
            return Err(RomError::shape("correction series", format!("{:?}", self.values.shape()), format!("{:?}", other.values.shape())));
        }
        Ok(ExactCorrectionSeries {
            values: &self.values + &other.values,
            target,
        })
    }

    /// Columns of `self` followed by the columns of `other`.
    pub fn concat(&self, other: &Self, target: CorrectionTarget) -> Result<Self> {
        if self.values.nrows() != other.values.nrows() {
            return Err(RomError::shape("correction series rows", self.values.nrows(), other.values.nrows()));
        }
        let (m, c1, c2) = (self.values.nrows(), self.values.ncols(), other.values.ncols());
        let mut values = DMatrix::zeros(m, c1 + c2);
        values.columns_mut(0, c1).copy_from(&self.values);
        values.columns_mut(c1, c2).copy_from(&other.values);
        Ok(ExactCorrectionSeries { values, target })
    }
}

fn row<T: Real>(m: &DMatrix<T>, i: usize, n: usize) -> Vec<T> {
    (0..n).map(|k| m[(i, k)]).collect()
}

/// `contract(T[:, :n, :n], a, a)` with `a` the first `n` entries.
fn quad_leading<T: Real>(t: &Tensor3<T>, a: &[T], n: usize) -> DVector<T> {
    let [n0, _, _] = t.dims();
    DVector::from_fn(n0, |i, _| {
        let mut acc = T::zero();
        for j in 0..n {
            let mut inner = T::zero();
            for k in 0..n {
                inner += t.get(i, j, k) * a[k];
            }
            acc += a[j] * inner;
        }
        acc
    })
}

fn check_history<T: Real>(h: &CoefficientHistory<T>, ops: &DataRankOperators<T>) -> Result<()> {
    if h.d() != ops.d || h.d_p() != ops.d_p {
        return Err(RomError::RankOrder(format!(
            "history has ranks ({}, {}), operators ({}, {})",
            h.d(),
            h.d_p(),
            ops.d,
            ops.d_p
        )));
    }
    Ok(())
}

/// `τ_u = −C_(r,d,d)(a_d, a_d) + C_(r,r,r)(a_r, a_r)` per time, with `r`
/// counting physical velocity modes.
pub fn exact_velocity_correction<T: Real>(h: &CoefficientHistory<T>, ops: &DataRankOperators<T>, r: usize) -> Result<ExactCorrectionSeries<T>> {
    check_history(h, ops)?;
    if r != ops.r {
        return Err(RomError::RankOrder(format!("velocity correction for r={r} needs operators at r={}", ops.r)));
    }
    let d = ops.d;
    let mut values = DMatrix::zeros(h.len(), r);
    for t in 0..h.len() {
        let a = row(&h.a_d, t, d);
        let full = quad_leading(&ops.c_d, &a, d);
        let resolved = quad_leading(&ops.c_d, &a, r);
        values.set_row(t, &(resolved - full).transpose());
    }
    Ok(ExactCorrectionSeries {
        values,
        target: CorrectionTarget::TauU,
    })
}

/// `τ_p1 = −H_(r,d_p) b_dp + H_(r,q) b_q` and `τ_p2 = P_(q,d) a_d − P_(q,r) a_r`.
pub fn exact_pressure_corrections_sup<T: Real>(
    h: &CoefficientHistory<T>,
    ops: &DataRankOperators<T>,
) -> Result<(ExactCorrectionSeries<T>, ExactCorrectionSeries<T>)> {
    check_history(h, ops)?;
    let (r, q) = (ops.r, ops.q);
    let mut p1 = DMatrix::zeros(h.len(), r);
    let mut p2 = DMatrix::zeros(h.len(), q);
    for t in 0..h.len() {
        let a = DVector::from_vec(row(&h.a_d, t, ops.d));
        let b = DVector::from_vec(row(&h.b_dp, t, ops.d_p));
        let full_h = &ops.h_d * &b;
        let res_h = ops.h_d.columns(0, q) * b.rows(0, q);
        p1.set_row(t, &(res_h - full_h).transpose());
        let full_p = &ops.p_d * &a;
        let res_p = ops.p_d.columns(0, r) * a.rows(0, r);
        p2.set_row(t, &(full_p - res_p).transpose());
    }
    Ok((
        ExactCorrectionSeries {
            values: p1,
            target: CorrectionTarget::TauP1,
        },
        ExactCorrectionSeries {
            values: p2,
            target: CorrectionTarget::TauP2,
        },
    ))
}

/// `τ_D = D_(q,d_p) b_dp − D_(q,q) b_q` and
/// `τ_G = G_(q,d,d)(a_d, a_d) − G_(q,r,r)(a_r, a_r)`.
pub fn exact_ppe_corrections<T: Real>(
    h: &CoefficientHistory<T>,
    ops: &DataRankOperators<T>,
) -> Result<(ExactCorrectionSeries<T>, ExactCorrectionSeries<T>)> {
    check_history(h, ops)?;
    let (r, q) = (ops.r, ops.q);
    let mut td = DMatrix::zeros(h.len(), q);
    let mut tg = DMatrix::zeros(h.len(), q);
    for t in 0..h.len() {
        let a = row(&h.a_d, t, ops.d);
        let b = DVector::from_vec(row(&h.b_dp, t, ops.d_p));
        let full_d = &ops.d_d * &b;
        let res_d = ops.d_d.columns(0, q) * b.rows(0, q);
        td.set_row(t, &(full_d - res_d).transpose());
        let full_g = quad_leading(&ops.g_d, &a, ops.d);
        let res_g = quad_leading(&ops.g_d, &a, r);
        tg.set_row(t, &(full_g - res_g).transpose());
    }
    Ok((
        ExactCorrectionSeries {
            values: td,
            target: CorrectionTarget::TauD,
        },
        ExactCorrectionSeries {
            values: tg,
            target: CorrectionTarget::TauG,
        },
    ))
}
