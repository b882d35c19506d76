//! Galerkin projection of the discrete Navier–Stokes operators.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::fom::ops::{convection, curl, divergence};
use crate::fom::{Dir, Grid, Neighbor};
use crate::linalg::{Csr, Tensor3};
use crate::pod::{EnrichedVelocityBasis, PodBasis};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub nu: f64,
    /// Penalty factor for the weakly imposed boundary velocity.
    pub tau_pen: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            nu: 0.01,
            tau_pen: 1000.0,
        }
    }
}

/// Pressure-Poisson blocks.
#[derive(Debug, Clone)]
pub struct PpeOperators<T> {
    /// `(∇χ_i, ∇χ_j)`
    pub d: DMatrix<T>,
    /// `(∇χ_i, ∇·(φ_j ⊗ φ_k))`
    pub g: Tensor3<T>,
    /// Boundary term `(n × ∇χ_i, ∇ × φ_j)_Γ`.
    pub n: DMatrix<T>,
    /// Time-dependent boundary vector, zero for a steady inlet.
    pub l: DVector<T>,
}

#[derive(Debug, Clone)]
pub struct ReducedOperators<T> {
    /// Leading velocity modes that are POD modes rather than supremizers.
    pub n_physical: usize,
    pub m: DMatrix<T>,
    pub b: DMatrix<T>,
    pub b_t: DMatrix<T>,
    pub c: Tensor3<T>,
    /// `r × q`, `(φ_i, ∇χ_j)`
    pub h: DMatrix<T>,
    /// `q × r`, `(χ_i, ∇·φ_j)`
    pub p: DMatrix<T>,
    /// Boundary-data part of the discrete divergence, `(χ_i, div_bc)`.
    pub p_bc: DVector<T>,
    pub ppe: Option<PpeOperators<T>>,
    pub e: Vec<DMatrix<T>>,
    pub d_k: Vec<DVector<T>>,
    pub u_bc: Vec<T>,
    pub nu: T,
    pub tau_pen: T,
}

impl<T: Real> ReducedOperators<T> {
    pub fn r(&self) -> usize {
        self.m.nrows()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    pub fn is_finite(&self) -> bool {
        let mats = [&self.m, &self.b, &self.b_t, &self.h, &self.p];
        mats.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && self.c.is_finite()
            && self.e.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && self.ppe.as_ref().is_none_or(|p| p.d.iter().all(|v| v.is_finite()) && p.g.is_finite())
    }
}

/// Rectangular operators between the working and data ranks.
#[derive(Debug, Clone)]
pub struct DataRankOperators<T> {
    pub c_d: Tensor3<T>,
    pub h_d: DMatrix<T>,
    pub p_d: DMatrix<T>,
    pub d_d: DMatrix<T>,
    pub g_d: Tensor3<T>,
    pub r: usize,
    pub q: usize,
    pub d: usize,
    pub d_p: usize,
}

fn check_dofs<T: Real>(grid: &Grid, velocity: &DMatrix<T>, pressure: &DMatrix<T>) -> Result<()> {
    let n = grid.n_fluid();
    if velocity.nrows() != 2 * n {
        return Err(RomError::shape("velocity modes", 2 * n, velocity.nrows()));
    }
    if pressure.nrows() != n {
        return Err(RomError::shape("pressure modes", n, pressure.nrows()));
    }
    if velocity.iter().chain(pressure.iter()).any(|v| !v.is_finite()) {
        return Err(RomError::NonFinite("basis".into()));
    }
    Ok(())
}

fn csr_columns<T: Real>(a: &Csr<T>, x: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(a.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let y = a.apply(x.column(j).as_slice());
        out.set_column(j, &DVector::from_vec(y));
    }
    out
}

/// `out[t][i, j, k] = w (test_t_i, ∇·(trial_j ⊗ trial_k))`.
fn convective_tensors<T: Real>(grid: &Grid, trial: &DMatrix<T>, tests: &[&DMatrix<T>], w: T) -> Vec<Tensor3<T>> {
    let nd = trial.ncols();
    let slabs: Vec<Vec<DMatrix<T>>> = (0..nd)
        .into_par_iter()
        .map(|j| {
            let mut conv = DMatrix::<T>::zeros(trial.nrows(), nd);
            for k in 0..nd {
                let c = convection(grid, trial.column(j).as_slice(), trial.column(k).as_slice(), false);
                conv.set_column(k, &DVector::from_vec(c));
            }
            tests.iter().map(|t| t.transpose() * &conv * w).collect()
        })
        .collect();
    tests
        .iter()
        .enumerate()
        .map(|(t, test)| Tensor3::from_fn(test.ncols(), nd, nd, |i, j, k| slabs[j][t][(i, k)]))
        .collect()
}

struct Assembly<T> {
    m: DMatrix<T>,
    b: DMatrix<T>,
    b_t: DMatrix<T>,
    c: Tensor3<T>,
    h: DMatrix<T>,
    p: DMatrix<T>,
    p_bc: DVector<T>,
    ppe: Option<PpeOperators<T>>,
    e: Vec<DMatrix<T>>,
    d_k: Vec<DVector<T>>,
    u_bc: Vec<T>,
}

fn assemble<T: Real>(grid: &Grid, phi: &DMatrix<T>, chi: &DMatrix<T>, with_ppe: bool) -> Result<Assembly<T>> {
    check_dofs(grid, phi, chi)?;
    let w = T::lit(grid.cell_area());
    let n = grid.n_fluid();
    let (div, div_bc) = divergence::<T>(grid);
    let mut grad = div.transpose();
    grad.scale(-T::one());
    let (lap, _) = crate::fom::ops::vector_laplacian::<T>(grid);

    let m = phi.transpose() * phi * w;
    let b = phi.transpose() * csr_columns(&lap, phi) * w;
    let div_phi = csr_columns(&div, phi);
    let b_t = -(div_phi.transpose() * &div_phi) * w;
    let grad_chi = csr_columns(&grad, chi);
    let h = phi.transpose() * &grad_chi * w;
    let p = chi.transpose() * &div_phi * w;
    let p_bc = chi.transpose() * DVector::from_vec(div_bc) * w;

    let tensors = if with_ppe {
        convective_tensors(grid, phi, &[phi, &grad_chi], w)
    } else {
        convective_tensors(grid, phi, &[phi], w)
    };
    let mut tensors = tensors.into_iter();
    let c = tensors.next().unwrap();

    let ppe = if with_ppe {
        let g = tensors.next().unwrap();
        let d = grad_chi.transpose() * &grad_chi * w;
        let vort: Vec<Vec<T>> = (0..phi.ncols()).map(|j| curl(grid, phi.column(j).as_slice())).collect();
        let q = chi.ncols();
        let mut nmat = DMatrix::zeros(q, phi.ncols());
        for cell in 0..n {
            for dir in Dir::ALL {
                if matches!(grid.neighbor(cell, dir), Neighbor::Fluid(_)) {
                    continue;
                }
                let (nx, ny) = dir.normal();
                let len = T::lit(grid.face_length(dir));
                for i in 0..q {
                    let (gx, gy) = (grad_chi[(cell, i)], grad_chi[(n + cell, i)]);
                    let cross = T::lit(nx) * gy - T::lit(ny) * gx;
                    for (j, om) in vort.iter().enumerate() {
                        nmat[(i, j)] += len * cross * om[cell];
                    }
                }
            }
        }
        Some(PpeOperators {
            d,
            g,
            n: nmat,
            l: DVector::zeros(q),
        })
    } else {
        None
    };

    let parts = grid.dirichlet_parts();
    let r = phi.ncols();
    let mut e = vec![DMatrix::zeros(r, r); parts.len()];
    let mut d_k = vec![DVector::zeros(r); parts.len()];
    for cell in 0..n {
        for dir in Dir::ALL {
            let Neighbor::Dirichlet { part: Some(k), .. } = grid.neighbor(cell, dir) else {
                continue;
            };
            let len = T::lit(grid.face_length(dir));
            let (ex, ey) = parts[k].direction();
            for i in 0..r {
                let (ui, vi) = (phi[(cell, i)], phi[(n + cell, i)]);
                d_k[k][i] += len * (ui * T::lit(ex) + vi * T::lit(ey));
                for j in 0..r {
                    e[k][(i, j)] += len * (ui * phi[(cell, j)] + vi * phi[(n + cell, j)]);
                }
            }
        }
    }
    let u_bc = parts.iter().map(|p| T::lit(p.speed())).collect();

    Ok(Assembly {
        m,
        b,
        b_t,
        c,
        h,
        p,
        p_bc,
        ppe,
        e,
        d_k,
        u_bc,
    })
}

fn finish<T: Real>(a: Assembly<T>, n_physical: usize, cfg: &OperatorConfig) -> Result<ReducedOperators<T>> {
    if !(cfg.nu > 0.0) || !(cfg.tau_pen >= 0.0) {
        return Err(RomError::Config("nu must be positive and tau_pen nonnegative".into()));
    }
    if !a.e.is_empty() && !(cfg.tau_pen > 0.0) {
        return Err(RomError::Config("tau_pen must be positive when boundary data is prescribed".into()));
    }
    let ops = ReducedOperators {
        n_physical,
        m: a.m,
        b: a.b,
        b_t: a.b_t,
        c: a.c,
        h: a.h,
        p: a.p,
        p_bc: a.p_bc,
        ppe: a.ppe,
        e: a.e,
        d_k: a.d_k,
        u_bc: a.u_bc,
        nu: T::lit(cfg.nu),
        tau_pen: T::lit(cfg.tau_pen),
    };
    if !ops.is_finite() {
        return Err(RomError::NonFinite("reduced operators".into()));
    }
    Ok(ops)
}

/// Operators of the supremizer-enriched formulation, `r = N_u + N_sup`.
pub fn assemble_sup_operators<T: Real>(
    velocity: &EnrichedVelocityBasis<T>,
    pressure: &PodBasis<T>,
    grid: &Grid,
    cfg: &OperatorConfig,
) -> Result<ReducedOperators<T>> {
    let a = assemble(grid, &velocity.modes(), &pressure.modes, false)?;
    finish(a, velocity.n_physical(), cfg)
}

/// Operators of the pressure-Poisson formulation.
pub fn assemble_ppe_operators<T: Real>(
    velocity: &PodBasis<T>,
    pressure: &PodBasis<T>,
    grid: &Grid,
    cfg: &OperatorConfig,
) -> Result<ReducedOperators<T>> {
    let a = assemble(grid, &velocity.modes, &pressure.modes, true)?;
    finish(a, velocity.n_modes(), cfg)
}

/// Operators coupling the leading `r`, `q` modes to the `d`, `d_p` modes of
/// the data-rank bases.
pub fn assemble_data_rank<T: Real>(
    velocity_d: &PodBasis<T>,
    pressure_dp: &PodBasis<T>,
    r: usize,
    q: usize,
    grid: &Grid,
) -> Result<DataRankOperators<T>> {
    let (d, d_p) = (velocity_d.n_modes(), pressure_dp.n_modes());
    if r > d || q > d_p {
        return Err(RomError::RankOrder(format!("need r <= d and q <= d_p, got r={r}, d={d}, q={q}, d_p={d_p}")));
    }
    let phi = &velocity_d.modes;
    let chi = &pressure_dp.modes;
    check_dofs(grid, phi, chi)?;
    let w = T::lit(grid.cell_area());
    let (div, _) = divergence::<T>(grid);
    let mut grad = div.transpose();
    grad.scale(-T::one());

    let phi_r = phi.columns(0, r).clone_owned();
    let chi_q = chi.columns(0, q).clone_owned();
    let grad_chi = csr_columns(&grad, chi);
    let grad_chi_q = grad_chi.columns(0, q).clone_owned();
    let div_phi = csr_columns(&div, phi);

    let mut tensors = convective_tensors(grid, phi, &[&phi_r, &grad_chi_q], w).into_iter();
    Ok(DataRankOperators {
        c_d: tensors.next().unwrap(),
        g_d: tensors.next().unwrap(),
        h_d: phi_r.transpose() * &grad_chi * w,
        p_d: chi_q.transpose() * &div_phi * w,
        d_d: grad_chi_q.transpose() * &grad_chi * w,
        r,
        q,
        d,
        d_p,
    })
}
