//! Implicit time integration of the reduced differential-algebraic systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::closure::CorrectionModel;
use crate::error::{Result, RomError};
use crate::operators::ReducedOperators;
use crate::pod::{EnrichedVelocityBasis, PodBasis};
use crate::scalar::Real;

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
pub const BLOWUP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Sup,
    Ppe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    ImplicitEuler,
    Bdf2,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionFlags {
    pub c_u: bool,
    pub c_p1: bool,
    pub c_p2: bool,
    pub c_d: bool,
    pub c_g: bool,
}

impl CorrectionFlags {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (on, name) in [(self.c_u, "u"), (self.c_p1, "p1"), (self.c_p2, "p2"), (self.c_d, "D"), (self.c_g, "G")] {
            if on {
                parts.push(name);
            }
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

/// Correction models attached to a reduced system. Inputs are the physical
/// velocity coefficients and the pressure coefficients.
#[derive(Debug, Clone)]
pub struct AttachedModels<T> {
    /// Momentum correction (`c_u`).
    pub velocity: Option<CorrectionModel<T>>,
    /// Pressure-gradient correction in the momentum rows (`c_p1`).
    pub pressure_h: Option<CorrectionModel<T>>,
    /// Continuity correction (`c_p2`).
    pub pressure_p: Option<CorrectionModel<T>>,
    /// Poisson corrections (`c_D`, `c_G`) fitted separately.
    pub ppe_d: Option<CorrectionModel<T>>,
    pub ppe_g: Option<CorrectionModel<T>>,
    /// One Poisson correction covering both `c_D` and `c_G`.
    pub ppe_joint: Option<CorrectionModel<T>>,
    /// Joint momentum (`J₁`) and Poisson (`J₂`) parts of a stacked fit.
    pub joint_momentum: Option<CorrectionModel<T>>,
    pub joint_poisson: Option<CorrectionModel<T>>,
}

/// Prescribed correction values per time level (row 0 is the initial time).
#[derive(Debug, Clone)]
pub struct Forcing<T> {
    pub momentum: Option<DMatrix<T>>,
    pub constraint: Option<DMatrix<T>>,
}

impl<T> Default for AttachedModels<T> {
    fn default() -> Self {
        AttachedModels {
            velocity: None,
            pressure_h: None,
            pressure_p: None,
            ppe_d: None,
            ppe_g: None,
            ppe_joint: None,
            joint_momentum: None,
            joint_poisson: None,
        }
    }
}

impl<T> Default for Forcing<T> {
    fn default() -> Self {
        Forcing {
            momentum: None,
            constraint: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RomModelSpec<T> {
    pub formulation: Formulation,
    pub flags: CorrectionFlags,
    pub models: AttachedModels<T>,
    pub forcing: Forcing<T>,
    pub scheme: TimeScheme,
    pub dt: f64,
    pub n_steps: usize,
    pub t0: f64,
    pub tau_pen: f64,
}

impl<T: Real> RomModelSpec<T> {
    pub fn standard(formulation: Formulation, scheme: TimeScheme, dt: f64, n_steps: usize) -> Self {
        RomModelSpec {
            formulation,
            flags: CorrectionFlags::default(),
            models: AttachedModels::default(),
            forcing: Forcing::default(),
            scheme,
            dt,
            n_steps,
            t0: 0.0,
            tau_pen: 1000.0,
        }
    }

    fn momentum_models(&self) -> impl Iterator<Item = &CorrectionModel<T>> {
        [&self.models.velocity, &self.models.pressure_h, &self.models.joint_momentum].into_iter().flatten()
    }

    fn constraint_models(&self) -> impl Iterator<Item = &CorrectionModel<T>> {
        [
            &self.models.pressure_p,
            &self.models.ppe_d,
            &self.models.ppe_g,
            &self.models.ppe_joint,
            &self.models.joint_poisson,
        ]
        .into_iter()
        .flatten()
    }

    pub fn validate(&self, ops: &ReducedOperators<T>) -> Result<()> {
        let m = &self.models;
        let f = &self.flags;
        let need = |flag: bool, present: bool, name: &str| -> Result<()> {
            if flag != present {
                return Err(RomError::Config(format!(
                    "flag {name} is {} but its model is {}",
                    if flag { "on" } else { "off" },
                    if present { "attached" } else { "missing" }
                )));
            }
            Ok(())
        };
        need(f.c_u, m.velocity.is_some() || m.joint_momentum.is_some(), "c_u")?;
        need(f.c_p1, m.pressure_h.is_some(), "c_p1")?;
        need(f.c_p2, m.pressure_p.is_some(), "c_p2")?;
        let joint = m.ppe_joint.is_some() || m.joint_poisson.is_some();
        need(f.c_d, m.ppe_d.is_some() || joint, "c_D")?;
        need(f.c_g, m.ppe_g.is_some() || joint, "c_G")?;
        if self.formulation == Formulation::Sup && (f.c_d || f.c_g) {
            return Err(RomError::Config("c_D and c_G belong to the pressure-Poisson formulation".into()));
        }
        if self.formulation == Formulation::Ppe && (f.c_p1 || f.c_p2) {
            return Err(RomError::Config("c_p1 and c_p2 belong to the supremizer formulation".into()));
        }
        if self.formulation == Formulation::Ppe && ops.ppe.is_none() {
            return Err(RomError::Config("pressure-Poisson solve needs the Poisson operators".into()));
        }
        if !(self.dt > 0.0) {
            return Err(RomError::Config("dt must be positive".into()));
        }
        if !ops.e.is_empty() && !(self.tau_pen > 0.0) {
            return Err(RomError::Config("tau_pen must be positive with penalised boundaries".into()));
        }
        let (np, q) = (ops.n_physical, ops.q());
        for model in self.momentum_models() {
            if model.out_dim() != np || model.r != np || model.q > q {
                return Err(RomError::shape("momentum correction", format!("{np} outputs over ({np}, ≤{q}) inputs"), format!("{} outputs over ({}, {})", model.out_dim(), model.r, model.q)));
            }
        }
        for model in self.constraint_models() {
            if model.out_dim() != q || model.r != np || model.q > q {
                return Err(RomError::shape("constraint correction", format!("{q} outputs over ({np}, ≤{q}) inputs"), format!("{} outputs over ({}, {})", model.out_dim(), model.r, model.q)));
            }
        }
        if let Some(fm) = &self.forcing.momentum {
            if fm.ncols() != np || fm.nrows() <= self.n_steps {
                return Err(RomError::shape("momentum forcing", format!("> {} x {np}", self.n_steps), format!("{} x {}", fm.nrows(), fm.ncols())));
            }
        }
        if let Some(fc) = &self.forcing.constraint {
            if fc.ncols() != q || fc.nrows() <= self.n_steps {
                return Err(RomError::shape("constraint forcing", format!("> {} x {q}", self.n_steps), format!("{} x {}", fc.nrows(), fc.ncols())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory<T> {
    pub times: Vec<f64>,
    /// One row per time level, initial state included.
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub newton_iters: Vec<usize>,
    pub newton_residuals: Vec<f64>,
    /// Step at which the solve failed; rows stop before it.
    pub diverged: Option<usize>,
}

impl<T: Real> RomTrajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.diverged.is_none()
    }

    /// Per-step Newton diagnostics as `step,iterations,residual` CSV.
    pub fn newton_csv(&self) -> String {
        let mut s = String::from("step,iterations,residual\n");
        for (k, (it, res)) in self.newton_iters.iter().zip(&self.newton_residuals).enumerate() {
            s.push_str(&format!("{},{},{:e}\n", k + 1, it, res));
        }
        s
    }
}

struct System<'a, T: Real> {
    spec: &'a RomModelSpec<T>,
    ops: &'a ReducedOperators<T>,
    r: usize,
    q: usize,
    np: usize,
    /// `ν(B + B_T) − τ Σ E^k`
    k_lin: DMatrix<T>,
    /// `τ Σ U_k D^k`
    f0: DVector<T>,
}

struct Eval<T: Real> {
    f: DVector<T>,
    jac: DMatrix<T>,
}

impl<'a, T: Real> System<'a, T> {
    fn new(spec: &'a RomModelSpec<T>, ops: &'a ReducedOperators<T>) -> Self {
        let r = ops.r();
        let tau = T::lit(spec.tau_pen);
        let mut k_lin = (&ops.b + &ops.b_t) * ops.nu;
        let mut f0 = DVector::zeros(r);
        for (k, e) in ops.e.iter().enumerate() {
            k_lin -= e * tau;
            f0 += &ops.d_k[k] * (tau * ops.u_bc[k]);
        }
        System {
            spec,
            ops,
            r,
            q: ops.q(),
            np: ops.n_physical,
            k_lin,
            f0,
        }
    }

    fn add_model(&self, model: &CorrectionModel<T>, a: &[T], b: &[T], f: &mut DVector<T>, jac: &mut DMatrix<T>, row0: usize, sign: T) {
        let val = model.eval(&a[..self.np], b);
        let (ja, jb) = model.jacobian(&a[..self.np], b);
        let out = val.len();
        for i in 0..out {
            f[row0 + i] += sign * val[i];
            for j in 0..ja.ncols() {
                jac[(row0 + i, j)] += sign * ja[(i, j)];
            }
            for j in 0..jb.ncols() {
                jac[(row0 + i, self.r + j)] += sign * jb[(i, j)];
            }
        }
    }

    /// Residual and Jacobian at `z = [a; b]` for time level `level`.
    fn eval(&self, z: &DVector<T>, alpha: T, hist: &DVector<T>, level: usize) -> Eval<T> {
        let (r, q) = (self.r, self.q);
        let ops = self.ops;
        let dt = T::lit(self.spec.dt);
        let a = z.rows(0, r).clone_owned();
        let b = z.rows(r, q).clone_owned();
        let (asl, bsl) = (a.as_slice(), b.as_slice());

        let mut f = DVector::zeros(r + q);
        let mut jac = DMatrix::zeros(r + q, r + q);

        // momentum: M(αa − h)/Δt − [K a + f0 − C(a,a) − H b + corrections]
        let mom = &ops.m * (&a * alpha - hist) / dt - (&self.k_lin * &a + &self.f0 - ops.c.contract(asl, asl) - &ops.h * &b);
        f.rows_mut(0, r).copy_from(&mom);
        let jaa = &ops.m * (alpha / dt) - &self.k_lin + ops.c.quadratic_jacobian(asl);
        jac.view_mut((0, 0), (r, r)).copy_from(&jaa);
        jac.view_mut((0, r), (r, q)).copy_from(&ops.h);
        for model in self.spec.momentum_models() {
            self.add_model(model, asl, bsl, &mut f, &mut jac, 0, -T::one());
        }
        if let Some(fm) = &self.spec.forcing.momentum {
            for i in 0..self.np {
                f[i] -= fm[(level, i)];
            }
        }

        match self.spec.formulation {
            Formulation::Sup => {
                let con = &ops.p * &a + &ops.p_bc;
                f.rows_mut(r, q).copy_from(&con);
                jac.view_mut((r, 0), (q, r)).copy_from(&ops.p);
            }
            Formulation::Ppe => {
                let ppe = ops.ppe.as_ref().expect("validated");
                let con = &ppe.d * &b + ppe.g.contract(asl, asl) - &ppe.n * &a * ops.nu - &ppe.l;
                f.rows_mut(r, q).copy_from(&con);
                let jba = ppe.g.quadratic_jacobian(asl) - &ppe.n * ops.nu;
                jac.view_mut((r, 0), (q, r)).copy_from(&jba);
                jac.view_mut((r, r), (q, q)).copy_from(&ppe.d);
            }
        }
        for model in self.spec.constraint_models() {
            self.add_model(model, asl, bsl, &mut f, &mut jac, r, T::one());
        }
        if let Some(fc) = &self.spec.forcing.constraint {
            for i in 0..q {
                f[r + i] += fc[(level, i)];
            }
        }
        Eval { f, jac }
    }
}

fn inf_norm<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Integrates either formulation from `(a0, b0)`.
pub fn solve_rom<T: Real>(spec: &RomModelSpec<T>, ops: &ReducedOperators<T>, a0: &DVector<T>, b0: &DVector<T>) -> Result<RomTrajectory<T>> {
    spec.validate(ops)?;
    let (r, q) = (ops.r(), ops.q());
    if a0.len() != r || b0.len() != q {
        return Err(RomError::shape("initial coefficients", format!("({r}, {q})"), format!("({}, {})", a0.len(), b0.len())));
    }
    let sys = System::new(spec, ops);
    let tol = T::tol(NEWTON_TOL);
    let a0_norm = a0.norm();

    let mut a_rows: Vec<DVector<T>> = vec![a0.clone()];
    let mut b_rows: Vec<DVector<T>> = vec![b0.clone()];
    let mut iters = Vec::with_capacity(spec.n_steps);
    let mut residuals = Vec::with_capacity(spec.n_steps);
    let mut diverged = None;
    let mut z = DVector::zeros(r + q);
    z.rows_mut(0, r).copy_from(a0);
    z.rows_mut(r, q).copy_from(b0);

    'steps: for step in 1..=spec.n_steps {
        let an = &a_rows[step - 1];
        let (alpha, hist) = match (spec.scheme, step) {
            (TimeScheme::Bdf2, s) if s >= 2 => (T::lit(1.5), an * T::lit(2.0) - &a_rows[step - 2] * T::lit(0.5)),
            _ => (T::one(), an.clone()),
        };
        let scale = T::one() + inf_norm(&(&ops.m * &hist)) / T::lit(spec.dt) + inf_norm(&sys.f0);
        let mut converged = false;
        let mut res = f64::INFINITY;
        let mut it = 0;
        while it < NEWTON_MAX_ITER {
            let ev = sys.eval(&z, alpha, &hist, step);
            let fnorm = inf_norm(&ev.f);
            res = (fnorm / scale).to_f64_lossy();
            if !fnorm.is_finite() {
                break;
            }
            if fnorm <= tol * scale {
                converged = true;
                break;
            }
            let Some(dz) = ev.jac.lu().solve(&(-&ev.f)) else {
                break;
            };
            if !dz.iter().all(|v| v.is_finite()) {
                break;
            }
            z += &dz;
            it += 1;
            if inf_norm(&dz) <= T::lit(16.0 * T::EPS) * (T::one() + inf_norm(&z)) {
                let ev = sys.eval(&z, alpha, &hist, step);
                res = (inf_norm(&ev.f) / scale).to_f64_lossy();
                converged = res.is_finite() && res <= 1e3 * tol.to_f64_lossy();
                break;
            }
        }
        iters.push(it);
        residuals.push(res);
        let a = z.rows(0, r).clone_owned();
        let blowup = a0_norm > T::zero() && a.norm() > T::lit(BLOWUP_FACTOR) * a0_norm;
        if !converged || blowup || !z.iter().all(|v| v.is_finite()) {
            diverged = Some(step);
            break 'steps;
        }
        a_rows.push(a);
        b_rows.push(z.rows(r, q).clone_owned());
    }

    let n = a_rows.len();
    let times = (0..n).map(|k| spec.t0 + k as f64 * spec.dt).collect();
    Ok(RomTrajectory {
        times,
        a: DMatrix::from_fn(n, r, |i, j| a_rows[i][j]),
        b: DMatrix::from_fn(n, q, |i, j| b_rows[i][j]),
        newton_iters: iters,
        newton_residuals: residuals,
        diverged,
    })
}

pub fn solve_sup_rom<T: Real>(spec: &RomModelSpec<T>, ops: &ReducedOperators<T>, a0: &DVector<T>, b0: &DVector<T>) -> Result<RomTrajectory<T>> {
    if spec.formulation != Formulation::Sup {
        return Err(RomError::Config("solve_sup_rom needs the supremizer formulation".into()));
    }
    solve_rom(spec, ops, a0, b0)
}

pub fn solve_ppe_rom<T: Real>(spec: &RomModelSpec<T>, ops: &ReducedOperators<T>, a0: &DVector<T>, b0: &DVector<T>) -> Result<RomTrajectory<T>> {
    if spec.formulation != Formulation::Ppe {
        return Err(RomError::Config("solve_ppe_rom needs the pressure-Poisson formulation".into()));
    }
    solve_rom(spec, ops, a0, b0)
}

/// Best-approximation coefficients of one velocity/pressure snapshot.
pub fn initial_coefficients<T: Real>(
    velocity_field: &[T],
    pressure_field: &[T],
    velocity: &EnrichedVelocityBasis<T>,
    pressure: &PodBasis<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    Ok((velocity.best_fit(velocity_field)?, pressure.project(pressure_field)?))
}
