use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::closure::exact::ExactCorrectionSeries;
use crate::closure::features::{build_design_matrix, feature_jacobian, features, packed_pairs, FeatureSpec, InputSpec};
use crate::error::{Result, RomError};
use crate::scalar::Real;

/// Fitted linear-plus-quadratic correction `f(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionModel<T> {
    pub features: FeatureSpec,
    /// Dimensions of the `a` and `b` inputs the model was fitted for.
    pub r: usize,
    pub q: usize,
    /// `out × n_linear`
    pub linear: DMatrix<T>,
    /// `out × n_quadratic`, packed over pairs `j ≤ i`.
    pub quadratic: Option<DMatrix<T>>,
    pub rank: usize,
    pub constrained: bool,
}

impl<T: Real> CorrectionModel<T> {
    pub fn zeros(features: FeatureSpec, r: usize, q: usize, out: usize) -> Self {
        CorrectionModel {
            features,
            r,
            q,
            linear: DMatrix::zeros(out, features.n_linear(r, q)),
            quadratic: features.quadratic.map(|_| DMatrix::zeros(out, features.n_quadratic(r, q))),
            rank: 0,
            constrained: false,
        }
    }

    fn from_coefficients(features: FeatureSpec, r: usize, q: usize, coef: &DMatrix<T>, rank: usize) -> Self {
        let nl = features.n_linear(r, q);
        let nq = features.n_quadratic(r, q);
        let ct = coef.transpose();
        CorrectionModel {
            features,
            r,
            q,
            linear: ct.columns(0, nl).clone_owned(),
            quadratic: features.quadratic.map(|_| ct.columns(nl, nq).clone_owned()),
            rank,
            constrained: false,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.linear.nrows()
    }

    /// Stacked `[linear | quadratic]` coefficients, `out × n_features`.
    pub fn coefficients(&self) -> DMatrix<T> {
        match &self.quadratic {
            None => self.linear.clone(),
            Some(qm) => {
                let (nl, nq) = (self.linear.ncols(), qm.ncols());
                let mut m = DMatrix::zeros(self.out_dim(), nl + nq);
                m.columns_mut(0, nl).copy_from(&self.linear);
                m.columns_mut(nl, nq).copy_from(qm);
                m
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.linear.iter().all(|v| *v == T::zero()) && self.quadratic.as_ref().is_none_or(|m| m.iter().all(|v| *v == T::zero()))
    }

    fn check_inputs(&self, a: &[T], b: &[T]) {
        assert!(a.len() >= self.r && b.len() >= self.q, "model inputs too short");
    }

    pub fn eval(&self, a: &[T], b: &[T]) -> DVector<T> {
        self.check_inputs(a, b);
        let f = DVector::from_vec(features(&self.features, &a[..self.r], &b[..self.q]));
        self.coefficients() * f
    }

    /// Derivatives with respect to `a[..r]` and `b[..q]`.
    pub fn jacobian(&self, a: &[T], b: &[T]) -> (DMatrix<T>, DMatrix<T>) {
        self.check_inputs(a, b);
        let j = self.coefficients() * feature_jacobian(&self.features, &a[..self.r], &b[..self.q]);
        (j.columns(0, self.r).clone_owned(), j.columns(self.r, self.q).clone_owned())
    }

    /// Predictions for every row of `a`, `b`.
    pub fn predict(&self, a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
        build_design_matrix(&self.features, a, b) * self.coefficients().transpose()
    }

    /// Rows `range` of the output.
    pub fn output_rows(&self, start: usize, len: usize) -> Self {
        CorrectionModel {
            features: self.features,
            r: self.r,
            q: self.q,
            linear: self.linear.rows(start, len).clone_owned(),
            quadratic: self.quadratic.as_ref().map(|m| m.rows(start, len).clone_owned()),
            rank: self.rank,
            constrained: self.constrained,
        }
    }
}

/// Thin SVD of a design matrix, reused across truncation ranks.
#[derive(Debug, Clone)]
pub struct TruncatedSvd<T: Real> {
    u: DMatrix<T>,
    sigma: Vec<T>,
    v: DMatrix<T>,
    rows: usize,
    cols: usize,
}

impl<T: Real> TruncatedSvd<T> {
    pub fn new(design: &DMatrix<T>) -> Result<Self> {
        if design.iter().any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("design matrix".into()));
        }
        let (rows, cols) = design.shape();
        if rows == 0 || cols == 0 {
            return Ok(TruncatedSvd {
                u: DMatrix::zeros(rows, 0),
                sigma: vec![],
                v: DMatrix::zeros(cols, 0),
                rows,
                cols,
            });
        }
        let svd = design.clone().svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
        let k = order.len();
        let mut us = DMatrix::zeros(rows, k);
        let mut vs = DMatrix::zeros(cols, k);
        let mut sigma = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            us.set_column(dst, &u.column(src));
            vs.set_column(dst, &vt.row(src).transpose());
            sigma.push(svd.singular_values[src]);
        }
        Ok(TruncatedSvd {
            u: us,
            sigma,
            v: vs,
            rows,
            cols,
        })
    }

    pub fn max_rank(&self) -> usize {
        self.rows.min(self.cols)
    }

    pub fn singular_values(&self) -> &[T] {
        &self.sigma
    }

    /// `n_features × out` minimum-norm solution from the leading `rank`
    /// singular triplets. Numerically zero singular values are skipped.
    pub fn solve(&self, targets: &DMatrix<T>, rank: usize) -> Result<DMatrix<T>> {
        if rank > self.max_rank() {
            return Err(RomError::RankOrder(format!("truncation rank {rank} exceeds {}", self.max_rank())));
        }
        if targets.nrows() != self.rows {
            return Err(RomError::shape("fit targets", self.rows, targets.nrows()));
        }
        let mut coef = DMatrix::zeros(self.cols, targets.ncols());
        let floor = self.sigma.first().copied().unwrap_or_else(T::zero) * T::lit(T::EPS * self.rows.max(self.cols) as f64);
        for k in 0..rank {
            let s = self.sigma[k];
            if !(s > floor) {
                break;
            }
            let proj = targets.tr_mul(&self.u.column(k)) / s;
            coef += self.v.column(k) * proj.transpose();
        }
        Ok(coef)
    }
}

pub fn residual<T: Real>(design: &DMatrix<T>, coef: &DMatrix<T>, targets: &DMatrix<T>) -> T {
    (design * coef - targets).norm()
}

/// A prepared least-squares problem for one correction ansatz.
#[derive(Debug, Clone)]
pub struct FitProblem<T: Real> {
    pub features: FeatureSpec,
    pub r: usize,
    pub q: usize,
    pub design: DMatrix<T>,
    pub targets: DMatrix<T>,
    svd: TruncatedSvd<T>,
}

impl<T: Real> FitProblem<T> {
    pub fn new(features: FeatureSpec, a: &DMatrix<T>, b: &DMatrix<T>, targets: &DMatrix<T>) -> Result<Self> {
        let design = build_design_matrix(&features, a, b);
        if targets.nrows() != design.nrows() {
            return Err(RomError::shape("fit targets", design.nrows(), targets.nrows()));
        }
        let svd = TruncatedSvd::new(&design)?;
        Ok(FitProblem {
            features,
            r: a.ncols(),
            q: b.ncols(),
            design,
            targets: targets.clone(),
            svd,
        })
    }

    pub fn max_rank(&self) -> usize {
        self.svd.max_rank()
    }

    pub fn fit(&self, rank: usize) -> Result<CorrectionModel<T>> {
        let coef = self.svd.solve(&self.targets, rank)?;
        Ok(CorrectionModel::from_coefficients(self.features, self.r, self.q, &coef, rank))
    }

    pub fn fit_constrained(&self, rank: usize) -> Result<CorrectionModel<T>> {
        project_constraints(self.fit(rank)?)
    }

    pub fn residual(&self, model: &CorrectionModel<T>) -> T {
        residual(&self.design, &model.coefficients().transpose(), &self.targets)
    }
}

/// Truncated least squares of `targets ≈ design · O`.
pub fn fit_truncated_lsq<T: Real>(design: &DMatrix<T>, targets: &DMatrix<T>, rank: usize) -> Result<DMatrix<T>> {
    TruncatedSvd::new(design)?.solve(targets, rank)
}

/// Projects a velocity model `Ã a + aᵀ B̃ a` onto the set where the
/// symmetric part of `Ã` is negative semidefinite and the cubic form
/// `aᵀ(aᵀ B̃ a)` vanishes.
pub fn project_constraints<T: Real>(mut model: CorrectionModel<T>) -> Result<CorrectionModel<T>> {
    let r = model.r;
    if model.features != FeatureSpec::full(InputSpec::A) || model.out_dim() != r {
        return Err(RomError::Config("constrained fits need a square model over a with quadratic terms".into()));
    }
    let a = &model.linear;
    let sym = (a + a.transpose()) * T::lit(0.5);
    let skew = (a - a.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.min(T::zero()));
    let neg = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    model.linear = skew + (&neg + neg.transpose()) * T::lit(0.5);

    let qm = model.quadratic.as_mut().expect("full features include quadratic terms");
    let mut t = vec![T::zero(); r * r * r];
    let idx = |i: usize, j: usize, k: usize| (i * r + j) * r + k;
    for i in 0..r {
        for (p, (j, k)) in packed_pairs(r).enumerate() {
            let v = qm[(i, p)];
            if j == k {
                t[idx(i, j, j)] = v;
            } else {
                t[idx(i, j, k)] = v * T::lit(0.5);
                t[idx(i, k, j)] = v * T::lit(0.5);
            }
        }
    }
    let sixth = T::lit(1.0 / 6.0);
    let mut proj = t.clone();
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                let s = (t[idx(i, j, k)] + t[idx(i, k, j)] + t[idx(j, i, k)] + t[idx(j, k, i)] + t[idx(k, i, j)] + t[idx(k, j, i)]) * sixth;
                proj[idx(i, j, k)] = t[idx(i, j, k)] - s;
            }
        }
    }
    for i in 0..r {
        for (p, (j, k)) in packed_pairs(r).enumerate() {
            qm[(i, p)] = if j == k { proj[idx(i, j, j)] } else { proj[idx(i, j, k)] + proj[idx(i, k, j)] };
        }
    }
    model.constrained = true;
    Ok(model)
}

/// Unconstrained (`constrained = false`) or projected velocity fit.
pub fn fit_velocity<T: Real>(a_r: &DMatrix<T>, tau_u: &ExactCorrectionSeries<T>, rank: usize, constrained: bool) -> Result<CorrectionModel<T>> {
    let b = DMatrix::zeros(a_r.nrows(), 0);
    let p = FitProblem::new(FeatureSpec::full(InputSpec::A), a_r, &b, &tau_u.values)?;
    if constrained {
        p.fit_constrained(rank)
    } else {
        p.fit(rank)
    }
}

/// `fit_truncated_lsq` followed by the constraint projection.
pub fn fit_constrained<T: Real>(a_r: &DMatrix<T>, tau_u: &ExactCorrectionSeries<T>, rank: usize) -> Result<CorrectionModel<T>> {
    fit_velocity(a_r, tau_u, rank, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureFitMode {
    Separate,
    Joint,
}

/// Linear models `τ_p1 ≈ H̃ b` (`r × q`) and `τ_p2 ≈ P̃ a` (`q × r`).
///
/// The joint mode solves both blocks as one block-diagonal least-squares
/// problem sharing a single truncation rank.
pub fn fit_pressure_sup<T: Real>(
    mode: PressureFitMode,
    tau_p1: &ExactCorrectionSeries<T>,
    tau_p2: &ExactCorrectionSeries<T>,
    a_r: &DMatrix<T>,
    b_q: &DMatrix<T>,
    rank: usize,
) -> Result<(CorrectionModel<T>, CorrectionModel<T>)> {
    let (r, q, m) = (a_r.ncols(), b_q.ncols(), a_r.nrows());
    if tau_p1.values.shape() != (m, r) || tau_p2.values.shape() != (m, q) {
        return Err(RomError::shape("pressure correction series", format!("({m}, {r}) and ({m}, {q})"), format!("{:?} and {:?}", tau_p1.values.shape(), tau_p2.values.shape())));
    }
    let spec_h = FeatureSpec::linear(InputSpec::B);
    let spec_p = FeatureSpec::linear(InputSpec::A);
    match mode {
        PressureFitMode::Separate => {
            let h = FitProblem::new(spec_h, a_r, b_q, &tau_p1.values)?.fit(rank)?;
            let p = FitProblem::new(spec_p, a_r, b_q, &tau_p2.values)?.fit(rank)?;
            Ok((h, p))
        }
        PressureFitMode::Joint => {
            let mut design = DMatrix::zeros(2 * m, q + r);
            design.view_mut((0, 0), (m, q)).copy_from(b_q);
            design.view_mut((m, q), (m, r)).copy_from(a_r);
            let mut targets = DMatrix::zeros(2 * m, r + q);
            targets.view_mut((0, 0), (m, r)).copy_from(&tau_p1.values);
            targets.view_mut((m, r), (m, q)).copy_from(&tau_p2.values);
            let coef = fit_truncated_lsq(&design, &targets, rank)?;
            let mut h = CorrectionModel::zeros(spec_h, r, q, r);
            h.linear = coef.view((0, 0), (q, r)).transpose();
            h.rank = rank;
            let mut p = CorrectionModel::zeros(spec_p, r, q, q);
            p.linear = coef.view((q, r), (r, q)).transpose();
            p.rank = rank;
            Ok((h, p))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpeFitCase {
    DLinear,
    DQuadratic,
    G,
    JointCase1,
    JointCase2,
    JointCase3,
}

impl PpeFitCase {
    pub fn features(self) -> FeatureSpec {
        match self {
            PpeFitCase::DLinear => FeatureSpec::linear(InputSpec::B),
            PpeFitCase::DQuadratic => FeatureSpec::full(InputSpec::B),
            PpeFitCase::G => FeatureSpec::full(InputSpec::A),
            PpeFitCase::JointCase1 => FeatureSpec {
                linear: Some(InputSpec::B),
                quadratic: Some(InputSpec::A),
            },
            PpeFitCase::JointCase2 | PpeFitCase::JointCase3 => FeatureSpec::full(InputSpec::Ab),
        }
    }
}

/// Exact series a PPE case is fitted against.
pub struct PpeSeries<'a, T> {
    pub tau_u: Option<&'a ExactCorrectionSeries<T>>,
    pub tau_d: &'a ExactCorrectionSeries<T>,
    pub tau_g: &'a ExactCorrectionSeries<T>,
}

pub fn ppe_targets<T: Real>(case: PpeFitCase, s: &PpeSeries<'_, T>) -> Result<DMatrix<T>> {
    use crate::closure::exact::CorrectionTarget as Tg;
    Ok(match case {
        PpeFitCase::DLinear | PpeFitCase::DQuadratic => s.tau_d.values.clone(),
        PpeFitCase::G => s.tau_g.values.clone(),
        PpeFitCase::JointCase1 | PpeFitCase::JointCase2 => s.tau_d.sum(s.tau_g, Tg::TauDg)?.values,
        PpeFitCase::JointCase3 => {
            let tu = s.tau_u.ok_or_else(|| RomError::Config("joint case 3 needs the velocity correction series".into()))?;
            tu.concat(&s.tau_d.sum(s.tau_g, Tg::TauDg)?, Tg::TauUDg)?.values
        }
    })
}

/// Least-squares problem of one PPE correction case.
pub fn ppe_problem<T: Real>(case: PpeFitCase, s: &PpeSeries<'_, T>, a_r: &DMatrix<T>, b_q: &DMatrix<T>) -> Result<FitProblem<T>> {
    FitProblem::new(case.features(), a_r, b_q, &ppe_targets(case, s)?)
}

/// Fits a PPE case. Case 3 returns the joint model; split it with
/// [`split_joint`].
pub fn fit_ppe<T: Real>(case: PpeFitCase, s: &PpeSeries<'_, T>, a_r: &DMatrix<T>, b_q: &DMatrix<T>, rank: usize) -> Result<CorrectionModel<T>> {
    ppe_problem(case, s, a_r, b_q)?.fit(rank)
}

/// Splits a case-3 model into its momentum (`r` rows) and Poisson parts.
pub fn split_joint<T: Real>(model: &CorrectionModel<T>) -> (CorrectionModel<T>, CorrectionModel<T>) {
    let r = model.r;
    (model.output_rows(0, r), model.output_rows(r, model.out_dim() - r))
}

/// Candidate truncation ranks: every rank up to 20, then every fifth,
/// capped at `max_rank`.
pub fn rank_grid(max_rank: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..=max_rank.min(20)).collect();
    let mut k = 25;
    while k <= max_rank {
        g.push(k);
        k += 5;
    }
    if *g.last().unwrap() != max_rank {
        g.push(max_rank);
    }
    g
}

/// Metric of one candidate rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankScore {
    pub rank: usize,
    #[serde(with = "crate::scalar::serde_f64")]
    pub metric: f64,
}

/// Fits and scores every candidate rank and returns the minimiser.
///
/// Candidates whose fit or evaluation fails score `+∞`. Ties go to the
/// smallest rank. Evaluation runs on the current rayon pool.
pub fn select_optimal_rank<M, F, R>(candidates: &[usize], fit: F, score: R) -> Result<(usize, M, Vec<RankScore>)>
where
    M: Send,
    F: Fn(usize) -> Result<M> + Sync,
    R: Fn(&M) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    if !candidates.contains(&0) {
        return Err(RomError::Config("rank candidates must include 0".into()));
    }
    let results: Vec<(usize, Option<M>, f64)> = candidates
        .par_iter()
        .map(|&rank| match fit(rank) {
            Ok(m) => {
                let s = score(&m).ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);
                (rank, Some(m), s)
            }
            Err(_) => (rank, None, f64::INFINITY),
        })
        .collect();
    let scores: Vec<RankScore> = results.iter().map(|(rank, _, metric)| RankScore { rank: *rank, metric: *metric }).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, (rank, model, metric)) in results.iter().enumerate() {
        if model.is_none() {
            continue;
        }
        let better = match best {
            None => true,
            Some((bi, bm)) => *metric < bm || (*metric == bm && *rank < results[bi].0),
        };
        if better {
            best = Some((i, *metric));
        }
    }
    let (idx, _) = best.ok_or_else(|| RomError::Config("no candidate rank produced a model".into()))?;
    let (rank, model, _) = results.into_iter().nth(idx).unwrap();
    Ok((rank, model.unwrap(), scores))
}
