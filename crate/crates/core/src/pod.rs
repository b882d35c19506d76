//! Proper orthogonal decomposition by the method of snapshots, supremizer
//! snapshots and the projection filter.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::fom::{poisson_solve, Field, Grid, PoissonBc};
use crate::linalg::Csr;
use crate::scalar::Real;

/// Relative eigenvalue floor below which a mode is numerically absent.
pub const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Velocity,
    Pressure,
    Supremizer,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Velocity => "velocity",
            BasisKind::Pressure => "pressure",
            BasisKind::Supremizer => "supremizer",
        }
    }
}

/// Weighted-orthonormal modes with their POD eigenvalues.
#[derive(Debug, Clone)]
pub struct PodBasis<T> {
    /// `dof × n_modes`
    pub modes: DMatrix<T>,
    /// Eigenvalues of the retained modes, non-increasing.
    pub eigenvalues: Vec<T>,
    /// Full clamped spectrum of the snapshot Gram matrix.
    pub spectrum: Vec<T>,
    /// Quadrature weight per dof.
    pub weights: Vec<T>,
    pub kind: BasisKind,
}

/// `(x, y)_w`
pub fn weighted_dot<T: Real>(w: &[T], x: &[T], y: &[T]) -> T {
    w.iter()
        .zip(x.iter().zip(y))
        .fold(T::zero(), |acc, (&wi, (&a, &b))| acc + wi * a * b)
}

fn check_weights<T: Real>(w: &[T], dof: usize) -> Result<()> {
    if w.len() != dof {
        return Err(RomError::shape("weights", dof, w.len()));
    }
    if w.iter().any(|&x| !(x > T::zero()) || !x.is_finite()) {
        return Err(RomError::Config("weights must be positive and finite".into()));
    }
    Ok(())
}

/// Two-pass modified Gram–Schmidt in the weighted inner product.
fn orthonormalize<T: Real>(modes: &mut DMatrix<T>, w: &[T]) {
    for j in 0..modes.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let c = weighted_dot(w, modes.column(i).as_slice(), modes.column(j).as_slice());
                let ci = modes.column(i).clone_owned();
                modes.column_mut(j).axpy(-c, &ci, T::one());
            }
        }
        let nrm = weighted_dot(w, modes.column(j).as_slice(), modes.column(j).as_slice()).sqrt();
        modes.column_mut(j).scale_mut(T::one() / nrm);
    }
}

/// Weighted Gram matrix `Xᵀ W Y`.
pub fn weighted_gram<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>, w: &[T]) -> DMatrix<T> {
    let mut wy = y.clone();
    for (r, &wr) in w.iter().enumerate() {
        wy.row_mut(r).scale_mut(wr);
    }
    x.transpose() * wy
}

/// POD of the columns of `snapshots` keeping `n_modes` modes.
pub fn compute_pod<T: Real>(snapshots: &DMatrix<T>, weights: &[T], n_modes: usize, kind: BasisKind) -> Result<PodBasis<T>> {
    check_weights(weights, snapshots.nrows())?;
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(RomError::NonFinite("snapshot matrix".into()));
    }
    let gram = weighted_gram(snapshots, snapshots, weights);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lambda1 = order.first().map_or(T::zero(), |&i| eig.eigenvalues[i]).max(T::zero());
    let floor = T::tol(RANK_CUTOFF) * lambda1;
    let spectrum: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero())).collect();
    let rank = if lambda1 > T::zero() {
        spectrum.iter().take_while(|&&l| l > floor).count()
    } else {
        0
    };
    if n_modes > rank {
        return Err(RomError::RankDeficient {
            requested: n_modes,
            available: rank,
        });
    }

    let mut modes = DMatrix::zeros(snapshots.nrows(), n_modes);
    for (j, &idx) in order.iter().take(n_modes).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let col = snapshots * v / spectrum[j].sqrt();
        modes.set_column(j, &col);
    }
    orthonormalize(&mut modes, weights);
    Ok(PodBasis {
        modes,
        eigenvalues: spectrum[..n_modes].to_vec(),
        spectrum,
        weights: weights.to_vec(),
        kind,
    })
}

impl<T: Real> PodBasis<T> {
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    pub fn dof(&self) -> usize {
        self.modes.nrows()
    }

    /// Leading `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n > self.n_modes() {
            return Err(RomError::RankOrder(format!("cannot take {n} of {} modes", self.n_modes())));
        }
        Ok(PodBasis {
            modes: self.modes.columns(0, n).clone_owned(),
            eigenvalues: self.eigenvalues[..n].to_vec(),
            spectrum: self.spectrum.clone(),
            weights: self.weights.clone(),
            kind: self.kind,
        })
    }

    /// `c_i = (field, mode_i)_w`
    pub fn project(&self, field: &[T]) -> Result<DVector<T>> {
        if field.len() != self.dof() {
            return Err(RomError::shape("projected field", self.dof(), field.len()));
        }
        Ok(DVector::from_fn(self.n_modes(), |i, _| {
            weighted_dot(&self.weights, self.modes.column(i).as_slice(), field)
        }))
    }

    /// Projection coefficients of every column of `snapshots`, one row per column.
    pub fn project_columns(&self, snapshots: &DMatrix<T>) -> Result<DMatrix<T>> {
        if snapshots.nrows() != self.dof() {
            return Err(RomError::shape("projected snapshots", self.dof(), snapshots.nrows()));
        }
        Ok(weighted_gram(snapshots, &self.modes, &self.weights))
    }

    /// `Σ c_i mode_i`
    pub fn reconstruct(&self, coefficients: &[T]) -> Result<Vec<T>> {
        if coefficients.len() != self.n_modes() {
            return Err(RomError::shape("coefficients", self.n_modes(), coefficients.len()));
        }
        let mut out = DVector::zeros(self.dof());
        for (i, &c) in coefficients.iter().enumerate() {
            out.axpy(c, &self.modes.column(i), T::one());
        }
        Ok(out.data.into())
    }

    /// Largest off-diagonal deviation of `modesᵀ W modes` from identity.
    pub fn orthonormality_defect(&self) -> T {
        let g = weighted_gram(&self.modes, &self.modes, &self.weights);
        let mut worst = T::zero();
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Supremizer snapshots: per pressure column, solves `Δs = −∇p`
/// componentwise with homogeneous Dirichlet data on every boundary.
pub fn supremizer_snapshots<T: Real>(pressure: &DMatrix<T>, grid: &Grid, grad: &Csr<T>) -> Result<DMatrix<T>> {
    let n = grid.n_fluid();
    if pressure.nrows() != n {
        return Err(RomError::shape("pressure snapshots", n, pressure.nrows()));
    }
    let mut out = DMatrix::zeros(2 * n, pressure.ncols());
    for j in 0..pressure.ncols() {
        let g = grad.apply(pressure.column(j).as_slice());
        for comp in 0..2 {
            let rhs = Field::scalar(g[comp * n..(comp + 1) * n].iter().map(|&v| -v).collect());
            let s = poisson_solve(grid, &rhs, PoissonBc::DirichletZero)?;
            out.view_mut((comp * n, j), (n, 1)).copy_from_slice(&s.values);
        }
    }
    Ok(out)
}

/// Velocity modes followed by supremizer modes; each block is orthonormal on
/// its own, the cross block generally is not.
#[derive(Debug, Clone)]
pub struct EnrichedVelocityBasis<T> {
    pub pod_part: PodBasis<T>,
    pub sup_part: Option<PodBasis<T>>,
}

impl<T: Real> EnrichedVelocityBasis<T> {
    pub fn new(pod_part: PodBasis<T>, sup_part: Option<PodBasis<T>>) -> Result<Self> {
        if let Some(s) = &sup_part {
            if s.dof() != pod_part.dof() {
                return Err(RomError::shape("supremizer modes", pod_part.dof(), s.dof()));
            }
        }
        Ok(EnrichedVelocityBasis { pod_part, sup_part })
    }

    pub fn n_physical(&self) -> usize {
        self.pod_part.n_modes()
    }

    pub fn n_modes(&self) -> usize {
        self.n_physical() + self.sup_part.as_ref().map_or(0, |s| s.n_modes())
    }

    pub fn weights(&self) -> &[T] {
        &self.pod_part.weights
    }

    pub fn modes(&self) -> DMatrix<T> {
        match &self.sup_part {
            None => self.pod_part.modes.clone(),
            Some(s) => {
                let (dof, nu) = (self.pod_part.dof(), self.n_physical());
                let mut m = DMatrix::zeros(dof, self.n_modes());
                m.columns_mut(0, nu).copy_from(&self.pod_part.modes);
                m.columns_mut(nu, s.n_modes()).copy_from(&s.modes);
                m
            }
        }
    }

    pub fn mass_matrix(&self) -> DMatrix<T> {
        let m = self.modes();
        weighted_gram(&m, &m, self.weights())
    }

    /// Coefficients of the weighted-L² best approximation in the span.
    pub fn best_fit(&self, field: &[T]) -> Result<DVector<T>> {
        let m = self.modes();
        if field.len() != m.nrows() {
            return Err(RomError::shape("projected field", m.nrows(), field.len()));
        }
        let rhs = DVector::from_fn(m.ncols(), |i, _| weighted_dot(self.weights(), m.column(i).as_slice(), field));
        let mass = weighted_gram(&m, &m, self.weights());
        mass.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| RomError::NonFinite("enriched mass matrix is not positive definite".into()))
    }

    pub fn reconstruct(&self, coefficients: &[T]) -> Result<Vec<T>> {
        let m = self.modes();
        if coefficients.len() != m.ncols() {
            return Err(RomError::shape("coefficients", m.ncols(), coefficients.len()));
        }
        Ok((m * DVector::from_column_slice(coefficients)).data.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub kind: BasisKind,
    pub k: usize,
    pub fraction: f64,
}

/// Cumulative retained-energy fraction per basis and mode count.
pub fn eigen_decay_report<T: Real>(bases: &[&PodBasis<T>]) -> Vec<DecayRow> {
    let mut rows = Vec::new();
    for b in bases {
        for (k, fraction) in cumulative_energy(&b.spectrum).into_iter().enumerate() {
            rows.push(DecayRow {
                kind: b.kind,
                k: k + 1,
                fraction,
            });
        }
    }
    rows
}

pub fn cumulative_energy<T: Real>(spectrum: &[T]) -> Vec<f64> {
    let total: f64 = spectrum.iter().map(|l| l.to_f64_lossy()).sum();
    let mut acc = 0.0;
    spectrum
        .iter()
        .map(|l| {
            acc += l.to_f64_lossy();
            if total > 0.0 {
                acc / total
            } else {
                1.0
            }
        })
        .collect()
}

/// Mode-count range whose retained fraction lies in `[0.9, 0.999]`.
pub fn marginal_band(fractions: &[f64]) -> Option<(usize, usize)> {
    let ks: Vec<usize> = fractions
        .iter()
        .enumerate()
        .filter(|(_, &f)| (0.9..=0.999).contains(&f))
        .map(|(k, _)| k + 1)
        .collect();
    Some((*ks.first()?, *ks.last()?))
}

pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut s = String::from("kind,k,fraction\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.17e}\n", r.kind.name(), r.k, r.fraction));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn repeated_snapshot_has_rank_one() {
        let f = random(30, 1, 1);
        let s = DMatrix::from_fn(30, 5, |i, _| f[(i, 0)]);
        let w = vec![0.5; 30];
        let b = compute_pod(&s, &w, 1, BasisKind::Velocity).unwrap();
        let nrm2 = weighted_dot(&w, f.as_slice(), f.as_slice());
        assert!((b.eigenvalues[0] - 5.0 * nrm2).abs() < 1e-12 * nrm2);
        assert!(b.spectrum[1] <= 1e-12 * b.spectrum[0]);
        assert!(matches!(
            compute_pod(&s, &w, 2, BasisKind::Velocity),
            Err(RomError::RankDeficient { available: 1, .. })
        ));
    }

    #[test]
    fn projection_filter_round_trips() {
        let s = random(40, 8, 2);
        let w: Vec<f64> = (0..40).map(|i| 0.5 + (i % 3) as f64 * 0.25).collect();
        let b = compute_pod(&s, &w, 6, BasisKind::Pressure).unwrap();
        assert!(b.orthonormality_defect() < 1e-12);
        let c = b.project(b.modes.column(2).as_slice()).unwrap();
        for i in 0..6 {
            let e = if i == 2 { 1.0 } else { 0.0 };
            assert!((c[i] - e).abs() < 1e-10);
        }
        let coeffs = [0.3, -1.0, 2.0, 0.0, 0.5, 0.25];
        let back = b.project(&b.reconstruct(&coeffs).unwrap()).unwrap();
        for i in 0..6 {
            assert!((back[i] - coeffs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn decay_fractions() {
        let b = PodBasis {
            modes: DMatrix::<f64>::zeros(1, 0),
            eigenvalues: vec![],
            spectrum: vec![2.0, 2.0, 2.0, 2.0],
            weights: vec![1.0],
            kind: BasisKind::Velocity,
        };
        let rows = eigen_decay_report(&[&b]);
        for (k, r) in rows.iter().enumerate() {
            assert!((r.fraction - (k + 1) as f64 / 4.0).abs() < 1e-15);
        }
        assert_eq!(marginal_band(&[0.5, 0.92, 0.99, 0.9995, 1.0]), Some((2, 3)));
        assert!(decay_csv(&rows).starts_with("kind,k,fraction\nvelocity,1,"));
    }
}
