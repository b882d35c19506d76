use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Which reduced coefficients feed a group of features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSpec {
    A,
    B,
    Ab,
}

impl InputSpec {
    pub fn dim(self, r: usize, q: usize) -> usize {
        match self {
            InputSpec::A => r,
            InputSpec::B => q,
            InputSpec::Ab => r + q,
        }
    }

    /// Position of each input in the concatenated `[a; b]` vector.
    pub fn indices(self, r: usize, q: usize) -> Vec<usize> {
        match self {
            InputSpec::A => (0..r).collect(),
            InputSpec::B => (r..r + q).collect(),
            InputSpec::Ab => (0..r + q).collect(),
        }
    }
}

/// Linear features of one input group followed by packed quadratic features
/// of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub linear: Option<InputSpec>,
    pub quadratic: Option<InputSpec>,
}

impl FeatureSpec {
    pub const fn linear(input: InputSpec) -> Self {
        FeatureSpec {
            linear: Some(input),
            quadratic: None,
        }
    }

    pub const fn full(input: InputSpec) -> Self {
        FeatureSpec {
            linear: Some(input),
            quadratic: Some(input),
        }
    }

    pub fn n_linear(&self, r: usize, q: usize) -> usize {
        self.linear.map_or(0, |s| s.dim(r, q))
    }

    pub fn n_quadratic(&self, r: usize, q: usize) -> usize {
        self.quadratic.map_or(0, |s| packed_len(s.dim(r, q)))
    }

    pub fn n_features(&self, r: usize, q: usize) -> usize {
        self.n_linear(r, q) + self.n_quadratic(r, q)
    }
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Pairs `(i, j)` with `j ≤ i`, in packing order.
pub fn packed_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(|i| (0..=i).map(move |j| (i, j)))
}

/// Feature vector of one `(a, b)` sample.
pub fn features<T: Real>(spec: &FeatureSpec, a: &[T], b: &[T]) -> Vec<T> {
    let (r, q) = (a.len(), b.len());
    let x = |k: usize| if k < r { a[k] } else { b[k - r] };
    let mut out = Vec::with_capacity(spec.n_features(r, q));
    if let Some(s) = spec.linear {
        out.extend(s.indices(r, q).into_iter().map(x));
    }
    if let Some(s) = spec.quadratic {
        let idx = s.indices(r, q);
        out.extend(packed_pairs(idx.len()).map(|(i, j)| x(idx[i]) * x(idx[j])));
    }
    out
}

/// Design matrix with one row per sample.
pub fn build_design_matrix<T: Real>(spec: &FeatureSpec, a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let rows = a.nrows().max(b.nrows());
    let (r, q) = (a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(rows, spec.n_features(r, q));
    let mut ai = vec![T::zero(); r];
    let mut bi = vec![T::zero(); q];
    for row in 0..rows {
        for k in 0..r {
            ai[k] = a[(row, k)];
        }
        for k in 0..q {
            bi[k] = b[(row, k)];
        }
        for (c, v) in features(spec, &ai, &bi).into_iter().enumerate() {
            out[(row, c)] = v;
        }
    }
    out
}

/// Jacobian of the feature map with respect to `[a; b]`.
pub fn feature_jacobian<T: Real>(spec: &FeatureSpec, a: &[T], b: &[T]) -> DMatrix<T> {
    let (r, q) = (a.len(), b.len());
    let x = |k: usize| if k < r { a[k] } else { b[k - r] };
    let mut jac = DMatrix::zeros(spec.n_features(r, q), r + q);
    let mut row = 0;
    if let Some(s) = spec.linear {
        for k in s.indices(r, q) {
            jac[(row, k)] = T::one();
            row += 1;
        }
    }
    if let Some(s) = spec.quadratic {
        let idx = s.indices(r, q);
        for (i, j) in packed_pairs(idx.len()) {
            let (gi, gj) = (idx[i], idx[j]);
            jac[(row, gi)] += x(gj);
            jac[(row, gj)] += x(gi);
            row += 1;
        }
    }
    jac
}
