mod common;

use common::{channel_grid, periodic_grid, random_matrix, rng, Across, Oracle, STEPS};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use romlab::fom::{DiscreteOps, Grid};
use romlab::pod::{compute_pod, cumulative_energy, supremizer_snapshots, weighted_gram, BasisKind, EnrichedVelocityBasis};
use romlab::RomError;

fn random_weights(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(0.5..2.0)).collect()
}

#[test]
fn eigenvalues_match_weighted_svd() {
    let s = random_matrix(&mut rng(1), 200, 20);
    let w = random_weights(2, 200);
    let pod = compute_pod(&s, &w, 20, BasisKind::Velocity).unwrap();
    // Squared singular values of W^{1/2} S, computed without forming the Gram matrix.
    let ws = DMatrix::from_fn(200, 20, |i, j| w[i].sqrt() * s[(i, j)]);
    let mut sv: Vec<f64> = ws.svd(false, false).singular_values.iter().map(|x| x * x).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (k, (got, want)) in pod.eigenvalues.iter().zip(&sv).enumerate() {
        assert!((got - want).abs() <= 1e-10 * want, "λ_{k}: {got} vs {want}");
    }
    assert!(pod.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
}

#[test]
fn modes_are_weighted_orthonormal() {
    let s = random_matrix(&mut rng(3), 150, 12);
    let w = random_weights(4, 150);
    let pod = compute_pod(&s, &w, 8, BasisKind::Pressure).unwrap();
    let g = weighted_gram(&pod.modes, &pod.modes, &w);
    let off = (g - DMatrix::identity(8, 8)).abs().max();
    assert!(off <= 1e-10, "orthonormality defect {off:e}");
    assert!(pod.orthonormality_defect() <= 1e-10);
}

#[test]
fn spectrum_conserves_snapshot_energy() {
    let s = random_matrix(&mut rng(5), 120, 15);
    let w = random_weights(6, 120);
    let pod = compute_pod(&s, &w, 3, BasisKind::Velocity).unwrap();
    let energy: f64 = (0..15).map(|j| (0..120).map(|i| w[i] * s[(i, j)] * s[(i, j)]).sum::<f64>()).sum();
    let total: f64 = pod.spectrum.iter().sum();
    assert!((total - energy).abs() <= 1e-8 * energy);
    let cum = cumulative_energy(&pod.spectrum);
    assert!((cum.last().unwrap() - 1.0).abs() <= 1e-12);
    assert!(cum.windows(2).all(|p| p[0] <= p[1]));
}

#[test]
fn full_basis_reconstructs_snapshots_and_projection_is_bessel() {
    let s = random_matrix(&mut rng(7), 60, 6);
    let w = random_weights(8, 60);
    let full = compute_pod(&s, &w, 6, BasisKind::Velocity).unwrap();
    for j in 0..6 {
        let col = s.column(j).clone_owned();
        let c = full.project(col.as_slice()).unwrap();
        let back = full.reconstruct(c.as_slice()).unwrap();
        let err = back.iter().zip(col.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "reconstruction error {err:e}");
    }
    let norm = |v: &[f64]| v.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>().sqrt();
    let field: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut prev = 0.0;
    for n in 1..=6 {
        let b = full.truncate(n).unwrap();
        let p = b.reconstruct(b.project(&field).unwrap().as_slice()).unwrap();
        let np = norm(&p);
        assert!(np <= norm(&field) * (1.0 + 1e-12));
        assert!(np >= prev - 1e-12, "projection norm must grow with the mode count");
        prev = np;
    }
}

#[test]
fn rank_deficient_requests_are_rejected() {
    let base = random_matrix(&mut rng(9), 40, 2);
    let mix = random_matrix(&mut rng(10), 2, 8);
    let s = &base * mix;
    let w = vec![1.0; 40];
    assert!(compute_pod(&s, &w, 2, BasisKind::Velocity).is_ok());
    match compute_pod(&s, &w, 3, BasisKind::Velocity) {
        Err(RomError::RankDeficient { requested: 3, available: 2 }) => {}
        other => panic!("expected a rank error, got {other:?}"),
    }
}

/// Dense five-point Laplacian with zero Dirichlet data on every
/// non-periodic face, assembled from the oracle's face resolution.
fn dense_dirichlet_laplacian(g: &Grid) -> DMatrix<f64> {
    let o = Oracle::new(g);
    let n = g.n_fluid();
    let mut a = DMatrix::zeros(n, n);
    for (i, j) in o.fluid_cells() {
        let row = g.dof(i, j).unwrap();
        for s in STEPS {
            let h = if s.0 != 0 { g.dx } else { g.dy };
            let k = 1.0 / (h * h);
            a[(row, row)] -= k;
            match o.across(i, j, s) {
                Across::Cell(ii, jj) => a[(row, g.dof(ii, jj).unwrap())] += k,
                Across::Wall { .. } | Across::Outlet => a[(row, row)] -= k,
            }
        }
    }
    a
}

fn check_supremizer(g: Grid) {
    let o = Oracle::new(&g);
    let n = g.n_fluid();
    let p = DMatrix::from_fn(n, 2, |k, j| {
        let (x, y) = g.center(k);
        if j == 0 {
            x
        } else {
            (x * y).sin()
        }
    });
    let ops = DiscreteOps::<f64>::new(&g);
    let s = supremizer_snapshots(&p, &g, &ops.grad).unwrap();
    let lu = dense_dirichlet_laplacian(&g).lu();
    for j in 0..2 {
        let grad = o.gradient(p.column(j).as_slice());
        for comp in 0..2 {
            let rhs = DVector::from_iterator(n, grad[comp * n..(comp + 1) * n].iter().map(|v| -v));
            let want = lu.solve(&rhs).unwrap();
            let got = s.view((comp * n, j), (n, 1));
            let err = (got - &want).abs().max() / want.abs().max().max(1e-300);
            assert!(err <= 1e-8, "supremizer column {j} component {comp}: relative error {err:e}");
        }
    }
}

#[test]
fn supremizers_match_dense_solve_on_channel() {
    check_supremizer(channel_grid());
}

#[test]
fn supremizers_match_dense_solve_on_periodic_strip() {
    check_supremizer(periodic_grid());
}

#[test]
fn enriched_best_fit_recovers_span_members() {
    let g = channel_grid();
    let n = g.n_fluid();
    let w = vec![g.cell_area(); 2 * n];
    let v = compute_pod(&random_matrix(&mut rng(11), 2 * n, 5), &w, 3, BasisKind::Velocity).unwrap();
    let sup = compute_pod(&random_matrix(&mut rng(12), 2 * n, 4), &w, 2, BasisKind::Supremizer).unwrap();
    let e = EnrichedVelocityBasis::new(v, Some(sup)).unwrap();
    let c = [0.3, -1.2, 0.5, 2.0, -0.7];
    let u = e.reconstruct(&c).unwrap();
    let fit = e.best_fit(&u).unwrap();
    for (a, b) in fit.iter().zip(c) {
        assert!((a - b).abs() <= 1e-10);
    }
    let m = e.mass_matrix();
    assert!((m.view((0, 0), (3, 3)) - DMatrix::identity(3, 3)).abs().max() <= 1e-10);
    assert!((m.view((3, 3), (2, 2)) - DMatrix::identity(2, 2)).abs().max() <= 1e-10);
}
