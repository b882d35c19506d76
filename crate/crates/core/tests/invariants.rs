//! Property checks over randomized inputs.

mod common;

use common::{random_matrix, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use romlab::closure::{rank_grid, select_optimal_rank, FeatureSpec, FitProblem, InputSpec};
use romlab::fom::{BoundarySpec, DiscreteOps, Grid};
use romlab::linalg::Tensor3;
use romlab::metrics::summed_l2_metric;
use romlab::operators::ReducedOperators;
use romlab::pod::{compute_pod, supremizer_snapshots, BasisKind};
use romlab::rom::{solve_rom, Formulation, RomModelSpec, TimeScheme};
use romlab::RomError;

fn walled_grid() -> Grid {
    Grid::new(10, 8, 0.3, 0.25, BoundarySpec::walls()).unwrap().with_solid_block(3, 5, 2, 4).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lsq_residual_is_non_increasing_in_rank(seed in 0u64..10_000, rows in 12usize..30) {
        let a = random_matrix(&mut rng(seed), rows, 3);
        let b = random_matrix(&mut rng(seed + 1), rows, 2);
        let t = random_matrix(&mut rng(seed + 2), rows, 3);
        let p = FitProblem::new(FeatureSpec::full(InputSpec::A), &a, &b, &t).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=p.max_rank() {
            let res = p.residual(&p.fit(k).unwrap());
            prop_assert!(res <= prev * (1.0 + 1e-12) + 1e-14, "rank {}: {} > {}", k, res, prev);
            prev = res;
        }
    }

    #[test]
    fn constrained_fits_are_feasible(seed in 0u64..10_000, rank in 0usize..9) {
        let r = 3;
        let a = random_matrix(&mut rng(seed), 25, r);
        let t = random_matrix(&mut rng(seed + 1), 25, r);
        let p = FitProblem::new(FeatureSpec::full(InputSpec::A), &a, &DMatrix::zeros(25, 0), &t).unwrap();
        let m = p.fit_constrained(rank.min(p.max_rank())).unwrap();
        prop_assert!(m.constrained);
        let mut g = rng(seed + 2);
        for _ in 0..20 {
            let v = DVector::from_fn(r, |_, _| g.gen_range(-1.0..1.0));
            let lin = (&m.linear * &v).dot(&v);
            let n2 = v.norm_squared();
            prop_assert!(lin <= 1e-10 * n2);
            let full = m.eval(v.as_slice(), &[]);
            let quad = (&full - &m.linear * &v).dot(&v);
            prop_assert!(quad.abs() <= 1e-10 * n2 * n2.sqrt());
        }
    }

    #[test]
    fn rank_selection_never_exceeds_the_rank_zero_score(scores in prop::collection::vec(0.0f64..10.0, 1..30), fail in prop::collection::vec(any::<bool>(), 30)) {
        let max = scores.len() - 1;
        let cands = rank_grid(max);
        let (best, _, table) = select_optimal_rank(
            &cands,
            |k| if k > 0 && fail[k % 30] { Err(RomError::NonFinite("fit".into())) } else { Ok(k) },
            |&k| Ok(scores[k]),
        )
        .unwrap();
        prop_assert!(scores[best] <= scores[0]);
        prop_assert_eq!(table.len(), cands.len());
        let min = table.iter().map(|s| s.metric).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(scores[best], min);
        let first = table.iter().filter(|s| s.metric == min).map(|s| s.rank).min().unwrap();
        prop_assert_eq!(best, first);
    }

    #[test]
    fn rank_grid_is_dense_then_sparse(max in 0usize..200) {
        let g = rank_grid(max);
        prop_assert_eq!(g[0], 0);
        prop_assert_eq!(*g.last().unwrap(), max);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        for k in 0..=max.min(20) {
            prop_assert!(g.contains(&k));
        }
        prop_assert!(g.iter().all(|&k| k <= 20 || k % 5 == 0 || k == max));
    }

    #[test]
    fn supremizer_of_constant_pressure_vanishes(c in -5.0f64..5.0) {
        let g = walled_grid();
        let n = g.n_fluid();
        let p = DMatrix::from_element(n, 1, c);
        let s = supremizer_snapshots(&p, &g, &DiscreteOps::<f64>::new(&g).grad).unwrap();
        prop_assert!(s.abs().max() <= 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn projection_error_is_non_increasing_for_nested_bases(seed in 0u64..10_000) {
        let s = random_matrix(&mut rng(seed), 50, 8);
        let w: Vec<f64> = { let mut g = rng(seed + 1); (0..50).map(|_| g.gen_range(0.5..2.0)).collect() };
        let full = compute_pod(&s, &w, 8, BasisKind::Pressure).unwrap();
        let f: Vec<f64> = { let mut g = rng(seed + 2); (0..50).map(|_| g.gen_range(-1.0..1.0)).collect() };
        let mut prev = f64::INFINITY;
        for n in 1..=8 {
            let b = full.truncate(n).unwrap();
            let back = b.reconstruct(b.project(&f).unwrap().as_slice()).unwrap();
            let err: f64 = back.iter().zip(&f).zip(&w).map(|((x, y), w)| w * (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn window_metric_is_additive_over_partitions(seed in 0u64..10_000, cut in 1usize..9) {
        let x = random_matrix(&mut rng(seed), 10, 3);
        let y = random_matrix(&mut rng(seed + 1), 10, 3);
        let m = { let l = random_matrix(&mut rng(seed + 2), 3, 3); &l * l.transpose() + DMatrix::identity(3, 3) };
        let t: Vec<f64> = (0..10).map(|k| 0.5 * k as f64).collect();
        let whole = summed_l2_metric(&x, &y, &m, &t, &t).unwrap();
        let head = summed_l2_metric(&x.rows(0, cut).into(), &y.rows(0, cut).into(), &m, &t[..cut], &t[..cut]).unwrap();
        let tail = summed_l2_metric(&x.rows(cut, 10 - cut).into(), &y.rows(cut, 10 - cut).into(), &m, &t[cut..], &t[cut..]).unwrap();
        prop_assert!((whole - head - tail).abs() <= 1e-12 * whole);
    }
}

/// Damped linear part plus an energy-neutral quadratic term.
fn smooth_ops() -> ReducedOperators<f64> {
    ReducedOperators {
        n_physical: 2,
        m: DMatrix::identity(2, 2),
        b: DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -0.3]),
        b_t: DMatrix::zeros(2, 2),
        c: Tensor3::from_fn(2, 2, 2, |i, j, k| if i == 0 && j == 1 && k == 1 { 0.4 } else if i == 1 && j == 0 && k == 1 { -0.4 } else { 0.0 }),
        h: DMatrix::zeros(2, 0),
        p: DMatrix::zeros(0, 2),
        p_bc: DVector::zeros(0),
        ppe: None,
        e: vec![],
        d_k: vec![],
        u_bc: vec![],
        nu: 1.0,
        tau_pen: 1.0,
    }
}

#[test]
fn euler_and_bdf2_agree_to_first_order() {
    let ops = smooth_ops();
    let a0 = DVector::from_vec(vec![1.0, 0.5]);
    let b0 = DVector::zeros(0);
    let gap = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let run = |s| solve_rom(&RomModelSpec::standard(Formulation::Sup, s, dt, n), &ops, &a0, &b0).unwrap();
        let (e, b) = (run(TimeScheme::ImplicitEuler), run(TimeScheme::Bdf2));
        (e.a.row(n) - b.a.row(n)).norm()
    };
    let g: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&dt| gap(dt)).collect();
    for w in g.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!((slope - 1.0).abs() <= 0.1, "gap slope {slope}");
    }
}
