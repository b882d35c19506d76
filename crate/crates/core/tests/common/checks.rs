//! Entry-by-entry comparison of assembled operators with the oracle.

use super::{columns, random_basis, rng, Oracle};
use romlab::fom::Grid;
use romlab::operators::{assemble_ppe_operators, assemble_sup_operators, OperatorConfig, ReducedOperators};
use romlab::pod::{BasisKind, EnrichedVelocityBasis, PodBasis};

pub const TOL: f64 = 1e-12;

pub fn assert_close(name: &str, got: f64, want: f64) {
    assert!((got - want).abs() <= TOL, "{name}: {got} vs oracle {want} (diff {:e})", (got - want).abs());
}

pub struct Fixture {
    pub grid: Grid,
    pub velocity: PodBasis<f64>,
    pub supremizer: PodBasis<f64>,
    pub pressure: PodBasis<f64>,
}

pub fn fixture(grid: Grid, seed: u64) -> Fixture {
    let mut r = rng(seed);
    let n = grid.n_fluid();
    let w = grid.cell_area();
    Fixture {
        velocity: random_basis(&mut r, 2 * n, 2, w, BasisKind::Velocity),
        supremizer: random_basis(&mut r, 2 * n, 1, w, BasisKind::Supremizer),
        pressure: random_basis(&mut r, n, 3, w, BasisKind::Pressure),
        grid,
    }
}

pub fn check_common(o: &Oracle, ops: &ReducedOperators<f64>, phi: &[Vec<f64>], chi: &[Vec<f64>]) {
    let (r, q) = (phi.len(), chi.len());
    let div_bc = o.divergence_bc();
    for i in 0..r {
        for j in 0..r {
            assert_close("M", ops.m[(i, j)], o.inner(&phi[i], &phi[j]));
            assert_close("B", ops.b[(i, j)], o.inner(&phi[i], &o.laplacian(&phi[j])));
            assert_close("B_T", ops.b_t[(i, j)], -o.inner(&o.divergence(&phi[i]), &o.divergence(&phi[j])));
            for k in 0..r {
                assert_close("C", ops.c.get(i, j, k), o.inner(&phi[i], &o.convection(&phi[j], &phi[k])));
            }
        }
        for j in 0..q {
            assert_close("H", ops.h[(i, j)], o.inner(&phi[i], &o.gradient(&chi[j])));
            assert_close("P", ops.p[(j, i)], o.inner(&chi[j], &o.divergence(&phi[i])));
        }
    }
    for j in 0..q {
        assert_close("p_bc", ops.p_bc[j], o.inner(&chi[j], &div_bc));
    }
    let pen = o.penalty(phi);
    assert_eq!(pen.len(), ops.e.len());
    for (k, (e, d)) in pen.iter().enumerate() {
        for i in 0..r {
            assert_close("D_k", ops.d_k[k][i], d[i]);
            for j in 0..r {
                assert_close("E_k", ops.e[k][(i, j)], e[(i, j)]);
            }
        }
    }
}

pub fn check_sup(grid: Grid, seed: u64) {
    let f = fixture(grid, seed);
    let enriched = EnrichedVelocityBasis::new(f.velocity.clone(), Some(f.supremizer.clone())).unwrap();
    let ops = assemble_sup_operators(&enriched, &f.pressure, &f.grid, &OperatorConfig::default()).unwrap();
    assert_eq!((ops.r(), ops.q(), ops.n_physical), (3, 3, 2));
    let o = Oracle::new(&f.grid);
    check_common(&o, &ops, &columns(&enriched.modes()), &columns(&f.pressure.modes));
    assert!(ops.ppe.is_none());
}

pub fn check_ppe(grid: Grid, seed: u64) {
    let mut f = fixture(grid, seed);
    let mut r = rng(seed + 100);
    f.velocity = random_basis(&mut r, 2 * f.grid.n_fluid(), 3, f.grid.cell_area(), BasisKind::Velocity);
    let ops = assemble_ppe_operators(&f.velocity, &f.pressure, &f.grid, &OperatorConfig::default()).unwrap();
    let o = Oracle::new(&f.grid);
    let phi = columns(&f.velocity.modes);
    let chi = columns(&f.pressure.modes);
    check_common(&o, &ops, &phi, &chi);
    let ppe = ops.ppe.as_ref().unwrap();
    for i in 0..3 {
        let gi = o.gradient(&chi[i]);
        for j in 0..3 {
            assert_close("D", ppe.d[(i, j)], o.inner(&gi, &o.gradient(&chi[j])));
            assert_close("N", ppe.n[(i, j)], o.boundary_curl(&chi[i], &phi[j]));
            for k in 0..3 {
                assert_close("G", ppe.g.get(i, j, k), o.inner(&gi, &o.convection(&phi[j], &phi[k])));
            }
        }
    }
    assert!(ppe.l.iter().all(|&v| v == 0.0));
}

