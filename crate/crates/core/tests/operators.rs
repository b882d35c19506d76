mod common;

use common::checks::{assert_close, check_ppe, check_sup, fixture};
use common::{channel_grid, periodic_grid, random_basis, rng, Oracle};
use nalgebra::DMatrix;
use romlab::fom::Grid;
use romlab::operators::{assemble_data_rank, assemble_ppe_operators, assemble_sup_operators, OperatorConfig};
use romlab::pod::{BasisKind, EnrichedVelocityBasis, PodBasis};

#[test]
fn sup_operators_match_oracle_on_channel() {
    check_sup(channel_grid(), 1);
}

#[test]
fn sup_operators_match_oracle_on_periodic_strip() {
    check_sup(periodic_grid(), 2);
}

#[test]
fn ppe_operators_match_oracle_on_channel() {
    check_ppe(channel_grid(), 3);
}

#[test]
fn ppe_operators_match_oracle_on_periodic_strip() {
    check_ppe(periodic_grid(), 4);
}

fn orthonormal(grid: &Grid, dof: usize, n: usize, seed: u64, kind: BasisKind) -> PodBasis<f64> {
    let mut r = rng(seed);
    let snaps = common::random_matrix(&mut r, dof, n + 2);
    romlab::pod::compute_pod(&snaps, &vec![grid.cell_area(); dof], n, kind).unwrap()
}

#[test]
fn pod_velocity_basis_has_identity_mass() {
    let g = channel_grid();
    let v = orthonormal(&g, 2 * g.n_fluid(), 3, 5, BasisKind::Velocity);
    let p = orthonormal(&g, g.n_fluid(), 2, 6, BasisKind::Pressure);
    let ops = assemble_sup_operators(&EnrichedVelocityBasis::new(v, None).unwrap(), &p, &g, &OperatorConfig::default()).unwrap();
    assert!((ops.m.clone() - DMatrix::identity(3, 3)).abs().max() <= 1e-10);
}

#[test]
fn constant_pressure_mode_has_no_gradient() {
    let g = Grid::new(8, 8, 0.25, 0.25, romlab::fom::BoundarySpec::walls()).unwrap().with_solid_block(3, 5, 3, 5).unwrap();
    let n = g.n_fluid();
    let v = random_basis(&mut rng(7), 2 * n, 2, g.cell_area(), BasisKind::Velocity);
    let mut p = random_basis(&mut rng(8), n, 2, g.cell_area(), BasisKind::Pressure);
    p.modes.column_mut(1).fill(1.0);
    let ops = assemble_ppe_operators(&v, &p, &g, &OperatorConfig::default()).unwrap();
    assert!(ops.h.column(1).iter().all(|&x| x.abs() <= 1e-12));
    let ppe = ops.ppe.unwrap();
    assert!(ppe.d.row(1).iter().all(|&x| x.abs() <= 1e-12));
}

#[test]
fn structural_invariants() {
    let g = channel_grid();
    let f = fixture(g, 9);
    let mut r = rng(10);
    let vel = random_basis(&mut r, 2 * f.grid.n_fluid(), 3, f.grid.cell_area(), BasisKind::Velocity);
    let ops = assemble_ppe_operators(&vel, &f.pressure, &f.grid, &OperatorConfig::default()).unwrap();
    let ppe = ops.ppe.as_ref().unwrap();
    let d = &ppe.d;
    assert!((d - d.transpose()).abs().max() <= 1e-12);
    let eig = d.clone().symmetric_eigen().eigenvalues;
    assert!(eig.min() >= -1e-12 * d.norm());
    assert!(ops.m.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    for e in &ops.e {
        assert!((e - e.transpose()).abs().max() <= 1e-12);
        assert!(e.clone().symmetric_eigen().eigenvalues.min() >= -1e-12 * e.norm());
    }
    // Inlet plus the moving south wall.
    assert_eq!(ops.u_bc, vec![1.0, 0.7]);
}

#[test]
fn data_rank_operators_extend_working_rank() {
    let g = channel_grid();
    let n = g.n_fluid();
    let (d, d_p, r, q) = (5, 4, 3, 2);
    let vd = random_basis(&mut rng(11), 2 * n, d, g.cell_area(), BasisKind::Velocity);
    let pd = random_basis(&mut rng(12), n, d_p, g.cell_area(), BasisKind::Pressure);
    let cfg = OperatorConfig::default();
    let data = assemble_data_rank(&vd, &pd, r, q, &g).unwrap();
    assert_eq!(data.c_d.dims(), [r, d, d]);
    assert_eq!(data.g_d.dims(), [q, d, d]);
    assert_eq!(data.h_d.shape(), (r, d_p));
    assert_eq!(data.p_d.shape(), (q, d));
    assert_eq!(data.d_d.shape(), (q, d_p));

    let vr = vd.truncate(r).unwrap();
    let pq = pd.truncate(q).unwrap();
    let ops = assemble_ppe_operators(&vr, &pq, &g, &cfg).unwrap();
    let ppe = ops.ppe.as_ref().unwrap();
    assert!(data.c_d.leading(r, r, r).max_abs_diff(&ops.c) <= 1e-10);
    assert!(data.g_d.leading(q, r, r).max_abs_diff(&ppe.g) <= 1e-10);
    assert!((data.h_d.columns(0, q) - &ops.h).abs().max() <= 1e-10);
    assert!((data.p_d.columns(0, r) - &ops.p).abs().max() <= 1e-10);
    assert!((data.d_d.columns(0, q) - &ppe.d).abs().max() <= 1e-10);

    // Off-block entries against the oracle.
    let o = Oracle::new(&g);
    let phi = common::columns(&vd.modes);
    let chi = common::columns(&pd.modes);
    assert_close("C_d", data.c_d.get(2, 4, 3), o.inner(&phi[2], &o.convection(&phi[4], &phi[3])));
    assert_close("G_d", data.g_d.get(1, 3, 4), o.inner(&o.gradient(&chi[1]), &o.convection(&phi[3], &phi[4])));
    assert_close("H_d", data.h_d[(0, 3)], o.inner(&phi[0], &o.gradient(&chi[3])));
    assert_close("P_d", data.p_d[(1, 4)], o.inner(&chi[1], &o.divergence(&phi[4])));
    assert_close("D_d", data.d_d[(1, 3)], o.inner(&o.gradient(&chi[1]), &o.gradient(&chi[3])));
}

#[test]
fn data_rank_equal_to_working_rank_is_identical() {
    let g = periodic_grid();
    let n = g.n_fluid();
    let v = random_basis(&mut rng(13), 2 * n, 3, g.cell_area(), BasisKind::Velocity);
    let p = random_basis(&mut rng(14), n, 2, g.cell_area(), BasisKind::Pressure);
    let data = assemble_data_rank(&v, &p, 3, 2, &g).unwrap();
    let ops = assemble_ppe_operators(&v, &p, &g, &OperatorConfig::default()).unwrap();
    assert_eq!(data.c_d.as_slice(), ops.c.as_slice());
    assert_eq!(data.g_d.as_slice(), ops.ppe.unwrap().g.as_slice());
    assert!(assemble_data_rank(&v, &p, 4, 2, &g).is_err());
    assert!(assemble_data_rank(&v, &p, 3, 3, &g).is_err());
}

#[test]
fn basis_grid_mismatch_is_rejected() {
    let g = channel_grid();
    let v = random_basis(&mut rng(15), 10, 2, 1.0, BasisKind::Velocity);
    let p = random_basis(&mut rng(16), g.n_fluid(), 2, 1.0, BasisKind::Pressure);
    assert!(assemble_ppe_operators(&v, &p, &g, &OperatorConfig::default()).is_err());
}
