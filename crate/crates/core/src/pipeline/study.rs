//! Stage data held in memory and its archive form.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::closure::{
    exact_ppe_corrections, exact_pressure_corrections_sup, exact_velocity_correction, CoefficientHistory, CorrectionModel, ExactCorrectionSeries,
};
use crate::error::{Result, RomError};
use crate::fom::{run_fom, DiscreteOps, Grid};
use crate::linalg::Tensor3;
use crate::metrics::{error_metric_p, error_metric_u};
use crate::operators::{assemble_data_rank, assemble_ppe_operators, assemble_sup_operators, DataRankOperators, OperatorConfig, PpeOperators, ReducedOperators};
use crate::pipeline::config::RunConfig;
use crate::pod::{compute_pod, supremizer_snapshots, weighted_gram, BasisKind, EnrichedVelocityBasis, PodBasis};
use crate::rom::{solve_rom, Formulation, RomModelSpec, RomTrajectory};
use crate::store::{save_archive, Archive, ArchiveItem};

type Items = Vec<(String, ArchiveItem)>;
type Meta = BTreeMap<String, Value>;

fn mat(items: &mut Items, name: impl Into<String>, m: &DMatrix<f64>) {
    items.push((name.into(), ArchiveItem::Matrix(m.clone())));
}

fn vec(items: &mut Items, name: impl Into<String>, v: &[f64]) {
    items.push((name.into(), ArchiveItem::Vector(v.to_vec())));
}

fn tensor(items: &mut Items, name: impl Into<String>, t: &Tensor3<f64>) {
    items.push((name.into(), ArchiveItem::Tensor3(t.clone())));
}

pub(crate) fn list(ar: &Archive, name: &str) -> Result<Vec<f64>> {
    Ok(ar.vector::<f64>(name)?.iter().copied().collect())
}

pub fn write(path: &Path, items: &Items, meta: Meta) -> Result<()> {
    save_archive(path, items, meta)
}

/// Saved snapshot matrices, one column per time.
#[derive(Debug, Clone)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub velocity: DMatrix<f64>,
    pub pressure: DMatrix<f64>,
}

impl Snapshots {
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        let s = run_fom::<f64>(&cfg.fom)?;
        Ok(Snapshots {
            velocity: s.velocity_matrix(),
            pressure: s.pressure_matrix(),
            times: s.times,
        })
    }

    pub fn items(&self) -> Items {
        let mut it = Items::new();
        mat(&mut it, "velocity", &self.velocity);
        mat(&mut it, "pressure", &self.pressure);
        vec(&mut it, "times", &self.times);
        it
    }

    pub fn load(ar: &Archive) -> Result<Self> {
        Ok(Snapshots {
            times: list(ar, "times")?,
            velocity: ar.matrix("velocity")?,
            pressure: ar.matrix("pressure")?,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Data-rank velocity and pressure bases plus the supremizer basis.
#[derive(Debug, Clone)]
pub struct Bases {
    pub velocity: PodBasis<f64>,
    pub pressure: PodBasis<f64>,
    pub supremizer: Option<PodBasis<f64>>,
}

fn cell_weights(grid: &Grid) -> Vec<f64> {
    vec![grid.cell_area(); grid.n_fluid()]
}

fn velocity_weights(grid: &Grid) -> Vec<f64> {
    vec![grid.cell_area(); 2 * grid.n_fluid()]
}

impl Bases {
    pub fn compute(cfg: &RunConfig, grid: &Grid, snaps: &Snapshots) -> Result<Self> {
        let (w, vw) = (cell_weights(grid), velocity_weights(grid));
        let velocity = compute_pod(&snaps.velocity, &vw, cfg.pod.d, BasisKind::Velocity)?;
        let pressure = compute_pod(&snaps.pressure, &w, cfg.pod.d_p, BasisKind::Pressure)?;
        let supremizer = if cfg.pod.n_sup > 0 {
            let ops = DiscreteOps::<f64>::new(grid);
            let s = supremizer_snapshots(&snaps.pressure, grid, &ops.grad)?;
            Some(compute_pod(&s, &vw, cfg.pod.n_sup, BasisKind::Supremizer)?)
        } else {
            None
        };
        Ok(Bases {
            velocity,
            pressure,
            supremizer,
        })
    }

    pub fn items(&self) -> Items {
        let mut it = Items::new();
        for b in [Some(&self.velocity), Some(&self.pressure), self.supremizer.as_ref()].into_iter().flatten() {
            let k = b.kind.name();
            mat(&mut it, format!("{k}.modes"), &b.modes);
            vec(&mut it, format!("{k}.spectrum"), &b.spectrum);
        }
        it
    }

    pub fn load(ar: &Archive, grid: &Grid) -> Result<Self> {
        let read = |kind: BasisKind, w: Vec<f64>| -> Result<PodBasis<f64>> {
            let k = kind.name();
            let modes: DMatrix<f64> = ar.matrix(&format!("{k}.modes"))?;
            let spectrum = list(ar, &format!("{k}.spectrum"))?;
            Ok(PodBasis {
                eigenvalues: spectrum[..modes.ncols()].to_vec(),
                spectrum,
                modes,
                weights: w,
                kind,
            })
        };
        let supremizer = if ar.contains("supremizer.modes") {
            Some(read(BasisKind::Supremizer, velocity_weights(grid))?)
        } else {
            None
        };
        Ok(Bases {
            velocity: read(BasisKind::Velocity, velocity_weights(grid))?,
            pressure: read(BasisKind::Pressure, cell_weights(grid))?,
            supremizer,
        })
    }

    /// Leading `n_u` velocity modes enriched with the supremizers (SUP) or
    /// alone (PPE).
    pub fn velocity_basis(&self, cfg: &RunConfig, formulation: Formulation) -> Result<EnrichedVelocityBasis<f64>> {
        let pod = self.velocity.truncate(cfg.pod.n_u)?;
        let sup = match formulation {
            Formulation::Sup => self.supremizer.clone(),
            Formulation::Ppe => None,
        };
        EnrichedVelocityBasis::new(pod, sup)
    }

    pub fn pressure_basis(&self, cfg: &RunConfig) -> Result<PodBasis<f64>> {
        self.pressure.truncate(cfg.pod.n_p)
    }
}

/// Working-rank operators of both formulations, data-rank operators and
/// the snapshot coefficient history.
#[derive(Debug, Clone)]
pub struct Operators {
    pub sup: ReducedOperators<f64>,
    pub ppe: ReducedOperators<f64>,
    pub data: DataRankOperators<f64>,
    pub history: CoefficientHistory<f64>,
}

fn ops_items(it: &mut Items, meta: &mut Meta, prefix: &str, ops: &ReducedOperators<f64>) {
    for (name, m) in [("m", &ops.m), ("b", &ops.b), ("b_t", &ops.b_t), ("h", &ops.h), ("p", &ops.p)] {
        mat(it, format!("{prefix}.{name}"), m);
    }
    tensor(it, format!("{prefix}.c"), &ops.c);
    vec(it, format!("{prefix}.p_bc"), ops.p_bc.as_slice());
    for (k, (e, d)) in ops.e.iter().zip(&ops.d_k).enumerate() {
        mat(it, format!("{prefix}.e{k}"), e);
        vec(it, format!("{prefix}.d{k}"), d.as_slice());
    }
    vec(it, format!("{prefix}.u_bc"), &ops.u_bc);
    if let Some(p) = &ops.ppe {
        mat(it, format!("{prefix}.ppe_d"), &p.d);
        tensor(it, format!("{prefix}.ppe_g"), &p.g);
        mat(it, format!("{prefix}.ppe_n"), &p.n);
        vec(it, format!("{prefix}.ppe_l"), p.l.as_slice());
    }
    meta.insert(
        prefix.to_string(),
        json!({ "n_physical": ops.n_physical, "nu": ops.nu, "tau_pen": ops.tau_pen, "parts": ops.e.len() }),
    );
}

fn ops_load(ar: &Archive, prefix: &str) -> Result<ReducedOperators<f64>> {
    let meta = ar.metadata(prefix).cloned().ok_or_else(|| RomError::Archive(format!("operator set `{prefix}` missing")))?;
    let field = |k: &str| meta.get(k).cloned().ok_or_else(|| RomError::Archive(format!("`{prefix}.{k}` missing")));
    let parts = field("parts")?.as_u64().unwrap_or(0) as usize;
    let m = |name: &str| ar.matrix::<f64>(&format!("{prefix}.{name}"));
    let v = |name: &str| ar.vector::<f64>(&format!("{prefix}.{name}"));
    let ppe = if ar.contains(&format!("{prefix}.ppe_d")) {
        Some(PpeOperators {
            d: m("ppe_d")?,
            g: ar.tensor3(&format!("{prefix}.ppe_g"))?,
            n: m("ppe_n")?,
            l: v("ppe_l")?,
        })
    } else {
        None
    };
    Ok(ReducedOperators {
        n_physical: field("n_physical")?.as_u64().unwrap_or(0) as usize,
        m: m("m")?,
        b: m("b")?,
        b_t: m("b_t")?,
        c: ar.tensor3(&format!("{prefix}.c"))?,
        h: m("h")?,
        p: m("p")?,
        p_bc: v("p_bc")?,
        ppe,
        e: (0..parts).map(|k| m(&format!("e{k}"))).collect::<Result<_>>()?,
        d_k: (0..parts).map(|k| v(&format!("d{k}"))).collect::<Result<_>>()?,
        u_bc: list(ar, &format!("{prefix}.u_bc"))?,
        nu: field("nu")?.as_f64().unwrap_or(0.0),
        tau_pen: field("tau_pen")?.as_f64().unwrap_or(0.0),
    })
}

impl Operators {
    pub fn assemble(cfg: &RunConfig, grid: &Grid, bases: &Bases, snaps: &Snapshots) -> Result<Self> {
        let oc = OperatorConfig {
            nu: cfg.fom.nu,
            tau_pen: cfg.rom.tau_pen,
        };
        let q = bases.pressure_basis(cfg)?;
        let sup = assemble_sup_operators(&bases.velocity_basis(cfg, Formulation::Sup)?, &q, grid, &oc)?;
        let ppe = assemble_ppe_operators(&bases.velocity.truncate(cfg.pod.n_u)?, &q, grid, &oc)?;
        let data = assemble_data_rank(&bases.velocity, &bases.pressure, cfg.pod.n_u, cfg.pod.n_p, grid)?;
        let history = CoefficientHistory::from_snapshots(&snaps.velocity, &snaps.pressure, &bases.velocity, &bases.pressure, snaps.times.clone())?;
        Ok(Operators { sup, ppe, data, history })
    }

    pub fn items(&self) -> (Items, Meta) {
        let mut it = Items::new();
        let mut meta = Meta::new();
        ops_items(&mut it, &mut meta, "sup", &self.sup);
        ops_items(&mut it, &mut meta, "ppe", &self.ppe);
        let d = &self.data;
        tensor(&mut it, "data.c_d", &d.c_d);
        tensor(&mut it, "data.g_d", &d.g_d);
        mat(&mut it, "data.h_d", &d.h_d);
        mat(&mut it, "data.p_d", &d.p_d);
        mat(&mut it, "data.d_d", &d.d_d);
        meta.insert("data".into(), json!({ "r": d.r, "q": d.q, "d": d.d, "d_p": d.d_p }));
        mat(&mut it, "history.a_d", &self.history.a_d);
        mat(&mut it, "history.b_dp", &self.history.b_dp);
        vec(&mut it, "history.times", &self.history.times);
        (it, meta)
    }

    pub fn load(ar: &Archive) -> Result<Self> {
        let dm = ar.metadata("data").cloned().ok_or_else(|| RomError::Archive("data-rank metadata missing".into()))?;
        let get = |k: &str| dm.get(k).and_then(Value::as_u64).map(|v| v as usize).ok_or_else(|| RomError::Archive(format!("data.{k} missing")));
        Ok(Operators {
            sup: ops_load(ar, "sup")?,
            ppe: ops_load(ar, "ppe")?,
            data: DataRankOperators {
                c_d: ar.tensor3("data.c_d")?,
                g_d: ar.tensor3("data.g_d")?,
                h_d: ar.matrix("data.h_d")?,
                p_d: ar.matrix("data.p_d")?,
                d_d: ar.matrix("data.d_d")?,
                r: get("r")?,
                q: get("q")?,
                d: get("d")?,
                d_p: get("d_p")?,
            },
            history: CoefficientHistory::new(ar.matrix("history.a_d")?, ar.matrix("history.b_dp")?, list(ar, "history.times")?)?,
        })
    }
}

/// Exact correction series over every snapshot.
#[derive(Debug, Clone)]
pub struct ExactSeries {
    pub tau_u: ExactCorrectionSeries<f64>,
    pub tau_p1: ExactCorrectionSeries<f64>,
    pub tau_p2: ExactCorrectionSeries<f64>,
    pub tau_d: ExactCorrectionSeries<f64>,
    pub tau_g: ExactCorrectionSeries<f64>,
}

impl ExactSeries {
    pub fn compute(ops: &Operators) -> Result<Self> {
        let tau_u = exact_velocity_correction(&ops.history, &ops.data, ops.data.r)?;
        let (tau_p1, tau_p2) = exact_pressure_corrections_sup(&ops.history, &ops.data)?;
        let (tau_d, tau_g) = exact_ppe_corrections(&ops.history, &ops.data)?;
        Ok(ExactSeries {
            tau_u,
            tau_p1,
            tau_p2,
            tau_d,
            tau_g,
        })
    }

    pub fn window(&self, rows: Range<usize>) -> Self {
        let w = |s: &ExactCorrectionSeries<f64>| ExactCorrectionSeries {
            values: s.values.rows(rows.start, rows.len()).clone_owned(),
            target: s.target,
        };
        ExactSeries {
            tau_u: w(&self.tau_u),
            tau_p1: w(&self.tau_p1),
            tau_p2: w(&self.tau_p2),
            tau_d: w(&self.tau_d),
            tau_g: w(&self.tau_g),
        }
    }
}

/// Best-fit coefficients of every column of `fields` in `basis`.
pub fn best_fit_columns(basis: &EnrichedVelocityBasis<f64>, fields: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = basis.modes();
    let rhs = weighted_gram(&m, fields, basis.weights());
    let chol = basis
        .mass_matrix()
        .cholesky()
        .ok_or_else(|| RomError::NonFinite("enriched mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs).transpose())
}

/// Per-formulation reduced setup over the online window.
#[derive(Debug, Clone)]
pub struct Track {
    pub formulation: Formulation,
    pub basis: EnrichedVelocityBasis<f64>,
    pub ops: ReducedOperators<f64>,
    /// Best-fit coefficients of the online snapshots, one row per level.
    pub proj_a: DMatrix<f64>,
    pub proj_b: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub a0: DVector<f64>,
    pub b0: DVector<f64>,
}

/// Everything the fitting, solving and evaluation stages work on.
#[derive(Debug, Clone)]
pub struct Study {
    pub cfg: RunConfig,
    pub grid: Grid,
    pub snaps: Snapshots,
    pub bases: Bases,
    pub ops: Operators,
    pub exact: ExactSeries,
    pub sup: Track,
    pub ppe: Track,
}

impl Study {
    pub fn new(cfg: RunConfig, grid: Grid, snaps: Snapshots, bases: Bases, ops: Operators) -> Result<Self> {
        let exact = ExactSeries::compute(&ops)?;
        let online = cfg.rom.online_start..cfg.rom.online_start + cfg.rom.horizon + 1;
        let proj_b = ops.history.b(cfg.pod.n_p).rows(online.start, online.len()).clone_owned();
        let window = snaps.velocity.columns(online.start, online.len()).clone_owned();
        let track = |formulation: Formulation, rops: &ReducedOperators<f64>| -> Result<Track> {
            let basis = bases.velocity_basis(&cfg, formulation)?;
            let proj_a = best_fit_columns(&basis, &window)?;
            Ok(Track {
                formulation,
                mass: basis.mass_matrix(),
                a0: proj_a.row(0).transpose(),
                b0: proj_b.row(0).transpose(),
                proj_a,
                proj_b: proj_b.clone(),
                ops: rops.clone(),
                basis,
            })
        };
        let sup = track(Formulation::Sup, &ops.sup)?;
        let ppe = track(Formulation::Ppe, &ops.ppe)?;
        Ok(Study {
            cfg,
            grid,
            snaps,
            bases,
            ops,
            exact,
            sup,
            ppe,
        })
    }

    pub fn track(&self, f: Formulation) -> &Track {
        match f {
            Formulation::Sup => &self.sup,
            Formulation::Ppe => &self.ppe,
        }
    }

    /// Snapshot indices of the online window, initial level included.
    pub fn online(&self) -> Range<usize> {
        let s = self.cfg.rom.online_start;
        s..s + self.cfg.rom.horizon + 1
    }

    /// Snapshot indices of the training window.
    pub fn training(&self) -> Range<usize> {
        let s = self.cfg.rom.online_start;
        s..s + self.cfg.fit.train_steps + 1
    }

    pub fn online_times(&self) -> &[f64] {
        &self.snaps.times[self.online()]
    }

    /// Physical velocity and pressure snapshot coefficients over the
    /// training window, the inputs of every ansatz.
    pub fn training_inputs(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = self.training();
        let h = &self.ops.history;
        (
            h.a(self.cfg.pod.n_u).rows(t.start, t.len()).clone_owned(),
            h.b(self.cfg.pod.n_p).rows(t.start, t.len()).clone_owned(),
        )
    }

    pub fn training_series(&self) -> ExactSeries {
        self.exact.window(self.training())
    }

    /// Model settings for this study's formulation, scheme and step size.
    pub fn spec(&self, formulation: Formulation, n_steps: usize) -> RomModelSpec<f64> {
        let mut s = RomModelSpec::standard(formulation, self.cfg.rom.scheme, self.cfg.rom_dt(), n_steps);
        s.t0 = self.snaps.times[self.cfg.rom.online_start];
        s.tau_pen = self.cfg.rom.tau_pen;
        s
    }

    pub fn solve(&self, spec: &RomModelSpec<f64>) -> Result<RomTrajectory<f64>> {
        let t = self.track(spec.formulation);
        solve_rom(spec, &t.ops, &t.a0, &t.b0)
    }

    /// `(ε_u, ε_p)` over the first `levels` time levels of a trajectory;
    /// infinite if the trajectory stopped early.
    pub fn metrics(&self, formulation: Formulation, tr: &RomTrajectory<f64>, levels: usize) -> Result<(f64, f64)> {
        if tr.len() < levels {
            return Ok((f64::INFINITY, f64::INFINITY));
        }
        let t = self.track(formulation);
        let times = self.online_times();
        let a = tr.a.rows(0, levels).clone_owned();
        let b = tr.b.rows(0, levels).clone_owned();
        let eu = error_metric_u(&a, &t.proj_a.rows(0, levels).clone_owned(), &t.mass, &tr.times[..levels], times)?;
        let ep = error_metric_p(&b, &t.proj_b.rows(0, levels).clone_owned(), &tr.times[..levels], times)?;
        Ok((eu, ep))
    }
}

/// Stores a correction model under `slot`.
pub fn model_items(it: &mut Items, meta: &mut Meta, slot: &str, m: &CorrectionModel<f64>) {
    mat(it, format!("{slot}.linear"), &m.linear);
    if let Some(qd) = &m.quadratic {
        mat(it, format!("{slot}.quadratic"), qd);
    }
    meta.insert(
        slot.to_string(),
        json!({ "features": m.features, "r": m.r, "q": m.q, "rank": m.rank, "constrained": m.constrained }),
    );
}

pub fn model_load(ar: &Archive, slot: &str) -> Result<Option<CorrectionModel<f64>>> {
    let Some(meta) = ar.metadata(slot) else {
        return Ok(None);
    };
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| RomError::Archive(format!("model `{slot}` lacks `{k}`")));
    let quadratic = if ar.contains(&format!("{slot}.quadratic")) {
        Some(ar.matrix(&format!("{slot}.quadratic"))?)
    } else {
        None
    };
    Ok(Some(CorrectionModel {
        features: serde_json::from_value(get("features")?)?,
        r: serde_json::from_value(get("r")?)?,
        q: serde_json::from_value(get("q")?)?,
        linear: ar.matrix(&format!("{slot}.linear"))?,
        quadratic,
        rank: serde_json::from_value(get("rank")?)?,
        constrained: serde_json::from_value(get("constrained")?)?,
    }))
}
