//! Model recipes, their fitting with rank selection, and evaluation.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::closure::{
    fit_pressure_sup, ppe_problem, rank_grid, select_optimal_rank, split_joint, CorrectionModel, FeatureSpec, FitProblem, InputSpec, PpeFitCase,
    PpeSeries, PressureFitMode, RankScore,
};
use crate::error::Result;
use crate::metrics::{reconstruction_errors, relative_errors, ErrorSeries, FieldHistory};
use crate::pipeline::config::{DAnsatz, PpeJoint, RunConfig};
use crate::pipeline::study::Study;
use crate::rom::{AttachedModels, CorrectionFlags, Forcing, Formulation, RomModelSpec, RomTrajectory};

/// One reduced model: formulation, enabled corrections and fitting choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    pub formulation: Formulation,
    pub flags: CorrectionFlags,
    pub constrained: bool,
    pub pressure_mode: PressureFitMode,
    pub d_ansatz: DAnsatz,
    pub ppe_joint: PpeJoint,
    /// Drive the pressure terms with the exact corrections instead of fits.
    #[serde(default)]
    pub exact_pressure: bool,
    /// Attach a rank-0 velocity model.
    #[serde(default)]
    pub zero_velocity: bool,
}

fn flags(u: bool, p1: bool, p2: bool, d: bool, g: bool) -> CorrectionFlags {
    CorrectionFlags {
        c_u: u,
        c_p1: p1,
        c_p2: p2,
        c_d: d,
        c_g: g,
    }
}

impl Recipe {
    fn new(name: &str, formulation: Formulation, flags: CorrectionFlags) -> Self {
        Recipe {
            name: name.into(),
            formulation,
            flags,
            constrained: false,
            pressure_mode: PressureFitMode::Separate,
            d_ansatz: DAnsatz::Quadratic,
            ppe_joint: PpeJoint::Separate,
            exact_pressure: false,
            zero_velocity: false,
        }
    }

    /// The single model described by a run configuration.
    pub fn from_config(cfg: &RunConfig) -> Self {
        let f = cfg.rom.formulation;
        let prefix = match f {
            Formulation::Sup => "sup",
            Formulation::Ppe => "ppe",
        };
        Recipe {
            name: format!("{prefix}-{}", cfg.rom.flags.label()),
            formulation: f,
            flags: cfg.rom.flags,
            constrained: cfg.fit.constrained,
            pressure_mode: cfg.fit.pressure_mode,
            d_ansatz: cfg.fit.d_ansatz,
            ppe_joint: cfg.fit.ppe_joint,
            exact_pressure: false,
            zero_velocity: false,
        }
    }

    /// Rows of the model comparison table.
    pub fn table() -> Vec<Recipe> {
        use Formulation::{Ppe, Sup};
        let none = CorrectionFlags::default();
        let with = |mut r: Recipe, f: &dyn Fn(&mut Recipe)| {
            f(&mut r);
            r
        };
        vec![
            Recipe::new("sup-standard", Sup, none),
            with(Recipe::new("sup-u-rank0", Sup, flags(true, false, false, false, false)), &|r| r.zero_velocity = true),
            Recipe::new("sup-u", Sup, flags(true, false, false, false, false)),
            with(Recipe::new("sup-u-constrained", Sup, flags(true, false, false, false, false)), &|r| r.constrained = true),
            Recipe::new("sup-p1", Sup, flags(false, true, false, false, false)),
            Recipe::new("sup-p2", Sup, flags(false, false, true, false, false)),
            Recipe::new("sup-p1p2", Sup, flags(false, true, true, false, false)),
            with(Recipe::new("sup-p1p2-joint", Sup, flags(false, true, true, false, false)), &|r| r.pressure_mode = PressureFitMode::Joint),
            Recipe::new("sup-u-p1p2", Sup, flags(true, true, true, false, false)),
            with(Recipe::new("sup-exact-p", Sup, none), &|r| r.exact_pressure = true),
            Recipe::new("ppe-standard", Ppe, none),
            Recipe::new("ppe-D", Ppe, flags(false, false, false, true, false)),
            with(Recipe::new("ppe-D-linear", Ppe, flags(false, false, false, true, false)), &|r| r.d_ansatz = DAnsatz::Linear),
            Recipe::new("ppe-G", Ppe, flags(false, false, false, false, true)),
            Recipe::new("ppe-DG", Ppe, flags(false, false, false, true, true)),
            with(Recipe::new("ppe-DG-case1", Ppe, flags(false, false, false, true, true)), &|r| r.ppe_joint = PpeJoint::Case1),
            with(Recipe::new("ppe-DG-case2", Ppe, flags(false, false, false, true, true)), &|r| r.ppe_joint = PpeJoint::Case2),
            Recipe::new("ppe-u", Ppe, flags(true, false, false, false, false)),
            Recipe::new("ppe-u-DG", Ppe, flags(true, false, false, true, true)),
            with(Recipe::new("ppe-u-DG-case3", Ppe, flags(true, false, false, true, true)), &|r| r.ppe_joint = PpeJoint::Case3),
        ]
    }
}

/// Ranks tried for one fitted component and the chosen one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub component: String,
    pub rank: usize,
    pub scores: Vec<RankScore>,
}

/// A recipe with its correction models attached.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub recipe: Recipe,
    pub flags: CorrectionFlags,
    pub models: AttachedModels<f64>,
    pub forcing: Forcing<f64>,
    pub selections: Vec<Selection>,
}

impl Fitted {
    fn empty(recipe: &Recipe) -> Self {
        Fitted {
            recipe: recipe.clone(),
            flags: CorrectionFlags::default(),
            models: AttachedModels::default(),
            forcing: Forcing::default(),
            selections: Vec::new(),
        }
    }

    pub fn spec(&self, study: &Study, n_steps: usize) -> RomModelSpec<f64> {
        let mut s = study.spec(self.recipe.formulation, n_steps);
        s.flags = self.flags;
        s.models = self.models.clone();
        s.forcing = self.forcing.clone();
        s
    }
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Velocity,
    Pressure,
    Both,
}

/// Fits, scores and attaches one component with the others held fixed.
fn select<M, F, A>(study: &Study, base: &mut Fitted, component: &str, max_rank: usize, target: Target, fit: F, attach: A) -> Result<()>
where
    M: Send + Clone,
    F: Fn(usize) -> Result<M> + Sync,
    A: Fn(&mut Fitted, M) + Sync,
{
    let cap = study.cfg.fit.max_rank.map_or(max_rank, |c| c.min(max_rank));
    let steps = study.cfg.fit.train_steps;
    let frozen = &*base;
    let score = |m: &M| -> Result<f64> {
        let mut trial = frozen.clone();
        attach(&mut trial, m.clone());
        let tr = study.solve(&trial.spec(study, steps))?;
        let (eu, ep) = study.metrics(trial.recipe.formulation, &tr, steps + 1)?;
        Ok(match target {
            Target::Velocity => eu,
            Target::Pressure => ep,
            Target::Both => eu + ep,
        })
    };
    let (rank, model, scores) = select_optimal_rank(&rank_grid(cap), &fit, score)?;
    log::debug!("{}: {component} rank {rank}", base.recipe.name);
    attach(base, model);
    base.selections.push(Selection {
        component: component.into(),
        rank,
        scores,
    });
    Ok(())
}

fn ppe_case(recipe: &Recipe) -> PpeFitCase {
    match recipe.d_ansatz {
        DAnsatz::Linear => PpeFitCase::DLinear,
        DAnsatz::Quadratic => PpeFitCase::DQuadratic,
    }
}

/// Fits the corrections of `recipe` on the training window.
///
/// Components are selected in sequence: velocity on `ε_u`, then pressure
/// on `ε_p`, each scored with the previously chosen models attached. The
/// stacked velocity-pressure fit is scored on `ε_u + ε_p`.
pub fn fit_recipe(study: &Study, recipe: &Recipe) -> Result<Fitted> {
    let mut out = Fitted::empty(recipe);
    let fl = recipe.flags;
    let (a, b) = study.training_inputs();
    let series = study.training_series();
    let no_b = DMatrix::zeros(a.nrows(), 0);
    let case3 = recipe.formulation == Formulation::Ppe && recipe.ppe_joint == PpeJoint::Case3 && fl.c_u && fl.c_d && fl.c_g;

    if fl.c_u && !case3 {
        let prob = FitProblem::new(FeatureSpec::full(InputSpec::A), &a, &no_b, &series.tau_u.values)?;
        let attach = |f: &mut Fitted, m: CorrectionModel<f64>| {
            f.flags.c_u = true;
            f.models.velocity = Some(m);
        };
        if recipe.zero_velocity {
            attach(&mut out, prob.fit(0)?);
            out.selections.push(Selection {
                component: "velocity".into(),
                rank: 0,
                scores: Vec::new(),
            });
        } else {
            let constrained = recipe.constrained;
            let fit = |r: usize| if constrained { prob.fit_constrained(r) } else { prob.fit(r) };
            select(study, &mut out, "velocity", prob.max_rank(), Target::Velocity, fit, attach)?;
        }
    }

    if recipe.exact_pressure {
        let online = study.online();
        out.forcing.momentum = Some(study.exact.tau_p1.values.rows(online.start, online.len()).clone_owned());
        out.forcing.constraint = Some(study.exact.tau_p2.values.rows(online.start, online.len()).clone_owned());
    }

    if fl.c_p1 || fl.c_p2 {
        let p1 = FitProblem::new(FeatureSpec::linear(InputSpec::B), &a, &b, &series.tau_p1.values)?;
        let p2 = FitProblem::new(FeatureSpec::linear(InputSpec::A), &a, &b, &series.tau_p2.values)?;
        let attach_h = |f: &mut Fitted, m: CorrectionModel<f64>| {
            f.flags.c_p1 = true;
            f.models.pressure_h = Some(m);
        };
        let attach_p = |f: &mut Fitted, m: CorrectionModel<f64>| {
            f.flags.c_p2 = true;
            f.models.pressure_p = Some(m);
        };
        if fl.c_p1 && fl.c_p2 && recipe.pressure_mode == PressureFitMode::Joint {
            let max = (2 * a.nrows()).min(a.ncols() + b.ncols());
            let fit = |r: usize| fit_pressure_sup(PressureFitMode::Joint, &series.tau_p1, &series.tau_p2, &a, &b, r);
            let attach = |f: &mut Fitted, (h, p): (CorrectionModel<f64>, CorrectionModel<f64>)| {
                attach_h(f, h);
                attach_p(f, p);
            };
            select(study, &mut out, "pressure", max, Target::Pressure, fit, attach)?;
        } else {
            if fl.c_p1 {
                select(study, &mut out, "pressure_h", p1.max_rank(), Target::Pressure, |r| p1.fit(r), attach_h)?;
            }
            if fl.c_p2 {
                select(study, &mut out, "pressure_p", p2.max_rank(), Target::Pressure, |r| p2.fit(r), attach_p)?;
            }
        }
    }

    if fl.c_d || fl.c_g {
        let s = PpeSeries {
            tau_u: Some(&series.tau_u),
            tau_d: &series.tau_d,
            tau_g: &series.tau_g,
        };
        let joint = fl.c_d && fl.c_g && recipe.ppe_joint != PpeJoint::Separate;
        if case3 {
            let prob = ppe_problem(PpeFitCase::JointCase3, &s, &a, &b)?;
            let attach = |f: &mut Fitted, m: CorrectionModel<f64>| {
                let (mom, poi) = split_joint(&m);
                f.flags.c_u = true;
                f.flags.c_d = true;
                f.flags.c_g = true;
                f.models.joint_momentum = Some(mom);
                f.models.joint_poisson = Some(poi);
            };
            select(study, &mut out, "joint", prob.max_rank(), Target::Both, |r| prob.fit(r), attach)?;
        } else if joint {
            let case = if recipe.ppe_joint == PpeJoint::Case1 { PpeFitCase::JointCase1 } else { PpeFitCase::JointCase2 };
            let prob = ppe_problem(case, &s, &a, &b)?;
            let attach = |f: &mut Fitted, m: CorrectionModel<f64>| {
                f.flags.c_d = true;
                f.flags.c_g = true;
                f.models.ppe_joint = Some(m);
            };
            select(study, &mut out, "ppe_joint", prob.max_rank(), Target::Pressure, |r| prob.fit(r), attach)?;
        } else {
            if fl.c_d {
                let prob = ppe_problem(ppe_case(recipe), &s, &a, &b)?;
                let attach = |f: &mut Fitted, m: CorrectionModel<f64>| {
                    f.flags.c_d = true;
                    f.models.ppe_d = Some(m);
                };
                select(study, &mut out, "ppe_d", prob.max_rank(), Target::Pressure, |r| prob.fit(r), attach)?;
            }
            if fl.c_g {
                let prob = ppe_problem(PpeFitCase::G, &s, &a, &b)?;
                let attach = |f: &mut Fitted, m: CorrectionModel<f64>| {
                    f.flags.c_g = true;
                    f.models.ppe_g = Some(m);
                };
                select(study, &mut out, "ppe_g", prob.max_rank(), Target::Pressure, |r| prob.fit(r), attach)?;
            }
        }
    }
    Ok(out)
}

/// Metrics of one reduced solve over the training and online windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub formulation: Formulation,
    pub flags: String,
    pub ranks: Vec<(String, usize)>,
    #[serde(with = "crate::scalar::serde_f64")]
    pub eps_u_train: f64,
    #[serde(with = "crate::scalar::serde_f64")]
    pub eps_p_train: f64,
    #[serde(with = "crate::scalar::serde_f64")]
    pub eps_u: f64,
    #[serde(with = "crate::scalar::serde_f64")]
    pub eps_p: f64,
    #[serde(with = "crate::scalar::serde_f64")]
    pub mean_rel_u: f64,
    #[serde(with = "crate::scalar::serde_f64")]
    pub mean_rel_p: f64,
    pub diverged: Option<usize>,
    pub max_newton_iters: usize,
    pub solve_seconds: f64,
}

/// A solved model with its error series.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub summary: Summary,
    pub rel_u: ErrorSeries,
    pub rel_p: ErrorSeries,
}

/// Integrates a fitted model over the online horizon.
pub fn solve_fitted(study: &Study, fitted: &Fitted) -> Result<(RomTrajectory<f64>, f64)> {
    let start = Instant::now();
    let tr = study.solve(&fitted.spec(study, study.cfg.rom.horizon))?;
    Ok((tr, start.elapsed().as_secs_f64()))
}

/// Error metrics and relative-error series of a trajectory.
pub fn evaluate(study: &Study, fitted: &Fitted, tr: &RomTrajectory<f64>, seconds: f64) -> Result<Evaluation> {
    let f = fitted.recipe.formulation;
    let train = study.cfg.fit.train_steps + 1;
    let (eps_u_train, eps_p_train) = study.metrics(f, tr, train)?;
    let (eps_u, eps_p) = study.metrics(f, tr, study.cfg.rom.horizon + 1)?;
    let (rel_u, rel_p) = relative_series(study, f, tr)?;
    Ok(Evaluation {
        summary: Summary {
            model: fitted.recipe.name.clone(),
            formulation: f,
            flags: fitted.flags.label(),
            ranks: fitted.selections.iter().map(|s| (s.component.clone(), s.rank)).collect(),
            eps_u_train,
            eps_p_train,
            eps_u,
            eps_p,
            mean_rel_u: rel_u.mean(),
            mean_rel_p: rel_p.mean(),
            diverged: tr.diverged,
            max_newton_iters: tr.newton_iters.iter().copied().max().unwrap_or(0),
            solve_seconds: seconds,
        },
        rel_u,
        rel_p,
    })
}

/// Relative errors against the data-rank reconstructions, over the levels
/// the trajectory reached.
pub fn relative_series(study: &Study, f: Formulation, tr: &RomTrajectory<f64>) -> Result<(ErrorSeries, ErrorSeries)> {
    let t = study.track(f);
    let n = tr.len();
    let online = study.online();
    let h = &study.ops.history;
    let ref_a = h.a_d.rows(online.start, n).clone_owned();
    let ref_b = h.b_dp.rows(online.start, n).clone_owned();
    let times = &study.online_times()[..n];
    let modes = t.basis.modes();
    let q = study.bases.pressure_basis(&study.cfg)?;
    relative_errors(
        FieldHistory {
            modes: &modes,
            coefficients: &tr.a,
            times: &tr.times,
        },
        FieldHistory {
            modes: &q.modes,
            coefficients: &tr.b,
            times: &tr.times,
        },
        FieldHistory {
            modes: &study.bases.velocity.modes,
            coefficients: &ref_a,
            times,
        },
        FieldHistory {
            modes: &study.bases.pressure.modes,
            coefficients: &ref_b,
            times,
        },
        &vec![study.grid.cell_area(); study.grid.n_fluid()],
    )
}

/// Projection floors of the working ranks over the online window.
pub fn reconstruction_series(study: &Study) -> Result<(ErrorSeries, ErrorSeries)> {
    let online = study.online();
    let h = &study.ops.history;
    reconstruction_errors(
        &study.bases.velocity.modes,
        &h.a_d.rows(online.start, online.len()).clone_owned(),
        &study.bases.pressure.modes,
        &h.b_dp.rows(online.start, online.len()).clone_owned(),
        study.cfg.pod.n_u,
        study.cfg.pod.n_p,
        &vec![study.grid.cell_area(); study.grid.n_fluid()],
        study.online_times(),
    )
}

/// Fits, solves and evaluates one recipe; a failed fit or solve is
/// reported as a divergence rather than aborting the table.
pub fn run_row(study: &Study, recipe: &Recipe) -> (Evaluation, Vec<Selection>) {
    let attempt = || -> Result<(Evaluation, Vec<Selection>)> {
        let fitted = fit_recipe(study, recipe)?;
        let (tr, secs) = solve_fitted(study, &fitted)?;
        Ok((evaluate(study, &fitted, &tr, secs)?, fitted.selections))
    };
    attempt().unwrap_or_else(|e| {
        log::warn!("{}: {e}", recipe.name);
        let nan = ErrorSeries {
            kind: crate::metrics::ErrorKind::RelVelocity,
            times: Vec::new(),
            values: Vec::new(),
        };
        let ev = Evaluation {
            summary: Summary {
                model: recipe.name.clone(),
                formulation: recipe.formulation,
                flags: recipe.flags.label(),
                ranks: Vec::new(),
                eps_u_train: f64::INFINITY,
                eps_p_train: f64::INFINITY,
                eps_u: f64::INFINITY,
                eps_p: f64::INFINITY,
                mean_rel_u: f64::NAN,
                mean_rel_p: f64::NAN,
                diverged: Some(0),
                max_newton_iters: 0,
                solve_seconds: 0.0,
            },
            rel_u: nan.clone(),
            rel_p: ErrorSeries {
                kind: crate::metrics::ErrorKind::RelPressure,
                ..nan
            },
        };
        (ev, Vec::new())
    })
}

/// Fixed-width comparison table.
pub fn format_table(rows: &[Summary]) -> String {
    let mut s = format!(
        "{:<18} {:>12} {:>12} {:>12} {:>12} {:<40} {:>9} {:>10}\n",
        "model", "eps_u_train", "eps_p_train", "eps_u", "eps_p", "ranks", "diverged", "seconds"
    );
    for r in rows {
        let ranks: Vec<String> = r.ranks.iter().map(|(c, k)| format!("{c}={k}")).collect();
        let ranks = if ranks.is_empty() { "-".to_string() } else { ranks.join(",") };
        let div = r.diverged.map_or("-".to_string(), |k| k.to_string());
        s.push_str(&format!(
            "{:<18} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:<40} {:>9} {:>10.4}\n",
            r.model, r.eps_u_train, r.eps_p_train, r.eps_u, r.eps_p, ranks, div, r.solve_seconds
        ));
    }
    s
}

/// Comparison table as CSV.
pub fn table_csv(rows: &[Summary]) -> String {
    let mut s = String::from("model,formulation,flags,ranks,eps_u_train,eps_p_train,eps_u,eps_p,mean_rel_u,mean_rel_p,diverged,max_newton_iters,solve_seconds\n");
    for r in rows {
        let ranks: Vec<String> = r.ranks.iter().map(|(c, k)| format!("{c}={k}")).collect();
        let form = match r.formulation {
            Formulation::Sup => "sup",
            Formulation::Ppe => "ppe",
        };
        s.push_str(&format!(
            "{},{form},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:e}\n",
            r.model,
            r.flags,
            ranks.join(";"),
            r.eps_u_train,
            r.eps_p_train,
            r.eps_u,
            r.eps_p,
            r.mean_rel_u,
            r.mean_rel_p,
            r.diverged.map_or(String::new(), |k| k.to_string()),
            r.max_newton_iters,
            r.solve_seconds
        ));
    }
    s
}
