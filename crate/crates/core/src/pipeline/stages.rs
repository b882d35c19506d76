//! Resumable pipeline stages. Each stage writes one archive under the
//! output directory and is skipped when its stored configuration hash
//! matches the current one.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};

use crate::error::{Result, RomError};
use crate::metrics::ErrorSeries;
use crate::pipeline::config::{config_hash, RunConfig};
use crate::pipeline::models::{evaluate, fit_recipe, format_table, reconstruction_series, run_row, solve_fitted, table_csv, Fitted, Recipe, Summary};
use crate::pipeline::study::{model_items, model_load, Bases, Operators, Snapshots, Study};
use crate::pod::{decay_csv, eigen_decay_report};
use crate::rom::RomTrajectory;
use crate::store::{save_archive, Archive, ArchiveItem};

const HASH_KEY: &str = "config_hash";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Generate,
    Pod,
    Assemble,
    Fit,
    Solve,
    Evaluate,
    Matrix,
}

impl Stage {
    /// Stages run by `pipeline`, in order.
    pub const CHAIN: [Stage; 6] = [Stage::Generate, Stage::Pod, Stage::Assemble, Stage::Fit, Stage::Solve, Stage::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Pod => "pod",
            Stage::Assemble => "assemble",
            Stage::Fit => "fit",
            Stage::Solve => "solve",
            Stage::Evaluate => "evaluate",
            Stage::Matrix => "matrix",
        }
    }

    /// Archive directory name under the output root.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Generate => "snapshots",
            Stage::Assemble => "operators",
            s => s.name(),
        }
    }

    fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Generate => None,
            Stage::Pod => Some(Stage::Generate),
            Stage::Assemble => Some(Stage::Pod),
            Stage::Fit | Stage::Matrix => Some(Stage::Assemble),
            Stage::Solve => Some(Stage::Fit),
            Stage::Evaluate => Some(Stage::Solve),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

/// Runs `f` on a rayon pool of `jobs` threads (all cores if `None`).
pub fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(RomError::Config("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| RomError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

pub struct Runner {
    pub cfg: RunConfig,
    pub force: bool,
}

impl Runner {
    pub fn new(cfg: RunConfig, force: bool) -> Self {
        Runner { cfg, force }
    }

    pub fn archive_path(&self, stage: Stage) -> PathBuf {
        self.cfg.output.join(stage.dir())
    }

    pub fn csv_dir(&self) -> PathBuf {
        self.cfg.output.join("csv")
    }

    /// Hash of the configuration sections a stage depends on.
    pub fn hash(&self, stage: Stage) -> String {
        let c = &self.cfg;
        match stage {
            Stage::Generate => config_hash(&(stage.name(), &c.fom)),
            Stage::Pod => config_hash(&(stage.name(), &c.fom, &c.pod)),
            Stage::Assemble => config_hash(&(stage.name(), &c.fom, &c.pod, c.rom.tau_pen)),
            _ => config_hash(&(stage.name(), &c.fom, &c.pod, &c.fit, &c.rom)),
        }
    }

    fn stored_hash(&self, stage: Stage) -> Option<String> {
        let path = self.archive_path(stage);
        if !Archive::exists(&path) {
            return None;
        }
        let ar = Archive::open(&path).ok()?;
        ar.metadata(HASH_KEY).and_then(Value::as_str).map(str::to_string)
    }

    pub fn is_current(&self, stage: Stage) -> bool {
        self.stored_hash(stage).as_deref() == Some(self.hash(stage).as_str())
    }

    /// Opens a stage archive, failing if it is missing or stale.
    pub fn open(&self, stage: Stage) -> Result<Archive> {
        match self.stored_hash(stage) {
            None => Err(RomError::Archive(format!("no `{stage}` output in {}; run `{stage}` first", self.cfg.output.display()))),
            Some(h) if h != self.hash(stage) => Err(RomError::Archive(format!("`{stage}` output is stale for this configuration; rerun `{stage}`"))),
            Some(_) => Archive::open(self.archive_path(stage)),
        }
    }

    fn save(&self, stage: Stage, items: &[(String, ArchiveItem)], mut meta: std::collections::BTreeMap<String, Value>) -> Result<()> {
        meta.insert(HASH_KEY.into(), json!(self.hash(stage)));
        meta.insert("stage".into(), json!(stage.name()));
        save_archive(self.archive_path(stage), items, meta)
    }

    fn write_csv(&self, name: &str, text: &str) -> Result<()> {
        let dir = self.csv_dir();
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(name), text)?;
        Ok(())
    }

    /// Runs one stage unless it is up to date.
    pub fn run(&self, stage: Stage) -> Result<Outcome> {
        self.run_inner(stage).map_err(|e| e.in_stage(stage.name()))
    }

    /// Runs the chain from `generate` to `evaluate`.
    pub fn pipeline(&self) -> Result<Vec<(Stage, Outcome)>> {
        Stage::CHAIN.iter().map(|&s| self.run(s).map(|o| (s, o))).collect()
    }

    fn run_inner(&self, stage: Stage) -> Result<Outcome> {
        if let Some(up) = stage.upstream() {
            self.open(up)?;
        }
        if !self.force && self.is_current(stage) {
            log::info!("{stage}: up to date, skipped");
            if stage == Stage::Solve {
                self.check_solved()?;
            }
            return Ok(Outcome::Skipped);
        }
        log::info!("{stage}: running");
        match stage {
            Stage::Generate => self.generate(),
            Stage::Pod => self.pod(),
            Stage::Assemble => self.assemble(),
            Stage::Fit => self.fit(),
            Stage::Solve => self.solve(),
            Stage::Evaluate => self.evaluate(),
            Stage::Matrix => self.matrix().map(|_| ()),
        }?;
        Ok(Outcome::Ran)
    }

    fn generate(&self) -> Result<()> {
        let s = Snapshots::generate(&self.cfg)?;
        log::info!("generate: {} snapshots", s.len());
        self.save(Stage::Generate, &s.items(), Default::default())
    }

    fn pod(&self) -> Result<()> {
        for w in self.cfg.warnings() {
            log::warn!("{w}");
        }
        let grid = self.cfg.fom.grid()?;
        let snaps = Snapshots::load(&self.open(Stage::Generate)?)?;
        let bases = Bases::compute(&self.cfg, &grid, &snaps)?;
        let mut report = vec![&bases.velocity, &bases.pressure];
        report.extend(bases.supremizer.as_ref());
        self.write_csv("eigen_decay.csv", &decay_csv(&eigen_decay_report(&report)))?;
        self.save(Stage::Pod, &bases.items(), Default::default())
    }

    fn assemble(&self) -> Result<()> {
        let grid = self.cfg.fom.grid()?;
        let snaps = Snapshots::load(&self.open(Stage::Generate)?)?;
        let bases = Bases::load(&self.open(Stage::Pod)?, &grid)?;
        let ops = Operators::assemble(&self.cfg, &grid, &bases, &snaps)?;
        let (items, meta) = ops.items();
        self.save(Stage::Assemble, &items, meta)
    }

    /// Loads everything the reduced stages work on.
    pub fn study(&self) -> Result<Study> {
        let grid = self.cfg.fom.grid()?;
        let snaps = Snapshots::load(&self.open(Stage::Generate)?)?;
        let bases = Bases::load(&self.open(Stage::Pod)?, &grid)?;
        let ops = Operators::load(&self.open(Stage::Assemble)?)?;
        Study::new(self.cfg.clone(), grid, snaps, bases, ops)
    }

    fn fit(&self) -> Result<()> {
        for w in self.cfg.warnings() {
            log::warn!("{w}");
        }
        let study = self.study()?;
        let fitted = fit_recipe(&study, &Recipe::from_config(&self.cfg))?;
        let mut items = Vec::new();
        let mut meta = std::collections::BTreeMap::new();
        let m = &fitted.models;
        for (slot, model) in [
            ("velocity", &m.velocity),
            ("pressure_h", &m.pressure_h),
            ("pressure_p", &m.pressure_p),
            ("ppe_d", &m.ppe_d),
            ("ppe_g", &m.ppe_g),
            ("ppe_joint", &m.ppe_joint),
            ("joint_momentum", &m.joint_momentum),
            ("joint_poisson", &m.joint_poisson),
        ] {
            if let Some(model) = model {
                model_items(&mut items, &mut meta, slot, model);
            }
        }
        meta.insert("recipe".into(), serde_json::to_value(&fitted.recipe)?);
        meta.insert("flags".into(), serde_json::to_value(fitted.flags)?);
        meta.insert("selections".into(), serde_json::to_value(&fitted.selections)?);
        let mut csv = String::from("component,rank,metric\n");
        for s in &fitted.selections {
            for sc in &s.scores {
                csv.push_str(&format!("{},{},{:e}\n", s.component, sc.rank, sc.metric));
            }
        }
        self.write_csv("rank_scores.csv", &csv)?;
        self.save(Stage::Fit, &items, meta)
    }

    /// Fitted models as stored by the `fit` stage.
    pub fn load_fitted(&self) -> Result<Fitted> {
        let ar = self.open(Stage::Fit)?;
        let get = |k: &str| ar.metadata(k).cloned().ok_or_else(|| RomError::Archive(format!("fit metadata lacks `{k}`")));
        let mut f = Fitted {
            recipe: serde_json::from_value(get("recipe")?)?,
            flags: serde_json::from_value(get("flags")?)?,
            models: Default::default(),
            forcing: Default::default(),
            selections: serde_json::from_value(get("selections")?)?,
        };
        let m = &mut f.models;
        m.velocity = model_load(&ar, "velocity")?;
        m.pressure_h = model_load(&ar, "pressure_h")?;
        m.pressure_p = model_load(&ar, "pressure_p")?;
        m.ppe_d = model_load(&ar, "ppe_d")?;
        m.ppe_g = model_load(&ar, "ppe_g")?;
        m.ppe_joint = model_load(&ar, "ppe_joint")?;
        m.joint_momentum = model_load(&ar, "joint_momentum")?;
        m.joint_poisson = model_load(&ar, "joint_poisson")?;
        Ok(f)
    }

    fn solve(&self) -> Result<()> {
        let study = self.study()?;
        let fitted = self.load_fitted()?;
        let (tr, secs) = solve_fitted(&study, &fitted)?;
        let items = vec![
            ("a".to_string(), ArchiveItem::Matrix(tr.a.clone())),
            ("b".to_string(), ArchiveItem::Matrix(tr.b.clone())),
            ("times".to_string(), ArchiveItem::Vector(tr.times.clone())),
            ("newton_iters".to_string(), ArchiveItem::Vector(tr.newton_iters.iter().map(|&k| k as f64).collect())),
            ("newton_residuals".to_string(), ArchiveItem::Vector(tr.newton_residuals.clone())),
        ];
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("diverged".into(), json!(tr.diverged));
        meta.insert("seconds".into(), json!(secs));
        self.write_csv("newton.csv", &tr.newton_csv())?;
        self.save(Stage::Solve, &items, meta)?;
        self.check_solved()
    }

    fn check_solved(&self) -> Result<()> {
        let ar = self.open(Stage::Solve)?;
        match ar.metadata("diverged").and_then(Value::as_u64) {
            Some(k) => Err(RomError::NonFinite(format!("reduced solve diverged at step {k}"))),
            None => Ok(()),
        }
    }

    /// Trajectory as stored by the `solve` stage.
    pub fn load_trajectory(&self) -> Result<(RomTrajectory<f64>, f64)> {
        let ar = self.open(Stage::Solve)?;
        let tr = RomTrajectory {
            times: ar.vector::<f64>("times")?.iter().copied().collect(),
            a: ar.matrix("a")?,
            b: ar.matrix("b")?,
            newton_iters: ar.vector::<f64>("newton_iters")?.iter().map(|&k| k as usize).collect(),
            newton_residuals: ar.vector::<f64>("newton_residuals")?.iter().copied().collect(),
            diverged: ar.metadata("diverged").and_then(Value::as_u64).map(|k| k as usize),
        };
        let secs = ar.metadata("seconds").and_then(Value::as_f64).unwrap_or(0.0);
        Ok((tr, secs))
    }

    fn evaluate(&self) -> Result<()> {
        let study = self.study()?;
        let fitted = self.load_fitted()?;
        let (tr, secs) = self.load_trajectory()?;
        let ev = evaluate(&study, &fitted, &tr, secs)?;
        let (rec_u, rec_p) = reconstruction_series(&study)?;
        let mut items = Vec::new();
        for s in [&ev.rel_u, &ev.rel_p, &rec_u, &rec_p] {
            push_series(&mut items, s);
        }
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("summary".into(), serde_json::to_value(&ev.summary)?);
        for s in [&ev.rel_u, &ev.rel_p, &rec_u, &rec_p] {
            self.write_csv(&format!("{}.csv", s.kind.name()), &s.to_csv())?;
        }
        self.write_csv("summary.csv", &table_csv(std::slice::from_ref(&ev.summary)))?;
        log::info!(
            "evaluate: eps_u {:.4e}, eps_p {:.4e}, mean relative errors {:.4e} / {:.4e}",
            ev.summary.eps_u,
            ev.summary.eps_p,
            ev.summary.mean_rel_u,
            ev.summary.mean_rel_p
        );
        self.save(Stage::Evaluate, &items, meta)
    }

    /// Runs every comparison-table row and stores the summaries, the
    /// relative-error series and the rank scores of each row.
    pub fn matrix(&self) -> Result<Vec<Summary>> {
        let study = self.study()?;
        let recipes = Recipe::table();
        let rows: Vec<_> = {
            use rayon::prelude::*;
            recipes.par_iter().map(|r| (r.name.clone(), run_row(&study, r))).collect()
        };
        let mut items = Vec::new();
        let mut summaries = Vec::new();
        let mut selections = serde_json::Map::new();
        for (name, (ev, sel)) in &rows {
            for s in [&ev.rel_u, &ev.rel_p] {
                if !s.values.is_empty() {
                    items.push((format!("{name}.{}.values", s.kind.name()), ArchiveItem::Vector(s.values.clone())));
                    items.push((format!("{name}.{}.times", s.kind.name()), ArchiveItem::Vector(s.times.clone())));
                }
            }
            selections.insert(name.clone(), serde_json::to_value(sel)?);
            summaries.push(ev.summary.clone());
        }
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("summaries".into(), serde_json::to_value(&summaries)?);
        meta.insert("selections".into(), Value::Object(selections));
        let table = format_table(&summaries);
        self.write_csv("matrix.csv", &table_csv(&summaries))?;
        self.write_csv("matrix.txt", &table)?;
        self.save(Stage::Matrix, &items, meta)?;
        Ok(summaries)
    }

    /// Summaries stored by the `matrix` stage.
    pub fn load_matrix(&self) -> Result<Vec<Summary>> {
        let ar = self.open(Stage::Matrix)?;
        let v = ar.metadata("summaries").cloned().ok_or_else(|| RomError::Archive("matrix summaries missing".into()))?;
        Ok(serde_json::from_value(v)?)
    }
}

fn push_series(items: &mut Vec<(String, ArchiveItem)>, s: &ErrorSeries) {
    items.push((format!("{}.values", s.kind.name()), ArchiveItem::Vector(s.values.clone())));
    items.push((format!("{}.times", s.kind.name()), ArchiveItem::Vector(s.times.clone())));
}
