//! Plot data and gnuplot scripts built from stored stage outputs only.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use serde_json::Value;

use crate::error::{Result, RomError};
use crate::pipeline::models::Selection;
use crate::pipeline::stages::{Runner, Stage};
use crate::store::Archive;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Errors,
    Decay,
    Ranks,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Errors, Figure::Decay, Figure::Ranks];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Errors => "errors",
            Figure::Decay => "decay",
            Figure::Ranks => "ranks",
        }
    }
}

impl FromStr for Figure {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| RomError::Config(format!("unknown figure `{s}`; expected errors, decay or ranks")))
    }
}

/// `x value` lines.
pub fn dat(xs: impl IntoIterator<Item = f64>, ys: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (x, y) in xs.into_iter().zip(ys) {
        let _ = writeln!(s, "{x} {y:e}");
    }
    s
}

fn script(title: &str, xlabel: &str, ylabel: &str, logy: bool, files: &[(String, String)]) -> String {
    let mut s = format!("set title \"{title}\"\nset xlabel \"{xlabel}\"\nset ylabel \"{ylabel}\"\nset grid\n");
    if logy {
        s.push_str("set logscale y\n");
    }
    let parts: Vec<String> = files.iter().map(|(f, label)| format!("\"{f}\" using 1:2 with linespoints title \"{label}\"")).collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, text)?;
        self.written.push(p);
        Ok(())
    }
}

fn series(ar: &Archive, name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = ar.vector::<f64>(&format!("{name}.times"))?;
    let v = ar.vector::<f64>(&format!("{name}.values"))?;
    Ok((t.iter().copied().collect(), v.iter().copied().collect()))
}

fn errors(runner: &Runner, w: &mut Writer) -> Result<()> {
    let ar = runner.open(Stage::Evaluate)?;
    let mut files = Vec::new();
    for name in ["rel_velocity", "rel_pressure", "reconstruction_velocity", "reconstruction_pressure"] {
        let (t, v) = series(&ar, name)?;
        let f = format!("errors_{name}.dat");
        w.put(&f, &dat(t, v))?;
        files.push((f, name.replace('_', " ")));
    }
    w.put("errors.gp", &script("relative errors", "t", "relative error", true, &files))?;
    if let Ok(mx) = runner.open(Stage::Matrix) {
        for field in ["rel_velocity", "rel_pressure"] {
            let mut files = Vec::new();
            for name in mx.names().filter_map(|n| n.strip_suffix(&format!(".{field}.values")).map(str::to_string)) {
                let (t, v) = series(&mx, &format!("{name}.{field}"))?;
                let f = format!("matrix_{name}_{field}.dat");
                w.put(&f, &dat(t, v))?;
                files.push((f, name));
            }
            w.put(&format!("matrix_{field}.gp"), &script(&field.replace('_', " "), "t", "relative error", true, &files))?;
        }
    }
    Ok(())
}

fn decay(runner: &Runner, w: &mut Writer) -> Result<()> {
    let ar = runner.open(Stage::Pod)?;
    let mut files = Vec::new();
    for kind in ["velocity", "pressure", "supremizer"] {
        let key = format!("{kind}.spectrum");
        if !ar.contains(&key) {
            continue;
        }
        let sp: Vec<f64> = ar.vector::<f64>(&key)?.iter().copied().collect();
        let total: f64 = sp.iter().sum();
        let f = format!("decay_{kind}.dat");
        w.put(&f, &dat((1..=sp.len()).map(|k| k as f64), sp.iter().map(|l| l / total)))?;
        files.push((f, kind.to_string()));
    }
    w.put("decay.gp", &script("normalized eigenvalues", "k", "lambda_k / sum", true, &files))
}

fn rank_files(w: &mut Writer, prefix: &str, sels: &[Selection], files: &mut Vec<(String, String)>) -> Result<()> {
    for s in sels.iter().filter(|s| !s.scores.is_empty()) {
        let f = format!("ranks_{prefix}{}.dat", s.component);
        w.put(&f, &dat(s.scores.iter().map(|r| r.rank as f64), s.scores.iter().map(|r| r.metric)))?;
        files.push((f, format!("{prefix}{}", s.component)));
    }
    Ok(())
}

fn ranks(runner: &Runner, w: &mut Writer) -> Result<()> {
    let ar = runner.open(Stage::Fit)?;
    let sels: Vec<Selection> = serde_json::from_value(ar.metadata("selections").cloned().unwrap_or(Value::Null))?;
    let mut files = Vec::new();
    rank_files(w, "", &sels, &mut files)?;
    if let Ok(mx) = runner.open(Stage::Matrix) {
        if let Some(Value::Object(rows)) = mx.metadata("selections") {
            for (name, v) in rows {
                let sels: Vec<Selection> = serde_json::from_value(v.clone())?;
                rank_files(w, &format!("{name}."), &sels, &mut files)?;
            }
        }
    }
    if files.is_empty() {
        return Err(RomError::Archive("no rank searches stored; the configured model has no corrections".into()));
    }
    w.put("ranks.gp", &script("selection metric against truncation rank", "rank", "metric", true, &files))
}

/// Writes the requested figures into `output/plots` and returns the paths.
pub fn export(runner: &Runner, figures: &[Figure]) -> Result<Vec<PathBuf>> {
    let dir = runner.cfg.output.join("plots");
    fs::create_dir_all(&dir)?;
    let mut w = Writer { dir, written: Vec::new() };
    for f in figures {
        match f {
            Figure::Errors => errors(runner, &mut w),
            Figure::Decay => decay(runner, &mut w),
            Figure::Ranks => ranks(runner, &mut w),
        }
        .map_err(|e| e.in_stage("export"))?;
    }
    Ok(w.written)
}
