use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RomError};
use crate::fom::FomConfig;
use crate::rom::{CorrectionFlags, Formulation, TimeScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodConfig {
    pub n_u: usize,
    pub n_p: usize,
    #[serde(default)]
    pub n_sup: usize,
    /// Data ranks of the velocity and pressure bases.
    pub d: usize,
    pub d_p: usize,
}

/// Ansatz for `τ_D` when it is fitted on its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DAnsatz {
    Linear,
    #[default]
    Quadratic,
}

/// How `τ_D` and `τ_G` are fitted when both are enabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PpeJoint {
    Separate,
    #[default]
    Case1,
    Case2,
    /// Stacked with `τ_u`; needs `c_u` as well.
    Case3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Apply the dissipativity and energy-conservation projection to the
    /// velocity correction.
    #[serde(default)]
    pub constrained: bool,
    /// Largest truncation rank tried; defaults to the design column count.
    #[serde(default)]
    pub max_rank: Option<usize>,
    /// Reduced time steps in the training window, from the online start.
    pub train_steps: usize,
    #[serde(default = "separate")]
    pub pressure_mode: crate::closure::PressureFitMode,
    #[serde(default)]
    pub d_ansatz: DAnsatz,
    #[serde(default)]
    pub ppe_joint: PpeJoint,
}

fn separate() -> crate::closure::PressureFitMode {
    crate::closure::PressureFitMode::Separate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomConfig {
    pub formulation: Formulation,
    #[serde(default = "bdf2")]
    pub scheme: TimeScheme,
    #[serde(default)]
    pub flags: CorrectionFlags,
    /// Reduced time steps of the online run; one step per snapshot interval.
    pub horizon: usize,
    /// Snapshot index of the initial condition.
    #[serde(default)]
    pub online_start: usize,
    #[serde(default = "tau_default")]
    pub tau_pen: f64,
}

fn bdf2() -> TimeScheme {
    TimeScheme::Bdf2
}

fn tau_default() -> f64 {
    1000.0
}

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory, relative to the configuration file.
    pub output: PathBuf,
    pub fom: FomConfig,
    pub pod: PodConfig,
    pub fit: FitConfig,
    pub rom: RomConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RomError::Config(e.to_string()))
    }

    /// Reads and validates `path`; a relative `output` is resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output = base.join(&cfg.output);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Snapshots saved by the full-order run.
    pub fn n_snapshots(&self) -> usize {
        self.fom.n_steps / self.fom.save_every
    }

    /// Reduced time step: one snapshot interval.
    pub fn rom_dt(&self) -> f64 {
        self.fom.dt * self.fom.save_every as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.fom.validate()?;
        let (p, f, r) = (&self.pod, &self.fit, &self.rom);
        if p.n_u == 0 || p.n_p == 0 {
            return Err(RomError::Config("n_u and n_p must be positive".into()));
        }
        if p.n_u > p.d || p.n_p > p.d_p {
            return Err(RomError::RankOrder(format!("need n_u <= d and n_p <= d_p, got ({}, {}) vs ({}, {})", p.n_u, p.n_p, p.d, p.d_p)));
        }
        let m = self.n_snapshots();
        if p.d > m || p.d_p > m || p.n_sup > m {
            return Err(RomError::Config(format!("{m} snapshots cannot support data ranks ({}, {}) and {} supremizers", p.d, p.d_p, p.n_sup)));
        }
        if r.horizon == 0 || r.online_start + r.horizon >= m {
            return Err(RomError::Config(format!(
                "online window [{}, {}] must lie inside the {m} snapshots",
                r.online_start,
                r.online_start + r.horizon
            )));
        }
        if f.train_steps == 0 || f.train_steps > r.horizon {
            return Err(RomError::Config("train_steps must be between 1 and the horizon".into()));
        }
        if !(r.tau_pen > 0.0) {
            return Err(RomError::Config("tau_pen must be positive".into()));
        }
        let fl = r.flags;
        match r.formulation {
            Formulation::Sup if fl.c_d || fl.c_g => return Err(RomError::Config("c_D and c_G need the ppe formulation".into())),
            Formulation::Ppe if fl.c_p1 || fl.c_p2 => return Err(RomError::Config("c_p1 and c_p2 need the sup formulation".into())),
            _ => {}
        }
        if r.formulation == Formulation::Ppe && f.ppe_joint == PpeJoint::Case3 && fl.c_d && fl.c_g && !fl.c_u {
            return Err(RomError::Config("ppe_joint = \"case3\" needs c_u".into()));
        }
        Ok(())
    }

    /// Warnings about choices known to destabilise the reduced model.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.rom.formulation == Formulation::Sup && self.pod.n_sup < self.pod.n_p {
            w.push(format!(
                "n_sup = {} is below n_p = {}; the supremizer-enriched model may be unstable",
                self.pod.n_sup, self.pod.n_p
            ));
        }
        w
    }
}

/// Hex SHA-256 of the JSON form of `value`; pass a tuple to hash several
/// sections together.
pub fn config_hash<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"
output = "out"

[fom]
scenario = "taylor-green"
nx = 16
ny = 16
nu = 0.05
dt = 0.02
n_steps = 40
save_every = 2

[pod]
n_u = 2
n_p = 2
n_sup = 2
d = 6
d_p = 6

[fit]
train_steps = 4

[rom]
formulation = "sup"
horizon = 10
flags = { c_u = true }
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_toml(SAMPLE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.rom.scheme, TimeScheme::Bdf2);
        assert_eq!(c.rom.tau_pen, 1000.0);
        assert!(c.rom.flags.c_u && !c.rom.flags.c_p1);
        assert_eq!(c.n_snapshots(), 20);
        assert!((c.rom_dt() - 0.04).abs() < 1e-15);
        assert!(c.warnings().is_empty());
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_inconsistent_windows_and_flags() {
        let mut c = RunConfig::from_toml(SAMPLE).unwrap();
        c.rom.horizon = 20;
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_toml(SAMPLE).unwrap();
        c.fit.train_steps = 11;
        assert!(c.validate().is_err());
        let mut c = RunConfig::from_toml(SAMPLE).unwrap();
        c.rom.flags.c_d = true;
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml(&SAMPLE.replace("horizon", "horizont")).is_err());
    }

    #[test]
    fn warns_on_few_supremizers() {
        let mut c = RunConfig::from_toml(SAMPLE).unwrap();
        c.pod.n_sup = 1;
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn hash_tracks_content() {
        let c = RunConfig::from_toml(SAMPLE).unwrap();
        let h1 = config_hash(&c.fom);
        let mut c2 = c.clone();
        c2.fom.nu = 0.06;
        assert_ne!(h1, config_hash(&c2.fom));
        assert_eq!(h1, config_hash(&c.fom));
    }
}
