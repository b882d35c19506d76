//! Staged, resumable end-to-end runs driven by a configuration file.

pub mod config;
pub mod export;
pub mod models;
pub mod stages;
pub mod study;

pub use config::{config_hash, DAnsatz, FitConfig, PodConfig, PpeJoint, RomConfig, RunConfig};
pub use export::{export, Figure};
pub use models::{format_table, Recipe, Summary};
pub use stages::{with_pool, Outcome, Runner, Stage};
