use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tg_config(dir: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/taylor_green.toml");
    let text = fs::read_to_string(src).unwrap().replace("../runs/taylor_green", "out");
    let p = dir.join("tg.toml");
    fs::write(&p, text).unwrap();
    p
}

fn romlab(args: &[&str], jobs: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_romlab"));
    c.args(args).env("RUST_LOG", "warn");
    match jobs {
        Some(j) => c.env("ROMLAB_JOBS", j),
        None => c.env_remove("ROMLAB_JOBS"),
    };
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pipeline_then_rerun_then_matrix_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tg_config(dir.path());
    let cfg = cfg.to_str().unwrap();

    let o = romlab(&["pipeline", "--config", cfg], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for s in ["generate", "pod", "assemble", "fit", "solve", "evaluate"] {
        assert!(out.contains(&format!("{s}: done")), "{out}");
    }

    let o = romlab(&["pipeline", "--config", cfg], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("up to date").count(), 6);

    let o = romlab(&["solve", "--config", cfg, "--force"], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "solve: done");

    let o = romlab(&["matrix", "--config", cfg, "--jobs", "2"], None);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("sup-standard") && out.contains("ppe-u-DG-case3"), "{out}");

    let o = romlab(&["export", "--config", cfg, "--which", "decay,errors"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().all(|l| Path::new(l).is_file()));
    assert!(dir.path().join("out/plots/decay.gp").is_file());

    let o = romlab(&["export", "--config", cfg, "--which", "nothing"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "output = \"out\"\n[fom]\nscenario = \"nowhere\"\n").unwrap();
    let o = romlab(&["generate", "--config", p.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn io_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(romlab(&["pod", "--config", missing.to_str().unwrap()], None).status.code(), Some(4));
    let cfg = tg_config(dir.path());
    let o = romlab(&["fit", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `assemble` first"));
}

#[test]
fn jobs_default_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tg_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(romlab(&["generate", "--config", cfg], Some("0")).status.code(), Some(2));
    assert_eq!(romlab(&["generate", "--config", cfg], Some("1")).status.code(), Some(0));
    // An explicit flag overrides the variable.
    assert_eq!(romlab(&["generate", "--config", cfg, "--jobs", "1"], Some("0")).status.code(), Some(0));
    assert_ne!(romlab(&["generate", "--config", cfg], Some("many")).status.code(), Some(0));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tg_config(dir.path());
    let text = fs::read_to_string(&cfg).unwrap().replace("dt = 0.02", "dt = 2.0");
    fs::write(&cfg, text).unwrap();
    let o = romlab(&["generate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CFL"));
}
