//! Black-box tests of the binary: exit codes, error wording, flag
//! precedence, and report layout on disk.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cbo-lab"));
    cmd.env_remove("CBO_WORKERS");
    cmd
}

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(dir: &Path) -> Value {
    let raw = fs::read_to_string(dir.join("result.json")).unwrap();
    serde_json::from_str(&raw).unwrap()
}

#[test]
fn validate_with_defaults_writes_a_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["validate", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let report = read_json(dir.path());
    assert_eq!(report["version"], "cbo-lab-0.1.0");
    assert_eq!(report["command"], "validate");
    assert_eq!(report["seed"], 42);
    assert_eq!(report["config"]["params"]["lambda"], 1.0);
    assert_eq!(report["config"]["params"]["kappa"], 0.01);
    assert_eq!(report["config"]["objective"]["name"], "ackley");
}

#[test]
fn unknown_config_key_fails_with_exit_code_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[params]\nlambduh = 2.0\n");
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = stderr_of(&out);
    assert!(stderr.contains("unknown key 'lambduh'"), "stderr: {stderr}");
}

#[test]
fn out_of_range_kappa_fails_with_exit_code_2_citing_the_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[params]\nkappa = 1.5\n");
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = stderr_of(&out);
    assert!(stderr.contains("(0, 1]"), "stderr: {stderr}");
}

#[test]
fn missing_config_file_fails_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["validate", "--config", "/no/such/file.cfg", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("cannot read config file"));
}

#[test]
fn diverging_simulation_fails_with_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[objective]\nname = sphere\ndimension = 1\n\
         [params]\nsigma = 1e200\ntime = 0.1\nparticles = 4\n\
         [optimize]\nseeds = 1\n",
    );
    let out = bin()
        .args(["optimize", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("aborted"));
}

#[test]
fn unwritable_output_path_fails_with_exit_code_4_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("occupied");
    fs::write(&blocker, "plain file").unwrap();
    let out = bin()
        .args(["validate", "--out"])
        .arg(&blocker)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("is not writable"));
}

#[test]
fn seed_flag_overrides_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "seed = 5\n");
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .args(["--seed", "9", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(read_json(dir.path())["seed"], 9);
}

#[test]
fn workers_come_from_the_environment_and_never_change_the_bytes() {
    let base = "[objective]\nname = ackley\ndimension = 1\nshift = 3\n\
                [params]\ntime = 1\nparticles = 50\n\
                [optimize]\nseeds = 4\n";
    let dir_env = tempfile::tempdir().unwrap();
    let cfg_env = write_cfg(dir_env.path(), base);
    let out = bin()
        .env("CBO_WORKERS", "3")
        .args(["optimize", "--config"])
        .arg(&cfg_env)
        .args(["--out"])
        .arg(dir_env.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    // A garbage env value must lose to an explicit flag, not be parsed.
    let dir_flag = tempfile::tempdir().unwrap();
    let cfg_flag = write_cfg(dir_flag.path(), base);
    let out = bin()
        .env("CBO_WORKERS", "not-a-number")
        .args(["optimize", "--config"])
        .arg(&cfg_flag)
        .args(["--workers", "1", "--out"])
        .arg(dir_flag.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let a = fs::read(dir_env.path().join("result.json")).unwrap();
    let b = fs::read(dir_flag.path().join("result.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn garbage_workers_env_without_a_flag_fails_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("CBO_WORKERS", "many")
        .args(["validate", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("CBO_WORKERS"));
}

#[test]
fn optimize_report_contains_the_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[objective]\nname = ackley\ndimension = 1\nshift = 3\n\
         [params]\ntime = 1\nparticles = 50\n\
         [optimize]\nseeds = 2\n",
    );
    let out = bin()
        .args(["optimize", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    for file in [
        "result.json",
        "optimize.csv",
        "optimize_objective.csv",
        "optimize_init.csv",
        "plot.gp",
    ] {
        assert!(dir.path().join(file).is_file(), "missing {file}");
    }
    let report = read_json(dir.path());
    assert_eq!(report["report"]["results"].as_array().unwrap().len(), 2);
    assert_eq!(report["report"]["results"][1]["seed"], 43);
}
