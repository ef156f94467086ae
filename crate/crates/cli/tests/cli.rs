use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn mbgibbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbgibbs"))
        .args(args)
        .env_remove("MBGIBBS_OUT_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&mbgibbs(&["--help"])), 0);
    assert_eq!(code(&mbgibbs(&["--version"])), 0);
    assert_eq!(code(&mbgibbs(&["sample", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = scratch("usage");
    let f = dir.join("x.txt");
    assert_eq!(code(&mbgibbs(&["frobnicate"])), 1);
    assert_eq!(code(&mbgibbs(&["generate", "blasso", "--bogus"])), 1);
    assert_eq!(code(&mbgibbs(&["generate", "blasso"])), 1, "missing --out");
    assert_eq!(code(&mbgibbs(&["generate", "dpmm", "--n", "0", "--out", p(&f)])), 1);
    let out = mbgibbs(&["experiment", "fig6", "--set", "no_such_key=1", "--out-dir", p(&dir)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn unreadable_or_malformed_data_exits_two() {
    let dir = scratch("data");
    let missing = dir.join("missing.txt");
    let out = mbgibbs(&["sample", "--model", "dpmm", "--data", p(&missing), "--cycles", "10", "--out-dir", p(&dir)]);
    assert_eq!(code(&out), 2);
    let junk = dir.join("junk.txt");
    std::fs::write(&junk, "this is not\na data file\n").unwrap();
    let out = mbgibbs(&["sample", "--model", "blasso", "--data", p(&junk), "--cycles", "10", "--out-dir", p(&dir)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn flags_beat_config_beat_defaults() {
    let dir = scratch("config");
    let cfg = dir.join("run.conf");
    std::fs::write(&cfg, "seed = 4\n\n[generate]\nn = 40\ndim = 2\n").unwrap();
    let gen = |name: &str, extra: &[&str], config: bool| -> Vec<u8> {
        let out = dir.join(name);
        let mut args = vec!["generate", "blasso", "--out", p(&out)];
        if config {
            args.extend(["--config", p(&cfg)]);
        }
        args.extend(extra);
        let o = mbgibbs(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let from_file = gen("a.txt", &[], true);
    assert_eq!(from_file, gen("b.txt", &["--n", "40", "--dim", "2", "--seed", "4"], false));
    let flag_wins = gen("c.txt", &["--n", "25"], true);
    assert_eq!(flag_wins, gen("d.txt", &["--n", "25", "--dim", "2", "--seed", "4"], false));
    assert_ne!(from_file, flag_wins);
    assert_ne!(gen("e.txt", &[], false), from_file);
}

#[test]
fn misspelled_config_key_is_reported_with_its_line() {
    let dir = scratch("badkey");
    let cfg = dir.join("run.conf");
    std::fs::write(&cfg, "[generate]\nn = 40\ndimm = 2\n").unwrap();
    let out = mbgibbs(&["--config", p(&cfg), "generate", "blasso", "--out", p(&dir.join("x"))]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dimm") && err.contains("line 3"), "{err}");
}

#[test]
fn set_overrides_experiment_settings() {
    let dir = scratch("set");
    let out = mbgibbs(&[
        "experiment", "fig6", "--m", "20", "--set", "n=60", "--set", "iterations=5",
        "--set", "k=2", "--out-dir", p(&dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!String::from_utf8_lossy(&out.stdout).trim().is_empty());
    assert!(std::fs::read_dir(&dir).unwrap().count() > 0);
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = scratch("env");
    let data = dir.join("points.txt");
    assert!(mbgibbs(&["generate", "dpmm", "--n", "60", "--k", "2", "--out", p(&data)]).status.success());
    let target = dir.join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_mbgibbs"))
        .args(["sample", "--model", "dpmm", "--data", p(&data), "--m", "10", "--cycles", "30"])
        .env("MBGIBBS_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("chain_0.csv").exists());
    assert!(target.join("diagnostics.csv").exists());
}

#[test]
fn scripted_adaptation_reports_the_best_arm() {
    let out = mbgibbs(&[
        "adapt", "--scripted", "--units", "100", "--tau-scale", "100", "--grid", "1,10,100",
        "--w-z", "0.001", "--w-theta", "0.1", "--n-per-arm", "2000", "--burnin", "0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let footer = text.lines().find(|l| l.starts_with("m_star,")).expect("m_star row");
    assert_eq!(footer.split(',').nth(1), Some("100"), "{text}");
}
