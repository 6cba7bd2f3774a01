//! End-to-end exercises of the `rtsa` binary: exit codes, file outputs, and
//! the report/compare round trip.

use std::path::Path;
use std::process::{Command, Output};

fn rtsa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtsa"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = rtsa(&["run", "--config", "missing.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.cfg"), "{stderr}");
}

#[test]
fn invalid_config_exits_one_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.cfg",
        "problem.name = cubic\nproblem.dim = 1\nalgorithm = chen\nn_steps = 10\nseed = 1\ngain.alpha = 0.4\n",
    );
    let out = rtsa(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gain.alpha"), "{stderr}");
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = rtsa(&["run", "--not-a-flag"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
    // Help is a success.
    let out = rtsa(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn check_passes_on_builtin_and_fails_on_adversarial() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(
        dir.path(),
        "good.cfg",
        "problem.name = cubic\nproblem.dim = 1\nalgorithm = chen\nn_steps = 10\nseed = 1\n",
    );
    let out = rtsa(&["check", "--config", &good, "--samples", "200"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("H1"), "{stdout}");
    assert!(stdout.contains("pass"), "{stdout}");

    let bad = write_config(
        dir.path(),
        "adv.cfg",
        "problem.name = adversarial\nproblem.dim = 1\nalgorithm = chen\nn_steps = 10\nseed = 1\n",
    );
    let out = rtsa(&["check", "--config", &bad, "--samples", "200"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("violation"), "{stdout}");
}

#[test]
fn run_report_compare_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "paired.cfg",
        "problem.name = cubic\nproblem.dim = 1\nalgorithm = both_paired\n\
         noise.sigma = 1\nx0 = 3\ncompacts.r0 = 7\nn_steps = 2000\n\
         n_trajectories = 6\nseed = 21\n",
    );
    let out_dir = dir.path().join("out");
    let out = rtsa(
        &[
            "run",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--workers",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ensemble report [chen]"), "{stdout}");
    assert!(stdout.contains("ensemble report [rm]"), "{stdout}");
    assert!(out_dir.join("summary.csv").exists());
    assert!(out_dir.join("ensemble.json").exists());
    assert!(out_dir.join("manifest.json").exists());

    let out = rtsa(
        &["report", "--dir", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("summary [chen]"), "{stdout}");
    assert!(stdout.contains("summary [rm]"), "{stdout}");

    let out = rtsa(
        &["compare", "--dir", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rm diverged"), "{stdout}");
    assert!(stdout.contains("6 of 6"), "{stdout}");
}

#[test]
fn compare_rejects_single_algorithm_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "single.cfg",
        "problem.name = cubic\nproblem.dim = 1\nalgorithm = chen\nn_steps = 100\n\
         n_trajectories = 2\nseed = 5\n",
    );
    let out_dir = dir.path().join("out");
    let out = rtsa(
        &["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let out = rtsa(
        &["compare", "--dir", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("both_paired"), "{stderr}");
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seeded.cfg",
        "problem.name = cubic\nproblem.dim = 1\nalgorithm = chen\nnoise.sigma = 1\n\
         n_steps = 500\nn_trajectories = 3\nseed = 11\n",
    );
    let run = |out: &str, seed: Option<&str>| {
        let mut args = vec!["run", "--config", &cfg, "--out", out];
        if let Some(s) = seed {
            args.extend_from_slice(&["--seed", s]);
        }
        let o = rtsa(&args, dir.path());
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(dir.path().join(out).join("summary.csv")).unwrap()
    };
    let base = run("out_a", None);
    let same = run("out_b", Some("11"));
    let diff = run("out_c", Some("12"));
    assert_eq!(base, same, "explicit seed equal to config seed is a no-op");
    assert_ne!(base, diff, "different seed must change results");
}

#[test]
fn rm_only_run_warns_about_ignored_compacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rm.cfg",
        "problem.name = linear\nproblem.dim = 1\nalgorithm = rm\nnoise.sigma = 0.5\n\
         compacts.r0 = 4\nn_steps = 200\nn_trajectories = 2\nseed = 2\n",
    );
    let out_dir = dir.path().join("out");
    let out = rtsa(
        &["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ignored"), "{stderr}");
}
