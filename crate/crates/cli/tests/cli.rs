//! End-to-end tests of the command-line surface: exit codes, file outputs,
//! and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_robust-phase")
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let path =
            std::env::temp_dir().join(format!("robust-phase-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&path);
        std::fs::create_dir_all(&path).unwrap();
        TempDir(path)
    }

    fn path(&self) -> &Path {
        &self.0
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let path = self.0.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(exit_code(&out), 2);
    let out = run(&["frobnicate"]);
    assert_eq!(exit_code(&out), 2);
    let out = run(&["sweep"]); // missing --config
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn generate_is_deterministic_and_validates() {
    let dir = TempDir::new("generate");
    let cfg = dir.write("gen.cfg", "d = 2\nn = 4\nk = 0\nseeds = 7\n");

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let first = run(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&first), 0, "{first:?}");
    let stdout = String::from_utf8(first.stdout).unwrap();
    assert!(stdout.contains("n=4 d=2 k=0"), "digest missing: {stdout}");
    let second = run(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&second), 0);

    let bytes_a = std::fs::read(out_a.join("dataset.txt")).unwrap();
    let bytes_b = std::fs::read(out_b.join("dataset.txt")).unwrap();
    assert_eq!(bytes_a, bytes_b, "same invocation must be byte-identical");

    let rows = String::from_utf8(bytes_a).unwrap();
    assert_eq!(rows.lines().count(), 5, "header plus 4 rows");

    // k exceeding n is a usage error with the stated message
    let bad = dir.write(
        "bad.cfg",
        "d = 2\nn = 4\nk = 9\ncorruption = constant:1\nseeds = 7\n",
    );
    let out = run(&[
        "generate",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("k exceeds n"), "stderr: {stderr}");
}

#[test]
fn run_reports_recovery_on_clean_data() {
    let dir = TempDir::new("run-clean");
    let gen_cfg = dir.write("gen.cfg", "d = 10\nn = 2000\nk = 0\nseeds = 3\n");
    let data_dir = dir.path().join("data");
    let generated = run(&[
        "generate",
        "--config",
        gen_cfg.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&generated), 0);

    let run_cfg = dir.write(
        "run.cfg",
        &format!(
            "data = {}\noracle_iters = 400\n",
            data_dir.join("dataset.txt").display()
        ),
    );
    let out_dir = dir.path().join("out");
    let ran = run(&[
        "run",
        "--config",
        run_cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&ran), 0, "{ran:?}");
    let stdout = String::from_utf8(ran.stdout).unwrap();
    let rel: f64 = stdout
        .split("rel_error=")
        .nth(1)
        .and_then(|rest| rest.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(rel <= 1e-3, "clean run rel_error {rel}");
    assert!(stdout.contains("termination=beta_stop"), "{stdout}");

    let log = std::fs::read_to_string(out_dir.join("run_log.csv")).unwrap();
    assert!(log.contains("outer_iter,subset_loss,decrease,dist_to_truth"));
    // synthetic truth sits next to the dataset, so distances are populated
    let first_row = log.lines().find(|l| l.starts_with('1')).unwrap();
    assert!(
        !first_row.ends_with(','),
        "distance column empty: {first_row}"
    );
}

#[test]
fn run_on_missing_file_is_a_usage_error() {
    let dir = TempDir::new("run-missing");
    let cfg = dir.write("run.cfg", "data = /nonexistent/dataset.txt\n");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn run_handles_the_all_shifted_dataset() {
    // every response shifted by −3.6: most go negative, preprocessing flags
    // the excess and the solver still terminates cleanly
    let dir = TempDir::new("run-shifted");
    let gen_cfg = dir.write(
        "gen.cfg",
        "d = 6\nn = 2000\nk = 2000\ncorruption = constant:-3.6\nseeds = 11\n",
    );
    let data_dir = dir.path().join("data");
    assert_eq!(
        exit_code(&run(&[
            "generate",
            "--config",
            gen_cfg.to_str().unwrap(),
            "--out",
            data_dir.to_str().unwrap()
        ])),
        0
    );
    let run_cfg = dir.write(
        "run.cfg",
        &format!("data = {}\nk = 0\n", data_dir.join("dataset.txt").display()),
    );
    let out = run(&[
        "run",
        "--config",
        run_cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("termination="), "{stdout}");
}

#[test]
fn run_reports_divergence_with_exit_3() {
    let dir = TempDir::new("run-diverge");
    let cfg = dir.write(
        "run.cfg",
        "d = 4\nn = 200\nk = 0\nseeds = 2\nstep_scale_c = 1e9\n",
    );
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3, "{out:?}");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("step size too large"), "{stderr}");
    assert!(stderr.contains("iteration"), "{stderr}");
}

#[test]
fn sweep_rejects_empty_regimes() {
    let dir = TempDir::new("sweep-empty");
    let cfg = dir.write(
        "sweep.cfg",
        "d = 10\ncorruption = uniform:-5:5\nseeds = 1\n",
    );
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("regimes"), "{stderr}");
}

#[test]
fn sweep_respects_thread_env_override() {
    let dir = TempDir::new("sweep-env");
    let cfg = dir.write(
        "sweep.cfg",
        "d = 8\nregimes = sqrt_n\ncorruption = uniform:-5:5\nseeds = 1,2\noracle_iters = 100\n",
    );
    let out_dir = dir.path().join("out");
    let output = Command::new(bin())
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--quiet",
        ])
        .env("ROBUST_PHASE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(output.status.code().unwrap(), 0, "{output:?}");
    let trials = std::fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new("seed-flag");
    let cfg = dir.write(
        "sweep.cfg",
        "d = 8\nregimes = sqrt_n\ncorruption = uniform:-5:5\nseeds = 1,2,3,4,5\noracle_iters = 100\n",
    );
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "9",
        "--quiet",
    ]);
    assert_eq!(exit_code(&out), 0);
    let trials = std::fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    let rows: Vec<&str> = trials
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("seed,"))
        .collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("9,"), "row: {}", rows[0]);
}

#[test]
fn landscape_panels_and_grid_shape() {
    let dir = TempDir::new("landscape");
    for (eta_bar, panel) in [("0", "a"), ("-4", "b"), ("-1.5", "c")] {
        let cfg = dir.write(
            "land.cfg",
            &format!("eta_bar = {eta_bar}\ngrid_steps = 21\n"),
        );
        let out_dir = dir.path().join(format!("out{panel}"));
        let out = run(&[
            "landscape",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(exit_code(&out), 0);
        let text = std::fs::read_to_string(out_dir.join("landscape.txt")).unwrap();
        assert!(text.contains(&format!("# panel={panel}")), "{text:.>160}");
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 441);
    }

    let bad = dir.write("bad.cfg", "eta_bar = 0\ngrid_dims = 3\n");
    let out = run(&[
        "landscape",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);

    let missing = dir.write("missing.cfg", "grid_steps = 5\n");
    let out = run(&[
        "landscape",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn verify_emits_json_lines_and_exit_codes() {
    let out = run(&["verify"]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines.len() >= 9, "expected at least 9 checks: {stdout}");
    for line in &lines {
        assert!(
            line.starts_with("{\"name\":\""),
            "not a JSON record: {line}"
        );
        assert!(line.contains("\"passed\":true"));
    }

    // a filter that matches nothing leaves an empty registry
    let dir = TempDir::new("verify");
    let cfg = dir.write("verify.cfg", "checks = no_such_check\n");
    let out = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("no checks registered"), "{stderr}");

    // filtering to a single named check works
    let cfg = dir.write("one.cfg", "checks = selection_vs_brute_force\n");
    let out = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}
