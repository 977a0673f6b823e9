use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn riverlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riverlab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn riverlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn table2_schedule_writes_csv_and_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = riverlab(&["schedule", "--preset", "table2", "--out", "t2"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("t2");
    let csv = read(&dir, "schedule.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,lr");
    assert_eq!(lines.len(), 53752);
    let windows = read(&dir, "windows.csv");
    assert!(windows.contains("0,11250,12500"), "{windows}");
    assert!(windows.contains("2,48750,53750"), "{windows}");
    let cfg = read(&dir, "config.cfg");
    assert!(cfg.contains("schedule.kind = wsds"), "{cfg}");
}

#[test]
fn default_out_dir_is_named_after_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = riverlab(&["schedule", "--preset", "table2"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("out/table2/schedule.csv").exists());
}

#[test]
fn missing_config_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&riverlab(&["schedule"], tmp.path())), 2);
    assert_eq!(code(&riverlab(&["schedule", "--preset", "nope"], tmp.path())), 2);
    assert_eq!(code(&riverlab(&["schedule", "--config", "missing.cfg"], tmp.path())), 2);
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.cfg", "experiment.kind = schedule\nschedule.kind = constant\nschedule.colour = red\n"),
        (
            "window.cfg",
            "experiment.kind = schedule\nschedule.kind = wsd\nschedule.budgets = 100\nschedule.steps = 50\n",
        ),
        ("value.cfg", "experiment.kind = schedule\nschedule.kind = constant\nschedule.eta_max = fast\n"),
    ];
    for (name, text) in cases {
        fs::write(tmp.path().join(name), text).unwrap();
        let o = riverlab(&["schedule", "--config", name], tmp.path());
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!tmp.path().join("out").join(name.trim_end_matches(".cfg")).exists());
    }
}

#[test]
fn divergence_exits_3_with_marker_row() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "\
experiment.kind = simulate
landscape.name = quadratic_valley
landscape.gamma = 1
schedule.kind = constant
schedule.steps = 400
optimizer.method = gd
optimizer.etas = 2.5
optimizer.w0 = 0, 1
optimizer.region = unbounded
";
    fs::write(tmp.path().join("blowup.cfg"), text).unwrap();
    let o = riverlab(&["simulate", "--config", "blowup.cfg", "--out", "b"], tmp.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = read(&tmp.path().join("b"), "trajectory_eta2.5.csv");
    let last = traj.lines().last().unwrap();
    assert!(last.starts_with("# truncated at step"), "{last}");
    assert!(last.contains("Divergence"), "{last}");
}

#[test]
fn rerunning_resolved_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = riverlab(&["simulate", "--preset", "fig4c", "--seed", "11", "--out", "a"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = tmp.path().join("a");
    assert!(read(&first, "config.cfg").contains("experiment.seed = 11"));
    let o = riverlab(&["simulate", "--config", "a/config.cfg", "--out", "b"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let second = tmp.path().join("b");
    let mut names: Vec<_> = fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert!(names.len() >= 4, "{names:?}");
    for n in &names {
        assert_eq!(read(&first, n), read(&second, n), "{n} differs");
    }
}

#[test]
fn seed_override_changes_sgd_paths() {
    let tmp = tempfile::tempdir().unwrap();
    for (seed, out) in [("1", "s1"), ("2", "s2")] {
        assert_eq!(code(&riverlab(&["simulate", "--preset", "fig4c", "--seed", seed, "--out", out], tmp.path())), 0);
    }
    let a = read(&tmp.path().join("s1"), "trajectory_eta0.2.csv");
    let b = read(&tmp.path().join("s2"), "trajectory_eta0.2.csv");
    assert_ne!(a, b);
}

#[test]
fn verify_schedules_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = riverlab(&["verify", "schedules"], tmp.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("[PASS] 12 schedule_exactness"), "{stdout}");
}

#[test]
fn verify_unknown_suite_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&riverlab(&["verify", "everything"], tmp.path())), 2);
}

#[test]
fn small_bigram_run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "\
experiment.kind = bigram
experiment.seed = 4
landscape.name = bigram
schedule.kind = constant
schedule.eta_max = 20
schedule.steps = 400
bigram.n_deterministic = 10
bigram.n_stochastic = 10
bigram.m = 4
bigram.batch = 16
bigram.eval_every = 50
";
    fs::write(tmp.path().join("small.cfg"), text).unwrap();
    for out in ["x", "y"] {
        let o = riverlab(&["bigram", "--config", "small.cfg", "--out", out, "--threads", "2"], tmp.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for n in ["loss_constant.csv", "loss_decay.csv", "cities.csv", "bigram_spec.txt"] {
        assert_eq!(read(&tmp.path().join("x"), n), read(&tmp.path().join("y"), n), "{n}");
    }
}

#[test]
fn river_command_writes_projection_and_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let o = riverlab(&["river", "--preset", "fig4b", "--out", "r"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("r");
    assert!(read(&dir, "projection.csv").starts_with("t,residual"));
    assert!(dir.join("river_trace.csv").exists());
    assert!(dir.join("constants.txt").exists());
}
