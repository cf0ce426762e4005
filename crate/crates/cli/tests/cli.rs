use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn freqmpc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqmpc"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn presets_are_listed_and_printable() {
    let dir = tempfile::tempdir().unwrap();
    let o = freqmpc(&["presets"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["paper-onearea", "paper-twoarea-uncoordinated", "paper-twoarea-coordinated"] {
        assert!(text.contains(name), "{text}");
    }
    let o = freqmpc(&["presets", "--show", "paper-onearea"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("[battery]"));
}

#[test]
fn simulate_writes_trace_metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("short.toml"),
        "preset = \"paper-onearea\"\n[simulation]\nduration = 5.0\n",
    )
    .unwrap();
    let o = freqmpc(&["simulate", "short.toml", "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["trace.csv", "metrics.csv", "manifest.toml"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 52);
    let manifest = fs::read_to_string(run.join("manifest.toml")).unwrap();
    assert!(manifest.contains("[info]") && manifest.contains("preset = \"paper-onearea\""));

    // the manifest is itself a valid config and reproduces the run
    let o = freqmpc(&["simulate", "run/manifest.toml", "--out", "again"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let strip = |p: &Path| {
        freqmpc::metrics::strip_columns(&fs::read_to_string(p).unwrap(), &freqmpc::metrics::TIMING_COLUMNS)
    };
    assert_eq!(
        strip(&run.join("metrics.csv")),
        strip(&dir.path().join("again/metrics.csv"))
    );
}

#[test]
fn sweep_writes_one_row_per_horizon() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("short.toml"),
        "preset = \"paper-onearea\"\n[simulation]\nduration = 5.0\n",
    )
    .unwrap();
    let o = freqmpc(
        &["sweep", "short.toml", "--n", "2..4", "--modes", "standard", "--out", "sw"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sw/metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, n) in rows.iter().zip(2..) {
        assert!(row.starts_with(&format!("one-area,single,standard,{n},")), "{row}");
    }
    assert!(dir.path().join("sw/plots/max_freq_dev.csv").is_file());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(freqmpc(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(freqmpc(&["sweep", "paper-onearea", "--n", "x..3"], dir.path()).status.code(), Some(2));
    assert_eq!(freqmpc(&["sweep", "paper-onearea", "--n", "2..4", "--modes", "pid"], dir.path()).status.code(), Some(2));
    assert_eq!(freqmpc(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn bad_configs_exit_with_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "preset = \"paper-onearea\"\n[battery]\nu_min = 0.2\nu_max = -0.2\n",
    )
    .unwrap();
    let o = freqmpc(&["simulate", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("u_min") && err.contains("u_max"), "{err}");

    let o = freqmpc(&["simulate", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = freqmpc(&["sweep", "paper-onearea", "--n", "1..3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
