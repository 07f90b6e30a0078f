use std::path::Path;
use std::process::{Command, Output};

use fdxsim_cli::output::{RunManifest, CSV_HEADER};
use fdxsim_core::power_allocation::objective_and_gradient;
use fdxsim_core::{Assignment, BsPowerPolicy, NormalizedGains, PowerProfile, SinrMode};

fn fdxsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdxsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("FDXSIM_SEED")
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_default(dir: &Path) {
    let out = fdxsim(&["default-config"], dir);
    assert_eq!(out.status.code(), Some(0));
    std::fs::write(dir.join("run.toml"), out.stdout).unwrap();
}

#[test]
fn default_config_runs_and_writes_the_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    write_default(dir.path());
    let out = fdxsim(&["run", "run.toml", "--set", "trials=20", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("o/sweep.csv"));
    assert_eq!(rows[0], CSV_HEADER);
    assert_eq!(rows.len(), 1 + 5);
    assert!(rows[1..].iter().all(|r| r[4] == "20"));
    assert!(dir.path().join("o/manifest.json").exists());
}

#[test]
fn missing_or_malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fdxsim(&["run", "nope.toml"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[scenario]\nk1 = 4\nk2 = oops\n").unwrap();
    let out = fdxsim(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    std::fs::write(dir.path().join("typo.toml"), "[scenario]\npmax_usr_dbm = 4\n").unwrap();
    let out = fdxsim(&["run", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pmax_usr_dbm"));
    assert_eq!(fdxsim(&["run", "typo.toml", "--bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn set_override_is_echoed_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let out = fdxsim(&["run", "empty.toml", "--set", "pmax_user_dbm=10", "--set", "trials=5"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir.path().join("manifest.json"));
    assert_eq!(m.run.scenario.pmax_user_dbm, 10.0);
    assert_eq!(m.run.scenario.trials, 5);
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "10");
}

#[test]
fn seed_precedence_is_config_then_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), "[scenario]\nseed = 3\ntrials = 2\n").unwrap();
    let seed_of = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fdxsim"));
        cmd.args(["run", "s.toml"]).current_dir(dir.path()).env_remove("FDXSIM_SEED");
        if let Some(e) = env {
            cmd.env("FDXSIM_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        manifest(&dir.path().join("manifest.json")).run.scenario.seed
    };
    assert_eq!(seed_of(None, None), 3);
    assert_eq!(seed_of(Some("7"), None), 7);
    assert_eq!(seed_of(Some("7"), Some("9")), 9);
}

#[test]
fn manifest_rerun_reproduces_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    write_default(dir.path());
    let first = fdxsim(&["run", "run.toml", "--set", "trials=30", "--out", "a"], dir.path());
    assert_eq!(first.status.code(), Some(0));
    let again = fdxsim(&["run", "a/manifest.json", "--out", "b", "--threads", "1"], dir.path());
    assert_eq!(again.status.code(), Some(0), "{}", String::from_utf8_lossy(&again.stderr));
    let a = std::fs::read(dir.path().join("a/sweep.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/sweep.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infeasible_scenario_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.toml"), "[scenario]\nk1 = 5\nk2 = 4\n").unwrap();
    assert_eq!(fdxsim(&["run", "x.toml"], dir.path()).status.code(), Some(3));
    std::fs::write(dir.path().join("z.toml"), "[scenario.budgets]\npmax_coop_dbm = -inf\n").unwrap();
    assert_eq!(fdxsim(&["run", "z.toml"], dir.path()).status.code(), Some(3));
}

#[test]
fn figure_presets_have_their_series() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fdxsim(&["figures", "fig9"], dir.path()).status.code(), Some(2));
    for (fig, series) in [("fig4", vec!["si_on", "si_off"]), ("fig2", vec!["2x2", "4x4", "8x8"])] {
        let out = fdxsim(&["figures", fig, "--trials", "4"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let rows = csv_rows(&dir.path().join(format!("{fig}.csv")));
        assert_eq!(rows.len(), 1 + 5 * series.len());
        let mut seen: Vec<&str> = rows[1..].iter().map(|r| r[1].as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        let mut want = series.clone();
        want.sort_unstable();
        assert_eq!(seen, want);
        assert!(dir.path().join(format!("{fig}.manifest.json")).exists());
    }
    let out = fdxsim(&["figures", "fig5", "--trials", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(csv_rows(&dir.path().join("fig5.csv")).len(), 1 + 5 * 7);
}

#[test]
fn selftest_passes_on_a_fresh_build() {
    let dir = tempfile::tempdir().unwrap();
    let out = fdxsim(&["selftest"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

fn negated_gradient(
    powers: &PowerProfile,
    assignment: &Assignment,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
    mode: SinrMode,
) -> fdxsim_core::Result<(f64, Vec<f64>)> {
    let (f, g) = objective_and_gradient(powers, assignment, gains, bs, mode)?;
    Ok((f, g.into_iter().map(|x| -x).collect()))
}

#[test]
fn selftest_catches_a_sign_error_in_the_gradient() {
    assert_eq!(fdxsim_cli::cmd_selftest_with(negated_gradient), fdxsim_cli::EXIT_SELFTEST_FAILED);
}
