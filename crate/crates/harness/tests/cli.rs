use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bangcross"));
    for var in ["BANGCROSS_OUT", "BANGCROSS_SEED", "BANGCROSS_THREADS"] {
        c.env_remove(var);
    }
    c
}

fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(|r| r.unwrap()).collect()
}

#[test]
fn malformed_config_exits_nonzero_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "name = \"x\"\nbogus = 1\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
    assert!(!out.exists());
}

#[test]
fn late_validation_failure_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(asset("scenarios/massless_smoke.toml")).unwrap();
    // Only detectable once the mode list is built.
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, format!("{text}\n[output]\ntrajectory_modes = [100000]\n")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trajectory_modes"));
    assert!(!out.exists());
}

#[test]
fn desitter_run_writes_a_delta_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", asset("scenarios/desitter_to_powerlaw.toml").to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("delta.csv"));
    let delta: f64 = rows.iter().find(|r| &r[0] == "delta").unwrap()[1].parse().unwrap();
    assert!((delta - 0.25).abs() < 1e-6, "delta {delta}");
    let meta = fs::read_to_string(dir.path().join("delta.csv")).unwrap();
    for key in ["config_sha256=", "bangcross_version=", "seed=20240611", "prng=ChaCha8", "omega_sign_hat=-1", "gauge="] {
        assert!(meta.contains(key), "missing {key}");
    }
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = asset("scenarios/desitter_to_powerlaw.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["run", cfg.to_str().unwrap()], &a).status.success());
    assert!(bin().arg("--out").arg(&b).arg("--threads").arg("1").arg("run").arg(&cfg).output().unwrap().status.success());
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn seed_flag_and_environment_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = asset("scenarios/massless_smoke.toml");
    let a = dir.path().join("a");
    assert!(run(&["--seed", "7", "run", cfg.to_str().unwrap()], &a).status.success());
    let b = dir.path().join("b");
    assert!(bin().env("BANGCROSS_SEED", "7").env("BANGCROSS_OUT", &b).arg("run").arg(&cfg).output().unwrap().status.success());
    let x = fs::read(a.join("data_in.csv")).unwrap();
    assert_eq!(x, fs::read(b.join("data_in.csv")).unwrap());
    assert!(String::from_utf8_lossy(&x).contains("# seed=7\n"));
}

#[test]
fn verify_tag_subset_runs_only_tagged_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--tag", "profiles", "--tag", "c2"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let lines: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).map(String::from).collect();
    assert_eq!(lines.len(), 2, "{lines:?}");
    assert!(lines[0].starts_with("PASS c2 ") && lines[1].starts_with("PASS c10 "));
    let ids: Vec<String> = data_rows(&dir.path().join("verify.csv")).iter().map(|r| r[0].to_string()).collect();
    assert!(ids.iter().all(|i| i == "c2" || i == "c10"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(json["all_passed"], true);
}

#[test]
fn perturbed_tolerances_give_named_failures() {
    let dir = tempfile::tempdir().unwrap();
    let tol = asset("tolerances/perturbed.toml");
    let o = run(&["verify", "--tag", "c2", "--tag", "c10", "--tolerances", tol.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("FAIL c2 ") && s.contains("tan_error="), "{s}");
    assert!(s.contains("FAIL c10 ") && s.contains("de_sitter="), "{s}");
    let failing: Vec<String> = data_rows(&dir.path().join("verify.csv"))
        .iter()
        .filter(|r| &r[6] == "FAIL")
        .map(|r| format!("{}.{}", &r[0], &r[3]))
        .collect();
    assert_eq!(failing, ["c2.tan_error", "c10.de_sitter"]);
}

#[test]
fn unknown_tags_and_tolerance_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--tag", "nope"], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "\"c99.whatever\" = 1.0\n").unwrap();
    let o = run(&["verify", "--tolerances", bad.to_str().unwrap()], &dir.path().join("y"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("c99.whatever"));
    assert!(!dir.path().join("x").exists() && !dir.path().join("y").exists());
}

#[test]
fn oracle_command_matches_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle", asset("oracles/fuchsian_pair.toml").to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in data_rows(&dir.path().join("oracle.csv")) {
        let e: f64 = r[8].parse().unwrap();
        assert!(e <= 1e-4, "{r:?}");
    }
    let series = data_rows(&dir.path().join("series_hat.csv"));
    assert_eq!(series.len(), 2 * 21);
}

#[test]
fn converge_writes_the_ladder_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["converge", asset("scenarios/massless_smoke.toml").to_str().unwrap(), "lambda"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!data_rows(&dir.path().join("converge_lambda.csv")).is_empty());
    let o = run(&["converge", asset("scenarios/massless_smoke.toml").to_str().unwrap(), "bogus"], &dir.path().join("z"));
    assert_eq!(o.status.code(), Some(2));
}
