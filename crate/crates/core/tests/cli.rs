use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_multipair-bell"));
    c.env_remove("MULTIPAIR_BELL_WORKERS");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).arg("--results-dir").arg(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

#[test]
fn output_is_deterministic_and_independent_of_workers_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = ["fig-ch-scaling", "--pairs", "1,2,3,5", "--rules", "majority,unanimity"];
    let o1 = bin().args(args).arg("--out").arg(&a).arg("--workers").arg("1").output().unwrap();
    let o2 = bin().args(args).arg("--out").arg(&b).env("MULTIPAIR_BELL_WORKERS", "2").output().unwrap();
    assert_eq!(code(&o1), 0, "{}", String::from_utf8_lossy(&o1.stderr));
    assert_eq!(code(&o2), 0, "{}", String::from_utf8_lossy(&o2.stderr));
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(ta, tb);
    assert!(ta.lines().any(|l| l.starts_with("# config-sha256: ")));
    assert!(ta.lines().any(|l| l.starts_with("# optimizer: ")));
    let rows = data_lines(&a);
    assert_eq!(rows.len(), 1 + 8);
    assert!(rows[0].contains("grid_index") && rows[0].contains("refine_steps"));
}

#[test]
fn config_file_and_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"pairs": [2, 4], "rules": ["majority"], "optimizer": {"grid_points": 32}}"#).unwrap();
    let from_file = dir.path().join("file.csv");
    let from_flags = dir.path().join("flags.csv");
    let o = bin().args(["fig-noise", "--config"]).arg(&cfg).arg("--out").arg(&from_file).output().unwrap();
    assert_eq!(code(&o), 0);
    let o = bin()
        .args(["fig-noise", "--pairs", "2,4", "--rules", "majority", "--grid-points", "32", "--out"])
        .arg(&from_flags)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&from_file).unwrap(), fs::read_to_string(&from_flags).unwrap());

    // a flag overrides the file
    let over = dir.path().join("over.csv");
    let o = bin().args(["fig-noise", "--pairs", "3", "--config"]).arg(&cfg).arg("--out").arg(&over).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(data_lines(&over).len(), 2);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"bogus": 1}"#,
        r#"{"mus": [1.0]}"#,
        r#"{"rules": ["seven-eighths"]}"#,
        r#"{"optimizer": {"starts": 0}}"#,
        r#"{"pairs": []}"#,
        "not json",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = dir.path().join(format!("{i}.json"));
        fs::write(&cfg, text).unwrap();
        let o = run(&["fig-noise", "--config", cfg.to_str().unwrap()], dir.path());
        assert_eq!(code(&o), 2, "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["fig-poisson", "--rules", "ternary:M-1"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn check_mode_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["entanglement", "--pairs", "2,4,6", "--check"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    // the ratio at M=1000 misses its window
    let o = run(&["entanglement", "--pairs", "2,1000", "--check"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    // without --check the same run succeeds
    let o = run(&["entanglement", "--pairs", "2,1000"], dir.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn summary_requires_every_cached_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["summary"], dir.path());
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    for c in ["fig-ch-scaling", "fig-noise", "fig-poisson", "fig-efficiency", "loss-study", "fig-indist", "entanglement"] {
        assert!(err.contains(&format!("multipair-bell {c}")), "{err}");
    }
}

#[test]
fn summary_reads_cached_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fast.json");
    fs::write(&cfg, r#"{"optimizer": {"grid_points": 16, "coarse_points": 3, "starts": 2}}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let runs: [&[&str]; 7] = [
        &["fig-ch-scaling", "--pairs", "1,2"],
        &["fig-noise", "--pairs", "1,2"],
        &["fig-poisson", "--mus", "0.5,1", "--rules", "majority", "--noise-rules", "majority"],
        &["fig-efficiency", "--pairs", "1", "--etas", "1", "--rules", "majority"],
        &["loss-study", "--pairs", "2,3"],
        &["fig-indist", "--pairs", "1,2", "--noise-rules", "unanimity"],
        &["entanglement", "--pairs", "2,4"],
    ];
    for args in runs {
        let mut a = args.to_vec();
        a.extend(["--config", c]);
        let o = run(&a, dir.path());
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["summary"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_lines(&dir.path().join("summary.csv"));
    assert_eq!(rows[0], "quantity,value,detail");
    assert!(rows.iter().any(|r| r.starts_with("majority critical efficiency M=1,")));
    assert!(rows.iter().any(|r| r.starts_with("entanglement ratio at M=4,")));
}
