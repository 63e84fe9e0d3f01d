use std::path::{Path, PathBuf};
use std::process::Command;

fn sitan(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sitan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sitan-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = scratch("run");
    let out = sitan(&["run", "--n", "4", "--trials", "3", "--protocol", "multivalued", "--out-dir", arg(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["detail.csv", "summary.csv", "scenario.toml", "traces/trial-0002.trace"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let detail = std::fs::read_to_string(dir.join("detail.csv")).unwrap();
    assert_eq!(detail.lines().count(), 1 + 3 * 4);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn flags_override_the_scenario_file() {
    let dir = scratch("override");
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("s.toml");
    std::fs::write(&file, "n = 7\nprotocol = \"vector\"\ntrials = 4\n").unwrap();
    let out_dir = dir.join("out");
    let out = sitan(&["run", "--scenario", arg(&file), "--trials", "1", "--protocol", "binary", "--out-dir", arg(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let saved = std::fs::read_to_string(out_dir.join("scenario.toml")).unwrap();
    assert!(saved.contains("protocol = \"binary\""));
    assert!(saved.contains("n = 7"));
    let detail = std::fs::read_to_string(out_dir.join("detail.csv")).unwrap();
    assert_eq!(detail.lines().count(), 1 + 7);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_budget_exits_one() {
    let dir = scratch("budget");
    let out = sitan(&["run", "--n", "4", "--f", "2", "--out-dir", arg(&dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("3f + 1"));
}

#[test]
fn audit_flags_tampered_trace_with_two() {
    let dir = scratch("audit");
    let out = sitan(&["run", "--n", "4", "--out-dir", arg(&dir)]);
    assert_eq!(out.status.code(), Some(0));
    let trace = dir.join("traces/trial-0000.trace");
    let clean = sitan(&["audit", arg(&trace)]);
    assert_eq!(clean.status.code(), Some(0));

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut flipped = false;
    let tampered: Vec<String> = text
        .lines()
        .map(|l| {
            if !flipped && l.contains(" DECIDE ") && l.contains("instance=bin:BIN") {
                flipped = true;
                if l.contains("value=01") {
                    l.replace("value=01", "value=00")
                } else {
                    l.replace("value=00", "value=01")
                }
            } else {
                l.to_string()
            }
        })
        .collect();
    std::fs::write(&trace, tampered.join("\n") + "\n").unwrap();
    let bad = sitan(&["audit", arg(&trace)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("BC2"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_reports_each_size() {
    let dir = scratch("sweep");
    let out = sitan(&["sweep", "--sizes", "4,7", "--trials", "2", "--out-dir", arg(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("4,")), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("7,")), "{stdout}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = scratch("env");
    let out = Command::new(env!("CARGO_BIN_EXE_sitan"))
        .args(["run", "--n", "4", "--no-traces"])
        .env("SITAN_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("summary.csv").exists());
    assert!(!dir.join("traces").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}
