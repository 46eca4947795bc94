use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vertmem::workloads::read_trace;

fn vertmem(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vertmem"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

const MIX: &str = r#"
seed = 5

[[workload]]
name = "hot"
kind = "llch"
accesses = 40000

[[workload]]
name = "tiny"
kind = "ccf"
accesses = 40000
"#;

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vertmem(&["gen", "-o", "x.trace"], dir.path()).status.code(), Some(1));
    assert_eq!(vertmem(&["gen", "--kind", "ccf"], dir.path()).status.code(), Some(1));
    assert_eq!(vertmem(&["frobnicate"], dir.path()).status.code(), Some(1));
    fs::write(dir.path().join("empty.toml"), "seed = 1\n").unwrap();
    assert_eq!(vertmem(&["run", "--config", "empty.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "seed = \"x\"\n").unwrap();
    let out = vertmem(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("vertmem: "));
    assert_eq!(vertmem(&["run", "--config", "missing.toml"], dir.path()).status.code(), Some(2));
    let invalid = "[mapping]\no_bits = [10]\n\n[[workload]]\nkind = \"ccf\"\n";
    fs::write(dir.path().join("map.toml"), invalid).unwrap();
    assert_eq!(vertmem(&["run", "--config", "map.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    // A 100000-page stream cannot fit in 64 MiB.
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[mapping]\nmemory_bytes = 67108864\n\n[[workload]]\nkind = \"llct\"\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let out = vertmem(&["run", "--config", "c.toml", "--policy", "interleave"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of memory"));
}

#[test]
fn gen_writes_a_stream_of_distinct_pages() {
    let dir = tempfile::tempdir().unwrap();
    let out = vertmem(&["gen", "--kind", "llct", "--seed", "1", "-o", "s.trace"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let t = read_trace(&dir.path().join("s.trace")).unwrap();
    let pages: BTreeSet<u64> = t.records.iter().map(|r| r.vaddr >> 12).collect();
    assert_eq!(pages.len(), 100_000);
    assert_eq!(t.records.len(), 100_000);
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("mix.toml"), MIX).unwrap();
    let out = vertmem(&["run", "--config", "mix.toml", "--policy", "a-vp", "--out", "out"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let metrics: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["policy"], "a-vp");
    assert_eq!(metrics["metrics"]["accesses"], 80_000);
    assert!(metrics["metrics"]["per_app"]["hot"].is_object());
    let epochs = fs::read_to_string(dir.path().join("out/epochs.csv")).unwrap();
    assert!(epochs.lines().count() >= 2);
    let alloc = fs::read_to_string(dir.path().join("out/alloc.csv")).unwrap();
    assert!(alloc.starts_with("app,vpn,pfn,color,llc_group,bank_group"));
}

#[test]
fn advise_from_profile() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[[profile]]\napp = \"x\"\ncategory = \"LLCH\"\n\n[[profile]]\napp = \"y\"\ncategory = \"CCF\"\n";
    fs::write(dir.path().join("p.toml"), base).unwrap();
    fs::write(dir.path().join("mt.toml"), format!("multithreaded = true\n{base}")).unwrap();
    let policy = |cfg: &str| {
        let out = vertmem(&["advise", "--config", cfg], dir.path());
        assert!(out.status.success(), "{out:?}");
        let d: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        d["policy"].as_str().unwrap().to_string()
    };
    assert_eq!(policy("p.toml"), "bank-only");
    assert_eq!(policy("mt.toml"), "random");
}

#[test]
fn sweep_lists_every_policy() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("mix.toml"), MIX).unwrap();
    let out = vertmem(&["sweep", "--config", "mix.toml", "--out", "out"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    for p in ["interleave", "bank-only", "a-vp", "b-vp", "c-vp", "random"] {
        assert!(csv.lines().any(|l| l.starts_with(p)), "{p} missing");
    }
}
