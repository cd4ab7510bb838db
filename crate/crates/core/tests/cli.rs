use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slicesim"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn run_into(name: &str, dir: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(scenario(name))
        .arg("--out")
        .arg(dir)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn every_shipped_scenario_validates() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let o = bin().arg("validate").arg(&p).output().unwrap();
        assert!(o.status.success(), "{}: {}", p.display(), text(&o));
        assert!(text(&o).contains("valid"));
        n += 1;
    }
    assert_eq!(n, 10);
}

#[test]
fn validate_lists_every_violation() {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("fig8_slicing")).unwrap()).unwrap();
    v["events"][0]["at_us"] = 99_000_000u64.into();
    v["traffic"][0]["dst"] = "ghost".into();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, v.to_string()).unwrap();
    let o = bin().arg("validate").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let t = text(&o);
    assert!(t.contains("event 0: at_us beyond duration"), "{t}");
    assert!(t.contains("flow a:"), "{t}");
}

#[test]
fn parse_errors_carry_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    std::fs::write(&p, "{\n  \"meta\": {\n    \"name\": 3\n").unwrap();
    let o = bin().arg("validate").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("line 3"), "{}", text(&o));
}

#[test]
fn run_then_report_passes_and_tampering_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig8");
    let o = run_into("fig8_slicing", &out, &[]);
    assert!(o.status.success(), "{}", text(&o));
    let o = bin().arg("report").arg(&out).output().unwrap();
    let t = text(&o);
    assert!(o.status.success(), "{t}");
    assert!(t.contains("slice ratio a:b"), "{t}");
    assert!(t.contains("PASS") && !t.contains("FAIL"), "{t}");

    // Halve flow b's samples so the ratio leaves its band.
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let tampered: Vec<String> = csv
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() == 4 && f[1] == "flow:b" && f[2] == "mbps" {
                let v: f64 = f[3].parse().unwrap();
                format!("{},{},{},{:.6}", f[0], f[1], f[2], v * 2.0)
            } else {
                l.to_owned()
            }
        })
        .collect();
    std::fs::write(out.join("metrics.csv"), tampered.join("\n") + "\n").unwrap();
    let o = bin().arg("report").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("FAIL"), "{}", text(&o));
}

#[test]
fn report_on_empty_directory_is_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("missing artifacts"), "{}", text(&o));
}

#[test]
fn seed_override_and_env_output_root() {
    let root = tempfile::tempdir().unwrap();
    let o = bin()
        .env("SLICESIM_OUT", root.path())
        .arg("run")
        .arg(scenario("fig6_latency"))
        .args(["--seed", "99"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o));
    let summary = std::fs::read_to_string(root.path().join("fig6_latency/summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["seed"], 99);
}

#[test]
fn trace_files_and_e2dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into("e2_interop_quirks", dir.path(), &["--trace"]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(dir.path().join("trace.log").is_file());
    let trace = dir.path().join("e2_trace.log");
    let o = bin().arg("e2dump").arg(&trace).output().unwrap();
    let t = text(&o);
    assert!(o.status.success(), "{t}");
    assert!(t.contains("SetupRequest") && t.contains("Indication"), "{t}");
}

#[test]
fn e2dump_reads_bare_hex_and_reports_bad_frames() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.hex");
    std::fs::write(&p, "01010000000100000000\n0901\n").unwrap();
    let o = bin().arg("e2dump").arg(&p).output().unwrap();
    let t = text(&o);
    assert!(o.status.success(), "{t}");
    assert!(t.contains("SetupRequest"), "{t}");
    assert!(t.contains("decode error"), "{t}");
}
