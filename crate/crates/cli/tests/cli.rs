use std::path::PathBuf;
use std::process::Command;

fn sama() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sama"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sama-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn scenario() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/hospital.json")
}

#[test]
fn run_scenario_meets_expectations() {
    let output = sama().args(["run", "--scenario"]).arg(scenario()).output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| l["expectation_met"] == true));
    assert_eq!(lines[0]["result"], "298");
}

#[test]
fn failed_expectation_sets_exit_code() {
    let text = std::fs::read_to_string(scenario()).unwrap().replace("\"expect\": \"298\"", "\"expect\": \"299\"");
    let path = scratch("wrong.json");
    std::fs::write(&path, text).unwrap();
    let status = sama().args(["run", "--scenario"]).arg(&path).output().unwrap().status;
    assert_eq!(status.code(), Some(1));
}

#[test]
fn bench_csv_is_reproducible_without_timing() {
    let run = |name: &str| {
        let out = scratch(name);
        let status = sama()
            .args(["bench", "--use-case", "drs-do", "--n-bits", "512", "--count", "3", "--attrs", "2"])
            .args(["--seed", "5", "--repeats", "2", "--no-timing", "--format", "csv", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let mut lines = a.lines();
    assert_eq!(lines.next().unwrap(), "use_case,role,n_bits,N,attrs,modexp,modmul,exp,bipair,bits_in,bits_out,time_ms");
    let sp: Vec<&str> = a.lines().find(|l| l.starts_with("drs-do,SP,")).unwrap().split(',').collect();
    assert_eq!(&sp[5..7], &["4", "6"]);
}

#[test]
fn bench_jsonl_sweep() {
    let output = sama()
        .args(["bench", "--use-case", "do-do", "--n-bits", "512", "--count", "1,4", "--attrs", "1"])
        .args(["--repeats", "1", "--format", "jsonl"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let rows: Vec<serde_json::Value> =
        String::from_utf8(output.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[5]["modmul"], 3);
}

#[test]
fn verify_tables_small_sweep() {
    let out = scratch("tables.csv");
    let status = sama()
        .args(["verify-tables", "--n-bits", "512", "--counts", "1,2", "--leaves", "1,3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("table,case,subject,expected,measured,pass"));
    assert!(!text.contains(",false"));
}

#[test]
fn bad_arguments_are_rejected() {
    assert!(!sama().args(["bench", "--use-case", "nope"]).status().unwrap().success());
    let status = sama().args(["bench", "--use-case", "do-do", "--n-bits", "1000", "--repeats", "1"]).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}
