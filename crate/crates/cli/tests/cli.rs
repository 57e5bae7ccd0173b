use std::path::Path;
use std::process::{Command, Output};

fn paloma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paloma"))
        .args(args)
        .env_remove("PALOMA_BUDGET")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn line<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
}

fn coin() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures_coin.txt")
        .display()
        .to_string()
}

#[test]
fn run_mult() {
    let o = paloma(&[
        "run",
        "--protocol",
        "mult",
        "--inputs",
        "a:2,b:3,c:6",
        "--seed",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(line(&out, "outputs"), Some(["1"; 11].join("|").as_str()));
    assert_eq!(line(&out, "n"), Some("11"));
}

#[test]
fn run_ids_counts_increments() {
    let o = paloma(&["run", "--protocol", "ids", "--n", "5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(line(&stdout(&o), "increments"), Some("10"));
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for k in 0..2 {
        let trace = dir.path().join(format!("t{k}.txt"));
        let summary = dir.path().join(format!("s{k}.txt"));
        let o = paloma(&[
            "run",
            "--protocol",
            "mult",
            "--inputs",
            "a:2,b:2,c:4",
            "--seed",
            "3",
            "--trace",
            trace.to_str().unwrap(),
            "--summary",
            summary.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        traces.push((
            std::fs::read(&trace).unwrap(),
            std::fs::read(&summary).unwrap(),
        ));
    }
    assert!(!traces[0].0.is_empty());
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.txt");
    let t = trace.to_str().unwrap();
    let o = paloma(&[
        "run",
        "--protocol",
        "pow2",
        "--inputs",
        "0:1,1:4",
        "--seed",
        "2",
        "--trace",
        t,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let run_outputs = line(&stdout(&o), "outputs").unwrap().to_string();
    let r = paloma(&[
        "replay",
        "--protocol",
        "pow2",
        "--inputs",
        "0:1,1:4",
        "--trace",
        t,
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert_eq!(line(&stdout(&r), "outputs"), Some(run_outputs.as_str()));
}

#[test]
fn check_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.txt");
    let ok = paloma(&[
        "check",
        "--protocol",
        "pow2",
        "--inputs",
        "1:4,0:1",
        "--expect",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("StablyComputes"));
    assert_eq!(std::fs::read_to_string(&report).unwrap(), stdout(&ok));

    let wrong = paloma(&[
        "check",
        "--protocol",
        "pow2",
        "--inputs",
        "1:3",
        "--expect",
        "1",
    ]);
    assert_eq!(wrong.status.code(), Some(3));
    assert!(stdout(&wrong).contains("WrongStableOutput"));

    let big = paloma(&[
        "check",
        "--protocol",
        "pow2",
        "--inputs",
        "1:12",
        "--expect",
        "0",
        "--budget",
        "50",
    ]);
    assert_eq!(big.status.code(), Some(4));
    assert!(stdout(&big).contains("BudgetExceeded"));
}

#[test]
fn budget_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_paloma"))
        .args([
            "check",
            "--protocol",
            "pow2",
            "--inputs",
            "1:12",
            "--expect",
            "0",
        ])
        .env("PALOMA_BUDGET", "50")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn batch_mult_converges() {
    let o = paloma(&[
        "batch",
        "--protocol",
        "mult",
        "--inputs",
        "a:2,b:2,c:4",
        "--seeds",
        "0..50",
        "--expect",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(line(&out, "runs"), Some("50"));
    assert_eq!(line(&out, "convergence"), Some("1.0000"));
    assert_eq!(line(&out, "disagreements"), Some("0"));
}

#[test]
fn empty_batch() {
    let o = paloma(&[
        "batch",
        "--protocol",
        "mult",
        "--inputs",
        "a:1",
        "--seeds",
        "4..4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(line(&stdout(&o), "runs"), Some("0"));
}

#[test]
fn batch_reports_the_failing_seed() {
    // The coin protocol's outputs depend on who starts the first encounter.
    let o = paloma(&[
        "batch",
        "--protocol",
        &coin(),
        "--input-list",
        "x,x",
        "--seeds",
        "0..2",
        "--expect",
        "1,0",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    assert_eq!(line(&out, "disagreements"), Some("1"));
    assert_eq!(
        out.lines()
            .filter(|l| l.starts_with("disagreement "))
            .collect::<Vec<_>>(),
        vec!["disagreement 1"]
    );
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "protocol = \"mult\"\ninputs = \"a:2,b:3,c:6\"\nseed = 7\nmode = \"interleaved\"\n",
    )
    .unwrap();
    let o = paloma(&["run", "--config", cfg.to_str().unwrap(), "--seed", "8"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    assert_eq!(line(&out, "seed"), Some("8"));
    assert_eq!(line(&out, "mode"), Some("interleaved"));
    assert_eq!(line(&out, "outputs"), Some(["1"; 11].join("|").as_str()));

    std::fs::write(&cfg, "protocol = \"mult\"\ncolour = 1\n").unwrap();
    assert_eq!(
        paloma(&["run", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn protocol_errors_exit_2() {
    assert_eq!(
        paloma(&["run", "--protocol", "nope", "--n", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        paloma(&["run", "--protocol", "mult", "--input-list", "a,z"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        paloma(&["run", "--protocol", "mult", "--inputs", "a:2", "--n", "3"])
            .status
            .code(),
        Some(2)
    );
    let e = paloma(&["run", "--protocol", &coin(), "--input-list", "x,y"]);
    assert_eq!(e.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&e.stderr).contains("not an admissible input"));
}

#[test]
fn bounded_run_without_convergence_exits_3() {
    let o = paloma(&[
        "run",
        "--protocol",
        "mult",
        "--inputs",
        "a:2,b:3,c:6",
        "--max-interactions",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
}
