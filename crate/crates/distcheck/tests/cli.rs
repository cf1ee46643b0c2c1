//! End-to-end checks of the command-line surface: exit codes, output
//! files, and byte-level determinism of repeated runs.

use std::path::Path;
use std::process::{Command, Output};

fn distcheck(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distcheck"))
        .args(args)
        .current_dir(dir)
        .env_remove("DISTCHECK_SEED")
        .output()
        .expect("binary runs")
}

#[test]
fn repeated_runs_emit_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "test-uniformity",
        "--regime",
        "large",
        "--k",
        "1000",
        "--gamma",
        "0.3",
        "--instance",
        "uniform",
        "--instance",
        "subset:500",
        "--trials",
        "20",
        "--seed",
        "7",
        "--out",
        "run.csv",
    ];
    let first = distcheck(&args, dir.path());
    assert!(first.status.success(), "{first:?}");
    let csv_a = std::fs::read(dir.path().join("run.csv")).unwrap();
    let second = distcheck(&args, dir.path());
    assert!(second.status.success());
    let csv_b = std::fs::read(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(first.stdout, second.stdout);
    // Parallel fan-out must not change the bytes either.
    let mut with_jobs = args.to_vec();
    with_jobs.extend_from_slice(&["--jobs", "4"]);
    let third = distcheck(&with_jobs, dir.path());
    assert!(third.status.success());
    let csv_c = std::fs::read(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv_a, csv_c);

    let head = String::from_utf8_lossy(&csv_a);
    assert!(head.starts_with("schema_version,trial,instance,decision,reason,mu_hat,code_uses\n"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    // Zero trials.
    let out = distcheck(
        &[
            "test-uniformity",
            "--regime",
            "large",
            "--gamma",
            "0.3",
            "--trials",
            "0",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    // Unknown regime.
    let out = distcheck(
        &["test-uniformity", "--regime", "huge", "--gamma", "0.3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    // Missing threshold.
    let out = distcheck(&["test-uniformity", "--regime", "large"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    // Malformed flag (clap).
    let out = distcheck(&["test-uniformity"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn string_oracle_file_feeds_the_tester() {
    let dir = tempfile::tempdir().unwrap();
    // An r-to-1 string over [8] with multiplicity 4: uniform on 2 symbols.
    let mut body = String::from("8 8\n");
    for j in 0..8 {
        body.push_str(&format!("{}\n", j / 4 + 1));
    }
    std::fs::write(dir.path().join("oracle.txt"), body).unwrap();
    let out = distcheck(
        &[
            "test-uniformity",
            "--regime",
            "large",
            "--k",
            "8",
            "--gamma",
            "0.5",
            "--string-oracle",
            "oracle.txt",
            "--trials",
            "25",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    // chi^2 = 3 >> gamma: the tester should reject nearly always.
    assert!(stdout.contains("instance=string-oracle"));
    let rate: f64 = stdout
        .split("accept_rate=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(rate <= 0.2, "accept rate {rate}");
}

#[test]
fn identity_against_a_reference_file() {
    let dir = tempfile::tempdir().unwrap();
    let k = 64;
    let probs: Vec<f64> = vec![1.0 / k as f64; k];
    std::fs::write(
        dir.path().join("ref.json"),
        serde_json::to_string(&probs).unwrap(),
    )
    .unwrap();
    let out = distcheck(
        &[
            "test-identity",
            "--reference",
            "ref.json",
            "--epsilon",
            "0.5",
            "--instance",
            "uniform",
            "--trials",
            "10",
            "--seed",
            "4",
            "--json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    // One JSON object per trial precedes the summary.
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with('{')).count(),
        10,
        "{stdout}"
    );
    let row: serde_json::Value =
        serde_json::from_str(stdout.lines().find(|l| l.starts_with('{')).unwrap()).unwrap();
    assert!(row["decision"].is_string());
    assert!(row["code_uses"].is_u64());
    // Conflicting --k is rejected.
    let out = distcheck(
        &[
            "test-identity",
            "--reference",
            "ref.json",
            "--epsilon",
            "0.5",
            "--k",
            "32",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn closeness_and_plots_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "k": 200,
        "trials": 5,
        "master_seed": 9,
        "small": { "rounds": 100 }
    });
    std::fs::write(
        dir.path().join("exp.json"),
        serde_json::to_string(&config).unwrap(),
    )
    .unwrap();
    let out = distcheck(
        &[
            "test-closeness-l2",
            "--config",
            "exp.json",
            "--tau",
            "0.1",
            "--instance-p",
            "uniform",
            "--instance-q",
            "uniform",
            "--plot",
            "trials.svg",
            "--out",
            "trials.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let svg = std::fs::read_to_string(dir.path().join("trials.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let csv = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6); // header + 5 trials
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("accept_rate=1.0000"), "{stdout}");
}

#[test]
fn validate_lemmas_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = distcheck(
        &["validate-lemmas", "--suite", "hashing", "--seed", "5"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[hashing]"));
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
    // Unknown suite name is a config error.
    let out = distcheck(&["validate-lemmas", "--suite", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_scaling_emits_rows_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = distcheck(
        &[
            "bench-scaling",
            "--regime",
            "giant-cost",
            "--axis",
            "k",
            "--grid",
            "1000000,4000000,16000000,64000000",
            "--theta",
            "50000",
            "--seed",
            "6",
            "--out",
            "bench.csv",
            "--plot",
            "bench.svg",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("slope="), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.starts_with("schema_version,regime,axis,x,k,threshold,n_star,reached,trials,target\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("bench.svg").exists());
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed_env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_distcheck"));
        cmd.args([
            "test-uniformity",
            "--regime",
            "large",
            "--k",
            "100",
            "--gamma",
            "0.3",
            "--trials",
            "8",
            "--out",
            "env.csv",
        ])
        .args(extra)
        .current_dir(dir.path())
        .env_remove("DISTCHECK_SEED");
        if let Some(s) = seed_env {
            cmd.env("DISTCHECK_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{out:?}");
        std::fs::read(dir.path().join("env.csv")).unwrap()
    };
    let via_env = run(Some("123"), &[]);
    let via_flag = run(None, &["--seed", "123"]);
    assert_eq!(via_env, via_flag);
    // An explicit flag wins over the environment.
    let flag_overrides = run(Some("123"), &["--seed", "124"]);
    assert_ne!(via_env, flag_overrides);
}
