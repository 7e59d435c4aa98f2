use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn tvbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvbound"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_prints_csv_in_grid_order() {
    let out = tvbound(&[
        "run",
        "--config",
        fixture("twostate.conf").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 3 * 3);
    assert!(lines[0].starts_with("p,eps,delta,n,case_label,exact_tv,mc_estimate,half_width,"));
    // n varies fastest
    assert!(lines[1].contains(",-2.0000000000000001e-1,0,"));
    assert!(lines[2].contains(",-2.0000000000000001e-1,3,"));
}

#[test]
fn worker_count_does_not_change_output() {
    let cfg = fixture("random.conf");
    let run = |workers: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_tvbound"))
            .args(["run", "--config", cfg.to_str().unwrap()])
            .env("TVBOUND_WORKERS", workers)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        out.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn run_writes_output_and_curves_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["nominal.tbl", "perturbed.tbl"] {
        fs::copy(fixture(f), dir.path().join(f)).unwrap();
    }
    let mut text = fs::read_to_string(fixture("table.conf")).unwrap();
    text.push_str("output = out/report.csv\ncurves = curves.csv\n");
    fs::create_dir(dir.path().join("out")).unwrap();
    let cfg = dir.path().join("table.conf");
    fs::write(&cfg, text).unwrap();

    let out = tvbound(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 5);
    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert!(curves.starts_with("series,n,exact_tv,"));
    assert_eq!(curves.lines().count(), 5);

    let out = tvbound(&[
        "verify",
        "--report",
        dir.path().join("out/report.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn verify_config_reports_each_row() {
    let out = tvbound(&[
        "verify",
        "--config",
        fixture("table.conf").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn undersized_budget_fails_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(
        &cfg,
        "mode = twostate\np = 0.5\neps = 0.2\ndelta = 0.1\nn = 4\nbudget = 0.01\n",
    )
    .unwrap();
    for cmd in ["run", "verify"] {
        let out = tvbound(&[cmd, "--config", cfg.to_str().unwrap()]);
        assert!(!out.status.success());
        assert!(
            stderr(&out).contains("exceeds multiplicative bound"),
            "{}",
            stderr(&out)
        );
    }
}

#[test]
fn corrupted_report_is_rejected() {
    let out = tvbound(&[
        "verify",
        "--report",
        fixture("corrupted_report.csv").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 3"));
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(
        &cfg,
        "mode = twostate\np = 0.5\neps = 0.1\ndelta =\nn = 1\n",
    )
    .unwrap();
    let out = tvbound(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("config line 4"), "{}", stderr(&out));

    fs::write(
        &cfg,
        "mode = table\nnominal = missing.tbl\nperturbed = missing.tbl\nn = 1\n",
    )
    .unwrap();
    let out = tvbound(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing.tbl"));
}

#[test]
fn table_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.tbl"),
        "states 2\ninitial 0.5 0.5\nstep 1 markov\n0.5 0.5\n0.7 0.7\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("c.conf"),
        "mode = table\nnominal = bad.tbl\nperturbed = bad.tbl\nn = 1\n",
    )
    .unwrap();
    let out = tvbound(&[
        "run",
        "--config",
        dir.path().join("c.conf").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("bad.tbl:5:"), "{err}");
    assert!(err.contains("row sums to 1.4"), "{err}");
}

#[test]
fn twostate_subcommand() {
    let out = tvbound(&[
        "twostate", "--p", "0.5", "--eps", "0.1", "--delta", "0", "--n", "5", "--csv",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "B");
    let (tv, bound): (f64, f64) = (row[6].parse().unwrap(), row[7].parse().unwrap());
    assert!((tv - bound).abs() < 1e-12);

    let out = tvbound(&[
        "twostate", "--p", "0.5", "--eps", "0.1", "--delta", "-0.2", "--n", "3",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("case      A"));

    let out = tvbound(&[
        "twostate", "--p", "0.5", "--eps", "0.1", "--delta", "0.5", "--n", "3",
    ]);
    assert!(!out.status.success());
}

#[test]
fn verify_needs_exactly_one_source() {
    assert!(!tvbound(&["verify"]).status.success());
    let both = tvbound(&[
        "verify",
        "--config",
        fixture("table.conf").to_str().unwrap(),
        "--report",
        fixture("corrupted_report.csv").to_str().unwrap(),
    ]);
    assert!(!both.status.success());
}
