use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use predtrig::harness::detect_period;

fn predtrig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predtrig"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn gamma_column(csv: &str) -> Vec<bool> {
    let mut lines = csv.lines();
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "gamma").unwrap();
    lines
        .map(|l| l.split(',').nth(col).unwrap() == "1")
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn period_table() {
    let o = predtrig(&[
        "period",
        "--preset",
        "example1",
        "--cost-grid",
        "0.6,0.25,3.0",
    ]);
    assert!(o.status.success());
    let rows: Vec<(f64, i64)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let (c, m) = l.split_once(',').unwrap();
            (c.parse().unwrap(), m.parse().unwrap())
        })
        .collect();
    assert_eq!(rows, vec![(0.6, 7), (0.25, 3), (3.0, -1)]);
}

#[test]
fn simulate_self_trigger_period() {
    let o = predtrig(&[
        "simulate",
        "--preset",
        "example1",
        "--trigger",
        "st",
        "--cost",
        "0.6",
        "--steps",
        "200",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g = gamma_column(&stdout(&o));
    assert_eq!(g.len(), 200);
    assert_eq!(detect_period(&g, 50), Some(7));
}

#[test]
fn simulate_always_transmit() {
    let o = predtrig(&[
        "simulate",
        "--preset",
        "example1",
        "--trigger",
        "et",
        "--cost",
        "0",
    ]);
    assert!(o.status.success());
    assert!(gamma_column(&stdout(&o)).iter().all(|&g| g));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = predtrig(&[
            "simulate",
            "--preset",
            "example2",
            "--trigger",
            "pt",
            "--horizon",
            "2",
            "--cost",
            "0.5",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn sweep_row_count() {
    let o = predtrig(&[
        "sweep",
        "--preset",
        "example1",
        "--trigger",
        "et,pt,st",
        "--horizon",
        "2",
        "--cost-grid",
        "0.01,0.05,0.1,0.2,0.3,0.45,0.6,0.8,1.0,1.4,2.0,2.5",
        "--runs",
        "2000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trigger,M,C,runs,K,seed,comm_mean,err_mean,err_std"
    );
    assert_eq!(lines.count(), 36);
}

#[test]
fn scenario_file_with_cost_table() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "costs.txt", &"1e9\n".repeat(50));
    let cfg = write(
        dir.path(),
        "scenario.toml",
        "[model]\npreset = \"example1\"\n\n[trigger]\nkind = \"st\"\ncost_table = \"costs.txt\"\n\n[sim]\nsteps = 50\n",
    );
    let o = predtrig(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g = gamma_column(&stdout(&o));
    assert_eq!(g.iter().filter(|&&x| x).count(), 1);

    // The table must cover the horizon.
    let o = predtrig(&["simulate", "--config", &cfg, "--steps", "60"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(
        dir.path(),
        "a.toml",
        "[model]\npreset = \"example1\"\nfoo = 1\n",
    );
    let no_m = write(
        dir.path(),
        "b.toml",
        "[model]\npreset = \"example1\"\n[trigger]\nkind = \"pt\"\ncost = 1.0\n",
    );
    let neg = write(
        dir.path(),
        "c.toml",
        "[model]\npreset = \"example1\"\n[trigger]\nkind = \"et\"\ncost = -0.5\n",
    );
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["simulate", "--config", &unknown], "line 3"),
        (vec!["simulate", "--config", &no_m], "horizon"),
        (vec!["simulate", "--config", &neg], "non-negative"),
        (
            vec!["period", "--preset", "example1", "--cost", "-1"],
            "non-negative",
        ),
        (
            vec![
                "sweep",
                "--preset",
                "example1",
                "--trigger",
                "et,xx",
                "--cost",
                "1",
            ],
            "unknown trigger",
        ),
        (vec!["period", "--cost", "1"], "--preset"),
        (vec!["frobnicate"], "subcommand"),
    ];
    for (args, needle) in cases {
        let o = predtrig(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error[config]: "), "{err}");
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn io_failure_exits_4() {
    let o = predtrig(&[
        "period",
        "--preset",
        "example1",
        "--cost",
        "1",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("error[io]: "));
    let o = predtrig(&[
        "period",
        "--config",
        "/nonexistent-dir/x.toml",
        "--cost",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn numeric_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Unstable and unobservable: no steady state.
    let cfg = write(
        dir.path(),
        "u.toml",
        "model.n_x = 1\nmodel.n_y = 1\nmodel.A = 1.5\nmodel.H = 0\nmodel.Q = 0.1\nmodel.R = 0.1\nprior.x0_mean = 0\nprior.x0_cov = 1\n",
    );
    let o = predtrig(&["period", "--config", &cfg, "--cost", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[numeric]: "));
}

#[test]
fn validate_outcomes() {
    let o = predtrig(&["validate", "--preset", "example1"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 7);
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));

    let o = predtrig(&["validate", "--preset", "example1", "--runs", "100"]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).starts_with("error[inconclusive]: "));

    let o = predtrig(&[
        "validate",
        "--preset",
        "example1",
        "--inject-fault",
        "variance-signal",
    ]);
    assert_eq!(o.status.code(), Some(5));
    let err = stderr(&o);
    assert!(err.starts_with("error[validation]: "));
    assert!(err.contains("open_loop_past_var (z="), "{err}");
}
