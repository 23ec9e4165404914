use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ahmpc_cli::run::CSV_HEADER;

fn ahmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ahmpc"))
        .args(args)
        .output()
        .expect("spawn ahmpc")
}

fn body(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn degree_two_is_a_config_error() {
    let out = ahmpc(&["--degree", "2", "--steps", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "steps = 0\nhorizon = 3\n").unwrap();
    let out = ahmpc(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
}

#[test]
fn bad_flag_values_are_config_errors() {
    for args in [
        &["--noise-seed", "loud"][..],
        &["--steps", "-4"],
        &["--sweep", "0..9"],
        &["--bogus"],
    ] {
        assert_eq!(ahmpc(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn zero_steps_writes_header_only() {
    let out = ahmpc(&["--steps", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(body(&csv), vec![CSV_HEADER]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("max-horizon=0"));
}

#[test]
fn flags_override_the_file_and_config_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# demo\ndegree = 3\nsteps = 40\nu_max = 4.5\ndamping = relative\n").unwrap();
    let out = ahmpc(&["--config", cfg.to_str().unwrap(), "--steps", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    for line in [
        "# degree = 3",
        "# steps = 0",
        "# u_max = 4.5",
        "# damping = relative",
        "# noise = off",
        "# n_init = 50",
    ] {
        assert!(csv.lines().any(|l| l == line), "missing `{line}` in\n{csv}");
    }
}

fn check_rows(csv: &str, steps: usize) {
    let rows = body(csv);
    assert_eq!(rows[0], CSV_HEADER);
    assert_eq!(rows.len(), steps + 1);
    for (t, row) in rows[1..].iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 11, "{row}");
        assert_eq!(cols[0], t.to_string());
        for &c in cols[1..7].iter().chain([&cols[10]]) {
            let mantissa = c.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.replace('.', "").len(), 17, "{c}");
            c.parse::<f64>().unwrap();
        }
        cols[7].parse::<usize>().unwrap();
        cols[8].parse::<usize>().unwrap();
        assert!(!cols[9].is_empty());
    }
}

#[test]
fn noisy_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let run = |seed: &str| {
        let out = ahmpc(&[
            "--degree", "1", "--steps", "4", "--noise-seed", seed, "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("time-to-stabilize="));
        fs::read(&path).unwrap()
    };
    let (a, b, c) = (run("11"), run("11"), run("12"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let csv = String::from_utf8(a).unwrap();
    assert!(csv.contains("# noise = 11\n"));
    check_rows(&csv, 4);
}

#[test]
fn sweep_writes_one_csv_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("sweep.csv");
    let out = ahmpc(&["--degree", "1", "--steps", "2", "--sweep", "seeds=3..5", "--out", base.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    for seed in 3..=5 {
        let path = dir.path().join(format!("sweep_seed{seed}.csv"));
        let csv = fs::read_to_string(&path).unwrap();
        assert!(csv.contains(&format!("# noise = {seed}\n")));
        check_rows(&csv, 2);
        assert!(stdout.contains(&format!("seed={seed} time-to-stabilize=")));
    }
    assert!(!base.exists());
}

fn has(dir: &Path, name: &str) -> bool {
    dir.join(name).is_file()
}

#[test]
fn dump_series_writes_coefficient_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = ahmpc(&["--steps", "0", "--dump-series", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["V.txt", "kappa_1.txt", "kappa_2.txt", "W.txt", "transform.txt"] {
        assert!(has(dir.path(), name), "{name}");
    }
    let w = fs::read_to_string(dir.path().join("W.txt")).unwrap();
    assert!(w.starts_with("n=4\nd=10\n"), "{}", &w[..20.min(w.len())]);
}
