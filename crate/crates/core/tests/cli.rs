use std::path::Path;
use std::process::{Command, Output};

use lorafix::geometry::{canonical_triangle, Position};
use lorafix::solver::forward_toa;

fn lorafix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lorafix"))
        .args(args)
        .env_remove("LORAFIX_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_row(o: &Output) -> Vec<String> {
    stdout(o).lines().nth(1).unwrap().split(',').map(str::to_owned).collect()
}

#[test]
fn solve_symmetric_arrivals_at_origin() {
    let t = format!("{:e}", 5000.0 / 299_792_458.0);
    let o = lorafix(&["solve", "--toa-s", &format!("{t},{t},{t}")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().next().unwrap(), "x_m,y_m,t0_s,residual_m,root_index");
    let row = data_row(&o);
    let x: f64 = row[0].parse().unwrap();
    let y: f64 = row[1].parse().unwrap();
    assert!(x.abs() < 1e-6 && y.abs() < 1e-6, "{x} {y}");
}

#[test]
fn solve_recovers_forward_target() {
    let gws = canonical_triangle(10_000.0).unwrap();
    let toa = forward_toa(Position::new(1000.0, 500.0), &gws, 0.0).arrivals;
    let arg = toa.map(|t| format!("{t:.17e}")).join(",");
    let o = lorafix(&["solve", "--toa-s", &arg]);
    assert!(o.status.success());
    let row = data_row(&o);
    assert!((row[0].parse::<f64>().unwrap() - 1000.0).abs() < 1e-6);
    assert!((row[1].parse::<f64>().unwrap() - 500.0).abs() < 1e-6);
}

#[test]
fn collinear_gateways_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"geometry": {"gateways": [{"x": 0, "y": 0}, {"x": 1000, "y": 0}, {"x": 2000, "y": 0}]},
            "toa_s": [1e-6, 2e-6, 3e-6]}"#,
    )
    .unwrap();
    let o = lorafix(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular-geometry"));
}

#[test]
fn zero_arrivals_are_singular() {
    let o = lorafix(&["solve", "--toa-s", "0,0,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular-geometry"));
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(lorafix(&["airtime", "--sf", "13"]).status.code(), Some(1));
    assert_eq!(lorafix(&["airtime", "--bw-hz", "200000"]).status.code(), Some(1));
    assert_eq!(lorafix(&["airtime", "--cr", "5"]).status.code(), Some(1));
    assert_eq!(lorafix(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(lorafix(&["error-map", "--points", "10"]).status.code(), Some(1), "missing seed");
    assert_eq!(lorafix(&["sweep-emax", "--seed", "1", "--workers", "0"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seeed": 1}"#).unwrap();
    assert_eq!(lorafix(&["airtime", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&cfg, "{not json").unwrap();
    assert_eq!(lorafix(&["airtime", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn io_errors_exit_three() {
    let o = lorafix(&["airtime", "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(3));
    let o = lorafix(&["airtime", "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(lorafix(&["--help"]).status.code(), Some(0));
    assert_eq!(lorafix(&["--version"]).status.code(), Some(0));
}

#[test]
fn airtime_columns() {
    let o = lorafix(&["airtime", "--sf", "12", "--bw-hz", "125000", "--cr", "1", "--payload", "51"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).lines().next().unwrap(),
        "T_sym_s,T_preamble_s,payload_symbols,tau_s,n_bits,T_s,delta"
    );
    let row = data_row(&o);
    let tau: f64 = row[3].parse().unwrap();
    assert!((tau - 2.466).abs() < 1e-3);
    let delta: f64 = row[6].parse().unwrap();
    assert!((delta - tau / 171.798_691_84).abs() < 1e-12);

    let o = lorafix(&["airtime", "--sf", "7", "--bw-hz", "125000"]);
    let t_sym: f64 = data_row(&o)[0].parse().unwrap();
    assert_eq!(t_sym, 1.024e-3);
}

#[test]
fn seed_from_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_lorafix"));
        c.args(["error-map", "--points", "50", "--transmissions", "2"]).args(extra);
        match env {
            Some(v) => c.env("LORAFIX_SEED", v),
            None => c.env_remove("LORAFIX_SEED"),
        };
        c.output().unwrap()
    };
    let from_env = run(Some("11"), &[]);
    let from_flag = run(None, &["--seed", "11"]);
    let flag_wins = run(Some("12"), &["--seed", "11"]);
    assert!(from_env.status.success());
    assert_eq!(from_env.stdout, from_flag.stdout);
    assert_eq!(flag_wins.stdout, from_flag.stdout);
    assert_eq!(run(Some("abc"), &[]).status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"command": "error-map", "seed": 3, "experiment": {"points": 40, "transmissions": 2}}"#)
        .unwrap();
    let cfg = cfg.to_str().unwrap();
    let base = lorafix(&["error-map", "--config", cfg]);
    assert!(base.status.success());
    assert_eq!(stdout(&base).lines().count(), 41);
    let more = lorafix(&["error-map", "--config", cfg, "--points", "60"]);
    assert_eq!(stdout(&more).lines().count(), 61);
    let other_seed = lorafix(&["error-map", "--config", cfg, "--seed", "4"]);
    assert_ne!(base.stdout, other_seed.stdout);
    assert_eq!(lorafix(&["solve", "--config", cfg]).status.code(), Some(1));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

#[test]
fn output_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("map.csv");
    let o = lorafix(&["error-map", "--seed", "2", "--points", "30", "--transmissions", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("global max error"));
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["x_m", "y_m", "max_error_m", "failed_solves"]);
    assert_eq!(rows.len(), 30);
    for row in rows {
        for cell in &row[..3] {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), *cell);
        }
        assert_eq!(row[3], "0");
    }
}

#[test]
fn json_output_parses() {
    let o = lorafix(&["dutycycle-grid", "--format", "json", "--n-bits", "32", "--T-ns", "40"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["columns"][0], "tau_s");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    let one_second = rows.iter().find(|r| r[0] == 1.0).unwrap();
    assert!((one_second[3].as_f64().unwrap() - 0.005_82).abs() < 1e-5);
    assert_eq!(one_second[5], true);
}

#[test]
fn alpha_bounds_row() {
    let o = lorafix(&["alpha-bounds"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next().unwrap(), "tau_min_s,tau_max_s,argmin_params,argmax_params");
    let row = data_row(&o);
    assert!((row[1].parse::<f64>().unwrap() - 3.547136).abs() < 1e-9);
    assert!(row[3].contains("bw_hz=125000") && row[3].contains("pl=51") && row[3].contains("cr=4"));
}

#[test]
fn sweep_with_sigma_bands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, r#"{"experiment": {"periods_s": [2e-8, 4e-8], "sigma_bands": true}}"#).unwrap();
    let o = lorafix(&["sweep-emax", "--seed", "5", "--points", "200", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("T_s,e_max_m,sigma_m,failed_solves,"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let (mean, sd) = (r[1], r[2]);
        assert!((r[4] - (mean - sd)).abs() < 1e-9 && (r[9] - (mean + 3.0 * sd)).abs() < 1e-9);
    }
}
