use std::path::Path;

use phl::cli::{parse_args, run, RunConfig, EXIT_CONFIG};

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let mut v = vec!["phl".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    v.push("--out-dir".into());
    v.push(dir.to_string_lossy().into_owned());
    run(v)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn table_rows_and_t0_limit() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), &["table", "--t", "0,0.3,1,2.5", "--n-max", "5", "--digits", "40"]), 0);
    let (h, rows) = read_csv(&d.path().join("table.csv"));
    assert_eq!(h[0], "schema_version");
    assert_eq!(rows.len(), 24);
    let (ct, cn, ca) = (col(&h, "t"), col(&h, "n"), col(&h, "alpha_n"));
    for r in rows.iter().filter(|r| r[ct].parse::<f64>().unwrap() == 0.0) {
        let n: f64 = r[cn].parse().unwrap();
        let a: f64 = r[ca].parse().unwrap();
        // alpha=1.3, gamma=2 by default
        assert!((a - (2.0 * n + 1.0 + 3.3)).abs() < 1e-12, "n={n} alpha_n={a}");
    }
}

#[test]
fn table_n_max_zero_and_determinism() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let args = ["table", "--t", "0.5,1.5", "--n-max", "0", "--digits", "30"];
    assert_eq!(run_in(d1.path(), &args), 0);
    assert_eq!(run_in(d2.path(), &args), 0);
    let a = std::fs::read(d1.path().join("table.csv")).unwrap();
    let b = std::fs::read(d2.path().join("table.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(read_csv(&d1.path().join("table.csv")).1.len(), 2);
}

#[test]
fn verify_filter_and_negative_control() {
    let d = tempfile::tempdir().unwrap();
    let base = ["verify", "--t", "1", "--n-max", "2", "--digits", "50"];
    let mut args = base.to_vec();
    args.extend(["--ids", "s24,td1"]);
    assert_eq!(run_in(d.path(), &args), 0);
    let (h, rows) = read_csv(&d.path().join("verify.csv"));
    let ci = col(&h, "id");
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[ci] == "s24" || r[ci] == "td1"), "{rows:?}");

    let mut args = base.to_vec();
    args.extend(["--perturb-moment", "3:1e-8"]);
    assert_eq!(run_in(d.path(), &args), 1);
    let (h, rows) = read_csv(&d.path().join("verify.csv"));
    let cp = col(&h, "pass");
    assert!(rows.iter().any(|r| r[cp] == "false"));
}

#[test]
fn ode_zero_span_and_order_dependence() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), &["ode", "--t0", "1", "--t1", "1", "--digits", "30"]), 0);
    let (_, rows) = read_csv(&d.path().join("ode.csv"));
    assert!(rows.is_empty());

    let mut r_end = Vec::new();
    for n in ["1", "4"] {
        let dn = tempfile::tempdir().unwrap();
        let code = run_in(dn.path(), &["ode", "--n", n, "--t0", "0.5", "--t1", "1", "--points", "3", "--digits", "30", "--tol", "1e-14"]);
        assert_eq!(code, 0);
        let (h, rows) = read_csv(&dn.path().join("ode.csv"));
        assert_eq!(rows.len(), 3);
        let (cr, cd) = (col(&h, "R_ode"), col(&h, "abs_diff_R"));
        for r in &rows {
            assert!(r[cd].parse::<f64>().unwrap() < 1e-10);
        }
        r_end.push(rows[2][cr].parse::<f64>().unwrap());
        assert!(!dn.path().join("ode.gp").exists());
    }
    assert!((r_end[0] - r_end[1]).abs() > 1e-3);
}

#[test]
fn config_errors_exit_4() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), &["verify", "--ids", "nope"]), EXIT_CONFIG);
    assert_eq!(run_in(d.path(), &["table", "--n-max", "x"]), EXIT_CONFIG);
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, r#"{"alhpa": 1.0}"#).unwrap();
    assert_eq!(run_in(d.path(), &["table", "--config", bad.to_str().unwrap()]), EXIT_CONFIG);
}

#[test]
fn run_record_echoes_config() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), &["table", "--t", "0.7", "--n-max", "2", "--digits", "30", "--alpha", "0.5"]), 0);
    let text = std::fs::read_to_string(d.path().join("table.run.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let echoed = RunConfig::from_json(&v["config"].to_string()).unwrap();
    let again = parse_args([
        "phl", "table", "--t", "0.7", "--n-max", "2", "--digits", "30", "--alpha", "0.5", "--out-dir", d.path().to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(echoed.to_json(), again.to_json());
    assert_eq!(v["exit_code"], 0);
}
