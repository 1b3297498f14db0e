use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pilotctl(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pilotctl"))
        .args(args)
        .env("PILOTCTL_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("stderr is one JSON object")
}

#[test]
fn defaults_only_config_validates() {
    let d = tempfile::tempdir().unwrap();
    let c = write_config(d.path(), "c.json", r#"{"scenario": "boundaries", "snr_db": [3]}"#);
    let o = pilotctl(&["validate", &c], d.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn zero_peak_power_is_a_violation() {
    let d = tempfile::tempdir().unwrap();
    let c = write_config(d.path(), "c.json", r#"{"scenario": "boundaries", "snr_db": [3], "params": {"eps_max": 0}}"#);
    let o = pilotctl(&["validate", &c], d.path());
    assert_eq!(o.status.code(), Some(1));
    let v = stderr_json(&o);
    let list: Vec<&str> = v["violations"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert!(list.contains(&"peak training power must be positive"), "{list:?}");
}

#[test]
fn block_longer_than_horizon_is_a_violation() {
    let d = tempfile::tempdir().unwrap();
    let c = write_config(
        d.path(),
        "c.json",
        r#"{"scenario": "trace", "snr_db": [3], "params": {"n_scale": 4, "m_block": 8}}"#,
    );
    let o = pilotctl(&["validate", &c], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_seed_list_writes_nothing() {
    let d = tempfile::tempdir().unwrap();
    let c = write_config(d.path(), "c.json", r#"{"scenario": "trace", "snr_db": [3], "seeds": [], "output": "t"}"#);
    let o = pilotctl(&["run", &c], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["status"], "invalid");
    assert!(!d.path().join("t").exists());
}

#[test]
fn malformed_config_exits_with_validation_code() {
    let d = tempfile::tempdir().unwrap();
    let c = write_config(d.path(), "c.json", "{not json");
    assert_eq!(pilotctl(&["run", &c], d.path()).status.code(), Some(1));
}

#[test]
fn solver_failure_exits_with_runtime_code() {
    let d = tempfile::tempdir().unwrap();
    // budget far below anything the price bracket can reach
    let c = write_config(d.path(), "c.json", r#"{"scenario": "boundaries", "snr_db": [-90], "grid_k": 50}"#);
    let o = pilotctl(&["run", &c], d.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["status"], "error");
}

#[test]
fn rerun_is_byte_identical_and_headers_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let body = r#"{"scenario": "trace", "snr_db": [3], "blocks": 3000, "grid_k": 100, "seeds": [7],
                   "params": {"n_scale": 200, "m_block": 1, "eps_max": 12, "rho": 2}}"#;
    let c = write_config(d.path(), "c.json", body);
    let a = d.path().join("a");
    let b = d.path().join("b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    assert_eq!(pilotctl(&["run", &c], &a).status.code(), Some(0));
    assert_eq!(pilotctl(&["run", &c], &b).status.code(), Some(0));
    for name in ["trace_snr3dB.csv", "free_snr3dB.csv"] {
        let x = fs::read(a.join("trace").join(name)).unwrap();
        let y = fs::read(b.join("trace").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
        let text = String::from_utf8(x).unwrap();
        let line = text.lines().find(|l| l.contains("\"artifact\"")).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim_start_matches('#').trim()).unwrap();
        let echoed = write_config(d.path(), "echo.json", &v["config"].to_string());
        assert_eq!(pilotctl(&["validate", &echoed], d.path()).status.code(), Some(0));
    }
    let trace = fs::read_to_string(a.join("trace/trace_snr3dB.csv")).unwrap();
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 3001);
    let (bd, hdr) = pilotctl::read_boundary::<f64, _>(fs::File::open(a.join("trace/free_snr3dB.csv")).unwrap()).unwrap();
    assert_eq!(bd.len(), 101);
    assert_eq!(hdr.params.eps_max, 12.0);
}

#[test]
fn growth_table_has_one_row_per_n() {
    let d = tempfile::tempdir().unwrap();
    let c = write_config(
        d.path(),
        "c.json",
        r#"{"scenario": "growth", "n_list": [100, 200], "grid_k": 200, "params": {"p_av": 3.0}}"#,
    );
    let o = pilotctl(&["run", &c], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(d.path().join("growth/growth.csv")).unwrap();
    let rows: Vec<&str> = t.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n,mu0,rate,rate_over_log_n");
    assert_eq!(rows.len(), 3);
}
