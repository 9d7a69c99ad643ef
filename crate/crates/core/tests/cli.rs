use std::path::Path;
use std::process::{Command, Output};

use herald::cli::{embedded_config_csv, embedded_config_json, parse_config};

const BIN: &str = env!("CARGO_BIN_EXE_herald");

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(BIN)
        .arg(args[0])
        .arg("--config")
        .arg(&path)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_ideal_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.json");
    let cfg = "scheme = \"two_photon\"\n[system]\ng = 1.0\nJ = 0.01\nkappa = 0.0\ngamma = 0.0\n";
    let o = run(dir.path(), cfg, &["simulate", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    let r = &v["result"];
    assert!((r["herald_probability"].as_f64().unwrap() - 0.5).abs() < 0.01);
    assert!(r["fidelity"].as_f64().unwrap() >= 0.99);
    assert_eq!(r["reference"]["quantity"], "fidelity");
    let text = std::fs::read_to_string(&out).unwrap();
    let back = embedded_config_json(&text).unwrap();
    let mut expected = parse_config(cfg).unwrap();
    expected.output = Some(out.clone());
    assert_eq!(back, expected);
}

#[test]
fn sweep_success_probability_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let cfg = "scheme = \"ideal_probe\"\n[system]\nJ = 0.01\n\
               [sweep]\nparameter = \"kappa_over_hopping\"\nvalues = [0.05, 0.1, 0.2]\n";
    let o = run(dir.path(), cfg, &["sweep", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "param");
    assert_eq!(&header[6], "seed");
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let dev: f64 = row[5].parse().unwrap();
        assert!(dev < 1e-3, "deviation {dev}");
        assert_eq!(row[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 12);
    }
    let back = embedded_config_csv(&text).unwrap();
    assert_eq!(back.sweep.unwrap().values, vec![0.05, 0.1, 0.2]);
}

#[test]
fn sweep_row_count_follows_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "scheme = \"ideal_probe\"\n[system]\nJ = 0.05\n\
               [sweep]\nparameter = \"gamma\"\nvalues = [0.0, 0.001, 0.002, 0.003, 0.004]\n";
    let o = run(dir.path(), cfg, &["sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let data = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data, 6);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let neg = "scheme = \"two_photon\"\n[system]\nkappa = -0.1\n";
    let o = run(dir.path(), neg, &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.kappa"));

    let syntax = "scheme = \"two_photon\"\n[system]\ng = = 1\n";
    let o = run(dir.path(), syntax, &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let unknown = "scheme = \"two_photon\"\ncompensation = true\n";
    let o = run(dir.path(), unknown, &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_three() {
    let o = Command::new(BIN)
        .args(["simulate", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let cfg = "scheme = \"ideal_probe\"\n";
    let o = run(dir.path(), cfg, &["simulate", "--output", "/nonexistent/dir/out.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn step_limit_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "scheme = \"ideal_probe\"\n[integrator]\nmax_steps = 10\n";
    let o = run(dir.path(), cfg, &["simulate"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("instability"));
}

#[test]
fn fiber_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fiber.json");
    let cfg = "scheme = \"two_photon\"\n[fiber]\ncoupling = 0.025\nspacing = 1.0\nsamples = 2000\n";
    let o = run(dir.path(), cfg, &["fiber", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    assert!(v["report"]["relative_deviation"].as_f64().unwrap() < 0.05);

    let missing = "scheme = \"two_photon\"\n";
    assert_eq!(run(dir.path(), missing, &["fiber"]).status.code(), Some(2));
}

#[test]
fn trajectories_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "scheme = \"ideal_probe\"\n[system]\nJ = 0.05\nkappa = 0.005\n";
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = run(dir.path(), cfg, &["trajectories", "--n", "200", "--seed", "11", "--output", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v = json(&a);
    assert_eq!(v["trajectories"].as_array().unwrap().len(), 200);
    assert_eq!(v["seed"], 11);
    // Outputs differ only through the embedded output path.
    let strip = |t: &[u8], p: &Path| String::from_utf8_lossy(t).replace(p.to_str().unwrap(), "OUT");
    assert_eq!(strip(&ta, &a), strip(&tb, &b));

    let c = dir.path().join("c.json");
    run(dir.path(), cfg, &["trajectories", "--n", "200", "--seed", "12", "--output", c.to_str().unwrap()]);
    assert_ne!(strip(&std::fs::read(&c).unwrap(), &c), strip(&ta, &a));
}
