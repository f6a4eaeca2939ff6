use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SYMMETRIC_15: &str = r#"
[noise]
family = "pareto-polar"
alpha = 1.5
atoms = [{ direction = [1.0], weight = 0.5 }, { direction = [-1.0], weight = 0.5 }]
"#;

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rvseries"));
    cmd.args(args).arg("--config").arg(&path);
    if !args.contains(&"--out") {
        cmd.arg("--out").arg(dir.join("out"));
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(dir: &Path, name: &str) -> toml::Table {
    fs::read_to_string(dir.join("out").join(name))
        .unwrap()
        .parse()
        .unwrap()
}

fn get<'a>(t: &'a toml::Table, path: &[&str]) -> &'a toml::Value {
    let mut v = &t[path[0]];
    for p in &path[1..] {
        v = &v[*p];
    }
    v
}

#[test]
fn check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let geometric = format!("{SYMMETRIC_15}\n[model]\nkind = \"geometric\"\nratio = 0.5\n");
    assert_eq!(code(&run(dir.path(), &["check"], &geometric)), 0);
    let r = report(dir.path(), "check.toml");
    assert_eq!(get(&r, &["report", "verdict"]).as_str(), Some("pass"));

    let harmonic = r#"
[noise]
family = "pareto-polar"
alpha = 0.8
atoms = [{ direction = [1.0], weight = 0.5 }, { direction = [-1.0], weight = 0.5 }]
[model]
kind = "power-law"
exponent = 1.0
"#;
    assert_eq!(code(&run(dir.path(), &["check"], harmonic)), 2);

    let malformed = run(dir.path(), &["check"], "[noise]\nalpha = \n");
    assert_eq!(code(&malformed), 1);
    assert!(String::from_utf8_lossy(&malformed.stderr).contains("line 2"));
    let unknown = format!("{geometric}\n[estimation]\nnsims = 3\n");
    assert_eq!(code(&run(dir.path(), &["check"], &unknown)), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let geometric = format!("{SYMMETRIC_15}\n[model]\nkind = \"geometric\"\nratio = 0.5\n");
    assert_eq!(code(&run(dir.path(), &["check", "--bogus"], &geometric)), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"], &geometric)), 1);
    let missing = Command::new(env!("CARGO_BIN_EXE_rvseries"))
        .args(["check", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 1);
}

fn theory_value(config: &str) -> f64 {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["theory"], config);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    get(
        &report(dir.path(), "theory.toml"),
        &["report", "constant", "value"],
    )
    .as_float()
    .unwrap()
}

#[test]
fn theory_constants() {
    let sre = r#"
[noise]
family = "pareto-polar"
alpha = 0.5
atoms = [{ direction = [1.0], weight = 1.0 }]
[model]
kind = "sre"
law = { type = "constant", value = 0.0625 }
[tail_set]
kind = "ray-above"
"#;
    assert!((theory_value(sre) - 4.0 / 3.0).abs() < 1e-12);
    let random_sum = format!("{SYMMETRIC_15}\n[model]\nkind = \"random-sum\"\ncount = {{ type = \"geometric\", mean = 4.0 }}\n");
    assert!((theory_value(&random_sum) - 4.0).abs() < 1e-12);
    let linear = r#"
[noise]
family = "centered-pareto1d"
alpha = 1.5
mean_mode = "zero-forced"
atoms = [{ direction = [1.0], weight = 1.0 }]
[model]
kind = "geometric"
ratio = 0.5
[tail_set]
kind = "ray-above"
"#;
    assert!((theory_value(linear) - 1.0 / (1.0 - 0.5f64.powf(1.5))).abs() < 1e-12);
}

#[test]
fn unchecked_theory_fails() {
    let dir = TempDir::new().unwrap();
    let m_one = r#"
[noise]
family = "pareto-polar"
alpha = 0.5
atoms = [{ direction = [1.0], weight = 1.0 }]
[model]
kind = "sre"
law = { type = "constant", value = 1.0 }
"#;
    assert_eq!(code(&run(dir.path(), &["theory"], m_one)), 2);
}

fn estimate_config(model: &str, extra: &str) -> String {
    format!("{SYMMETRIC_15}\n[model]\n{model}\n[estimation]\nlevels = [1e-2, 1e-3]\nn_sims = 300000\nseed = 5\n{extra}")
}

#[test]
fn estimate_verdicts() {
    let dir = TempDir::new().unwrap();
    let noise_only = estimate_config("kind = \"noise-only\"", "");
    let o = run(dir.path(), &["estimate"], &noise_only);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "verdict.toml");
    assert_eq!(
        get(&r, &["report", "verdict", "pass"]).as_bool(),
        Some(true)
    );
    assert_eq!(get(&r, &["report", "seed"]).as_integer(), Some(5));
    let csv = fs::read_to_string(dir.path().join("out/estimate.csv")).unwrap();
    assert!(csv.starts_with("u,exceedances,n_sims,ratio,stderr,theory,z\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("out/plot.csv").exists());

    let random_sum = "kind = \"random-sum\"\ncount = { type = \"geometric\", mean = 2.0 }";
    assert_eq!(
        code(&run(
            dir.path(),
            &["estimate"],
            &estimate_config(random_sum, "")
        )),
        0
    );
    let wrong = estimate_config(random_sum, "[theory]\nconstant = 3.0\n");
    assert_eq!(code(&run(dir.path(), &["estimate"], &wrong)), 2);
}

#[test]
fn grid_too_deep_exits_two_with_guidance() {
    let dir = TempDir::new().unwrap();
    let deep = format!("{SYMMETRIC_15}\n[model]\nkind = \"noise-only\"\n[estimation]\nlevels = [1e-6]\nn_sims = 1000\n");
    let o = run(dir.path(), &["estimate"], &deep);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("raise n_sims"));
}

#[test]
fn reports_round_trip_byte_identically() {
    let dir = TempDir::new().unwrap();
    let sre = estimate_config(
        "kind = \"sre\"\nlaw = { type = \"constant\", value = 0.5 }",
        "",
    );
    assert_eq!(
        code(&run(
            dir.path(),
            &["estimate", "--seed", "99", "--workers", "1"],
            &sre
        )),
        0
    );
    let first = fs::read(dir.path().join("out/estimate.csv")).unwrap();
    let verdict = dir.path().join("out/verdict.toml");

    let rerun_dir = dir.path().join("rerun");
    let o = Command::new(env!("CARGO_BIN_EXE_rvseries"))
        .args(["estimate", "--workers", "3", "--config"])
        .arg(&verdict)
        .arg("--out")
        .arg(&rerun_dir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(rerun_dir.join("estimate.csv")).unwrap(), first);
    let r: toml::Table = fs::read_to_string(rerun_dir.join("verdict.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(get(&r, &["estimation", "seed"]).as_integer(), Some(99));
}

#[test]
fn probe_tables() {
    let dir = TempDir::new().unwrap();
    let sre = format!(
        "{SYMMETRIC_15}\n[model]\nkind = \"sre\"\nlaw = {{ type = \"constant\", value = 0.5 }}\n[probe]\nn_sims = 50000\nhill_sims = 200000\n"
    );
    assert_eq!(code(&run(dir.path(), &["probe"], &sre)), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("out/probe.csv")).unwrap();
    let ratios: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[3].parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 5);
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    let r = report(dir.path(), "probe.toml");
    let alpha_hat = get(&r, &["report", "hill", "alpha_hat"])
        .as_float()
        .unwrap();
    assert!((alpha_hat - 1.5).abs() < 0.15, "{alpha_hat}");

    let finite = format!("{SYMMETRIC_15}\n[model]\nkind = \"linear\"\ncoefficients = [1.0, 0.5]\n[probe]\nn_list = [1, 3]\nn_sims = 5000\nhill_sims = 5000\n");
    assert_eq!(code(&run(dir.path(), &["probe"], &finite)), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("out/probe.csv")).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[1], "0");
        assert_eq!(&rec[3], "0");
    }
}
