use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lcvb(args: &[&str]) -> Output {
    lcvb_env(args, &[])
}

fn lcvb_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lcvb"));
    cmd.args(args).env_remove("SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `key: value` report lines.
fn fields(o: &Output) -> HashMap<String, String> {
    stdout(o)
        .lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(f: &HashMap<String, String>, key: &str) -> f64 {
    f[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", f.get(key)))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn fit_concentrates_on_synthetic_data() {
    let o = lcvb(&["fit", "--n", "5000", "--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fields(&o);
    assert!((num(&f, "mean_theta") - 0.68).abs() < 0.05, "{f:?}");
    assert!(num(&f, "kl_to_posterior") >= 0.0);
    assert_eq!(f["converged"], "true");
    assert_eq!(f["posterior"], "nvb");
}

#[test]
fn calibrated_fit_with_constant_risk_matches_plain_fit() {
    let plain = fields(&lcvb(&["fit", "--n", "200", "--seed", "5"]));
    let o = lcvb(&["fit", "--n", "200", "--seed", "5", "--calibrate", "3", "--constant-risk", "2.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lc = fields(&o);
    for key in ["mu", "sigma"] {
        assert!((num(&plain, key) - num(&lc, key)).abs() < 1e-6, "{key}: {plain:?} vs {lc:?}");
    }
    let real = fields(&lcvb(&["fit", "--n", "200", "--seed", "5", "--calibrate", "3"]));
    assert!(num(&real, "calibrated_objective").is_finite());
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", r#"{"n": 50, "bogus_key": 1}"#);
    let o = lcvb(&["fit", "--config", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));

    let wrong_type = write(dir.path(), "t.json", r#"{"n": 50, "theta0": "high"}"#);
    let o = lcvb(&["fit", "--config", &wrong_type]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta0"), "{}", stderr(&o));

    let broken = write(dir.path(), "b.json", r#"{"n": 50,"#);
    assert_eq!(lcvb(&["fit", "--config", &broken]).status.code(), Some(2));
    assert_eq!(lcvb(&["fit", "--config", "/nonexistent/c.json"]).status.code(), Some(2));
    assert_eq!(lcvb(&["fit", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(lcvb(&["fit", "--h", "-1"]).status.code(), Some(2));
}

#[test]
fn degenerate_data_exits_3() {
    let o = lcvb(&["fit", "--values", "0,0,0"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical"));
}

#[test]
fn data_sources() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "d.txt", "# demands\n1.5, 0.2\n3.1 0.7\n");
    let from_file = fields(&lcvb(&["decide", "--rule", "nvb", "--data-file", &file]));
    let inline = fields(&lcvb(&["decide", "--rule", "nvb", "--values", "1.5,0.2,3.1,0.7"]));
    assert_eq!(from_file["action"], inline["action"]);
    assert_eq!(inline["n"], "4");
    // rate unknown for supplied data
    assert!(!inline.contains_key("gap_action"));
    let bad = write(dir.path(), "bad.txt", "1.0\nabc\n");
    let o = lcvb(&["fit", "--data-file", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn bayes_and_nvb_agree_at_n_2000() {
    let bayes = fields(&lcvb(&["decide", "--rule", "bayes", "--n", "2000", "--seed", "3"]));
    let nvb = fields(&lcvb(&["decide", "--rule", "nvb", "--n", "2000", "--seed", "3"]));
    assert!((num(&bayes, "action") - num(&nvb, "action")).abs() < 0.1, "{bayes:?} {nvb:?}");
    assert!(num(&nvb, "gap_action") >= 0.0);
    assert_eq!(num(&nvb, "true_optimal_action"), num(&bayes, "true_optimal_action"));
}

#[test]
fn lcvb_action_in_interval_and_unknown_rule() {
    let o = lcvb(&["decide", "--rule", "lcvb", "--n", "100", "--seed", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = num(&fields(&o), "action");
    assert!((0.0..=50.0).contains(&a));
    assert_eq!(lcvb(&["decide", "--rule", "mcmc"]).status.code(), Some(2));
    assert_eq!(lcvb(&["decide", "--rule", "oracle_true"]).status.code(), Some(2));
}

#[test]
fn seed_precedence_flag_env_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"n": 30, "master_seed": 1}"#);
    let source = |o: Output| fields(&o)["data"].clone();
    assert!(source(lcvb(&["fit", "--config", &cfg])).contains("seed = 1"));
    assert!(source(lcvb_env(&["fit", "--config", &cfg], &[("SEED", "2")])).contains("seed = 2"));
    assert!(source(lcvb_env(&["fit", "--config", &cfg, "--seed", "3"], &[("SEED", "2")])).contains("seed = 3"));
}

#[test]
fn experiment_writes_deterministic_results() {
    let dir = tempfile::tempdir().unwrap();
    let stem = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let run = |name: &str, extra: &[&str]| {
        let out = stem(name);
        let mut args = vec!["experiment", "--paper-defaults", "--replications", "12", "--out", &out];
        args.extend_from_slice(extra);
        let o = lcvb(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        (o, fs::read_to_string(format!("{out}.csv")).unwrap())
    };
    let (o, first) = run("a", &["--jobs", "1"]);
    assert!(stdout(&o).contains("n=1250"));
    let (_, second) = run("b", &["--jobs", "3"]);
    assert_eq!(first, second);
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "rule,h,n,quantile_level,gap_action_q,gap_regret_q,replications,failures");
    assert_eq!(lines.len(), 1 + 9 * 4 * 2);

    let (_, q90) = run("c", &["--quantile", "0.9"]);
    for (a, b) in first.lines().skip(1).zip(q90.lines().skip(1)) {
        let (a, b): (Vec<&str>, Vec<&str>) = (a.split(',').collect(), b.split(',').collect());
        assert_eq!(b[3], "0.9");
        assert_eq!((a[0], a[1], a[2], a[6], a[7]), (b[0], b[1], b[2], b[6], b[7]));
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(format!("{}.manifest.json", stem("a"))).unwrap()).unwrap();
    assert_eq!(manifest["seed"], manifest["config"]["master_seed"]);
    assert!(manifest["started_at"].as_str().unwrap().ends_with('Z'));
}

#[test]
fn experiment_config_file_is_strict() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "e.json",
        r#"{"theta0": 0.68, "b": 0.1, "alpha": 1.0, "beta": 4.1, "h_values": [0.004],
            "n_schedule": [10, 40], "replications": 3, "quantile_level": 0.5,
            "master_seed": 9, "rules": ["nvb", "bayes"]}"#,
    );
    let out = dir.path().join("r").to_str().unwrap().to_string();
    let o = lcvb(&["experiment", "--config", &good, "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(format!("{out}.csv")).unwrap().lines().count(), 1 + 2 * 2);

    let bad = write(dir.path(), "x.json", &fs::read_to_string(&good).unwrap().replace("\"b\"", "\"bb\""));
    let o = lcvb(&["experiment", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bb"), "{}", stderr(&o));
    assert_eq!(lcvb(&["experiment"]).status.code(), Some(2));
    assert_eq!(lcvb(&["experiment", "--paper-defaults", "--quantile", "1.5"]).status.code(), Some(2));
}

#[test]
fn check_suite_and_fault_hook() {
    let o = lcvb(&["check"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    for name in ["kl_decomposition", "jensen_bound", "elbo_gradient", "quantile_nearest_rank"] {
        let line = out.lines().find(|l| l.contains(name)).unwrap_or_else(|| panic!("{out}"));
        assert!(line.starts_with("PASS") && line.contains("worst residual"), "{line}");
    }
    let o = lcvb(&["check", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL kl_decomposition")));
}
