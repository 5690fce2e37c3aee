use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::time::Instant;

use lcvb_core::checks::{run_suite, SuiteOptions};
use lcvb_core::decision::{gap_for_action, lcvb_decide, nvb_decide};
use lcvb_core::results::{write_results, Manifest};
use lcvb_core::variational::fit_lcvb_with;
use lcvb_core::{
    bayes_decision, build_posterior, elbo, estimate_rate, fit_nvb, run_experiment, true_optimal_action, ConstantRisk,
    ExperimentConfig, FitSettings, RiskFunction, Rule,
};
use serde_json::{json, Value};

use crate::config::{load_json, CheckConfig, DataConfig, ResolvedData};
use crate::{CheckArgs, Cli, CliError, Command, DataArgs, DecideArgs, ExperimentArgs, FitArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(args) => fit(cli, args),
        Command::Decide(args) => decide(cli, args),
        Command::Experiment(args) => experiment(cli, args),
        Command::Check(args) => check(cli, args),
    }
}

fn data_config(cli: &Cli, args: &DataArgs) -> Result<DataConfig, CliError> {
    let mut cfg: DataConfig = match &cli.config {
        Some(path) => load_json(path)?,
        None => DataConfig::default(),
    };
    if let Some(v) = &args.values {
        cfg.values = Some(v.clone());
        cfg.data_file = None;
    }
    if let Some(p) = &args.data_file {
        cfg.data_file = Some(p.clone());
        cfg.values = None;
    }
    if args.theta0.is_some() {
        cfg.theta0 = args.theta0;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if cli.verbose {
        eprintln!("config: {}", serde_json::to_string(&cfg).unwrap_or_default());
    }
    Ok(cfg)
}

/// Print `key: value` lines and optionally save the report as JSON.
fn emit(cli: &Cli, report: &Value) -> Result<(), CliError> {
    if let Value::Object(map) = report {
        for (k, v) in map {
            match v {
                Value::String(s) => println!("{k}: {s}"),
                other => println!("{k}: {other}"),
            }
        }
    }
    if let Some(stem) = &cli.out {
        let path = with_suffix(stem, ".json");
        write_text(&path, &serde_json::to_string_pretty(report).expect("report serializes"))?;
        if cli.verbose {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn with_suffix(stem: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn warn_unconverged(verbose: bool, converged: bool, what: &str) {
    if !converged {
        eprintln!("warning: {what} stopped at the iteration cap before reaching tolerance");
    } else if verbose {
        eprintln!("{what} converged");
    }
}

fn fit(cli: &Cli, args: &FitArgs) -> Result<(), CliError> {
    let cfg = data_config(cli, &args.data)?;
    let ResolvedData { data, model, source, .. } = cfg.resolve()?;
    let settings = FitSettings::default();
    let grid = build_posterior(&data, &model, cfg.node_count)?;
    let (nvb, nvb_diag) = fit_nvb(&data, &model, &settings)?;

    let mut report = json!({ "data": source, "n": data.len() });
    let (q, diag) = match args.calibrate {
        None => {
            report["posterior"] = json!("nvb");
            (nvb, nvb_diag)
        }
        Some(a) => {
            let risk: Box<dyn RiskFunction> = match args.constant_risk {
                Some(c) if !(c > 0.0 && c.is_finite()) => {
                    return Err(CliError::Config(format!("--constant-risk must be positive, got {c}")))
                }
                Some(c) => Box::new(ConstantRisk(c)),
                None => Box::new(model),
            };
            let fit = fit_lcvb_with(a, &data, &model, &grid, risk.as_ref(), &nvb, &settings)?;
            report["posterior"] = json!(format!("lcvb at a = {a}"));
            report["calibrated_objective"] = json!(fit.objective.value);
            report["expected_log_risk"] = json!(fit.objective.log_risk_term);
            if fit.objective.clamped {
                eprintln!("warning: ln G was floored at some quadrature nodes");
            }
            (fit.q, fit.diagnostics)
        }
    };
    warn_unconverged(cli.verbose, diag.converged, "inner maximization");
    let kl = grid.log_evidence() - elbo(&q, &data, &model);
    report["mu"] = json!(q.mu);
    report["sigma"] = json!(q.sigma);
    report["mean_theta"] = json!(q.mean());
    report["elbo"] = json!(elbo(&q, &data, &model));
    report["kl_to_posterior"] = json!(kl);
    report["posterior_mean_theta"] = json!(grid.mean());
    report["iterations"] = json!(diag.iterations);
    report["converged"] = json!(diag.converged);
    report["gradient_norm"] = json!(diag.final_gradient_norm);
    report["restarts"] = json!(diag.restarts_used);
    emit(cli, &report)
}

fn decide(cli: &Cli, args: &DecideArgs) -> Result<(), CliError> {
    let cfg = data_config(cli, &args.data)?;
    let ResolvedData {
        data,
        model,
        theta0_known,
        source,
    } = cfg.resolve()?;
    let settings = lcvb_core::DecisionSettings::default();
    let outcome = match args.rule {
        Rule::Nvb => nvb_decide(&data, &model, &settings)?,
        Rule::Lcvb => lcvb_decide(&data, &model, &build_posterior(&data, &model, cfg.node_count)?, &settings)?,
        Rule::Bayes => bayes_decision(&build_posterior(&data, &model, cfg.node_count)?, &model),
        Rule::OracleTrue => unreachable!("rejected by the argument parser"),
    };
    if let Some(d) = outcome.inner_fit {
        warn_unconverged(cli.verbose, d.converged, "inner maximization");
    }
    let mut report = json!({
        "data": source,
        "n": data.len(),
        "h": model.h,
        "rule": outcome.rule.as_str(),
        "action": outcome.action,
        "objective_value": outcome.objective_value,
        "probe_count": outcome.probe_count,
    });
    if theta0_known {
        let gap = gap_for_action(outcome.action, &model)?;
        report["true_optimal_action"] = json!(true_optimal_action(&model)?);
        report["gap_action"] = json!(gap.action);
        report["gap_regret"] = json!(gap.regret);
    }
    emit(cli, &report)
}

fn experiment_config(cli: &Cli, args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let preset = args.paper_defaults || args.full_scale;
    let mut cfg = match (&cli.config, preset) {
        (Some(_), true) => {
            return Err(CliError::Config("--config cannot be combined with --paper-defaults/--full-scale".into()))
        }
        (Some(path), false) => load_json(path)?,
        (None, true) if args.full_scale => ExperimentConfig::full_scale(),
        (None, true) => ExperimentConfig::reduced_scale(),
        (None, false) => {
            return Err(CliError::Config("experiment needs --config <path> or --paper-defaults".into()))
        }
    };
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(q) = args.quantile {
        cfg.quantile_level = q;
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = experiment_config(cli, args)?;
    if cli.verbose {
        eprintln!("config: {}", serde_json::to_string(&cfg).unwrap_or_default());
    }
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let clock = Instant::now();
    let report = run_experiment(&cfg, cli.jobs)?;
    let duration_seconds = clock.elapsed().as_secs_f64();
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    let stem = cli.out.clone().unwrap_or_else(|| "lcvb-experiment".into());
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.master_seed,
        started_at,
        duration_seconds,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let (csv, man) = write_results(&report.curves, &stem, &manifest)?;

    let header: Vec<String> = cfg.n_schedule.iter().map(|n| format!("n={n}")).collect();
    println!("quantile {} of |a - a0*| ({} paths)", cfg.quantile_level, cfg.replications);
    print_row(&["rule", "h"], &header, "slope");
    for c in &report.curves {
        let values: Vec<String> = c.points.iter().map(|p| cell(p.gap_action_q)).collect();
        let slope = estimate_rate(c).map_or_else(|_| "-".to_string(), |s| format!("{s:.3}"));
        print_row(&[c.rule.as_str(), &c.h.to_string()], &values, &slope);
    }
    println!("wrote {} and {}", csv.display(), man.display());
    Ok(())
}

fn print_row<A: Display, B: Display>(lead: &[A], values: &[B], tail: &str) {
    let mut line = format!("{:<6}{:<8}", lead[0], lead[1]);
    for v in values {
        line.push_str(&format!("{v:>10}"));
    }
    line.push_str(&format!("{tail:>9}"));
    println!("{line}");
}

fn check(cli: &Cli, args: &CheckArgs) -> Result<(), CliError> {
    let mut cfg: CheckConfig = match &cli.config {
        Some(path) => load_json(path)?,
        None => CheckConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if cfg.sample_size == 0 {
        return Err(CliError::Config("sample_size must be at least 1".into()));
    }
    let results = run_suite(&SuiteOptions {
        seed: cfg.master_seed,
        sample_size: cfg.sample_size,
        inject_fault: args.inject_fault,
    })?;
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {:<22} worst residual {:>11.3e}  tolerance {:.0e}  probes {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst_residual,
            r.tolerance,
            r.probes
        );
        failed += !r.passed as usize;
    }
    if let Some(stem) = &cli.out {
        write_text(&with_suffix(stem, ".json"), &serde_json::to_string_pretty(&results).expect("results serialize"))?;
    }
    if failed > 0 {
        return Err(CliError::Property(failed));
    }
    Ok(())
}
