use lcvb_core::decision::{lcvb_search, nvb_decide_from_fit};
use lcvb_core::experiment::path_demand;
use lcvb_core::oracle::DEFAULT_NODE_COUNT;
use lcvb_core::variational::fit_lcvb;
use lcvb_core::{
    bayes_decision, build_posterior, calibrated_posterior_density, fit_nvb, run_experiment, true_optimal_action,
    ActionInterval, DecisionSettings, ExperimentConfig, NewsvendorModel, Rule,
};
use serde::Serialize;

const DENSITY_POINTS: usize = 200;
pub const MAX_SAMPLE_SIZE: usize = 20_000;
pub const MAX_REPLICATIONS: usize = 100;

type DemoResult = Result<String, String>;

fn model(h: f64, b: f64, theta0: f64) -> Result<NewsvendorModel, String> {
    NewsvendorModel::new(h, b, theta0, 1.0, 4.1, ActionInterval::DEFAULT).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> DemoResult {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct RiskCurve {
    actions: Vec<f64>,
    risk: Vec<f64>,
    optimal_action: f64,
    minimum_risk: f64,
}

pub fn risk_curve(h: f64, b: f64, theta: f64, a_max: f64, points: usize) -> DemoResult {
    let m = model(h, b, theta)?;
    if !(a_max > 0.0 && a_max.is_finite()) || !(2..=10_000).contains(&points) {
        return Err(format!("need a_max > 0 and 2 <= points <= 10000, got {a_max}, {points}"));
    }
    let actions: Vec<f64> = (0..points).map(|k| a_max * k as f64 / (points - 1) as f64).collect();
    let risk = actions.iter().map(|&a| m.risk_unchecked(a, theta)).collect();
    let optimal_action = true_optimal_action(&m).map_err(|e| e.to_string())?;
    to_json(&RiskCurve {
        actions,
        risk,
        optimal_action,
        minimum_risk: m.risk_unchecked(optimal_action, theta),
    })
}

#[derive(Debug, Serialize)]
struct Decisions {
    true_optimum: f64,
    bayes: f64,
    nvb: f64,
    lcvb: f64,
}

#[derive(Debug, Serialize)]
struct PosteriorView {
    n: usize,
    sample_mean: f64,
    theta: Vec<f64>,
    posterior: Vec<f64>,
    calibrated: Vec<f64>,
    nvb: Vec<f64>,
    lcvb: Vec<f64>,
    nvb_params: [f64; 2],
    lcvb_params: [f64; 2],
    decisions: Decisions,
    /// LCVB inner maximum at each outer probe, sorted by action.
    lcvb_probes: Vec<[f64; 2]>,
}

/// Densities are evaluated on a common `theta` axis spanning the posterior
/// window; the LCVB curve is the calibrated fit at `action`.
pub fn posterior_view(h: f64, theta0: f64, n: usize, seed: u64, action: f64) -> DemoResult {
    let m = model(h, 0.1, theta0)?;
    if !(1..=MAX_SAMPLE_SIZE).contains(&n) {
        return Err(format!("sample size must be in 1..={MAX_SAMPLE_SIZE}, got {n}"));
    }
    let err = |e: lcvb_core::Error| e.to_string();
    let data = path_demand(theta0, n, seed).map_err(err)?;
    let grid = build_posterior(&data, &m, DEFAULT_NODE_COUNT).map_err(err)?;
    let settings = DecisionSettings::default();
    let (q_nvb, diag) = fit_nvb(&data, &m, &settings.fit).map_err(err)?;
    let lc = fit_lcvb(action, &data, &m, &grid, &q_nvb, &settings.fit).map_err(err)?;
    let search = lcvb_search(&data, &m, &grid, &m, &settings).map_err(err)?;

    let (lo, hi) = grid.window();
    let theta: Vec<f64> = (0..DENSITY_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (DENSITY_POINTS - 1) as f64)
        .collect();
    let posterior = theta.iter().map(|&t| grid.density(t)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let calibrated = theta
        .iter()
        .map(|&t| calibrated_posterior_density(action, t, &grid, &m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let mut lcvb_probes: Vec<[f64; 2]> = search
        .probes
        .iter()
        .filter_map(|p| p.inner_max.map(|v| [p.action, v]))
        .collect();
    lcvb_probes.sort_by(|x, y| x[0].total_cmp(&y[0]));

    to_json(&PosteriorView {
        n,
        sample_mean: data.sum() / n as f64,
        nvb: theta.iter().map(|&t| q_nvb.density(t)).collect(),
        lcvb: theta.iter().map(|&t| lc.q.density(t)).collect(),
        theta,
        posterior,
        calibrated,
        nvb_params: [q_nvb.mu, q_nvb.sigma],
        lcvb_params: [lc.q.mu, lc.q.sigma],
        decisions: Decisions {
            true_optimum: true_optimal_action(&m).map_err(err)?,
            bayes: bayes_decision(&grid, &m).action,
            nvb: nvb_decide_from_fit(&q_nvb, diag, &m, &m).action,
            lcvb: search.outcome.action,
        },
        lcvb_probes,
    })
}

#[derive(Debug, Serialize)]
struct GapSeries {
    rule: Rule,
    n: Vec<usize>,
    median_gap: Vec<Option<f64>>,
}

pub fn gap_curve(h: f64, replications: usize, seed: u64) -> DemoResult {
    if !(1..=MAX_REPLICATIONS).contains(&replications) {
        return Err(format!("replications must be in 1..={MAX_REPLICATIONS}, got {replications}"));
    }
    let config = ExperimentConfig {
        h_values: vec![h],
        replications,
        master_seed: seed,
        ..ExperimentConfig::reduced_scale()
    };
    let report = run_experiment(&config, None).map_err(|e| e.to_string())?;
    let series: Vec<GapSeries> = report
        .curves
        .iter()
        .map(|c| GapSeries {
            rule: c.rule,
            n: c.points.iter().map(|p| p.n).collect(),
            median_gap: c.points.iter().map(|p| p.gap_action_q).collect(),
        })
        .collect();
    to_json(&series)
}
