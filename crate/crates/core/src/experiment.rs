//! Replicated consistency study: for each sample path, draw one demand stream,
//! run every configured rule on its nested prefixes for every holding cost,
//! and aggregate nearest-rank quantiles of the optimality gap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{lcvb_decide, nvb_decide_from_fit, optimality_gap, DecisionSettings, Gap, Rule};
use crate::error::{Error, Result};
use crate::model::{sample_demand, ActionInterval, NewsvendorModel, Observations};
use crate::oracle::{bayes_decision, build_posterior, DEFAULT_NODE_COUNT};
use crate::variational::fit_nvb;

pub const DEFAULT_SEED: u64 = 20_240_068;

/// Experiment parameters; JSON keys match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theta0: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub h_values: Vec<f64>,
    pub n_schedule: Vec<usize>,
    pub replications: usize,
    pub quantile_level: f64,
    pub master_seed: u64,
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub action_interval: ActionInterval,
    #[serde(default = "default_node_count")]
    pub node_count: usize,
}

fn default_node_count() -> usize {
    DEFAULT_NODE_COUNT
}

impl ExperimentConfig {
    /// Reduced-scale reproduction: 200 paths, `n` in {10, 50, 250, 1250}.
    pub fn reduced_scale() -> Self {
        Self {
            theta0: 0.68,
            b: 0.1,
            alpha: 1.0,
            beta: 4.1,
            h_values: (1..=9).map(|k| k as f64 / 1000.0).collect(),
            n_schedule: vec![10, 50, 250, 1250],
            replications: 200,
            quantile_level: 0.5,
            master_seed: DEFAULT_SEED,
            rules: vec![Rule::Nvb, Rule::Lcvb],
            action_interval: ActionInterval::DEFAULT,
            node_count: DEFAULT_NODE_COUNT,
        }
    }

    /// Full-scale setting with 1000 sample paths.
    pub fn full_scale() -> Self {
        Self {
            replications: 1000,
            ..Self::reduced_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.h_values.is_empty() {
            return bad("h_values must not be empty".into());
        }
        if self.n_schedule.is_empty() || self.n_schedule[0] == 0 {
            return bad("n_schedule must be non-empty with n >= 1".into());
        }
        if self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_schedule must be strictly increasing, got {:?}", self.n_schedule));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.quantile_level > 0.0 && self.quantile_level < 1.0) {
            return bad(format!("quantile_level must lie in (0, 1), got {}", self.quantile_level));
        }
        if self.rules.is_empty() {
            return bad("rules must not be empty".into());
        }
        if let Some(r) = self.rules.iter().find(|r| **r == Rule::OracleTrue) {
            return bad(format!("rule `{r}` is not an experiment rule"));
        }
        for &h in &self.h_values {
            self.model(h)?;
        }
        Ok(())
    }

    pub fn model(&self, h: f64) -> Result<NewsvendorModel> {
        NewsvendorModel::new(h, self.b, self.theta0, self.alpha, self.beta, self.action_interval)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    fn needs_grid(&self) -> bool {
        self.rules.iter().any(|r| matches!(r, Rule::Lcvb | Rule::Bayes))
    }
}

/// SplitMix64 finalizer over `(master_seed, path_index)`.
pub fn path_seed(master_seed: u64, path_index: u64) -> u64 {
    let mut z = master_seed ^ path_index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Demand stream of one sample path.
pub fn path_demand(theta0: f64, count: usize, seed: u64) -> Result<Observations> {
    sample_demand(theta0, count, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub rule: Rule,
    pub h: f64,
    pub n: usize,
    /// `Err` carries the failure message.
    pub gap: std::result::Result<Gap, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_index: usize,
    pub seed: u64,
    pub cells: Vec<CellRecord>,
}

impl PathRecord {
    pub fn cell(&self, rule: Rule, h: f64, n: usize) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.rule == rule && c.h == h && c.n == n)
    }
}

/// Run every configured rule on the nested prefixes of one demand stream.
///
/// The same prefix feeds every rule and every holding cost.
pub fn simulate_path(config: &ExperimentConfig, path_index: usize) -> Result<PathRecord> {
    if path_index >= config.replications {
        return Err(Error::InvalidConfig(format!(
            "path index {path_index} outside 0..{}",
            config.replications
        )));
    }
    let seed = path_seed(config.master_seed, path_index as u64);
    let n_max = *config.n_schedule.last().expect("validated schedule");
    let stream = path_demand(config.theta0, n_max, seed)?;
    let models = config
        .h_values
        .iter()
        .map(|&h| config.model(h))
        .collect::<Result<Vec<_>>>()?;
    let settings = DecisionSettings::default();
    let mut cells = Vec::with_capacity(config.h_values.len() * config.n_schedule.len() * config.rules.len());

    for &n in &config.n_schedule {
        let data = stream.prefix(n)?;
        // the NVB posterior and the exact posterior do not depend on h
        let nvb = if config.rules.contains(&Rule::Nvb) {
            Some(fit_nvb(&data, &models[0], &settings.fit).map_err(|e| e.to_string()))
        } else {
            None
        };
        let grid = if config.needs_grid() {
            Some(build_posterior(&data, &models[0], config.node_count).map_err(|e| e.to_string()))
        } else {
            None
        };
        for model in &models {
            for &rule in &config.rules {
                let gap = match rule {
                    Rule::Nvb => match nvb.as_ref().expect("nvb fitted") {
                        Ok((q, diag)) => optimality_gap(&nvb_decide_from_fit(q, *diag, model, model), model)
                            .map_err(|e| e.to_string()),
                        Err(e) => Err(e.clone()),
                    },
                    Rule::Lcvb => match grid.as_ref().expect("grid built") {
                        Ok(g) => lcvb_decide(&data, model, g, &settings)
                            .and_then(|o| optimality_gap(&o, model))
                            .map_err(|e| e.to_string()),
                        Err(e) => Err(e.clone()),
                    },
                    Rule::Bayes => match grid.as_ref().expect("grid built") {
                        Ok(g) => optimality_gap(&bayes_decision(g, model), model).map_err(|e| e.to_string()),
                        Err(e) => Err(e.clone()),
                    },
                    Rule::OracleTrue => unreachable!("rejected by validation"),
                };
                cells.push(CellRecord {
                    rule,
                    h: model.h,
                    n,
                    gap,
                });
            }
        }
    }
    Ok(PathRecord {
        path_index,
        seed,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    /// `None` when more than half of the replications failed.
    pub gap_action_q: Option<f64>,
    pub gap_regret_q: Option<f64>,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub rule: Rule,
    pub h: f64,
    pub quantile_level: f64,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub curves: Vec<QuantileCurve>,
    pub warnings: Vec<String>,
}

/// Nearest-rank quantile: the `ceil(q N)`-th order statistic.
pub fn nearest_rank_quantile(values: &[f64], level: f64) -> Option<f64> {
    if values.is_empty() || !(level > 0.0 && level < 1.0) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // q N is often an integer in exact arithmetic; guard against it landing a ulp above
    let rank = ((level * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Some(sorted[rank - 1])
}

/// Execute all paths and aggregate the quantile curves.
///
/// `jobs` bounds the worker threads (`None` uses the global pool). The output
/// does not depend on `jobs` or on scheduling order.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let paths = run_paths(config, jobs)?;
    Ok(aggregate(config, &paths))
}

#[cfg(feature = "parallel")]
fn run_paths(config: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<PathRecord>> {
    use rayon::prelude::*;
    let work = || {
        (0..config.replications)
            .into_par_iter()
            .map(|i| simulate_path(config, i))
            .collect::<Result<Vec<_>>>()
    };
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {j} workers: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_paths(config: &ExperimentConfig, _jobs: Option<usize>) -> Result<Vec<PathRecord>> {
    (0..config.replications).map(|i| simulate_path(config, i)).collect()
}

/// Reduce per-path records into one curve per `(rule, h)`, ordered as configured.
pub fn aggregate(config: &ExperimentConfig, paths: &[PathRecord]) -> ExperimentReport {
    let mut sorted: Vec<&PathRecord> = paths.iter().collect();
    sorted.sort_by_key(|p| p.path_index);
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    for &rule in &config.rules {
        for &h in &config.h_values {
            let mut points = Vec::with_capacity(config.n_schedule.len());
            for &n in &config.n_schedule {
                let mut actions = Vec::with_capacity(sorted.len());
                let mut regrets = Vec::with_capacity(sorted.len());
                let mut failures = 0;
                for p in &sorted {
                    match p.cell(rule, h, n).map(|c| &c.gap) {
                        Some(Ok(g)) => {
                            actions.push(g.action);
                            regrets.push(g.regret);
                        }
                        _ => failures += 1,
                    }
                }
                let total = actions.len() + failures;
                let missing = 2 * failures > total;
                if missing {
                    warnings.push(format!(
                        "{rule} h={h} n={n}: {failures} of {total} replications failed; quantile omitted"
                    ));
                }
                let q = |v: &[f64]| {
                    if missing {
                        None
                    } else {
                        nearest_rank_quantile(v, config.quantile_level)
                    }
                };
                points.push(CurvePoint {
                    n,
                    gap_action_q: q(&actions),
                    gap_regret_q: q(&regrets),
                    replications: actions.len(),
                    failures,
                });
            }
            curves.push(QuantileCurve {
                rule,
                h,
                quantile_level: config.quantile_level,
                points,
            });
        }
    }
    ExperimentReport { curves, warnings }
}

/// Least-squares slope of `ln(gap quantile)` against `ln n`.
pub fn estimate_rate(curve: &QuantileCurve) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter_map(|p| match p.gap_action_q {
            Some(q) if q > 0.0 && q.is_finite() => Some(((p.n as f64).ln(), q.ln())),
            _ => None,
        })
        .collect();
    log_log_slope(&pts)
}

/// Least-squares slope through `(x, y)` pairs; needs at least three points.
pub fn log_log_slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate estimate needs at least 3 positive points, got {}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all sample sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            h_values: vec![0.002, 0.007],
            n_schedule: vec![10, 40],
            replications: 6,
            rules: vec![Rule::Nvb, Rule::Lcvb, Rule::Bayes],
            ..ExperimentConfig::reduced_scale()
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::reduced_scale().validate().is_ok());
        let mut c = small_config();
        c.n_schedule = vec![10, 10];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.quantile_level = 1.0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.h_values = vec![-0.1];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.rules = vec![Rule::OracleTrue];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_is_strict() {
        let json = serde_json::to_string(&ExperimentConfig::reduced_scale()).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ExperimentConfig::reduced_scale());
        let extra = json.replacen('{', "{\"bogus\": 1,", 1);
        let err = serde_json::from_str::<ExperimentConfig>(&extra).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn path_replay_is_bit_identical() {
        let c = small_config();
        assert_eq!(simulate_path(&c, 3).unwrap(), simulate_path(&c, 3).unwrap());
        assert!(simulate_path(&c, 6).is_err());
    }

    #[test]
    fn path_streams_are_distinct() {
        use std::collections::HashSet;
        let mut seen = HashSet::new();
        for i in 0..10_000u64 {
            let x = path_demand(0.68, 8, path_seed(DEFAULT_SEED, i)).unwrap();
            let key: Vec<u64> = x.values().iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(key), "collision at path {i}");
        }
    }

    #[test]
    fn common_random_numbers_across_h_and_n() {
        let c = small_config();
        let seed = path_seed(c.master_seed, 2);
        let long = path_demand(c.theta0, 40, seed).unwrap();
        let short = path_demand(c.theta0, 10, seed).unwrap();
        assert_eq!(&long.values()[..10], short.values());
    }

    #[test]
    fn single_replication_quantile_is_the_path_gap() {
        let c = ExperimentConfig {
            replications: 1,
            ..small_config()
        };
        let report = run_experiment(&c, Some(1)).unwrap();
        let path = simulate_path(&c, 0).unwrap();
        for curve in &report.curves {
            for p in &curve.points {
                let cell = path.cell(curve.rule, curve.h, p.n).unwrap();
                assert_eq!(p.gap_action_q, Some(cell.gap.as_ref().unwrap().action));
                assert_eq!(p.replications + p.failures, 1);
            }
        }
    }

    #[test]
    fn aggregation_ignores_path_order() {
        let c = small_config();
        let mut paths: Vec<PathRecord> = (0..c.replications).map(|i| simulate_path(&c, i).unwrap()).collect();
        let forward = aggregate(&c, &paths);
        paths.reverse();
        paths.swap(0, 3);
        assert_eq!(aggregate(&c, &paths), forward);
    }

    #[test]
    fn failed_cells_are_counted_and_mask_quantiles() {
        let c = small_config();
        let mut paths: Vec<PathRecord> = (0..c.replications).map(|i| simulate_path(&c, i).unwrap()).collect();
        for p in paths.iter_mut().take(4) {
            for cell in p.cells.iter_mut().filter(|cell| cell.rule == Rule::Nvb) {
                cell.gap = Err("injected".into());
            }
        }
        let report = aggregate(&c, &paths);
        for curve in report.curves.iter().filter(|c| c.rule == Rule::Nvb) {
            for p in &curve.points {
                assert_eq!((p.replications, p.failures), (2, 4));
                assert_eq!(p.gap_action_q, None);
            }
        }
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn rate_examples() {
        let curve = |f: &dyn Fn(f64) -> f64| QuantileCurve {
            rule: Rule::Nvb,
            h: 0.001,
            quantile_level: 0.5,
            points: [10, 100, 1000, 10_000]
                .into_iter()
                .map(|n| CurvePoint {
                    n,
                    gap_action_q: Some(f(n as f64)),
                    gap_regret_q: None,
                    replications: 1,
                    failures: 0,
                })
                .collect(),
        };
        let s = estimate_rate(&curve(&|n| n.powf(-0.5))).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
        let s = estimate_rate(&curve(&|_| 0.3)).unwrap();
        assert!(s.abs() < 1e-12);
        let mut short = curve(&|n| 1.0 / n);
        short.points.truncate(2);
        assert!(matches!(estimate_rate(&short), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn quantile_edge_cases() {
        assert_eq!(nearest_rank_quantile(&[], 0.5), None);
        assert_eq!(nearest_rank_quantile(&[4.0], 0.5), Some(4.0));
        assert_eq!(nearest_rank_quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), Some(2.0));
        let v: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(nearest_rank_quantile(&v, 0.9), Some(180.0));
        assert_eq!(nearest_rank_quantile(&v, 0.5), Some(100.0));
    }

    /// Smallest value whose empirical CDF reaches the level; quadratic but obviously correct.
    fn quantile_by_counting(values: &[f64], level: f64) -> f64 {
        let n = values.len() as f64;
        let mut candidates = values.to_vec();
        candidates.sort_by(f64::total_cmp);
        *candidates
            .iter()
            .find(|&&c| values.iter().filter(|&&v| v <= c).count() as f64 >= level * n - 1e-9)
            .unwrap()
    }

    proptest! {
        #[test]
        fn nearest_rank_matches_counting_reference(
            values in proptest::collection::vec(0.0f64..10.0, 1..60),
            level in 0.01f64..0.99,
        ) {
            prop_assert_eq!(nearest_rank_quantile(&values, level).unwrap(), quantile_by_counting(&values, level));
        }
    }
}
