//! Numerical identity suite over random probes on a fixed dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::{nearest_rank_quantile, path_demand};
use crate::model::{log_likelihood, log_prior, NewsvendorModel, Observations, RiskFunction};
use crate::oracle::{build_posterior, log_calibrated_density, mle, posterior_expected_risk, PosteriorGrid, DEFAULT_NODE_COUNT};
use crate::variational::{
    calibrated_objective, calibrated_objective_gradient, elbo, elbo_gradient, hermite_rule, kl_decomposition_check,
    LogNormalVariational,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub sample_size: usize,
    /// Test hook: evaluate the KL identity with the normalizer's sign flipped.
    pub inject_fault: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            sample_size: 50,
            inject_fault: false,
        }
    }
}

struct Fixture {
    data: Observations,
    model: NewsvendorModel,
    grid: PosteriorGrid,
    center: f64,
}

impl Fixture {
    fn new(opts: &SuiteOptions) -> Result<Self> {
        let model = NewsvendorModel::reference(0.005)?;
        let data = path_demand(model.theta0, opts.sample_size, opts.seed)?;
        let grid = build_posterior(&data, &model, DEFAULT_NODE_COUNT)?;
        let center = mle(&data)?.ln();
        Ok(Self {
            data,
            model,
            grid,
            center,
        })
    }

    /// Random `(a, q)` pair near the posterior.
    fn probe(&self, rng: &mut ChaCha8Rng) -> (f64, LogNormalVariational) {
        let a = rng.random_range(0.0..20.0);
        let mu = self.center + rng.random_range(-0.5..0.5);
        let sigma = rng.random_range(0.02..0.6);
        (a, LogNormalVariational { mu, sigma })
    }
}

fn collect(name: &str, tolerance: f64, residuals: impl IntoIterator<Item = f64>) -> CheckResult {
    let mut worst = f64::NEG_INFINITY;
    let mut probes = 0;
    let mut finite = true;
    for r in residuals {
        probes += 1;
        finite &= !r.is_nan();
        worst = worst.max(r);
    }
    CheckResult {
        name: name.to_string(),
        passed: finite && worst <= tolerance,
        worst_residual: if finite { worst } else { f64::NAN },
        tolerance,
        probes,
    }
}

fn failed(name: &str, tolerance: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: false,
        worst_residual: f64::NAN,
        tolerance,
        probes: 0,
    }
}

fn run<F: FnMut(&mut ChaCha8Rng) -> Result<f64>>(
    name: &str,
    tolerance: f64,
    probes: usize,
    seed: u64,
    mut f: F,
) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match (0..probes).map(|_| f(&mut rng)).collect::<Result<Vec<_>>>() {
        Ok(r) => collect(name, tolerance, r),
        Err(_) => failed(name, tolerance),
    }
}

fn relative(analytic: [f64; 2], numeric: [f64; 2]) -> f64 {
    (0..2)
        .map(|i| (analytic[i] - numeric[i]).abs() / analytic[i].abs().max(1.0))
        .fold(0.0, f64::max)
}

fn central_difference(f: impl Fn(f64, f64) -> Result<f64>, mu: f64, rho: f64) -> Result<[f64; 2]> {
    let h = 1e-5;
    Ok([
        (f(mu + h, rho)? - f(mu - h, rho)?) / (2.0 * h),
        (f(mu, rho + h)? - f(mu, rho - h)?) / (2.0 * h),
    ])
}

/// Smallest element whose empirical CDF reaches `level`, by direct counting.
fn counting_quantile(values: &[f64], level: f64) -> f64 {
    let n = values.len() as f64;
    values
        .iter()
        .copied()
        .filter(|&c| values.iter().filter(|&&v| v <= c).count() as f64 >= level * n - 1e-9)
        .fold(f64::INFINITY, f64::min)
}

/// Run every identity; a failing evaluation reports as a failed check.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<CheckResult>> {
    let fx = Fixture::new(opts)?;
    let (data, model, grid) = (&fx.data, &fx.model, &fx.grid);
    let seed = opts.seed;
    let mut out = Vec::new();

    out.push(run("kl_decomposition", 1e-6, 100, seed ^ 1, |rng| {
        let (a, q) = fx.probe(rng);
        let residual = kl_decomposition_check(a, &q, data, model, grid)?;
        if !opts.inject_fault {
            return Ok(residual);
        }
        let log_z = posterior_expected_risk(a, grid, model).ln();
        let lhs = q.expect(hermite_rule(), |t| {
            q.log_density(t) - log_calibrated_density(a, t, grid, model, log_z)
        });
        let log_risk = q.expect(hermite_rule(), |t| model.log_risk(a, t));
        Ok((lhs - (grid.log_evidence() - elbo(&q, data, model) - log_risk - log_z)).abs())
    }));

    out.push(run("jensen_bound", 1e-8, 100, seed ^ 2, |rng| {
        let (a, q) = fx.probe(rng);
        let f = calibrated_objective(a, &q, data, model, grid)?;
        Ok(f.value - posterior_expected_risk(a, grid, model).ln())
    }));

    out.push(run("elbo_closed_form", 1e-8, 50, seed ^ 3, |rng| {
        let (_, q) = fx.probe(rng);
        let quad = q.expect(hermite_rule(), |t| {
            log_likelihood(t, data).unwrap_or(f64::NAN) + log_prior(t, model).unwrap_or(f64::NAN) - q.log_density(t)
        });
        Ok((elbo(&q, data, model) - quad).abs())
    }));

    out.push(run("elbo_below_evidence", 1e-8, 100, seed ^ 4, |rng| {
        let (_, q) = fx.probe(rng);
        Ok(elbo(&q, data, model) - grid.log_evidence())
    }));

    out.push(run("elbo_gradient", 1e-5, 50, seed ^ 5, |rng| {
        let (_, q) = fx.probe(rng);
        let numeric = central_difference(
            |mu, rho| Ok(elbo(&LogNormalVariational::from_log_scale(mu, rho)?, data, model)),
            q.mu,
            q.rho(),
        )?;
        Ok(relative(elbo_gradient(&q, data, model), numeric))
    }));

    out.push(run("calibrated_gradient", 1e-5, 50, seed ^ 6, |rng| {
        let (a, q) = fx.probe(rng);
        let numeric = central_difference(
            |mu, rho| Ok(calibrated_objective(a, &LogNormalVariational::from_log_scale(mu, rho)?, data, model, grid)?.value),
            q.mu,
            q.rho(),
        )?;
        Ok(relative(calibrated_objective_gradient(a, &q, data, model, model)?, numeric))
    }));

    out.push(run("quantile_nearest_rank", 0.0, 200, seed ^ 7, |rng| {
        let len = rng.random_range(1..80);
        // coarse values so ties are common
        let values: Vec<f64> = (0..len).map(|_| f64::from(rng.random_range(0..20u8)) / 4.0).collect();
        let level = rng.random_range(0.01..0.99);
        let got = nearest_rank_quantile(&values, level).unwrap_or(f64::NAN);
        Ok(if got == counting_quantile(&values, level) { 0.0 } else { 1.0 })
    }));

    Ok(out)
}
