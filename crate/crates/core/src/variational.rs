//! Log-normal variational family, closed-form ELBO and the loss-calibrated
//! objective, with the inner maximizations that produce the NVB and LCVB
//! approximate posteriors.
//!
//! Fits are parametrized by `(mu, rho)` with `sigma = exp(rho)`. The ascent
//! direction is the gradient preconditioned by the inverse negative Hessian of
//! the ELBO, which is negative definite everywhere for this model; on the
//! plain ELBO that is Newton's method, and on the calibrated objective it is a
//! preconditioned gradient step. Steps are accepted by Armijo backtracking.

use std::f64::consts::{E, PI};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{prior_log_norm, NewsvendorModel, Observations, RiskFunction};
use crate::oracle::{mle, PosteriorGrid};
use crate::quadrature::GaussHermite;

pub const HERMITE_NODES: usize = 64;
/// ln(1e-300): floor applied to `ln G` before it enters the objective.
pub const LOG_RISK_FLOOR: f64 = -690.775_527_898_213_7;

/// Shared 64-node rule used by every objective in this module.
pub fn hermite_rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(HERMITE_NODES))
}

/// Log-normal distribution over the rate: `ln theta ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalVariational {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalVariational {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(
                "log-normal family",
                format!("need finite mu and sigma > 0, got mu = {mu}, sigma = {sigma}"),
            ));
        }
        Ok(Self { mu, sigma })
    }

    pub fn from_log_scale(mu: f64, rho: f64) -> Result<Self> {
        Self::new(mu, rho.exp())
    }

    pub fn rho(&self) -> f64 {
        self.sigma.ln()
    }

    /// `E_q[theta]`
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    /// `E_q[1 / theta]`
    pub fn inverse_mean(&self) -> f64 {
        (-self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    /// Differential entropy of the rate, `mu + ln(2 pi e sigma^2) / 2`.
    pub fn entropy(&self) -> f64 {
        self.mu + 0.5 * (2.0 * PI * E * self.sigma * self.sigma).ln()
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        if theta.is_nan() || theta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let l = theta.ln();
        let z = (l - self.mu) / self.sigma;
        -l - self.sigma.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z
    }

    pub fn density(&self, theta: f64) -> f64 {
        self.log_density(theta).exp()
    }

    /// `E_q[f(theta)]` by Gauss-Hermite quadrature over `ln theta`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, rule: &GaussHermite, mut f: F) -> f64 {
        rule.expect_normal(|z| f((self.mu + self.sigma * z).exp()))
    }
}

/// `Var_q[theta] = (e^{sigma^2} - 1) e^{2 mu + sigma^2}`.
pub fn variational_variance(q: &LogNormalVariational) -> f64 {
    let s2 = q.sigma * q.sigma;
    s2.exp_m1() * (2.0 * q.mu + s2).exp()
}

/// Closed-form `E_q[ln p(X | theta) + ln pi(theta) - ln q(theta)]`.
pub fn elbo(q: &LogNormalVariational, data: &Observations, model: &NewsvendorModel) -> f64 {
    let n = data.len() as f64;
    n * q.mu - data.sum() * q.mean() + prior_log_norm(model)
        - (model.alpha + 1.0) * q.mu
        - model.beta * q.inverse_mean()
        + q.entropy()
}

/// ELBO gradient in `(mu, rho)`.
pub fn elbo_gradient(q: &LogNormalVariational, data: &Observations, model: &NewsvendorModel) -> [f64; 2] {
    let n = data.len() as f64;
    let s2 = q.sigma * q.sigma;
    let up = data.sum() * q.mean();
    let down = model.beta * q.inverse_mean();
    [n - model.alpha - up + down, 1.0 - s2 * (up + down)]
}

/// Negative ELBO Hessian in `(mu, rho)`, row-major; positive definite.
fn neg_elbo_hessian(q: &LogNormalVariational, data: &Observations, model: &NewsvendorModel) -> [f64; 4] {
    let s2 = q.sigma * q.sigma;
    let up = data.sum() * q.mean();
    let down = model.beta * q.inverse_mean();
    let off = s2 * (up - down);
    [up + down, off, off, (2.0 * s2 + s2 * s2) * (up + down)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedObjective {
    pub value: f64,
    /// `KL(q || posterior) = ln p(X) - ELBO(q)`.
    pub kl_term: f64,
    /// `E_q[ln G(a, theta)]`.
    pub log_risk_term: f64,
    /// Some node needed the `ln G` floor.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub converged: bool,
    pub restarts_used: usize,
    /// The `ln G` floor was hit at the returned solution.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub perturbation_scale: f64,
    pub seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
            restarts: 3,
            perturbation_scale: 0.5,
            seed: 0x005e_ed0f_f175,
        }
    }
}

/// `E_q[ln G(a, .)]` and, when requested, its `(mu, rho)` gradient.
fn log_risk_moments<R: RiskFunction + ?Sized>(
    a: f64,
    q: &LogNormalVariational,
    risk: &R,
    rule: &GaussHermite,
    with_gradient: bool,
) -> Result<(f64, [f64; 2], bool)> {
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    let mut clamped = false;
    for (z, w) in rule.normal_points() {
        let theta = (q.mu + q.sigma * z).exp();
        let mut lg = risk.log_risk(a, theta);
        let mut floored = false;
        if lg.is_nan() || lg == f64::NEG_INFINITY {
            return Err(Error::Positivity {
                action: a,
                rate: theta,
                value: risk.risk(a, theta),
            });
        }
        if lg < LOG_RISK_FLOOR {
            lg = LOG_RISK_FLOOR;
            floored = true;
            clamped = true;
        }
        value += w * lg;
        if with_gradient {
            let e = if floored { 0.0 } else { risk.log_risk_elasticity(a, theta) };
            grad[0] += w * e;
            grad[1] += w * e * q.sigma * z;
        }
    }
    Ok((value, grad, clamped))
}

/// Loss-calibrated lower bound `-KL(q || posterior) + E_q[ln G(a, .)]`.
pub fn calibrated_objective(
    a: f64,
    q: &LogNormalVariational,
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
) -> Result<CalibratedObjective> {
    calibrated_objective_with(a, q, data, model, grid, model, hermite_rule())
}

pub fn calibrated_objective_with<R: RiskFunction + ?Sized>(
    a: f64,
    q: &LogNormalVariational,
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
    risk: &R,
    rule: &GaussHermite,
) -> Result<CalibratedObjective> {
    if !model.action_interval.contains(a) {
        return Err(Error::domain("calibrated_objective", format!("action {a} outside the decision interval")));
    }
    let kl_term = grid.log_evidence() - elbo(q, data, model);
    let (log_risk_term, _, clamped) = log_risk_moments(a, q, risk, rule, false)?;
    Ok(CalibratedObjective {
        value: -kl_term + log_risk_term,
        kl_term,
        log_risk_term,
        clamped,
    })
}

/// `(mu, rho)` gradient of the calibrated objective.
pub fn calibrated_objective_gradient<R: RiskFunction + ?Sized>(
    a: f64,
    q: &LogNormalVariational,
    data: &Observations,
    model: &NewsvendorModel,
    risk: &R,
) -> Result<[f64; 2]> {
    let (_, lg, _) = log_risk_moments(a, q, risk, hermite_rule(), true)?;
    let g = elbo_gradient(q, data, model);
    Ok([g[0] + lg[0], g[1] + lg[1]])
}

/// Objective evaluated in `(mu, rho)` with its gradient. Values omit the
/// `ln p(X)` constant.
trait Ascent {
    fn eval(&self, mu: f64, rho: f64) -> Result<(f64, [f64; 2])>;
    fn preconditioner(&self, mu: f64, rho: f64) -> [f64; 4];
}

struct ElboAscent<'a> {
    data: &'a Observations,
    model: &'a NewsvendorModel,
}

impl Ascent for ElboAscent<'_> {
    fn eval(&self, mu: f64, rho: f64) -> Result<(f64, [f64; 2])> {
        let q = LogNormalVariational::from_log_scale(mu, rho)?;
        Ok((elbo(&q, self.data, self.model), elbo_gradient(&q, self.data, self.model)))
    }

    fn preconditioner(&self, mu: f64, rho: f64) -> [f64; 4] {
        neg_elbo_hessian(&LogNormalVariational { mu, sigma: rho.exp() }, self.data, self.model)
    }
}

struct CalibratedAscent<'a, R: ?Sized> {
    action: f64,
    data: &'a Observations,
    model: &'a NewsvendorModel,
    risk: &'a R,
    rule: &'a GaussHermite,
}

impl<R: RiskFunction + ?Sized> Ascent for CalibratedAscent<'_, R> {
    fn eval(&self, mu: f64, rho: f64) -> Result<(f64, [f64; 2])> {
        let q = LogNormalVariational::from_log_scale(mu, rho)?;
        let (lr, lg, _) = log_risk_moments(self.action, &q, self.risk, self.rule, true)?;
        let g = elbo_gradient(&q, self.data, self.model);
        Ok((elbo(&q, self.data, self.model) + lr, [g[0] + lg[0], g[1] + lg[1]]))
    }

    fn preconditioner(&self, mu: f64, rho: f64) -> [f64; 4] {
        neg_elbo_hessian(&LogNormalVariational { mu, sigma: rho.exp() }, self.data, self.model)
    }
}

struct Run {
    x: [f64; 2],
    value: f64,
    grad_norm: f64,
    iterations: usize,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn norm(g: [f64; 2]) -> f64 {
    g[0].hypot(g[1])
}

/// Solve `P d = g` for a symmetric positive-definite 2x2 `P`.
fn solve_spd(p: [f64; 4], g: [f64; 2]) -> Option<[f64; 2]> {
    let det = p[0] * p[3] - p[1] * p[2];
    if !(det.is_finite() && det > 0.0 && p[0] > 0.0) {
        return None;
    }
    Some([(p[3] * g[0] - p[1] * g[1]) / det, (p[0] * g[1] - p[2] * g[0]) / det])
}

fn ascend<A: Ascent>(objective: &A, start: [f64; 2], settings: &FitSettings) -> Result<Run> {
    let (mut value, mut grad) = objective.eval(start[0], start[1])?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("objective not finite at start {start:?}")));
    }
    let mut x = start;
    let mut iterations = 0;
    while iterations < settings.max_iterations && norm(grad) >= settings.tolerance {
        let dir = solve_spd(objective.preconditioner(x[0], x[1]), grad)
            .filter(|d| d[0].is_finite() && d[1].is_finite())
            .unwrap_or(grad);
        let slope = grad[0] * dir[0] + grad[1] * dir[1];
        // absorbs rounding in objectives whose terms are large relative to their changes
        let noise = 1e-13 * value.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = [x[0] + step * dir[0], x[1] + step * dir[1]];
            if let Ok((v, g)) = objective.eval(trial[0], trial[1]) {
                if v.is_finite() && v >= value + ARMIJO_C * step * slope - noise && norm(g).is_finite() {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, v, g)) => {
                x = trial;
                value = v;
                grad = g;
            }
            None => break,
        }
    }
    Ok(Run {
        x,
        value,
        grad_norm: norm(grad),
        iterations,
    })
}

/// Best of the initial start plus `settings.restarts` Gaussian perturbations of it.
fn multistart<A: Ascent>(
    objective: &A,
    init: [f64; 2],
    settings: &FitSettings,
) -> Result<(LogNormalVariational, FitDiagnostics)> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut best: Option<Run> = None;
    let mut last_err = None;
    for k in 0..=settings.restarts {
        let start = if k == 0 {
            init
        } else {
            [
                init[0] + settings.perturbation_scale * standard_normal(&mut rng),
                init[1] + settings.perturbation_scale * standard_normal(&mut rng),
            ]
        };
        match ascend(objective, start, settings) {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.value > b.value) {
                    best = Some(run);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let run = match best {
        Some(run) => run,
        None => return Err(last_err.unwrap_or_else(|| Error::Numerical("no restart produced a fit".into()))),
    };
    let q = LogNormalVariational::from_log_scale(run.x[0], run.x[1])?;
    Ok((
        q,
        FitDiagnostics {
            iterations: run.iterations,
            final_gradient_norm: run.grad_norm,
            converged: run.grad_norm < settings.tolerance,
            restarts_used: settings.restarts,
            clamped: false,
        },
    ))
}

/// Box-Muller draw; keeps restart perturbations independent of optional rand features.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Starting point `mu = ln(mle)`, `sigma = 1 / sqrt(n)`.
pub fn default_start(data: &Observations) -> Result<LogNormalVariational> {
    let n = data.len() as f64;
    LogNormalVariational::new(mle(data)?.ln(), n.sqrt().recip())
}

/// NVB posterior: the ELBO maximizer within the log-normal family.
pub fn fit_nvb(
    data: &Observations,
    model: &NewsvendorModel,
    settings: &FitSettings,
) -> Result<(LogNormalVariational, FitDiagnostics)> {
    let init = default_start(data)?;
    multistart(&ElboAscent { data, model }, [init.mu, init.rho()], settings)
}

/// Result of an LCVB inner maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcvbFit {
    pub q: LogNormalVariational,
    pub diagnostics: FitDiagnostics,
    /// Calibrated objective at `q`; its value is the inner maximum at this action.
    pub objective: CalibratedObjective,
}

/// LCVB posterior at action `a`, started from `init` (typically the NVB fit).
pub fn fit_lcvb(
    a: f64,
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
    init: &LogNormalVariational,
    settings: &FitSettings,
) -> Result<LcvbFit> {
    fit_lcvb_with(a, data, model, grid, model, init, settings)
}

pub fn fit_lcvb_with<R: RiskFunction + ?Sized>(
    a: f64,
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
    risk: &R,
    init: &LogNormalVariational,
    settings: &FitSettings,
) -> Result<LcvbFit> {
    if !model.action_interval.contains(a) {
        return Err(Error::domain("fit_lcvb", format!("action {a} outside the decision interval")));
    }
    let objective = CalibratedAscent {
        action: a,
        data,
        model,
        risk,
        rule: hermite_rule(),
    };
    let (q, mut diagnostics) = multistart(&objective, [init.mu, init.rho()], settings)?;
    let value = calibrated_objective_with(a, &q, data, model, grid, risk, hermite_rule())?;
    diagnostics.clamped = value.clamped;
    Ok(LcvbFit {
        q,
        diagnostics,
        objective: value,
    })
}

/// Both sides of
/// `KL(q || G pi / Z_G) = KL(q || pi) - E_q[ln G] + ln E_pi[G]`,
/// returning their absolute difference.
///
/// The left side integrates `ln q - ln(G pi(.|X) / Z_G)` pointwise under `q`;
/// the right side uses the closed-form ELBO for `KL(q || pi)`.
pub fn kl_decomposition_check(
    a: f64,
    q: &LogNormalVariational,
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
) -> Result<f64> {
    kl_decomposition_check_with(a, q, data, model, grid, model, hermite_rule())
}

pub fn kl_decomposition_check_with<R: RiskFunction + ?Sized>(
    a: f64,
    q: &LogNormalVariational,
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
    risk: &R,
    rule: &GaussHermite,
) -> Result<f64> {
    let log_z = crate::oracle::posterior_expected_risk(a, grid, risk).ln();
    let lhs = q.expect(rule, |t| {
        q.log_density(t) - crate::oracle::log_calibrated_density(a, t, grid, risk, log_z)
    });
    let kl_posterior = grid.log_evidence() - elbo(q, data, model);
    let (log_risk, _, _) = log_risk_moments(a, q, risk, rule, false)?;
    let rhs = kl_posterior - log_risk + log_z;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_demand, ConstantRisk};
    use crate::oracle::{build_posterior, posterior_expected_risk, DEFAULT_NODE_COUNT};
    use approx::assert_abs_diff_eq;

    fn data(n: usize, seed: u64) -> Observations {
        sample_demand(0.68, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn model() -> NewsvendorModel {
        NewsvendorModel::reference(0.005).unwrap()
    }

    #[test]
    fn family_moments() {
        let q = LogNormalVariational::new(0.3, 0.4).unwrap();
        let rule = GaussHermite::new(64);
        assert_abs_diff_eq!(q.expect(&rule, |t| t), q.mean(), epsilon = 1e-12);
        assert_abs_diff_eq!(q.expect(&rule, |t| 1.0 / t), q.inverse_mean(), epsilon = 1e-12);
        assert_abs_diff_eq!(q.expect(&rule, f64::ln), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(q.expect(&rule, |t| -q.log_density(t)), q.entropy(), epsilon = 1e-12);
        assert!(LogNormalVariational::new(0.0, 0.0).is_err());
        assert!(LogNormalVariational::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn elbo_reference_value() {
        // Monte Carlo of E_q[ln p + ln pi - ln q] with 1e7 draws gave -1.8785 +- 3e-4
        let x = Observations::new(vec![1.0]).unwrap();
        let m = NewsvendorModel::new(1.0, 1.0, 1.0, 1.0, 1.0, crate::model::ActionInterval::DEFAULT).unwrap();
        let q = LogNormalVariational::new(0.0, 1.0).unwrap();
        let expected = -2.0 * 0.5f64.exp() + 0.5 * (1.0 + (2.0 * PI).ln());
        assert_abs_diff_eq!(elbo(&q, &x, &m), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, -1.878_50, epsilon = 1e-5);
    }

    #[test]
    fn variance_examples() {
        let q = LogNormalVariational::new(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(variational_variance(&q), (E - 1.0) * E, epsilon = 1e-14);
        let tight = LogNormalVariational::new(0.2, 1e-9).unwrap();
        assert!(variational_variance(&tight) < 1e-16);
        assert!(variational_variance(&tight) > 0.0);
    }

    #[test]
    fn nvb_fit_gaps_and_ascent() {
        let m = model();
        let x = data(50, 21);
        let g = build_posterior(&x, &m, DEFAULT_NODE_COUNT).unwrap();
        let (q, diag) = fit_nvb(&x, &m, &FitSettings::default()).unwrap();
        assert!(diag.converged, "{diag:?}");
        let init = default_start(&x).unwrap();
        assert!(elbo(&q, &x, &m) >= elbo(&init, &x, &m));
        let kl = g.log_evidence() - elbo(&q, &x, &m);
        assert!((0.0..0.05).contains(&kl), "kl = {kl}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let probe = LogNormalVariational::new(
                q.mu + rng.random_range(-1.0..1.0),
                q.sigma * rng.random_range(0.2f64..5.0),
            )
            .unwrap();
            let probe_kl = g.log_evidence() - elbo(&probe, &x, &m);
            assert!(probe_kl >= kl);
        }
    }

    #[test]
    fn calibrated_objective_properties() {
        let m = model();
        let x = data(50, 22);
        let g = build_posterior(&x, &m, DEFAULT_NODE_COUNT).unwrap();
        let (q, _) = fit_nvb(&x, &m, &FitSettings::default()).unwrap();
        let c = calibrated_objective(3.0, &q, &x, &m, &g).unwrap();
        assert_abs_diff_eq!(c.value, -c.kl_term + c.log_risk_term, epsilon = 1e-15);
        assert!(c.kl_term >= 0.0);
        assert!(c.value <= posterior_expected_risk(3.0, &g, &m).ln() + 1e-8);
        let fine = calibrated_objective_with(3.0, &q, &x, &m, &g, &m, &GaussHermite::new(128)).unwrap();
        assert!((fine.log_risk_term - c.log_risk_term).abs() < 1e-8);
        assert!(calibrated_objective(-1.0, &q, &x, &m, &g).is_err());

        let flat = calibrated_objective_with(3.0, &q, &x, &m, &g, &ConstantRisk(2.0), hermite_rule()).unwrap();
        assert_abs_diff_eq!(flat.value, -flat.kl_term + 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn nonpositive_risk_is_rejected() {
        let m = model();
        let x = data(20, 23);
        let g = build_posterior(&x, &m, DEFAULT_NODE_COUNT).unwrap();
        let q = default_start(&x).unwrap();
        let err = calibrated_objective_with(1.0, &q, &x, &m, &g, &ConstantRisk(0.0), hermite_rule());
        assert!(matches!(err, Err(Error::Positivity { .. })));
        let err = calibrated_objective_with(1.0, &q, &x, &m, &g, &ConstantRisk(-1.0), hermite_rule());
        assert!(matches!(err, Err(Error::Positivity { .. })));
        let tiny = calibrated_objective_with(1.0, &q, &x, &m, &g, &ConstantRisk(1e-310), hermite_rule()).unwrap();
        assert!(tiny.clamped);
    }

    #[test]
    fn lcvb_constant_risk_matches_nvb() {
        let m = model();
        let x = data(40, 24);
        let g = build_posterior(&x, &m, DEFAULT_NODE_COUNT).unwrap();
        let settings = FitSettings::default();
        let (nvb, _) = fit_nvb(&x, &m, &settings).unwrap();
        let start = default_start(&x).unwrap();
        let fit = fit_lcvb_with(5.0, &x, &m, &g, &ConstantRisk(0.3), &start, &settings).unwrap();
        let lc = fit.q;
        assert!(fit.diagnostics.converged);
        assert!((lc.mu - nvb.mu).abs() < 1e-6 && (lc.sigma - nvb.sigma).abs() < 1e-6);
    }

    #[test]
    fn lcvb_improves_on_nvb_start() {
        let m = model();
        let x = data(40, 25);
        let g = build_posterior(&x, &m, DEFAULT_NODE_COUNT).unwrap();
        let settings = FitSettings::default();
        let (nvb, _) = fit_nvb(&x, &m, &settings).unwrap();
        for a in [0.0, 2.0, 6.0, 20.0] {
            let fit = fit_lcvb(a, &x, &m, &g, &nvb, &settings).unwrap();
            assert!(fit.diagnostics.converged, "a = {a}: {:?}", fit.diagnostics);
            let at_nvb = calibrated_objective(a, &nvb, &x, &m, &g).unwrap().value;
            let at_lc = fit.objective.value;
            assert!(at_lc >= at_nvb - 1e-12, "a = {a}: {at_lc} < {at_nvb}");
        }
    }

    #[test]
    fn kl_identity_holds() {
        let m = model();
        let x = data(50, 26);
        let g = build_posterior(&x, &m, DEFAULT_NODE_COUNT).unwrap();
        let q = default_start(&x).unwrap();
        let r = kl_decomposition_check_with(2.0, &q, &x, &m, &g, &ConstantRisk(4.0), hermite_rule()).unwrap();
        assert!(r < 1e-9, "{r}");
        let r = kl_decomposition_check(2.0, &q, &x, &m, &g).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = model();
        let x = data(50, 27);
        let q = LogNormalVariational::new(-0.2, 0.3).unwrap();
        let g = elbo_gradient(&q, &x, &m);
        let h = 1e-6;
        let f = |mu: f64, rho: f64| elbo(&LogNormalVariational::from_log_scale(mu, rho).unwrap(), &x, &m);
        let fd_mu = (f(q.mu + h, q.rho()) - f(q.mu - h, q.rho())) / (2.0 * h);
        let fd_rho = (f(q.mu, q.rho() + h) - f(q.mu, q.rho() - h)) / (2.0 * h);
        assert!((fd_mu - g[0]).abs() <= 1e-5 * g[0].abs().max(1.0));
        assert!((fd_rho - g[1]).abs() <= 1e-5 * g[1].abs().max(1.0));
    }
}
