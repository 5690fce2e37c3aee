//! Newsvendor model: loss, closed-form risk, exponential likelihood and the
//! inverse-gamma prior on the demand rate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;

/// Demand sample with its cached sufficient statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    values: Vec<f64>,
    sum: f64,
}

impl Observations {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateData("at least one observation is required".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(
                "observations",
                format!("demand values must be finite and nonnegative, got {v}"),
            ));
        }
        let sum = values.iter().sum();
        Ok(Self { values, sum })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum of the demand values.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The first `n` observations.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidConfig(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        Self::new(self.values[..n].to_vec())
    }
}

/// Closed decision interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ActionInterval {
    pub const DEFAULT: ActionInterval = ActionInterval { lo: 0.0, hi: 50.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(Error::InvalidModel(format!(
                "action interval must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lo && a <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl Default for ActionInterval {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Costs, true demand rate, prior hyperparameters and the decision interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorModel {
    /// Holding cost per unsold unit.
    pub h: f64,
    /// Backorder cost per unit of unmet demand.
    pub b: f64,
    /// True exponential demand rate.
    pub theta0: f64,
    /// Inverse-gamma prior shape.
    pub alpha: f64,
    /// Inverse-gamma prior rate (the `beta / theta` term of the log density).
    pub beta: f64,
    pub action_interval: ActionInterval,
}

impl NewsvendorModel {
    pub fn new(
        h: f64,
        b: f64,
        theta0: f64,
        alpha: f64,
        beta: f64,
        action_interval: ActionInterval,
    ) -> Result<Self> {
        let model = Self {
            h,
            b,
            theta0,
            alpha,
            beta,
            action_interval,
        };
        model.validate()?;
        Ok(model)
    }

    /// Reference model (b = 0.1, theta0 = 0.68, alpha = 1, beta = 4.1, A = [0, 50]) with holding cost `h`.
    pub fn reference(h: f64) -> Result<Self> {
        Self::new(h, 0.1, 0.68, 1.0, 4.1, ActionInterval::DEFAULT)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("h", self.h),
            ("b", self.b),
            ("theta0", self.theta0),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        let interval = ActionInterval::new(self.action_interval.lo, self.action_interval.hi)?;
        let a0 = self.optimal_action_for(self.theta0);
        if !(a0 > interval.lo && a0 < interval.hi) {
            return Err(Error::InvalidModel(format!(
                "optimal action {a0} is not strictly inside [{}, {}]",
                interval.lo, interval.hi
            )));
        }
        Ok(())
    }

    /// Same model with a different holding cost.
    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(h, self.b, self.theta0, self.alpha, self.beta, self.action_interval)
    }

    /// Critical-fractile solution `ln((b + h) / h) / theta`.
    pub fn optimal_action_for(&self, theta: f64) -> f64 {
        ((self.b + self.h) / self.h).ln() / theta
    }

    /// Risk without argument checks; callers guarantee `theta > 0`.
    #[inline]
    pub fn risk_unchecked(&self, a: f64, theta: f64) -> f64 {
        let x = a * theta;
        self.h * overage_kernel(x) / theta + self.b * shortage_kernel(x, theta)
    }

    /// `ln G(a, theta)` evaluated without forming the ratio by `theta` twice.
    #[inline]
    pub fn log_risk_unchecked(&self, a: f64, theta: f64) -> f64 {
        let x = a * theta;
        if x > 700.0 {
            // the backorder term is below f64 resolution relative to h(x - 1)
            return (self.h * (x - 1.0)).ln() - theta.ln();
        }
        (self.h * overage_kernel(x) + self.b * (-x).exp()).ln() - theta.ln()
    }

    /// `d ln G / d ln theta` at fixed action.
    #[inline]
    pub fn log_risk_elasticity(&self, a: f64, theta: f64) -> f64 {
        let x = a * theta;
        let e = if x > 700.0 { 0.0 } else { (-x).exp() };
        let num = self.h * (-(-x).exp_m1() - x * e) - self.b * (1.0 + x) * e;
        let den = self.h * overage_kernel(x) + self.b * e;
        num / den
    }
}

/// `x - 1 + e^{-x}`, computed without cancellation for moderate `x`.
#[inline]
fn overage_kernel(x: f64) -> f64 {
    x + (-x).exp_m1()
}

/// `e^{-x} / theta`, in log space once `x` is large enough to underflow.
#[inline]
fn shortage_kernel(x: f64, theta: f64) -> f64 {
    if x > 700.0 {
        (-x - theta.ln()).exp()
    } else {
        (-x).exp() / theta
    }
}

/// A risk function `G(a, theta)` over actions and demand rates.
///
/// The LCVB machinery only needs `G`, its logarithm, and the elasticity of
/// `ln G` in `ln theta`; test stubs such as [`ConstantRisk`] plug in here.
pub trait RiskFunction: Sync {
    fn risk(&self, a: f64, theta: f64) -> f64;

    fn log_risk(&self, a: f64, theta: f64) -> f64 {
        self.risk(a, theta).ln()
    }

    /// `d ln G / d ln theta`; the default uses a central difference.
    fn log_risk_elasticity(&self, a: f64, theta: f64) -> f64 {
        let step: f64 = 1e-6;
        let up = self.log_risk(a, theta * step.exp());
        let down = self.log_risk(a, theta * (-step).exp());
        (up - down) / (2.0 * step)
    }

    /// `E_q[G(a, theta)]` for log-normal `q` with location `mu` and scale `sigma`.
    fn lognormal_expectation(&self, a: f64, mu: f64, sigma: f64, rule: &GaussHermite) -> f64 {
        rule.expect_normal(|z| self.risk(a, (mu + sigma * z).exp()))
    }
}

impl RiskFunction for NewsvendorModel {
    fn risk(&self, a: f64, theta: f64) -> f64 {
        self.risk_unchecked(a, theta)
    }

    fn log_risk(&self, a: f64, theta: f64) -> f64 {
        self.log_risk_unchecked(a, theta)
    }

    fn log_risk_elasticity(&self, a: f64, theta: f64) -> f64 {
        NewsvendorModel::log_risk_elasticity(self, a, theta)
    }

    /// `h a - h E_q[1/theta] + (b + h) E_q[e^{-a theta} / theta]`; only the last
    /// term needs quadrature.
    fn lognormal_expectation(&self, a: f64, mu: f64, sigma: f64, rule: &GaussHermite) -> f64 {
        let inv_mean = (-mu + 0.5 * sigma * sigma).exp();
        let tail = rule.expect_normal(|z| {
            let log_theta = mu + sigma * z;
            (-a * log_theta.exp() - log_theta).exp()
        });
        self.h * a - self.h * inv_mean + (self.b + self.h) * tail
    }
}

/// `G(a, theta) = c` for every action and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRisk(pub f64);

impl RiskFunction for ConstantRisk {
    fn risk(&self, _a: f64, _theta: f64) -> f64 {
        self.0
    }

    fn log_risk_elasticity(&self, _a: f64, _theta: f64) -> f64 {
        0.0
    }
}

/// `c * G(a, theta)` for a positive constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledRisk<R> {
    pub inner: R,
    pub scale: f64,
}

impl<R: RiskFunction> RiskFunction for ScaledRisk<R> {
    fn risk(&self, a: f64, theta: f64) -> f64 {
        self.scale * self.inner.risk(a, theta)
    }

    fn log_risk(&self, a: f64, theta: f64) -> f64 {
        self.scale.ln() + self.inner.log_risk(a, theta)
    }

    fn log_risk_elasticity(&self, a: f64, theta: f64) -> f64 {
        self.inner.log_risk_elasticity(a, theta)
    }

    fn lognormal_expectation(&self, a: f64, mu: f64, sigma: f64, rule: &GaussHermite) -> f64 {
        self.scale * self.inner.lognormal_expectation(a, mu, sigma, rule)
    }
}

/// Newsvendor loss `h (a - xi)^+ + b (xi - a)^+`.
pub fn loss(a: f64, xi: f64, model: &NewsvendorModel) -> Result<f64> {
    if a.is_nan() || a < 0.0 || xi.is_nan() || xi < 0.0 {
        return Err(Error::domain("loss", format!("need a >= 0 and xi >= 0, got a = {a}, xi = {xi}")));
    }
    Ok(model.h * (a - xi).max(0.0) + model.b * (xi - a).max(0.0))
}

/// Expected loss under exponential demand, `h a - h / theta + (b + h) e^{-a theta} / theta`.
pub fn risk(a: f64, theta: f64, model: &NewsvendorModel) -> Result<f64> {
    if theta.is_nan() || theta <= 0.0 || a.is_nan() || a < 0.0 {
        return Err(Error::domain(
            "risk",
            format!("need theta > 0 and a >= 0, got a = {a}, theta = {theta}"),
        ));
    }
    Ok(model.risk_unchecked(a, theta))
}

/// Minimizer of `a -> risk(a, theta0)`.
pub fn true_optimal_action(model: &NewsvendorModel) -> Result<f64> {
    model.validate()?;
    Ok(model.optimal_action_for(model.theta0))
}

/// Exponential log-likelihood `n ln theta - theta * sum`.
pub fn log_likelihood(theta: f64, data: &Observations) -> Result<f64> {
    ensure_rate("log_likelihood", theta)?;
    Ok(log_likelihood_unchecked(theta, data.len() as f64, data.sum()))
}

#[inline]
pub(crate) fn log_likelihood_unchecked(theta: f64, n: f64, sum: f64) -> f64 {
    n * theta.ln() - theta * sum
}

/// Inverse-gamma log density `alpha ln beta - ln Gamma(alpha) - (alpha + 1) ln theta - beta / theta`.
pub fn log_prior(theta: f64, model: &NewsvendorModel) -> Result<f64> {
    ensure_rate("log_prior", theta)?;
    Ok(prior_log_norm(model) - (model.alpha + 1.0) * theta.ln() - model.beta / theta)
}

/// `alpha ln beta - ln Gamma(alpha)`.
pub(crate) fn prior_log_norm(model: &NewsvendorModel) -> f64 {
    model.alpha * model.beta.ln() - ln_gamma(model.alpha)
}

/// Inverse-CDF draw from Exp(theta) for `u` in (0, 1].
#[inline]
pub fn demand_from_uniform(u: f64, theta: f64) -> f64 {
    -u.ln() / theta
}

/// `count` i.i.d. Exp(theta) demands by inverse-CDF sampling.
pub fn sample_demand<R: Rng + ?Sized>(theta: f64, count: usize, rng: &mut R) -> Result<Observations> {
    ensure_rate("sample_demand", theta)?;
    if count == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let values = (0..count)
        .map(|_| {
            // gen::<f64>() is in [0, 1); flip to (0, 1] so ln stays finite
            let u = 1.0 - rng.random::<f64>();
            demand_from_uniform(u, theta)
        })
        .collect();
    Observations::new(values)
}

/// Fisher information of the exponential family at `theta`, `1 / theta^2`.
pub fn fisher_information(theta: f64) -> Result<f64> {
    ensure_rate("fisher_information", theta)?;
    Ok(theta.powi(-2))
}

fn ensure_rate(op: &'static str, theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("rate must be positive, got {theta}")))
    }
}
