//! Exact reference computations on a Gauss-Legendre grid over the rate.
//!
//! The posterior under the inverse-gamma prior is not conjugate to the
//! exponential likelihood, so everything the variational routines are checked
//! against is computed here by quadrature: the evidence, posterior moments,
//! the Bayes action and the loss-calibrated posterior density.

use crate::decision::{minimize_over_actions, DecisionOutcome, Rule, SCAN_POINTS, SCAN_TOL};
use crate::error::{Error, Result};
use crate::model::{log_likelihood_unchecked, prior_log_norm, NewsvendorModel, Observations, RiskFunction};
use crate::optimize::TieTolerance;
use crate::quadrature::GaussLegendre;

pub const DEFAULT_NODE_COUNT: usize = 256;
pub const MIN_NODE_COUNT: usize = 32;
const MAX_WIDENINGS: usize = 20;
/// ln(1e-12): boundary density must sit this far below the peak.
const LOG_TAIL_RATIO: f64 = -27.631_021_115_928_547;

/// Unnormalized log posterior `ln p(X | theta) + ln pi(theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogJoint {
    n: f64,
    sum: f64,
    alpha: f64,
    beta: f64,
    log_norm: f64,
}

impl LogJoint {
    pub fn new(data: &Observations, model: &NewsvendorModel) -> Self {
        Self {
            n: data.len() as f64,
            sum: data.sum(),
            alpha: model.alpha,
            beta: model.beta,
            log_norm: prior_log_norm(model),
        }
    }

    #[inline]
    pub fn eval(&self, theta: f64) -> f64 {
        log_likelihood_unchecked(theta, self.n, self.sum) + self.log_norm
            - (self.alpha + 1.0) * theta.ln()
            - self.beta / theta
    }

    /// Posterior mode: positive root of `S t^2 - (n - alpha - 1) t - beta = 0`.
    pub fn mode(&self) -> f64 {
        let k = self.n - self.alpha - 1.0;
        if self.sum > 0.0 {
            (k + (k * k + 4.0 * self.sum * self.beta).sqrt()) / (2.0 * self.sum)
        } else {
            f64::INFINITY
        }
    }
}

/// Posterior discretized on Gauss-Legendre nodes over a finite rate window.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
    log_evidence: f64,
    weights: Vec<f64>,
    rule_weights: Vec<f64>,
    window: (f64, f64),
    joint: LogJoint,
}

impl PosteriorGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `ln(quadrature weight * unnormalized posterior)` per node.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Normalized posterior weights; they sum to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn log_joint(&self) -> &LogJoint {
        &self.joint
    }

    /// Posterior expectation of `f` by quadrature.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|t| t)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|t| (t - m) * (t - m))
    }

    /// Posterior probability of `{theta : pred(theta)}` on the grid.
    pub fn mass_where<P: Fn(f64) -> bool>(&self, pred: P) -> f64 {
        self.expect(|t| if pred(t) { 1.0 } else { 0.0 })
    }

    /// Log posterior density; defined for any positive rate, not just the window.
    pub fn log_density(&self, theta: f64) -> f64 {
        self.joint.eval(theta) - self.log_evidence
    }

    pub fn density(&self, theta: f64) -> Result<f64> {
        self.check_inside("posterior_density", theta)?;
        Ok(self.log_density(theta).exp())
    }

    /// Raw quadrature weights (mapped to the window) paired with nodes.
    pub fn rule_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.rule_weights.iter().copied())
    }

    fn check_inside(&self, op: &'static str, theta: f64) -> Result<()> {
        let (lo, hi) = self.window;
        if theta >= lo && theta <= hi {
            Ok(())
        } else {
            Err(Error::domain(op, format!("rate {theta} outside posterior window [{lo}, {hi}]")))
        }
    }
}

/// Maximum-likelihood rate `n / S`.
pub fn mle(data: &Observations) -> Result<f64> {
    if data.sum() <= 0.0 {
        return Err(Error::DegenerateData("sum of demands is zero; the MLE is undefined".into()));
    }
    Ok(data.len() as f64 / data.sum())
}

pub fn build_posterior(data: &Observations, model: &NewsvendorModel, node_count: usize) -> Result<PosteriorGrid> {
    if node_count < MIN_NODE_COUNT {
        return Err(Error::InvalidConfig(format!(
            "posterior grid needs at least {MIN_NODE_COUNT} nodes, got {node_count}"
        )));
    }
    let theta_hat = mle(data)?;
    let joint = LogJoint::new(data, model);
    let n = data.len() as f64;
    let spread = 12.0 / n.sqrt();
    let mut lo = theta_hat * (1.0 - spread).max(1e-3);
    let mut hi = theta_hat * (1.0 + spread) + 10.0 / n;
    let mode = joint.mode();
    if mode <= lo {
        lo = 0.5 * mode;
    }
    if mode >= hi {
        hi = 2.0 * mode;
    }
    let peak = joint.eval(mode);

    let mut widenings = 0;
    loop {
        let left_ok = joint.eval(lo) - peak < LOG_TAIL_RATIO;
        let right_ok = joint.eval(hi) - peak < LOG_TAIL_RATIO;
        if left_ok && right_ok {
            break;
        }
        if widenings == MAX_WIDENINGS {
            return Err(Error::Numerical(format!(
                "posterior window [{lo}, {hi}] still carries boundary mass after {MAX_WIDENINGS} doublings"
            )));
        }
        if !left_ok {
            lo *= 0.5;
        }
        if !right_ok {
            hi *= 2.0;
        }
        widenings += 1;
    }

    let rule = GaussLegendre::new(node_count);
    let (nodes, rule_weights): (Vec<f64>, Vec<f64>) = rule.mapped(lo, hi).unzip();
    let log_weights: Vec<f64> = nodes
        .iter()
        .zip(&rule_weights)
        .map(|(&t, &w)| w.ln() + joint.eval(t))
        .collect();
    let log_evidence = log_sum_exp(&log_weights);
    if !log_evidence.is_finite() {
        return Err(Error::Numerical(format!("log evidence is not finite: {log_evidence}")));
    }
    let weights = log_weights.iter().map(|lw| (lw - log_evidence).exp()).collect();
    Ok(PosteriorGrid {
        nodes,
        log_weights,
        log_evidence,
        weights,
        rule_weights,
        window: (lo, hi),
        joint,
    })
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `E_posterior[G(a, theta)]`.
pub fn posterior_expected_risk<R: RiskFunction + ?Sized>(a: f64, grid: &PosteriorGrid, risk: &R) -> f64 {
    grid.expect(|t| risk.risk(a, t))
}

/// Bayes action: minimizer of posterior expected risk over the model's action interval.
pub fn bayes_decision(grid: &PosteriorGrid, model: &NewsvendorModel) -> DecisionOutcome {
    bayes_decision_with(grid, model, model)
}

pub fn bayes_decision_with<R: RiskFunction + ?Sized>(
    grid: &PosteriorGrid,
    model: &NewsvendorModel,
    risk: &R,
) -> DecisionOutcome {
    let m = minimize_over_actions(
        |a| posterior_expected_risk(a, grid, risk),
        model.action_interval,
        SCAN_POINTS,
        SCAN_TOL,
        TieTolerance::EXACT,
    );
    DecisionOutcome {
        action: m.x,
        objective_value: m.value,
        rule: Rule::Bayes,
        inner_fit: None,
        probe_count: m.evaluations,
    }
}

/// Density of the loss-calibrated posterior `G(a, .) pi(. | X) / E_pi[G(a, .)]` at `theta`.
pub fn calibrated_posterior_density<R: RiskFunction + ?Sized>(
    a: f64,
    theta: f64,
    grid: &PosteriorGrid,
    risk: &R,
) -> Result<f64> {
    grid.check_inside("calibrated_posterior_density", theta)?;
    Ok(log_calibrated_density(a, theta, grid, risk, posterior_expected_risk(a, grid, risk).ln()).exp())
}

/// `ln G(a, theta) + ln pi(theta | X) - ln Z_G` for a precomputed `ln Z_G`.
pub(crate) fn log_calibrated_density<R: RiskFunction + ?Sized>(
    a: f64,
    theta: f64,
    grid: &PosteriorGrid,
    risk: &R,
    log_normalizer: f64,
) -> f64 {
    risk.log_risk(a, theta) + grid.log_density(theta) - log_normalizer
}
