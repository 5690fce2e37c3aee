//! NVB and LCVB decision rules and the optimality-gap metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{true_optimal_action, ActionInterval, NewsvendorModel, Observations, RiskFunction};
use crate::optimize::{golden_section, scan_then_refine, Minimum, TieTolerance};
use crate::oracle::PosteriorGrid;
use crate::quadrature::GaussHermite;
use crate::variational::{fit_lcvb_with, fit_nvb, hermite_rule, FitDiagnostics, FitSettings, LogNormalVariational};

/// Probe count for the scan that precedes golden-section refinement.
pub const SCAN_POINTS: usize = 512;
pub const SCAN_TOL: f64 = 1e-8;
pub const OUTER_POINTS: usize = 33;
pub const OUTER_TOL: f64 = 1e-4;
/// Inner maxima within this relative band are treated as ties.
pub const OUTER_TIES: TieTolerance = TieTolerance(1e-10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Nvb,
    Lcvb,
    Bayes,
    #[serde(rename = "oracle_true")]
    OracleTrue,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Nvb => "nvb",
            Rule::Lcvb => "lcvb",
            Rule::Bayes => "bayes",
            Rule::OracleTrue => "oracle_true",
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nvb" => Ok(Rule::Nvb),
            "lcvb" => Ok(Rule::Lcvb),
            "bayes" => Ok(Rule::Bayes),
            "oracle_true" => Ok(Rule::OracleTrue),
            other => Err(Error::InvalidConfig(format!("unknown rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub action: f64,
    pub objective_value: f64,
    pub rule: Rule,
    pub inner_fit: Option<FitDiagnostics>,
    pub probe_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionSettings {
    #[serde(default)]
    pub fit: FitSettings,
}

/// Scan-then-golden minimization over an action interval.
pub(crate) fn minimize_over_actions<F: FnMut(f64) -> f64>(
    f: F,
    interval: ActionInterval,
    points: usize,
    tol: f64,
    ties: TieTolerance,
) -> Minimum {
    scan_then_refine(f, interval.lo, interval.hi, points, tol, ties)
}

/// `H_q(a) = E_q[G(a, theta)]`.
pub fn expected_risk_under_q<R: RiskFunction + ?Sized>(a: f64, q: &LogNormalVariational, risk: &R) -> f64 {
    expected_risk_under_q_with(a, q, risk, hermite_rule())
}

pub fn expected_risk_under_q_with<R: RiskFunction + ?Sized>(
    a: f64,
    q: &LogNormalVariational,
    risk: &R,
    rule: &GaussHermite,
) -> f64 {
    risk.lognormal_expectation(a, q.mu, q.sigma, rule)
}

/// Two-stage NVB rule: fit `q*` by maximizing the ELBO, then minimize `H_{q*}`.
pub fn nvb_decide(data: &Observations, model: &NewsvendorModel, settings: &DecisionSettings) -> Result<DecisionOutcome> {
    let (q, diag) = fit_nvb(data, model, &settings.fit)?;
    Ok(nvb_decide_from_fit(&q, diag, model, model))
}

/// Second stage of the NVB rule for an already fitted `q`.
pub fn nvb_decide_from_fit<R: RiskFunction + ?Sized>(
    q: &LogNormalVariational,
    diag: FitDiagnostics,
    model: &NewsvendorModel,
    risk: &R,
) -> DecisionOutcome {
    let m = minimize_over_actions(
        |a| expected_risk_under_q(a, q, risk),
        model.action_interval,
        SCAN_POINTS,
        SCAN_TOL,
        TieTolerance::EXACT,
    );
    DecisionOutcome {
        action: m.x,
        objective_value: m.value,
        rule: Rule::Nvb,
        inner_fit: Some(diag),
        probe_count: m.evaluations,
    }
}

/// One outer evaluation of the LCVB min-max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterProbe {
    pub action: f64,
    /// `max_q F(a, q; X)`, or `None` when the inner fit failed.
    pub inner_max: Option<f64>,
    pub q: Option<LogNormalVariational>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcvbSearch {
    pub outcome: DecisionOutcome,
    pub q: LogNormalVariational,
    pub probes: Vec<OuterProbe>,
}

/// LCVB rule: `argmin_a max_q F(a, q; X)`.
pub fn lcvb_decide(
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
    settings: &DecisionSettings,
) -> Result<DecisionOutcome> {
    Ok(lcvb_search(data, model, grid, model, settings)?.outcome)
}

/// Full LCVB search with every outer probe retained.
///
/// The outer loop scans [`OUTER_POINTS`] actions, then runs golden-section
/// search on the cell around the best one until the bracket is below
/// [`OUTER_TOL`]. Each inner fit starts from the solution at the nearest
/// action evaluated so far; the first starts from the NVB posterior.
pub fn lcvb_search<R: RiskFunction + ?Sized>(
    data: &Observations,
    model: &NewsvendorModel,
    grid: &PosteriorGrid,
    risk: &R,
    settings: &DecisionSettings,
) -> Result<LcvbSearch> {
    let (nvb, _) = fit_nvb(data, model, &settings.fit)?;
    let mut probes: Vec<OuterProbe> = Vec::new();
    let mut diagnostics: Vec<FitDiagnostics> = Vec::new();

    let mut inner = |a: f64, probes: &mut Vec<OuterProbe>| -> f64 {
        let start = probes
            .iter()
            .filter_map(|p| p.q.map(|q| ((p.action - a).abs(), q)))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .map_or(nvb, |(_, q)| q);
        match fit_lcvb_with(a, data, model, grid, risk, &start, &settings.fit) {
            Ok(fit) if fit.objective.value.is_finite() => {
                probes.push(OuterProbe {
                    action: a,
                    inner_max: Some(fit.objective.value),
                    q: Some(fit.q),
                });
                diagnostics.push(fit.diagnostics);
                fit.objective.value
            }
            _ => {
                probes.push(OuterProbe {
                    action: a,
                    inner_max: None,
                    q: None,
                });
                diagnostics.push(FitDiagnostics {
                    iterations: 0,
                    final_gradient_norm: f64::NAN,
                    converged: false,
                    restarts_used: 0,
                    clamped: false,
                });
                f64::NAN
            }
        }
    };

    let interval = model.action_interval;
    let step = interval.width() / (OUTER_POINTS - 1) as f64;
    let coarse = |k: usize| {
        if k + 1 == OUTER_POINTS {
            interval.hi
        } else {
            interval.lo + step * k as f64
        }
    };
    let mut best_k = None;
    let mut best_value = f64::INFINITY;
    for k in 0..OUTER_POINTS {
        let v = inner(coarse(k), &mut probes);
        if v.is_finite() && (best_k.is_none() || v < best_value - OUTER_TIES.0 * best_value.abs().max(1.0)) {
            best_k = Some(k);
            best_value = v;
        }
    }
    let Some(best_k) = best_k else {
        return Err(Error::Numerical("every LCVB outer probe failed".into()));
    };
    let left = coarse(best_k.saturating_sub(1));
    let right = coarse((best_k + 1).min(OUTER_POINTS - 1));
    golden_section(|a| inner(a, &mut probes), left, right, OUTER_TOL, OUTER_TIES);

    // smallest action whose value is within the tie slack of the global minimum
    let min_value = probes
        .iter()
        .filter_map(|p| p.inner_max)
        .fold(f64::INFINITY, f64::min);
    let slack = OUTER_TIES.0 * min_value.abs().max(1.0);
    let best = probes
        .iter()
        .enumerate()
        .filter(|(_, p)| p.inner_max.is_some_and(|v| v <= min_value + slack))
        .min_by(|(_, x), (_, y)| x.action.total_cmp(&y.action))
        .map(|(i, _)| i);
    let i = best.expect("at least one valid probe");
    let chosen = probes[i];
    Ok(LcvbSearch {
        outcome: DecisionOutcome {
            action: chosen.action,
            objective_value: chosen.inner_max.unwrap(),
            rule: Rule::Lcvb,
            inner_fit: Some(diagnostics[i]),
            probe_count: probes.len(),
        },
        q: chosen.q.unwrap(),
        probes,
    })
}

/// Optimality gap of a decision against the true optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// `|a - a0*|`
    pub action: f64,
    /// `G(a, theta0) - G(a0*, theta0)`
    pub regret: f64,
}

pub fn optimality_gap(outcome: &DecisionOutcome, model: &NewsvendorModel) -> Result<Gap> {
    gap_for_action(outcome.action, model)
}

pub fn gap_for_action(action: f64, model: &NewsvendorModel) -> Result<Gap> {
    let a0 = true_optimal_action(model)?;
    let regret = model.risk_unchecked(action, model.theta0) - model.risk_unchecked(a0, model.theta0);
    Ok(Gap {
        action: (action - a0).abs(),
        // a0 is the exact minimizer; clip rounding below zero
        regret: regret.max(0.0),
    })
}

/// Decision of the clairvoyant rule that knows `theta0`.
pub fn oracle_true_decide(model: &NewsvendorModel) -> Result<DecisionOutcome> {
    let a0 = true_optimal_action(model)?;
    Ok(DecisionOutcome {
        action: a0,
        objective_value: model.risk_unchecked(a0, model.theta0),
        rule: Rule::OracleTrue,
        inner_fit: None,
        probe_count: 0,
    })
}
