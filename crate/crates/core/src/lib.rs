//! Naive and loss-calibrated variational Bayes decision rules for the
//! data-driven newsvendor with exponential demand and an inverse-gamma prior.
//!
//! - [`model`]: loss, closed-form risk, likelihood, prior, demand sampling
//! - [`oracle`]: quadrature posterior, Bayes action, calibrated posterior density
//! - [`variational`]: log-normal family, ELBO, calibrated objective, NVB/LCVB fits
//! - [`decision`]: NVB and LCVB decision rules, optimality gaps
//! - [`experiment`]: replicated consistency study and quantile curves
//! - [`results`]: CSV and manifest persistence
//! - [`checks`]: numerical identity suite

pub mod checks;
pub mod decision;
pub mod error;
pub mod experiment;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod quadrature;
pub mod results;
pub mod variational;

pub use decision::{
    expected_risk_under_q, lcvb_decide, lcvb_search, nvb_decide, optimality_gap, DecisionOutcome, DecisionSettings,
    Gap, Rule,
};
pub use error::{Error, Result};
pub use model::{
    fisher_information, log_likelihood, log_prior, loss, risk, sample_demand, true_optimal_action, ActionInterval,
    ConstantRisk, NewsvendorModel, Observations, RiskFunction, ScaledRisk,
};
pub use oracle::{
    bayes_decision, build_posterior, calibrated_posterior_density, mle, posterior_expected_risk, PosteriorGrid,
};
pub use variational::{
    calibrated_objective, calibrated_objective_gradient, elbo, elbo_gradient, fit_lcvb, fit_nvb, kl_decomposition_check, variational_variance,
    CalibratedObjective, FitDiagnostics, FitSettings, LcvbFit, LogNormalVariational,
};
pub use checks::{run_suite, CheckResult, SuiteOptions};
pub use experiment::{estimate_rate, run_experiment, ExperimentConfig, ExperimentReport, QuantileCurve};
pub use results::{parse_csv, render_csv, write_results, Manifest};
