//! Replicated Monte Carlo studies of the estimators on gamma data.
//!
//! Replication `r` draws its sample from stream `(master_seed, r)` and every
//! estimator in the roster sees that same sample. Replications may run on
//! any number of threads; results are collected by replication index, so a
//! report never depends on scheduling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    classical_moments_one_param, classical_moments_two_param, gamma_mle, gamma_mle_two_param,
    minimize_empirical_objective, single_weight_estimate, Diagnostics, EstimatorResult,
};
use crate::exec::{map_indexed, Execution};
use crate::gmm::{one_step_gmm, two_step_gmm, GmmEstimate};
use crate::models::{GammaOneParam, GammaTwoParam, ModelKind, ScoreModel};
use crate::numerics::{sample_gamma, summary_stats, NeumaierSum, RngStream};
use crate::weights::{power_weight, WeightSpec};

/// Share of failed replications above which a summary row is withheld.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

pub const FIGURE1_XI: [f64; 10] = [0.0, 0.3, 0.4, 0.5, 0.8, 1.0, 1.2, 1.5, 1.8, 2.0];
pub const DEFAULT_SEED: u64 = 20240501;

/// Estimator selection strings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    /// Single weight w = 1.
    Hyvarinen,
    /// Single weight w = x^ξ.
    Power(f64),
    /// GMM over the configured ξ list with W = I.
    Gmm1Step,
    /// Two-step GMM over the configured ξ list.
    Gmm2Step,
    Mle,
    ClassicalMoments,
    /// Direct minimizer of the empirical weighted objective for w = x^ξ.
    OracleMinimizer(f64),
}

impl EstimatorSpec {
    pub fn uses_xi_list(&self) -> bool {
        matches!(self, EstimatorSpec::Gmm1Step | EstimatorSpec::Gmm2Step)
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::Hyvarinen => f.write_str("hyvarinen"),
            EstimatorSpec::Power(xi) => write!(f, "power:{xi}"),
            EstimatorSpec::Gmm1Step => f.write_str("gmm1step"),
            EstimatorSpec::Gmm2Step => f.write_str("gmm2step"),
            EstimatorSpec::Mle => f.write_str("mle"),
            EstimatorSpec::ClassicalMoments => f.write_str("classical-moments"),
            EstimatorSpec::OracleMinimizer(xi) if *xi == 0.0 => f.write_str("oracle-minimizer"),
            EstimatorSpec::OracleMinimizer(xi) => write!(f, "oracle-minimizer:{xi}"),
        }
    }
}

fn parse_exponent(s: &str, full: &str) -> Result<f64> {
    let xi: f64 = s.trim().parse().map_err(|_| Error::InvalidConfig(format!("invalid exponent in '{full}'")))?;
    power_weight(xi).map(|_| xi)
}

impl FromStr for EstimatorSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "hyvarinen" => return Ok(EstimatorSpec::Hyvarinen),
            "gmm1step" => return Ok(EstimatorSpec::Gmm1Step),
            "gmm2step" => return Ok(EstimatorSpec::Gmm2Step),
            "mle" => return Ok(EstimatorSpec::Mle),
            "classical-moments" => return Ok(EstimatorSpec::ClassicalMoments),
            "oracle-minimizer" => return Ok(EstimatorSpec::OracleMinimizer(0.0)),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("power:") {
            return parse_exponent(rest, s).map(EstimatorSpec::Power);
        }
        if let Some(rest) = s.strip_prefix("oracle-minimizer:") {
            return parse_exponent(rest, s).map(EstimatorSpec::OracleMinimizer);
        }
        Err(Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

impl Serialize for EstimatorSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated roster such as `hyvarinen,power:2,gmm2step`.
pub fn parse_roster(text: &str) -> Result<Vec<EstimatorSpec>> {
    let roster = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if roster.is_empty() {
        return Err(Error::InvalidConfig("estimator list is empty".into()));
    }
    Ok(roster)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: ModelKind,
    /// True gamma shape.
    pub alpha: f64,
    /// True gamma rate (the known rate for `gamma1`).
    pub beta: f64,
    pub n: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub xi_list: Vec<f64>,
    pub estimators: Vec<EstimatorSpec>,
}

impl SimulationConfig {
    /// Gamma(5, 1), known rate, n = 50, 1000 replications.
    pub fn table1(master_seed: u64) -> Self {
        SimulationConfig {
            model: ModelKind::Gamma1,
            alpha: 5.0,
            beta: 1.0,
            n: 50,
            replications: 1000,
            master_seed,
            xi_list: vec![0.0, 2.0],
            estimators: vec![
                EstimatorSpec::Hyvarinen,
                EstimatorSpec::Power(2.0),
                EstimatorSpec::Gmm2Step,
                EstimatorSpec::Mle,
            ],
        }
    }

    /// Gamma(5, 1), both parameters free, n = 500, 1000 replications; every
    /// single-ξ estimator plus one- and two-step GMM over the whole grid.
    pub fn figure1(master_seed: u64) -> Self {
        let mut estimators: Vec<EstimatorSpec> = FIGURE1_XI.iter().map(|&xi| EstimatorSpec::Power(xi)).collect();
        estimators.push(EstimatorSpec::Gmm1Step);
        estimators.push(EstimatorSpec::Gmm2Step);
        SimulationConfig {
            model: ModelKind::Gamma2,
            alpha: 5.0,
            beta: 1.0,
            n: 500,
            replications: 1000,
            master_seed,
            xi_list: FIGURE1_XI.to_vec(),
            estimators,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("sample size must be at least 2, got {}", self.n)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid true parameters ({}, {})", self.alpha, self.beta)));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("estimator roster is empty".into()));
        }
        if self.estimators.iter().any(EstimatorSpec::uses_xi_list) && self.xi_list.is_empty() {
            return Err(Error::InvalidConfig("GMM estimators need a non-empty xi list".into()));
        }
        for &xi in &self.xi_list {
            power_weight(xi)?;
        }
        if self.model == ModelKind::Basis {
            return Err(Error::InvalidConfig("the basis model is only available through the library".into()));
        }
        Ok(())
    }

    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self.model {
            ModelKind::Gamma1 => &["theta"],
            _ => &["alpha", "beta"],
        }
    }

    pub fn true_values(&self) -> Vec<f64> {
        match self.model {
            ModelKind::Gamma1 => vec![self.alpha - 1.0],
            _ => vec![self.alpha, self.beta],
        }
    }
}

/// A model plus everything needed to run a roster on one sample.
pub struct Estimation {
    kind: ModelKind,
    model: Box<dyn ScoreModel>,
    known_rate: f64,
    gmm_weights: Vec<WeightSpec>,
}

impl Estimation {
    pub fn new(kind: ModelKind, known_rate: f64, xi_list: &[f64]) -> Result<Self> {
        let model: Box<dyn ScoreModel> = match kind {
            ModelKind::Gamma1 => Box::new(GammaOneParam::with_rate(known_rate)?),
            ModelKind::Gamma2 => Box::new(GammaTwoParam),
            ModelKind::Basis => {
                return Err(Error::InvalidConfig("the basis model is only available through the library".into()))
            }
        };
        let gmm_weights = xi_list.iter().map(|&xi| power_weight(xi)).collect::<Result<_>>()?;
        Ok(Estimation { kind, model, known_rate, gmm_weights })
    }

    pub fn model(&self) -> &dyn ScoreModel {
        self.model.as_ref()
    }

    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self.kind {
            ModelKind::Gamma1 => &["theta"],
            _ => &["alpha", "beta"],
        }
    }

    /// Estimate in θ coordinates, with solver diagnostics.
    ///
    /// The GMM estimators fail with [`Error::EmptyInput`] when no ξ was
    /// configured.
    pub fn estimate_theta(&self, spec: EstimatorSpec, sample: &[f64]) -> Result<EstimatorResult> {
        let model = self.model.as_ref();
        let gmm = |est: GmmEstimate| EstimatorResult {
            theta_hat: est.theta_hat,
            label: spec.to_string(),
            diagnostics: Diagnostics {
                condition_number: Some(est.condition_number),
                iterations: Some(est.steps as usize),
                ridge_used: Some(est.ridge_used),
            },
        };
        let mut result = match spec {
            EstimatorSpec::Hyvarinen => single_weight_estimate(model, &power_weight(0.0)?, sample)?,
            EstimatorSpec::Power(xi) => single_weight_estimate(model, &power_weight(xi)?, sample)?,
            EstimatorSpec::Gmm1Step => gmm(one_step_gmm(model, &self.gmm_weights, sample)?),
            EstimatorSpec::Gmm2Step => gmm(two_step_gmm(model, &self.gmm_weights, sample)?),
            EstimatorSpec::Mle => match self.kind {
                ModelKind::Gamma1 => gamma_mle(sample, self.known_rate)?,
                _ => gamma_mle_two_param(sample)?,
            },
            EstimatorSpec::ClassicalMoments => match self.kind {
                ModelKind::Gamma1 => classical_moments_one_param(sample, self.known_rate)?,
                _ => classical_moments_two_param(sample)?,
            },
            EstimatorSpec::OracleMinimizer(xi) => {
                let init = vec![1.0; model.dim()];
                minimize_empirical_objective(model, &power_weight(xi)?, sample, &init)?
            }
        };
        if !result.theta_hat.is_finite() {
            return Err(Error::DegenerateProblem(format!("{spec} produced a non-finite estimate")));
        }
        result.label = spec.to_string();
        Ok(result)
    }

    /// Estimate in reporting coordinates: θ for `gamma1`, (α, β) for `gamma2`.
    pub fn estimate_reported(&self, spec: EstimatorSpec, sample: &[f64]) -> Result<EstimatorResult> {
        let mut result = self.estimate_theta(spec, sample)?;
        if self.kind == ModelKind::Gamma2 {
            result.theta_hat[0] += 1.0;
        }
        Ok(result)
    }
}

/// FNV-1a over the bit patterns of the sample.
pub fn sample_fingerprint(sample: &[f64]) -> u64 {
    sample.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, x| {
        x.to_bits().to_le_bytes().iter().fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub estimator: String,
    pub parameter: String,
    /// `None` when the estimator failed on this replication.
    pub estimate: Option<f64>,
    pub sample_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub estimator: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub parameter: String,
    pub true_value: f64,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub mc_standard_error_of_mse: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub per_replication: Vec<ReplicationRow>,
    pub summary: Vec<SummaryRow>,
    /// (estimator, parameter) pairs withheld for exceeding the failure limit.
    pub suppressed: Suppressed,
    pub failures: Vec<FailureRecord>,
}

impl SimulationReport {
    pub fn summary_row(&self, estimator: &str, parameter: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.estimator == estimator && r.parameter == parameter)
    }

    /// Successful estimates of one estimator/parameter, in replication order.
    pub fn estimates(&self, estimator: &str, parameter: &str) -> Vec<f64> {
        self.per_replication
            .iter()
            .filter(|r| r.estimator == estimator && r.parameter == parameter)
            .filter_map(|r| r.estimate)
            .collect()
    }
}

/// Standard error of the mean squared error: sample standard deviation of
/// the squared errors over √(number of estimates).
pub fn mse_standard_error(estimates: &[f64], true_value: f64) -> Result<f64> {
    if estimates.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let n = estimates.len() as f64;
    let sq: Vec<f64> = estimates.iter().map(|e| (e - true_value).powi(2)).collect();
    let m = sq.iter().copied().collect::<NeumaierSum>().total() / n;
    let var = sq.iter().map(|s| (s - m).powi(2)).collect::<NeumaierSum>().total() / (n - 1.0);
    Ok((var / n).sqrt())
}

/// `(estimator, parameter)` pairs whose summary row was withheld.
pub type Suppressed = Vec<(String, String)>;

/// Aggregates per-replication rows into summary rows, withholding any
/// estimator/parameter pair whose failure share exceeds
/// [`MAX_FAILURE_FRACTION`].
pub fn summarize(
    estimators: &[String],
    parameters: &[&str],
    truth: &[f64],
    replications: usize,
    rows: &[ReplicationRow],
) -> Result<(Vec<SummaryRow>, Suppressed)> {
    let mut summary = Vec::new();
    let mut suppressed = Vec::new();
    for label in estimators {
        for (name, &true_value) in parameters.iter().zip(truth) {
            let values: Vec<f64> = rows
                .iter()
                .filter(|row| row.estimator == *label && row.parameter == *name)
                .filter_map(|row| row.estimate)
                .collect();
            let failed = replications.saturating_sub(values.len());
            if values.is_empty() || failed as f64 > MAX_FAILURE_FRACTION * replications as f64 {
                suppressed.push((label.clone(), name.to_string()));
                continue;
            }
            let stats = summary_stats(&values, true_value)?;
            summary.push(SummaryRow {
                estimator: label.clone(),
                parameter: name.to_string(),
                true_value,
                mean: stats.mean,
                bias: stats.bias,
                variance: stats.variance,
                mse: stats.mse,
                mc_standard_error_of_mse: mse_standard_error(&values, true_value).unwrap_or(f64::NAN),
                successes: values.len(),
                failures: failed,
            });
        }
    }
    Ok((summary, suppressed))
}

struct ReplicationOutcome {
    fingerprint: u64,
    results: Vec<Result<Vec<f64>>>,
}

fn run_replication(config: &SimulationConfig, estimation: &Estimation, r: usize) -> Result<ReplicationOutcome> {
    let mut rng = RngStream::new(config.master_seed, r as u64);
    let sample = sample_gamma(&mut rng, config.alpha, config.beta, config.n)?;
    let results = config
        .estimators
        .iter()
        .map(|&spec| estimation.estimate_reported(spec, &sample).map(|r| r.theta_hat.into_vec()))
        .collect();
    Ok(ReplicationOutcome { fingerprint: sample_fingerprint(&sample), results })
}

pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationReport> {
    run_simulation_with(config, Execution::default())
}

pub fn run_simulation_with(config: &SimulationConfig, exec: Execution) -> Result<SimulationReport> {
    config.validate()?;
    let estimation = Estimation::new(config.model, config.beta, &config.xi_list)?;
    let outcomes = map_indexed(exec, config.replications, |r| run_replication(config, &estimation, r))?;

    let names = config.parameter_names();
    let truth = config.true_values();
    let mut per_replication = Vec::with_capacity(config.replications * config.estimators.len() * names.len());
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        for (spec, result) in config.estimators.iter().zip(outcome.results) {
            let label = spec.to_string();
            match result {
                Ok(values) => {
                    for (name, value) in names.iter().zip(values) {
                        per_replication.push(ReplicationRow {
                            replication: r,
                            estimator: label.clone(),
                            parameter: name.to_string(),
                            estimate: Some(value),
                            sample_fingerprint: outcome.fingerprint,
                        });
                    }
                }
                Err(e) => {
                    failures.push(FailureRecord { replication: r, estimator: label.clone(), message: e.to_string() });
                    for name in names {
                        per_replication.push(ReplicationRow {
                            replication: r,
                            estimator: label.clone(),
                            parameter: name.to_string(),
                            estimate: None,
                            sample_fingerprint: outcome.fingerprint,
                        });
                    }
                }
            }
        }
    }

    let labels: Vec<String> = config.estimators.iter().map(ToString::to_string).collect();
    let (summary, suppressed) = summarize(&labels, names, &truth, config.replications, &per_replication)?;

    Ok(SimulationReport { config: config.clone(), per_replication, summary, suppressed, failures })
}
