//! Exponential-family score models `s_θ(x) = θᵀv(x) + c(x)`.
//!
//! Only the x-derivative of the log-density is ever needed, so a model is
//! described by `v`, `c` and their x-derivatives on an open support.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Open interval `(lower, upper)`; `upper` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
}

impl Support {
    pub const POSITIVE_REALS: Support = Support { lower: 0.0, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::Domain(format!("invalid support ({lower}, {upper})")));
        }
        Ok(Support { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Support { x, lower: self.lower, upper: self.upper })
        }
    }
}

/// An exponential-family model seen through its score in x.
pub trait ScoreModel: Send + Sync {
    fn name(&self) -> &str;

    /// Parameter dimension p.
    fn dim(&self) -> usize;

    fn support(&self) -> Support;

    /// Writes v(x) into `out` (length p).
    fn v(&self, x: f64, out: &mut [f64]);

    /// Writes the elementwise x-derivative of v into `out`.
    fn v_prime(&self, x: f64, out: &mut [f64]);

    fn c(&self, x: f64) -> f64;

    fn c_prime(&self, x: f64) -> f64;
}

fn check_theta(model: &dyn ScoreModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: theta.len() });
    }
    Ok(())
}

/// θᵀv(x) + c(x).
pub fn score(model: &dyn ScoreModel, theta: &[f64], x: f64) -> Result<f64> {
    check_theta(model, theta)?;
    model.support().check(x)?;
    let mut v = vec![0.0; model.dim()];
    model.v(x, &mut v);
    Ok(theta.iter().zip(&v).map(|(t, vi)| t * vi).sum::<f64>() + model.c(x))
}

/// θᵀv′(x) + c′(x).
pub fn score_x_derivative(model: &dyn ScoreModel, theta: &[f64], x: f64) -> Result<f64> {
    check_theta(model, theta)?;
    model.support().check(x)?;
    let mut vp = vec![0.0; model.dim()];
    model.v_prime(x, &mut vp);
    Ok(theta.iter().zip(&vp).map(|(t, vi)| t * vi).sum::<f64>() + model.c_prime(x))
}

/// Gamma with known rate β: `s_θ(x) = θ/x − β`, shape α = θ + 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaOneParam {
    rate: f64,
}

impl GammaOneParam {
    pub fn with_rate(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("rate must be positive, got {rate}")));
        }
        Ok(GammaOneParam { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl ScoreModel for GammaOneParam {
    fn name(&self) -> &str {
        "gamma1"
    }
    fn dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::POSITIVE_REALS
    }
    fn v(&self, x: f64, out: &mut [f64]) {
        out[0] = 1.0 / x;
    }
    fn v_prime(&self, x: f64, out: &mut [f64]) {
        out[0] = -1.0 / (x * x);
    }
    fn c(&self, _x: f64) -> f64 {
        -self.rate
    }
    fn c_prime(&self, _x: f64) -> f64 {
        0.0
    }
}

/// Gamma(α, β) with θ = (α − 1, β): `s_θ(x) = θ₁/x − θ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaTwoParam;

impl ScoreModel for GammaTwoParam {
    fn name(&self) -> &str {
        "gamma2"
    }
    fn dim(&self) -> usize {
        2
    }
    fn support(&self) -> Support {
        Support::POSITIVE_REALS
    }
    fn v(&self, x: f64, out: &mut [f64]) {
        out[0] = 1.0 / x;
        out[1] = -1.0;
    }
    fn v_prime(&self, x: f64, out: &mut [f64]) {
        out[0] = -1.0 / (x * x);
        out[1] = 0.0;
    }
    fn c(&self, _x: f64) -> f64 {
        0.0
    }
    fn c_prime(&self, _x: f64) -> f64 {
        0.0
    }
}

/// Gamma with rate fixed at 1, the one-parameter model of the MSE table study.
pub fn gamma_one_param_model() -> GammaOneParam {
    GammaOneParam { rate: 1.0 }
}

pub fn gamma_two_param_model() -> GammaTwoParam {
    GammaTwoParam
}

pub type BasisFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Density `∝ exp(Σ θ_j φ_j(x))` given through φ′_j and φ″_j.
///
/// The score is `Σ θ_j φ′_j(x)`, so `v = φ′`, `v′ = φ″` and `c = 0`.
#[derive(Clone)]
pub struct BasisModel {
    phi_prime: Vec<BasisFn>,
    phi_second: Vec<BasisFn>,
    support: Support,
}

impl BasisModel {
    pub fn new(phi_prime: Vec<BasisFn>, phi_second: Vec<BasisFn>, support: Support) -> Result<Self> {
        if phi_prime.is_empty() {
            return Err(Error::EmptyBasis);
        }
        if phi_second.len() != phi_prime.len() {
            return Err(Error::DimensionMismatch { expected: phi_prime.len(), found: phi_second.len() });
        }
        Ok(BasisModel { phi_prime, phi_second, support })
    }

    pub fn phi_prime(&self) -> &[BasisFn] {
        &self.phi_prime
    }

    pub fn phi_second(&self) -> &[BasisFn] {
        &self.phi_second
    }
}

impl fmt::Debug for BasisModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisModel")
            .field("p", &self.phi_prime.len())
            .field("support", &self.support)
            .finish()
    }
}

impl ScoreModel for BasisModel {
    fn name(&self) -> &str {
        "basis"
    }
    fn dim(&self) -> usize {
        self.phi_prime.len()
    }
    fn support(&self) -> Support {
        self.support
    }
    fn v(&self, x: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.phi_prime) {
            *o = f(x);
        }
    }
    fn v_prime(&self, x: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.phi_second) {
            *o = f(x);
        }
    }
    fn c(&self, _x: f64) -> f64 {
        0.0
    }
    fn c_prime(&self, _x: f64) -> f64 {
        0.0
    }
}

pub fn model_from_basis(phi_prime: Vec<BasisFn>, phi_second: Vec<BasisFn>, support: Support) -> Result<BasisModel> {
    BasisModel::new(phi_prime, phi_second, support)
}

/// Shape/rate parameters of a gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("gamma parameters must be positive, got ({alpha}, {beta})")));
        }
        Ok(GammaParams { alpha, beta })
    }

    /// θ = (α − 1, β).
    pub fn to_theta(&self) -> Vector {
        Vector::from_vec_unchecked(vec![self.alpha - 1.0, self.beta])
    }

    pub fn from_theta(theta: &[f64]) -> Result<Self> {
        if theta.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: theta.len() });
        }
        GammaParams::new(theta[0] + 1.0, theta[1])
    }
}

/// Model names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gamma1,
    Gamma2,
    Basis,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gamma1 => "gamma1",
            ModelKind::Gamma2 => "gamma2",
            ModelKind::Basis => "basis",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gamma1" => Ok(ModelKind::Gamma1),
            "gamma2" => Ok(ModelKind::Gamma2),
            "basis" => Ok(ModelKind::Basis),
            other => Err(Error::InvalidConfig(format!("unknown model '{other}' (expected gamma1, gamma2 or basis)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_scores_by_hand() {
        let g1 = gamma_one_param_model();
        assert_eq!(score(&g1, &[4.0], 2.0).unwrap(), 1.0);
        assert_eq!(score_x_derivative(&g1, &[4.0], 2.0).unwrap(), -1.0);
        let g2 = gamma_two_param_model();
        assert_eq!(score(&g2, &[4.0, 1.0], 2.0).unwrap(), 1.0);
        assert_eq!(score_x_derivative(&g2, &[4.0, 1.0], 1.0).unwrap(), -4.0);
    }

    #[test]
    fn zero_theta_gives_c() {
        let g1 = gamma_one_param_model();
        assert_eq!(score(&g1, &[0.0], 3.3).unwrap(), -1.0);
        assert_eq!(score_x_derivative(&g1, &[0.0], 3.3).unwrap(), 0.0);
        let g2 = gamma_two_param_model();
        assert_eq!(score(&g2, &[0.0, 0.0], 3.3).unwrap(), 0.0);
        assert_eq!(score_x_derivative(&g2, &[0.0, 0.0], 3.3).unwrap(), 0.0);
    }

    #[test]
    fn two_param_v_at_two() {
        let mut v = [0.0; 2];
        gamma_two_param_model().v(2.0, &mut v);
        assert_eq!(v, [0.5, -1.0]);
        let g1 = gamma_one_param_model();
        for x in [0.1, 1.0, 17.0] {
            assert_eq!(g1.c(x), -1.0);
        }
    }

    #[test]
    fn support_is_open() {
        let g = gamma_two_param_model();
        assert!(matches!(score(&g, &[1.0, 1.0], 0.0), Err(Error::Support { .. })));
        assert!(matches!(score(&g, &[1.0, 1.0], -1.0), Err(Error::Support { .. })));
        assert!(matches!(score(&g, &[1.0, 1.0], f64::INFINITY), Err(Error::Support { .. })));
        assert!(matches!(score(&g, &[1.0], 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn basis_reproduces_two_param_gamma() {
        let basis = model_from_basis(
            vec![Arc::new(|x: f64| 1.0 / x), Arc::new(|_| -1.0)],
            vec![Arc::new(|x: f64| -1.0 / (x * x)), Arc::new(|_| 0.0)],
            Support::POSITIVE_REALS,
        )
        .unwrap();
        let g2 = gamma_two_param_model();
        for x in [0.3, 1.0, 2.5, 9.0] {
            let theta = [3.5, 0.75];
            assert_eq!(score(&basis, &theta, x).unwrap(), score(&g2, &theta, x).unwrap() - g2.c(x));
            assert_eq!(
                score_x_derivative(&basis, &theta, x).unwrap(),
                score_x_derivative(&g2, &theta, x).unwrap()
            );
        }
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(model_from_basis(vec![], vec![], Support::POSITIVE_REALS), Err(Error::EmptyBasis)));
        let one: BasisFn = Arc::new(|x| x);
        assert!(matches!(
            model_from_basis(vec![one.clone()], vec![], Support::POSITIVE_REALS),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gamma_params_theta_mapping() {
        let p = GammaParams::new(5.0, 1.0).unwrap();
        assert_eq!(p.to_theta().as_slice(), &[4.0, 1.0]);
        assert_eq!(GammaParams::from_theta(&[4.0, 1.0]).unwrap(), p);
        assert!(GammaParams::from_theta(&[-1.5, 1.0]).is_err());
    }

    #[test]
    fn model_names() {
        assert_eq!("gamma1".parse::<ModelKind>().unwrap(), ModelKind::Gamma1);
        assert_eq!("gamma2".parse::<ModelKind>().unwrap(), ModelKind::Gamma2);
        assert_eq!("basis".parse::<ModelKind>().unwrap(), ModelKind::Basis);
        assert!("normal".parse::<ModelKind>().is_err());
    }
}
