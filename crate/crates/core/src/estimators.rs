//! Closed-form weighted score matching estimators and the baselines they
//! are compared against.

use crate::error::{Error, Result};
use crate::gmm::MAX_CONDITION;
use crate::models::{score, score_x_derivative, BasisModel, ScoreModel};
use crate::moments::blocks;
use crate::numerics::{default_ridge, digamma, mean, solve_linear, trigamma, LinearSolution, Matrix, NeumaierSum, Vector};
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub condition_number: Option<f64>,
    pub iterations: Option<usize>,
    pub ridge_used: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub theta_hat: Vector,
    pub label: String,
    pub diagnostics: Diagnostics,
}

/// Solves `A x = b` for a positive semi-definite `A`, retrying once with the
/// default ridge when the system is singular or badly conditioned.
fn solve_psd_system(a: &Matrix, b: &[f64], what: &str) -> Result<(LinearSolution, f64)> {
    match solve_linear(a, b, 0.0) {
        Ok(sol) if sol.condition_number <= MAX_CONDITION => Ok((sol, 0.0)),
        Ok(_) | Err(Error::SingularSystem { .. }) => {
            let ridge = default_ridge(a);
            if !(ridge > 0.0 && ridge.is_finite()) {
                return Err(Error::DegenerateProblem(format!("{what} vanishes")));
            }
            match solve_linear(a, b, ridge) {
                Ok(sol) if sol.condition_number <= MAX_CONDITION => Ok((sol, ridge)),
                Ok(_) | Err(Error::SingularSystem { .. }) => {
                    Err(Error::DegenerateProblem(format!("{what} is singular even with a ridge")))
                }
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

fn linear_result(label: &str, sol: LinearSolution, ridge: f64) -> EstimatorResult {
    EstimatorResult {
        theta_hat: sol.x,
        label: label.to_string(),
        diagnostics: Diagnostics {
            condition_number: Some(sol.condition_number),
            iterations: None,
            ridge_used: Some(ridge),
        },
    }
}

/// Solution of `B̄θ = Ā` for one weight.
///
/// For p = 1 this is the ratio `Ā/B̄`; for the two-parameter gamma it is the
/// explicit 2×2 inverse of the block system.
pub fn single_weight_estimate(model: &dyn ScoreModel, weight: &WeightSpec, sample: &[f64]) -> Result<EstimatorResult> {
    let blk = blocks(model, weight, sample)?;
    // −B̄ = n⁻¹Σ w v vᵀ is positive semi-definite, which keeps the ridge meaningful
    let neg_b = blk.b_bar.scaled(-1.0);
    let neg_a: Vec<f64> = blk.a_bar.iter().map(|v| -v).collect();
    let (sol, ridge) = solve_psd_system(&neg_b, &neg_a, "weighted information matrix")?;
    Ok(linear_result(weight.label(), sol, ridge))
}

/// `θ̂ = M⁻¹v` for a basis model, with
/// `M_jk = Σ w φ′_j φ′_k` and `v_j = −Σ (w′ φ′_j + w φ″_j)`.
///
/// Built directly from the basis functions rather than from the moment
/// blocks, so it doubles as a cross-check on them.
pub fn basis_estimate(basis: &BasisModel, weight: &WeightSpec, sample: &[f64]) -> Result<EstimatorResult> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let support = basis.support();
    let p = basis.dim();
    let mut m_acc = vec![NeumaierSum::new(); p * p];
    let mut v_acc = vec![NeumaierSum::new(); p];
    let mut d1 = vec![0.0; p];
    for &x in sample {
        support.check(x)?;
        let (w, wp) = weight.eval(x);
        for (d, f) in d1.iter_mut().zip(basis.phi_prime()) {
            *d = f(x);
        }
        for j in 0..p {
            v_acc[j].add(-(wp * d1[j] + w * (basis.phi_second()[j])(x)));
            for k in 0..p {
                m_acc[j * p + k].add(w * d1[j] * d1[k]);
            }
        }
    }
    let m = Matrix::from_row_major(p, p, m_acc.iter().map(NeumaierSum::total).collect())?;
    let v: Vec<f64> = v_acc.iter().map(NeumaierSum::total).collect();
    let (sol, ridge) = solve_psd_system(&m, &v, "basis matrix M")?;
    Ok(linear_result(weight.label(), sol, ridge))
}

const MLE_TOLERANCE: f64 = 1e-10;
const SHAPE_BRACKET: (f64, f64) = (1e-8, 1e6);
const MAX_NEWTON_ITERATIONS: usize = 200;

/// Newton's method on a monotone function, falling back to bisection
/// whenever a step would leave the current bracket.
fn bracketed_newton<F>(f: F, mut lo: f64, mut hi: f64, x0: f64) -> Result<(f64, usize)>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let (f_lo, _) = f(lo)?;
    let (f_hi, _) = f(hi)?;
    if f_lo == 0.0 {
        return Ok((lo, 0));
    }
    if f_hi == 0.0 {
        return Ok((hi, 0));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::DegenerateProblem(format!("no root bracketed in [{lo:e}, {hi:e}]")));
    }
    let increasing = f_hi > 0.0;
    let mut x = x0.clamp(lo, hi);
    for iter in 1..=MAX_NEWTON_ITERATIONS {
        let (fx, dfx) = f(x)?;
        if fx == 0.0 {
            return Ok((x, iter));
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= MLE_TOLERANCE * x.abs().max(1.0) {
            return Ok((next, iter));
        }
        x = next;
    }
    Err(Error::DegenerateProblem("Newton iteration did not converge".into()))
}

fn check_positive(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    match sample.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        Some(&bad) => Err(Error::NonPositiveData(bad)),
        None => Ok(()),
    }
}

fn mean_log(sample: &[f64]) -> f64 {
    sample.iter().map(|x| x.ln()).collect::<NeumaierSum>().total() / sample.len() as f64
}

/// Shape MLE with known rate, reported as θ = α̂ − 1.
///
/// Solves `ψ(α̂) = mean(log x) + log(rate)`.
pub fn gamma_mle(sample: &[f64], known_rate: f64) -> Result<EstimatorResult> {
    check_positive(sample)?;
    if !(known_rate > 0.0 && known_rate.is_finite()) {
        return Err(Error::Domain(format!("rate must be positive, got {known_rate}")));
    }
    let target = mean_log(sample) + known_rate.ln();
    // Minka's inverse-digamma starting point
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let x0 = if target >= -2.22 { target.exp() + 0.5 } else { -1.0 / (target + EULER_GAMMA) };
    let (alpha, iterations) = bracketed_newton(
        |a| Ok((digamma(a)? - target, trigamma(a)?)),
        SHAPE_BRACKET.0,
        SHAPE_BRACKET.1,
        x0,
    )?;
    Ok(EstimatorResult {
        theta_hat: Vector::from_vec_unchecked(vec![alpha - 1.0]),
        label: "mle".into(),
        diagnostics: Diagnostics { iterations: Some(iterations), ..Default::default() },
    })
}

/// Joint shape/rate MLE, reported as θ = (α̂ − 1, β̂).
///
/// Solves `log α − ψ(α) = log x̄ − mean(log x)` and sets `β̂ = α̂/x̄`.
pub fn gamma_mle_two_param(sample: &[f64]) -> Result<EstimatorResult> {
    check_positive(sample)?;
    if sample.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let xbar = mean(sample)?;
    let s = xbar.ln() - mean_log(sample);
    let x0 = if s > 0.0 { (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s) } else { SHAPE_BRACKET.1 };
    let (alpha, iterations) = bracketed_newton(
        |a| Ok((a.ln() - digamma(a)? - s, 1.0 / a - trigamma(a)?)),
        SHAPE_BRACKET.0,
        SHAPE_BRACKET.1,
        x0,
    )?;
    Ok(EstimatorResult {
        theta_hat: Vector::from_vec_unchecked(vec![alpha - 1.0, alpha / xbar]),
        label: "mle".into(),
        diagnostics: Diagnostics { iterations: Some(iterations), ..Default::default() },
    })
}

/// Classical moment matching for the two-parameter gamma:
/// `θ = (x̄²/σ̂² − 1, x̄/σ̂²)` with the divisor-n variance.
pub fn classical_moments_two_param(sample: &[f64]) -> Result<EstimatorResult> {
    check_positive(sample)?;
    let xbar = mean(sample)?;
    let var = sample.iter().map(|x| (x - xbar).powi(2)).collect::<NeumaierSum>().total() / sample.len() as f64;
    if var.is_nan() || var <= 0.0 {
        return Err(Error::DegenerateProblem("sample variance is zero".into()));
    }
    Ok(EstimatorResult {
        theta_hat: Vector::from_vec_unchecked(vec![xbar * xbar / var - 1.0, xbar / var]),
        label: "classical-moments".into(),
        diagnostics: Diagnostics::default(),
    })
}

/// Classical moment matching with known rate: `θ = rate·x̄ − 1`.
pub fn classical_moments_one_param(sample: &[f64], known_rate: f64) -> Result<EstimatorResult> {
    check_positive(sample)?;
    Ok(EstimatorResult {
        theta_hat: Vector::from_vec_unchecked(vec![known_rate * mean(sample)? - 1.0]),
        label: "classical-moments".into(),
        diagnostics: Diagnostics::default(),
    })
}

/// Empirical weighted score objective
/// `D̂_w(θ) = n⁻¹ Σ [w s_θ² + 2 (w′ s_θ + w s′_θ)]`.
pub fn empirical_objective(model: &dyn ScoreModel, weight: &WeightSpec, sample: &[f64], theta: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut acc = NeumaierSum::new();
    for &x in sample {
        let s = score(model, theta, x)?;
        let ds = score_x_derivative(model, theta, x)?;
        let (w, wp) = weight.eval(x);
        acc.add(w * s * s + 2.0 * (wp * s + w * ds));
    }
    Ok(acc.total() / sample.len() as f64)
}

const ORACLE_PASSES: usize = 2;

/// Exact minimizer of [`empirical_objective`].
///
/// The objective is a quadratic in θ for affine scores, so its gradient and
/// Hessian are recovered exactly (up to rounding) from central differences of
/// objective values around the current point, and one Newton step lands on
/// the minimizer. A second pass re-expands around that point. Only objective
/// evaluations are used, never the moment blocks.
pub fn minimize_empirical_objective(
    model: &dyn ScoreModel,
    weight: &WeightSpec,
    sample: &[f64],
    init: &[f64],
) -> Result<EstimatorResult> {
    let p = model.dim();
    if init.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: init.len() });
    }
    let eval = |t: &[f64]| empirical_objective(model, weight, sample, t);
    let mut theta = init.to_vec();
    let mut condition = None;
    for _ in 0..ORACLE_PASSES {
        let h: Vec<f64> = theta.iter().map(|t| t.abs().max(1.0)).collect();
        let shifted = |pairs: &[(usize, f64)]| -> Result<f64> {
            let mut t = theta.clone();
            for &(j, s) in pairs {
                t[j] += s * h[j];
            }
            eval(&t)
        };
        let mut grad = vec![0.0; p];
        let mut hess = Matrix::zeros(p, p);
        let center = eval(&theta)?;
        for j in 0..p {
            let plus = shifted(&[(j, 1.0)])?;
            let minus = shifted(&[(j, -1.0)])?;
            grad[j] = (plus - minus) / (2.0 * h[j]);
            hess[(j, j)] = (plus - 2.0 * center + minus) / (h[j] * h[j]);
            for k in 0..j {
                let pp = shifted(&[(j, 1.0), (k, 1.0)])?;
                let pm = shifted(&[(j, 1.0), (k, -1.0)])?;
                let mp = shifted(&[(j, -1.0), (k, 1.0)])?;
                let mm = shifted(&[(j, -1.0), (k, -1.0)])?;
                let v = (pp - pm - mp + mm) / (4.0 * h[j] * h[k]);
                hess[(j, k)] = v;
                hess[(k, j)] = v;
            }
        }
        let step = match solve_linear(&hess, &grad, 0.0) {
            Ok(sol) if sol.condition_number <= MAX_CONDITION => sol,
            Ok(_) | Err(Error::SingularSystem { .. }) => {
                return Err(Error::DegenerateProblem("objective is not strictly convex in θ".into()))
            }
            Err(e) => return Err(e),
        };
        condition = Some(step.condition_number);
        theta.iter_mut().zip(step.x.iter()).for_each(|(t, s)| *t -= s);
    }
    Ok(EstimatorResult {
        theta_hat: Vector::new(theta)?,
        label: "oracle-minimizer".into(),
        diagnostics: Diagnostics { condition_number: condition, iterations: Some(ORACLE_PASSES), ridge_used: None },
    })
}
