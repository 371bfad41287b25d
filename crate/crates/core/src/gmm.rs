//! Generalized method of moments over stacked weight blocks.
//!
//! For m weights the moment conditions `Ā_k − B̄_k θ = 0` are stacked into
//! `𝓑θ = a` and combined through
//! `𝓛(θ) = (𝓑θ − a)ᵀ W (𝓑θ − a)`, minimized in closed form by
//! `θ̂ = (𝓑ᵀW𝓑)⁻¹ 𝓑ᵀW a`.

use crate::error::{Error, Result};
use crate::models::ScoreModel;
use crate::moments::{blocks, contribution_second_moment, MomentBlocks};
use crate::numerics::{default_ridge, solve_linear, Cholesky, Matrix, Vector};
use crate::weights::WeightSpec;

/// Normal-equation systems worse than this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const MAX_RIDGE_ESCALATIONS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmProblem {
    b_stack: Matrix,
    a_stack: Vector,
    weight_matrix: Matrix,
    m: usize,
    p: usize,
    weight_ridge: f64,
}

/// Cholesky of `a + ridge·I`, escalating from the default ridge by factors
/// of ten while the factorization fails. Returns the factor and the ridge
/// that made it succeed.
fn factor_with_ridge_repair(a: &Matrix, initial_ridge: f64) -> Result<(Cholesky, f64)> {
    let shifted = if initial_ridge > 0.0 { a.with_added_diagonal(initial_ridge) } else { a.clone() };
    if let Ok(ch) = Cholesky::factor(&shifted) {
        return Ok((ch, initial_ridge));
    }
    let mut ridge = initial_ridge.max(default_ridge(a));
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::DegenerateProblem("matrix has no positive diagonal mass to regularize".into()));
    }
    for _ in 0..MAX_RIDGE_ESCALATIONS {
        if let Ok(ch) = Cholesky::factor(&a.with_added_diagonal(ridge)) {
            return Ok((ch, ridge));
        }
        ridge *= 10.0;
    }
    Err(Error::DegenerateProblem("matrix not positive definite even after ridge repair".into()))
}

impl GmmProblem {
    /// Validates dimensions and that W is symmetric positive definite,
    /// repairing a semi-definite W with a small ridge.
    pub fn new(b_stack: Matrix, a_stack: Vector, weight_matrix: Matrix, m: usize, p: usize) -> Result<Self> {
        let mp = m * p;
        if mp == 0 {
            return Err(Error::EmptyInput);
        }
        if b_stack.rows() != mp || b_stack.cols() != p {
            return Err(Error::DimensionMismatch { expected: mp, found: b_stack.rows() });
        }
        if a_stack.len() != mp {
            return Err(Error::DimensionMismatch { expected: mp, found: a_stack.len() });
        }
        if weight_matrix.rows() != mp || weight_matrix.cols() != mp {
            return Err(Error::DimensionMismatch { expected: mp, found: weight_matrix.rows() });
        }
        if !weight_matrix.is_symmetric(SYMMETRY_TOLERANCE) {
            return Err(Error::Domain("GMM weight matrix must be symmetric".into()));
        }
        let mut weight_matrix = weight_matrix;
        weight_matrix.symmetrize();
        let (_, weight_ridge) = factor_with_ridge_repair(&weight_matrix, 0.0)?;
        if weight_ridge > 0.0 {
            weight_matrix = weight_matrix.with_added_diagonal(weight_ridge);
        }
        Ok(GmmProblem { b_stack, a_stack, weight_matrix, m, p, weight_ridge })
    }

    /// Stacks per-weight blocks in the given order.
    pub fn from_blocks(blocks: &[MomentBlocks], weight_matrix: Matrix) -> Result<Self> {
        let first = blocks.first().ok_or(Error::EmptyInput)?;
        let p = first.dim();
        let m = blocks.len();
        let mut b_stack = Matrix::zeros(m * p, p);
        let mut a_stack = Vec::with_capacity(m * p);
        for (k, blk) in blocks.iter().enumerate() {
            if blk.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, found: blk.dim() });
            }
            for j in 0..p {
                for c in 0..p {
                    b_stack[(k * p + j, c)] = blk.b_bar[(j, c)];
                }
            }
            a_stack.extend_from_slice(&blk.a_bar);
        }
        GmmProblem::new(b_stack, Vector::from_vec_unchecked(a_stack), weight_matrix, m, p)
    }

    pub fn with_identity(blocks: &[MomentBlocks]) -> Result<Self> {
        let p = blocks.first().map_or(0, |b| b.dim());
        GmmProblem::from_blocks(blocks, Matrix::identity(blocks.len() * p))
    }

    pub fn b_stack(&self) -> &Matrix {
        &self.b_stack
    }

    pub fn a_stack(&self) -> &Vector {
        &self.a_stack
    }

    pub fn weight_matrix(&self) -> &Matrix {
        &self.weight_matrix
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Ridge added to W during construction (0 when W was already definite).
    pub fn weight_ridge(&self) -> f64 {
        self.weight_ridge
    }

    /// Same problem with a different weighting matrix.
    pub fn reweighted(&self, weight_matrix: Matrix) -> Result<Self> {
        GmmProblem::new(self.b_stack.clone(), self.a_stack.clone(), weight_matrix, self.m, self.p)
    }

    fn residual(&self, theta: &[f64]) -> Result<Vector> {
        if theta.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: theta.len() });
        }
        let mut r = self.b_stack.matvec(theta)?;
        r.iter_mut().zip(self.a_stack.iter()).for_each(|(ri, ai)| *ri -= ai);
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmEstimate {
    pub theta_hat: Vector,
    /// 𝓛(θ̂), clamped at zero against rounding.
    pub objective_value: f64,
    /// 1-norm condition number of the solved normal-equation matrix.
    pub condition_number: f64,
    pub ridge_used: f64,
    pub steps: u8,
}

/// `(𝓑θ − a)ᵀ W (𝓑θ − a)`.
pub fn objective(problem: &GmmProblem, theta: &[f64]) -> Result<f64> {
    let r = problem.residual(theta)?;
    let wr = problem.weight_matrix.matvec(&r)?;
    Ok(r.dot(&wr).max(0.0))
}

/// Closed-form minimizer of the GMM objective.
///
/// Falls back to `(𝓑ᵀW𝓑 + ridge·I)` with the default ridge when the normal
/// matrix is singular or worse conditioned than [`MAX_CONDITION`].
pub fn solve_gmm(problem: &GmmProblem) -> Result<GmmEstimate> {
    let bt = problem.b_stack.transpose();
    let bt_w = bt.matmul(&problem.weight_matrix)?;
    let normal = bt_w.matmul(&problem.b_stack)?;
    let rhs = bt_w.matvec(&problem.a_stack)?;

    let (solution, ridge_used) = match solve_linear(&normal, &rhs, 0.0) {
        Ok(sol) if sol.condition_number <= MAX_CONDITION => (sol, 0.0),
        Ok(_) | Err(Error::SingularSystem { .. }) => {
            let ridge = default_ridge(&normal);
            if !(ridge > 0.0 && ridge.is_finite()) {
                return Err(Error::DegenerateProblem("normal matrix 𝓑ᵀW𝓑 vanishes".into()));
            }
            match solve_linear(&normal, &rhs, ridge) {
                Ok(sol) if sol.condition_number <= MAX_CONDITION => (sol, ridge),
                Ok(sol) => {
                    return Err(Error::DegenerateProblem(format!(
                        "ridged normal matrix has condition {:e}",
                        sol.condition_number
                    )))
                }
                Err(Error::SingularSystem { .. }) => {
                    return Err(Error::DegenerateProblem("normal matrix singular after ridge".into()))
                }
                Err(e) => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };
    let objective_value = objective(problem, &solution.x)?;
    Ok(GmmEstimate {
        theta_hat: solution.x,
        objective_value,
        condition_number: solution.condition_number,
        ridge_used,
        steps: 1,
    })
}

/// Inverse of the uncentered moment covariance `S = n⁻¹ Σ ℓᵢℓᵢᵀ` at
/// `theta_ref`, where ℓᵢ stacks λ(θ_ref, xᵢ) over the weights.
///
/// `ridge` is added to S up front; if S (+ ridge) is still not definite the
/// default ridge is used and escalated until the factorization succeeds.
pub fn estimate_optimal_weight(
    model: &dyn ScoreModel,
    weights: &[WeightSpec],
    sample: &[f64],
    theta_ref: &[f64],
    ridge: f64,
) -> Result<Matrix> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Domain(format!("ridge must be non-negative, got {ridge}")));
    }
    if weights.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = theta_ref.iter().find(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("reference parameter {bad}")));
    }
    let s = contribution_second_moment(model, weights, theta_ref, sample)?;
    let (chol, _) = factor_with_ridge_repair(&s, ridge)?;
    Ok(chol.inverse())
}

fn all_blocks(model: &dyn ScoreModel, weights: &[WeightSpec], sample: &[f64]) -> Result<Vec<MomentBlocks>> {
    if weights.is_empty() {
        return Err(Error::EmptyInput);
    }
    weights.iter().map(|w| blocks(model, w, sample)).collect()
}

/// GMM with W = I.
pub fn one_step_gmm(model: &dyn ScoreModel, weights: &[WeightSpec], sample: &[f64]) -> Result<GmmEstimate> {
    let problem = GmmProblem::with_identity(&all_blocks(model, weights, sample)?)?;
    solve_gmm(&problem)
}

/// Two-step GMM: W = I first, then W = Ŝ⁻¹ evaluated at the first-step
/// estimate.
pub fn two_step_gmm(model: &dyn ScoreModel, weights: &[WeightSpec], sample: &[f64]) -> Result<GmmEstimate> {
    let first_problem = GmmProblem::with_identity(&all_blocks(model, weights, sample)?)?;
    let first = solve_gmm(&first_problem)?;
    let w_hat = estimate_optimal_weight(model, weights, sample, &first.theta_hat, 0.0)?;
    let second = solve_gmm(&first_problem.reweighted(w_hat)?)?;
    Ok(GmmEstimate { steps: 2, ..second })
}
