//! Stein moment functions and their Monte Carlo block averages.
//!
//! With `τ_θ = ∇_θ s_θ = v` the moment function is
//! `λ(θ, x) = w v s_θ + (w v)′ = A(x) − B(x) θ`, where
//! `A(x) = w′ v + w v′ + w c v` and `B(x) = −w v vᵀ`.

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::models::ScoreModel;
use crate::numerics::{Matrix, NeumaierSum, Vector};
use crate::weights::WeightSpec;

/// Observations per accumulation chunk. Chunk boundaries are fixed, so the
/// reduction order does not depend on how chunks are scheduled.
const CHUNK: usize = 4096;

/// Per-weight averages `Ā = n⁻¹ Σ A(xᵢ)` and `B̄ = n⁻¹ Σ B(xᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBlocks {
    pub a_bar: Vector,
    pub b_bar: Matrix,
    pub weight_label: String,
    pub n: usize,
}

impl MomentBlocks {
    pub fn dim(&self) -> usize {
        self.a_bar.len()
    }

    /// `Ā − B̄ θ`, the sample mean of λ(θ, ·).
    pub fn mean_moment(&self, theta: &[f64]) -> Result<Vector> {
        let bt = self.b_bar.matvec(theta)?;
        Ok(Vector::from_vec_unchecked(self.a_bar.iter().zip(bt.iter()).map(|(a, b)| a - b).collect()))
    }
}

fn check_dims(model: &dyn ScoreModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: theta.len() });
    }
    Ok(())
}

/// Scratch space for evaluating v and v′ without allocating per point.
struct PointEval {
    v: Vec<f64>,
    vp: Vec<f64>,
}

impl PointEval {
    fn new(p: usize) -> Self {
        PointEval { v: vec![0.0; p], vp: vec![0.0; p] }
    }

    /// Fills v, v′ and returns `(w, w′, c)`.
    #[inline]
    fn load(&mut self, model: &dyn ScoreModel, weight: &WeightSpec, x: f64) -> (f64, f64, f64) {
        model.v(x, &mut self.v);
        model.v_prime(x, &mut self.vp);
        let (w, wp) = weight.eval(x);
        (w, wp, model.c(x))
    }

    #[inline]
    fn lambda_into(&self, w: f64, wp: f64, c: f64, theta: &[f64], out: &mut [f64]) {
        let s = theta.iter().zip(&self.v).map(|(t, v)| t * v).sum::<f64>() + c;
        for ((o, &v), &vp) in out.iter_mut().zip(&self.v).zip(&self.vp) {
            *o = w * v * s + wp * v + w * vp;
        }
    }
}

/// λ(θ, x) for one observation and one weight.
pub fn lambda_at(model: &dyn ScoreModel, weight: &WeightSpec, theta: &[f64], x: f64) -> Result<Vector> {
    check_dims(model, theta)?;
    model.support().check(x)?;
    let mut eval = PointEval::new(model.dim());
    let (w, wp, c) = eval.load(model, weight, x);
    let mut out = vec![0.0; model.dim()];
    eval.lambda_into(w, wp, c, theta, &mut out);
    Ok(Vector::from_vec_unchecked(out))
}

/// The pointwise pair `(A(x), B(x))`.
pub fn point_blocks(model: &dyn ScoreModel, weight: &WeightSpec, x: f64) -> Result<(Vector, Matrix)> {
    model.support().check(x)?;
    let p = model.dim();
    let mut eval = PointEval::new(p);
    let (w, wp, c) = eval.load(model, weight, x);
    let a = (0..p).map(|j| wp * eval.v[j] + w * eval.vp[j] + w * c * eval.v[j]).collect();
    let mut b = Matrix::zeros(p, p);
    for j in 0..p {
        for k in 0..p {
            b[(j, k)] = -w * eval.v[j] * eval.v[k];
        }
    }
    Ok((Vector::from_vec_unchecked(a), b))
}

struct BlockAccumulator {
    a: Vec<NeumaierSum>,
    b: Vec<NeumaierSum>,
}

impl BlockAccumulator {
    fn new(p: usize) -> Self {
        BlockAccumulator { a: vec![NeumaierSum::new(); p], b: vec![NeumaierSum::new(); p * p] }
    }

    fn merge(&mut self, other: &BlockAccumulator) {
        self.a.iter_mut().zip(&other.a).for_each(|(s, o)| s.merge(o));
        self.b.iter_mut().zip(&other.b).for_each(|(s, o)| s.merge(o));
    }
}

fn accumulate_chunk(model: &dyn ScoreModel, weight: &WeightSpec, chunk: &[f64]) -> Result<BlockAccumulator> {
    let p = model.dim();
    let support = model.support();
    let mut eval = PointEval::new(p);
    let mut acc = BlockAccumulator::new(p);
    for &x in chunk {
        support.check(x)?;
        let (w, wp, c) = eval.load(model, weight, x);
        for j in 0..p {
            let vj = eval.v[j];
            acc.a[j].add(wp * vj + w * eval.vp[j] + w * c * vj);
            // B is symmetric; fill the upper triangle and mirror at the end
            for k in j..p {
                acc.b[j * p + k].add(-w * vj * eval.v[k]);
            }
        }
    }
    Ok(acc)
}

/// Monte Carlo blocks for one weight.
pub fn blocks(model: &dyn ScoreModel, weight: &WeightSpec, sample: &[f64]) -> Result<MomentBlocks> {
    blocks_with(model, weight, sample, Execution::Sequential)
}

/// [`blocks`] with chunked, optionally parallel accumulation.
pub fn blocks_with(model: &dyn ScoreModel, weight: &WeightSpec, sample: &[f64], exec: Execution) -> Result<MomentBlocks> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let p = model.dim();
    let chunks: Vec<&[f64]> = sample.chunks(CHUNK).collect();
    let partials = map_indexed(exec, chunks.len(), |i| accumulate_chunk(model, weight, chunks[i]))?;
    let mut total = BlockAccumulator::new(p);
    for part in partials {
        total.merge(&part?);
    }
    let n = sample.len() as f64;
    let a_bar = Vector::from_vec_unchecked(total.a.iter().map(|s| s.total() / n).collect());
    let mut b_bar = Matrix::zeros(p, p);
    for j in 0..p {
        for k in j..p {
            let v = total.b[j * p + k].total() / n;
            b_bar[(j, k)] = v;
            b_bar[(k, j)] = v;
        }
    }
    if !a_bar.is_finite() || !b_bar.is_finite() {
        return Err(Error::NonFinite(format!("moment blocks for weight {}", weight.label())));
    }
    Ok(MomentBlocks { a_bar, b_bar, weight_label: weight.label().to_string(), n: sample.len() })
}

/// λ under each weight, concatenated in weight order (length m·p).
pub fn stacked_contribution(
    model: &dyn ScoreModel,
    weights: &[WeightSpec],
    theta: &[f64],
    x: f64,
) -> Result<Vector> {
    check_dims(model, theta)?;
    model.support().check(x)?;
    let p = model.dim();
    let mut out = vec![0.0; weights.len() * p];
    stacked_into(model, weights, theta, x, &mut PointEval::new(p), &mut out);
    Ok(Vector::from_vec_unchecked(out))
}

fn stacked_into(
    model: &dyn ScoreModel,
    weights: &[WeightSpec],
    theta: &[f64],
    x: f64,
    eval: &mut PointEval,
    out: &mut [f64],
) {
    let p = model.dim();
    model.v(x, &mut eval.v);
    model.v_prime(x, &mut eval.vp);
    let c = model.c(x);
    for (k, weight) in weights.iter().enumerate() {
        let (w, wp) = weight.eval(x);
        eval.lambda_into(w, wp, c, theta, &mut out[k * p..(k + 1) * p]);
    }
}

/// Uncentered second moment `n⁻¹ Σ ℓᵢ ℓᵢᵀ` of the stacked contributions.
pub fn contribution_second_moment(
    model: &dyn ScoreModel,
    weights: &[WeightSpec],
    theta: &[f64],
    sample: &[f64],
) -> Result<Matrix> {
    check_dims(model, theta)?;
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let support = model.support();
    let dim = weights.len() * model.dim();
    let mut eval = PointEval::new(model.dim());
    let mut ell = vec![0.0; dim];
    let mut acc = vec![NeumaierSum::new(); dim * (dim + 1) / 2];
    for &x in sample {
        support.check(x)?;
        stacked_into(model, weights, theta, x, &mut eval, &mut ell);
        let mut idx = 0;
        for j in 0..dim {
            for k in j..dim {
                acc[idx].add(ell[j] * ell[k]);
                idx += 1;
            }
        }
    }
    let n = sample.len() as f64;
    let mut s = Matrix::zeros(dim, dim);
    let mut idx = 0;
    for j in 0..dim {
        for k in j..dim {
            let v = acc[idx].total() / n;
            s[(j, k)] = v;
            s[(k, j)] = v;
            idx += 1;
        }
    }
    Ok(s)
}

/// Sample mean of λ(θ, ·) and its standard error, componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub mean: Vector,
    pub standard_error: Vector,
    pub n: usize,
}

impl MomentCheck {
    /// Largest |mean| / SE across components.
    pub fn max_z(&self) -> f64 {
        self.mean
            .iter()
            .zip(self.standard_error.iter())
            .map(|(m, se)| if *se > 0.0 { m.abs() / se } else if *m == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

pub fn moment_condition_check(
    model: &dyn ScoreModel,
    weight: &WeightSpec,
    theta: &[f64],
    sample: &[f64],
    exec: Execution,
) -> Result<MomentCheck> {
    check_dims(model, theta)?;
    if sample.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let p = model.dim();
    let support = model.support();
    let chunks: Vec<&[f64]> = sample.chunks(CHUNK).collect();
    let partials = map_indexed(exec, chunks.len(), |i| -> Result<(Vec<NeumaierSum>, Vec<NeumaierSum>)> {
        let mut eval = PointEval::new(p);
        let mut lam = vec![0.0; p];
        let mut sum = vec![NeumaierSum::new(); p];
        let mut sq = vec![NeumaierSum::new(); p];
        for &x in chunks[i] {
            support.check(x)?;
            let (w, wp, c) = eval.load(model, weight, x);
            eval.lambda_into(w, wp, c, theta, &mut lam);
            for j in 0..p {
                sum[j].add(lam[j]);
                sq[j].add(lam[j] * lam[j]);
            }
        }
        Ok((sum, sq))
    })?;
    let mut sum = vec![NeumaierSum::new(); p];
    let mut sq = vec![NeumaierSum::new(); p];
    for part in partials {
        let (s, q) = part?;
        sum.iter_mut().zip(&s).for_each(|(a, b)| a.merge(b));
        sq.iter_mut().zip(&q).for_each(|(a, b)| a.merge(b));
    }
    let n = sample.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s.total() / n).collect();
    let se = mean
        .iter()
        .zip(&sq)
        .map(|(m, q)| (((q.total() - n * m * m) / (n - 1.0)).max(0.0) / n).sqrt())
        .collect();
    Ok(MomentCheck {
        mean: Vector::from_vec_unchecked(mean),
        standard_error: Vector::from_vec_unchecked(se),
        n: sample.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gamma_one_param_model, gamma_two_param_model};
    use crate::weights::power_weight;
    use std::sync::Arc;

    fn zero_weight() -> WeightSpec {
        WeightSpec::custom("zero", Arc::new(|_| 0.0), Arc::new(|_| 0.0))
    }

    #[test]
    fn lambda_hand_values() {
        let g1 = gamma_one_param_model();
        let l = lambda_at(&g1, &power_weight(0.0).unwrap(), &[4.0], 2.0).unwrap();
        assert!((l[0] - 0.25).abs() < 1e-15);

        let g2 = gamma_two_param_model();
        let l = lambda_at(&g2, &power_weight(2.0).unwrap(), &[4.0, 1.0], 2.0).unwrap();
        assert!((l[0] - 3.0).abs() < 1e-14 && (l[1] + 8.0).abs() < 1e-14, "{l:?}");

        let l = lambda_at(&g2, &zero_weight(), &[4.0, 1.0], 2.0).unwrap();
        assert_eq!(l.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn blocks_hand_values() {
        let g2 = gamma_two_param_model();
        let b = blocks(&g2, &power_weight(2.0).unwrap(), &[1.0, 2.0, 3.0]).unwrap();
        let expected_b = [[-1.0, 2.0], [2.0, -14.0 / 3.0]];
        for (j, row) in expected_b.iter().enumerate() {
            for (k, expected) in row.iter().enumerate() {
                assert!((b.b_bar[(j, k)] - expected).abs() < 1e-14);
            }
        }
        assert!((b.a_bar[0] - 1.0).abs() < 1e-14 && (b.a_bar[1] + 4.0).abs() < 1e-14);

        let g1 = gamma_one_param_model();
        let b = blocks(&g1, &power_weight(0.0).unwrap(), &[1.0]).unwrap();
        assert_eq!(b.a_bar[0], -2.0);
        assert_eq!(b.b_bar[(0, 0)], -1.0);
    }

    #[test]
    fn repeated_point_equals_single_point() {
        let g2 = gamma_two_param_model();
        let w = power_weight(0.7).unwrap();
        let single = blocks(&g2, &w, &[2.3]).unwrap();
        let repeated = blocks(&g2, &w, &vec![2.3; 10_000]).unwrap();
        for j in 0..2 {
            assert!((single.a_bar[j] - repeated.a_bar[j]).abs() < 1e-14);
            for k in 0..2 {
                assert!((single.b_bar[(j, k)] - repeated.b_bar[(j, k)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn blocks_errors() {
        let g2 = gamma_two_param_model();
        let w = power_weight(1.0).unwrap();
        assert_eq!(blocks(&g2, &w, &[]), Err(Error::EmptyInput));
        assert!(matches!(blocks(&g2, &w, &[1.0, -2.0]), Err(Error::Support { .. })));
        assert!(matches!(lambda_at(&g2, &w, &[1.0, 1.0], 0.0), Err(Error::Support { .. })));
    }

    #[test]
    fn stacked_hand_values() {
        let g1 = gamma_one_param_model();
        let ws = [power_weight(0.0).unwrap(), power_weight(2.0).unwrap()];
        let s = stacked_contribution(&g1, &ws, &[4.0], 2.0).unwrap();
        assert!((s[0] - 0.25).abs() < 1e-15 && (s[1] - 3.0).abs() < 1e-14);

        let single = stacked_contribution(&g1, &ws[..1], &[4.0], 2.0).unwrap();
        assert_eq!(single, lambda_at(&g1, &ws[0], &[4.0], 2.0).unwrap());

        let g2 = gamma_two_param_model();
        let ws = [power_weight(1.0).unwrap(), zero_weight()];
        let s = stacked_contribution(&g2, &ws, &[4.0, 1.0], 1.5).unwrap();
        assert_eq!(&s[2..], &[0.0, 0.0]);
        assert!(s[0] != 0.0);
    }

    #[test]
    fn parallel_blocks_are_bit_identical() {
        let g2 = gamma_two_param_model();
        let w = power_weight(1.5).unwrap();
        let xs: Vec<f64> = (1..50_000).map(|i| 0.1 + (i as f64 * 0.618).fract() * 10.0).collect();
        let seq = blocks_with(&g2, &w, &xs, Execution::Sequential).unwrap();
        let par = blocks_with(&g2, &w, &xs, Execution::Workers(4)).unwrap();
        assert_eq!(seq, par);
    }
}
