//! Weight functions w(x) for the weighted Fisher divergence, and a numeric
//! check that `w·v·f` vanishes at the edges of the support.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{ScoreModel, Support};

pub type WeightFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `w(x) = x^ξ` with ξ ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerWeight {
    xi: f64,
}

impl PowerWeight {
    pub fn new(xi: f64) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::Domain(format!("power weight exponent must be >= 0, got {xi}")));
        }
        Ok(PowerWeight { xi })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64) {
        if self.xi == 0.0 {
            (1.0, 0.0)
        } else {
            let w = x.powf(self.xi);
            (w, self.xi * w / x)
        }
    }
}

#[derive(Clone)]
enum Kind {
    Power(PowerWeight),
    Custom { w: WeightFn, w_prime: WeightFn },
}

/// A differentiable weight with its analytic derivative.
#[derive(Clone)]
pub struct WeightSpec {
    kind: Kind,
    label: String,
}

impl WeightSpec {
    /// Weight supplied by the caller together with its derivative.
    pub fn custom(label: impl Into<String>, w: WeightFn, w_prime: WeightFn) -> Self {
        WeightSpec { kind: Kind::Custom { w, w_prime }, label: label.into() }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Exponent when this is a power weight.
    pub fn xi(&self) -> Option<f64> {
        match self.kind {
            Kind::Power(p) => Some(p.xi()),
            Kind::Custom { .. } => None,
        }
    }

    /// `(w(x), w′(x))`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match &self.kind {
            Kind::Power(p) => p.eval(x),
            Kind::Custom { w, w_prime } => (w(x), w_prime(x)),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    /// Pointwise sum of two weights.
    pub fn sum(a: &WeightSpec, b: &WeightSpec) -> WeightSpec {
        let (a1, b1) = (a.clone(), b.clone());
        let (a2, b2) = (a.clone(), b.clone());
        WeightSpec::custom(
            format!("{}+{}", a.label, b.label),
            Arc::new(move |x| a1.value(x) + b1.value(x)),
            Arc::new(move |x| a2.derivative(x) + b2.derivative(x)),
        )
    }
}

impl fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightSpec").field("label", &self.label).finish()
    }
}

impl From<PowerWeight> for WeightSpec {
    fn from(p: PowerWeight) -> Self {
        WeightSpec { kind: Kind::Power(p), label: format!("x^{}", p.xi()) }
    }
}

pub fn power_weight(xi: f64) -> Result<WeightSpec> {
    PowerWeight::new(xi).map(WeightSpec::from)
}

/// Parses a comma-separated exponent list such as `0,0.3,0.5,1,2`.
pub fn parse_xi_list(text: &str) -> Result<Vec<f64>> {
    let xs = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let xi: f64 = s.parse().map_err(|_| Error::InvalidConfig(format!("invalid exponent '{s}'")))?;
            PowerWeight::new(xi).map(|p| p.xi())
        })
        .collect::<Result<Vec<_>>>()?;
    if xs.is_empty() {
        return Err(Error::InvalidConfig("exponent list is empty".into()));
    }
    Ok(xs)
}

/// Probe points approaching each edge of the support, ordered from the
/// reference point outward.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub reference: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ProbeGrid {
    /// Decade grid around `scale`: `{10⁻⁶·s, …, 10⁻¹·s}` below and
    /// `{10·s, …, 10⁶·s}` above for the half line; finite edges are approached
    /// by shrinking the distance to the edge by the same factors.
    pub fn geometric(support: Support, scale: f64, decades: u32) -> Result<Self> {
        support.check(scale)?;
        let factors: Vec<f64> = (1..=decades as i32).map(|k| 10f64.powi(-k)).collect();
        let lower = factors.iter().map(|f| support.lower + (scale - support.lower) * f).collect();
        let upper = if support.upper.is_infinite() {
            let base = if scale > 0.0 { scale } else { 1.0 };
            factors.iter().map(|f| scale + base * (1.0 / f - 1.0)).collect()
        } else {
            factors.iter().map(|f| support.upper - (support.upper - scale) * f).collect()
        };
        Ok(ProbeGrid { reference: scale, lower, upper })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Lower,
    Upper,
}

/// Outcome for one component of `w·v` on one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeComponentReport {
    pub edge: Edge,
    pub component: usize,
    /// log |w v_j f̃| on the final three probes, nearest to the edge last.
    pub log_tail: Vec<f64>,
    pub log_interior_max: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub passed: bool,
    pub components: Vec<EdgeComponentReport>,
}

const SIMPSON_STEPS_PER_UNIT: f64 = 96.0;
const TAIL_LEN: usize = 3;
const VANISHING_RATIO: f64 = 1e-8;

/// ∫ s_θ(t) dt from `from` to `to` on one side of the reference point, using
/// a logarithmic distance variable so that decades cost the same.
fn integrate_score(model: &dyn ScoreModel, theta: &[f64], from: f64, to: f64, anchor: f64) -> f64 {
    // t = anchor + sign·e^u, with the anchor at the edge being approached
    // (or below the reference for an unbounded upper side)
    let sign = if from > anchor { 1.0 } else { -1.0 };
    let dist = |t: f64| sign * (t - anchor);
    let (u0, u1) = (dist(from).ln(), dist(to).ln());
    let steps = (((u1 - u0).abs() * SIMPSON_STEPS_PER_UNIT).ceil() as usize).max(2);
    let steps = steps + steps % 2;
    let h = (u1 - u0) / steps as f64;
    let mut v = vec![0.0; model.dim()];
    let mut integrand = |u: f64| {
        let e = u.exp();
        let t = anchor + sign * e;
        model.v(t, &mut v);
        let s: f64 = theta.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + model.c(t);
        s * sign * e
    };
    let mut acc = integrand(u0) + integrand(u1);
    for k in 1..steps {
        let coef = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += coef * integrand(u0 + k as f64 * h);
    }
    acc * h / 3.0
}

/// Checks that `|w(x) v_j(x) f̃(x|θ)|` dies out towards both edges.
///
/// `f̃` is the unnormalized density obtained by integrating the score from
/// the grid's reference point. A component passes on an edge when its final
/// three probes are non-increasing towards the edge and all lie below
/// `1e-8 ×` the component's maximum over the grid. Failures are reported,
/// not raised.
pub fn check_boundary_vanishing(
    model: &dyn ScoreModel,
    weight: &WeightSpec,
    theta: &[f64],
    probes: &ProbeGrid,
) -> BoundaryReport {
    let p = model.dim();
    let support = model.support();
    let reference = probes.reference;

    let side_log_density = |points: &[f64], edge: Edge| -> Vec<f64> {
        let anchor = match edge {
            Edge::Lower => support.lower,
            Edge::Upper if support.upper.is_finite() => support.upper,
            // unbounded: measure distance from a point below the reference
            Edge::Upper => reference - if reference > 0.0 { reference } else { 1.0 },
        };
        let mut out = Vec::with_capacity(points.len());
        let mut prev = reference;
        let mut acc = 0.0;
        for &x in points {
            if !support.contains(x) {
                out.push(f64::NAN);
                continue;
            }
            acc += integrate_score(model, theta, prev, x, anchor);
            prev = x;
            out.push(acc);
        }
        out
    };

    let mut v = vec![0.0; p];
    let mut log_terms = |x: f64, log_f: f64| -> Vec<f64> {
        model.v(x, &mut v);
        let w = weight.value(x).abs();
        v.iter().map(|vj| (w * vj.abs()).ln() + log_f).collect()
    };

    let lower_logf = side_log_density(&probes.lower, Edge::Lower);
    let upper_logf = side_log_density(&probes.upper, Edge::Upper);
    let ref_terms = log_terms(reference, 0.0);
    let lower_terms: Vec<Vec<f64>> = probes.lower.iter().zip(&lower_logf).map(|(&x, &lf)| log_terms(x, lf)).collect();
    let upper_terms: Vec<Vec<f64>> = probes.upper.iter().zip(&upper_logf).map(|(&x, &lf)| log_terms(x, lf)).collect();

    let mut components = Vec::with_capacity(2 * p);
    for j in 0..p {
        let log_max = std::iter::once(ref_terms[j])
            .chain(lower_terms.iter().map(|t| t[j]))
            .chain(upper_terms.iter().map(|t| t[j]))
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        for (edge, terms) in [(Edge::Lower, &lower_terms), (Edge::Upper, &upper_terms)] {
            let tail: Vec<f64> = terms.iter().rev().take(TAIL_LEN).rev().map(|t| t[j]).collect();
            let passed = if log_max == f64::NEG_INFINITY {
                // component identically zero on the grid
                true
            } else {
                let limit = VANISHING_RATIO.ln() + log_max;
                tail.len() == TAIL_LEN
                    && tail.iter().all(|&v| !v.is_nan() && v <= limit)
                    && tail.windows(2).all(|w| w[1] <= w[0])
            };
            components.push(EdgeComponentReport { edge, component: j, log_tail: tail, log_interior_max: log_max, passed });
        }
    }
    BoundaryReport { passed: components.iter().all(|c| c.passed), components }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gamma_one_param_model, gamma_two_param_model};

    #[test]
    fn power_weight_values() {
        let w0 = power_weight(0.0).unwrap();
        for x in [0.1, 1.0, 50.0] {
            assert_eq!(w0.eval(x), (1.0, 0.0));
        }
        let w2 = power_weight(2.0).unwrap();
        assert_eq!(w2.eval(3.0), (9.0, 6.0));
        let (w, wp) = power_weight(0.5).unwrap().eval(4.0);
        assert!((w - 2.0).abs() < 1e-15 && (wp - 0.25).abs() < 1e-15);
        assert!(matches!(power_weight(-0.1), Err(Error::Domain(_))));
        assert!(power_weight(f64::NAN).is_err());
    }

    #[test]
    fn xi_list_parsing() {
        assert_eq!(parse_xi_list("0, 0.3,0.5,1,2").unwrap(), vec![0.0, 0.3, 0.5, 1.0, 2.0]);
        assert!(parse_xi_list("").is_err());
        assert!(parse_xi_list("1,abc").is_err());
        assert!(parse_xi_list("1,-2").is_err());
    }

    fn gamma_grid() -> ProbeGrid {
        ProbeGrid::geometric(Support::POSITIVE_REALS, 5.0, 6).unwrap()
    }

    #[test]
    fn boundary_check_gamma2_passes() {
        let g2 = gamma_two_param_model();
        for xi in [0.0, 2.0] {
            let report = check_boundary_vanishing(&g2, &power_weight(xi).unwrap(), &[4.0, 1.0], &gamma_grid());
            assert!(report.passed, "xi = {xi}: {report:?}");
        }
    }

    #[test]
    fn boundary_check_detects_divergence_at_zero() {
        // α = θ + 1 = 0.5: (1/x)·x^(−1/2) blows up at 0
        let g1 = gamma_one_param_model();
        let report = check_boundary_vanishing(&g1, &power_weight(0.0).unwrap(), &[-0.5], &gamma_grid());
        assert!(!report.passed);
        let lower = report.components.iter().find(|c| c.edge == Edge::Lower).unwrap();
        let upper = report.components.iter().find(|c| c.edge == Edge::Upper).unwrap();
        assert!(!lower.passed);
        assert!(upper.passed);
    }

    #[test]
    fn integrated_density_matches_closed_form() {
        // gamma1 with θ = 4: log f̃(x) − log f̃(5) = 4 ln(x/5) − (x − 5)
        let g1 = gamma_one_param_model();
        let grid = gamma_grid();
        let lower = *grid.lower.first().unwrap();
        let got = integrate_score(&g1, &[4.0], 5.0, lower, 0.0);
        let exact = 4.0 * (lower / 5.0).ln() - (lower - 5.0);
        assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
        let got = integrate_score(&g1, &[4.0], 5.0, 50.0, 0.0);
        let exact = 4.0 * (50.0f64 / 5.0).ln() - 45.0;
        assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
    }
}
