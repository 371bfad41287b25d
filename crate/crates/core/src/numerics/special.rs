//! Digamma and trigamma on the positive real axis.

use crate::error::{Error, Result};

/// Arguments below this are shifted upward by recurrence before the
/// asymptotic series is applied.
const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// B_{2k} / (2k) for k = 1..=7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// B_{2k} for k = 1..=7.
const TRIGAMMA_SERIES: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_domain(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("expected a positive finite argument, got {z}")))
    }
}

/// ψ(z) = d/dz log Γ(z) for z > 0.
///
/// Shifts z above 10 with ψ(z) = ψ(z+1) − 1/z, then sums
/// ψ(z) ≈ ln z − 1/(2z) − Σ B_{2k}/(2k z^{2k}).
pub fn digamma(z: f64) -> Result<f64> {
    check_domain(z)?;
    let mut shift = 0.0;
    let mut x = z;
    while x < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut term = inv2;
    let mut series = 0.0;
    for c in DIGAMMA_SERIES {
        series += c * term;
        term *= inv2;
    }
    Ok(x.ln() - 0.5 / x - series - shift)
}

/// ψ′(z) for z > 0, by the same recurrence-then-series scheme.
pub fn trigamma(z: f64) -> Result<f64> {
    check_domain(z)?;
    let mut shift = 0.0;
    let mut x = z;
    while x < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ψ′(x) ≈ 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let mut term = inv2 * inv;
    let mut series = 0.0;
    for b in TRIGAMMA_SERIES {
        series += b * term;
        term *= inv2;
    }
    Ok(inv + 0.5 * inv2 + series + shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_at_one_and_two() {
        assert!((digamma(1.0).unwrap() + 0.577_215_664_90).abs() < 1e-10);
        assert!((digamma(2.0).unwrap() - 0.422_784_335_10).abs() < 1e-10);
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-14);
    }

    #[test]
    fn digamma_domain() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-1.5), Err(Error::Domain(_))));
        assert!(matches!(digamma(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(trigamma(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn trigamma_known_values() {
        // ψ′(1) = π²/6, ψ′(1/2) = π²/2
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!((trigamma(1.0).unwrap() - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5).unwrap() - pi2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn trigamma_matches_difference_of_digamma() {
        for &z in &[0.7, 3.0, 12.5, 80.0] {
            let h = 1e-5 * z;
            let fd = (digamma(z + h).unwrap() - digamma(z - h).unwrap()) / (2.0 * h);
            assert!((fd - trigamma(z).unwrap()).abs() < 1e-6 * trigamma(z).unwrap());
        }
    }
}
