//! Seedable random streams and the Marsaglia–Tsang gamma sampler.
//!
//! Every stream is a ChaCha8 generator. The 256-bit key is expanded from the
//! 64-bit master seed with SplitMix64, and the stream index selects ChaCha's
//! 64-bit stream counter, so `(master_seed, i)` and `(master_seed, j)` never
//! share keystream for `i != j`. Adding streams never perturbs existing ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::linalg::Vector;
use crate::error::{Error, Result};

pub const ALGORITHM_ID: &str = "chacha8/splitmix64-key/stream-index";

/// One step of SplitMix64 (Steele, Lea, Flood 2014).
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn expand_key(master_seed: u64) -> [u8; 32] {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Deterministic substream identified by `(master_seed, stream_index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(expand_key(master_seed));
        inner.set_stream(stream_index);
        RngStream { master_seed, stream_index, inner }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn algorithm_id(&self) -> &'static str {
        ALGORITHM_ID
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.inner.random::<f64>();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}

/// Marsaglia–Tsang draw from Gamma(shape, 1) for shape ≥ 1.
fn gamma_unit_scale(rng: &mut RngStream, d: f64, c: f64) -> f64 {
    loop {
        let x = rng.standard_normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.uniform_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draws `count` Gamma(shape, rate) variates (mean shape/rate).
///
/// Shapes below one use the boost `G(a) = G(a+1) · U^(1/a)`.
pub fn sample_gamma(rng: &mut RngStream, shape: f64, rate: f64, count: usize) -> Result<Vector> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Domain(format!("gamma shape must be positive, got {shape}")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("gamma rate must be positive, got {rate}")));
    }
    let boosted = shape < 1.0;
    let a = if boosted { shape + 1.0 } else { shape };
    let d = a - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    let scale = 1.0 / rate;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut g = gamma_unit_scale(rng, d, c);
        if boosted {
            g *= rng.uniform_open().powf(1.0 / shape);
        }
        out.push(g * scale);
    }
    Ok(Vector::from_vec_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = (0..8).map({
            let mut r = RngStream::new(7, 3);
            move |_| r.uniform()
        }).collect();
        let b: Vec<f64> = (0..8).map({
            let mut r = RngStream::new(7, 3);
            move |_| r.uniform()
        }).collect();
        let c: Vec<f64> = (0..8).map({
            let mut r = RngStream::new(7, 4);
            move |_| r.uniform()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gamma_determinism() {
        let x = sample_gamma(&mut RngStream::new(11, 0), 5.0, 1.0, 100).unwrap();
        let y = sample_gamma(&mut RngStream::new(11, 0), 5.0, 1.0, 100).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn gamma_domain_errors() {
        let mut r = RngStream::new(1, 0);
        assert!(matches!(sample_gamma(&mut r, 0.0, 1.0, 3), Err(Error::Domain(_))));
        assert!(matches!(sample_gamma(&mut r, 1.0, -2.0, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn small_shape_moments() {
        // shape 0.5, rate 2: mean 0.25, variance 0.125
        let n = 200_000;
        let x = sample_gamma(&mut RngStream::new(5, 9), 0.5, 2.0, n).unwrap();
        let (m, v) = mean_var(&x);
        assert!(x.iter().all(|&g| g > 0.0));
        assert!((m - 0.25).abs() < 4.0 * (0.125f64 / n as f64).sqrt());
        assert!((v - 0.125).abs() < 0.01);
    }
}
