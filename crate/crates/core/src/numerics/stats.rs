//! Compensated summation and estimator summary statistics.

use crate::error::{Error, Result};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        iter.into_iter().for_each(|v| acc.add(v));
        acc
    }
}

/// Compensated arithmetic mean.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(values.iter().copied().collect::<NeumaierSum>().total() / values.len() as f64)
}

/// Quality of a set of estimates against a known true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub bias: f64,
    /// Population-style variance (divisor n).
    pub variance: f64,
    pub mse: f64,
}

pub fn summary_stats(samples: &[f64], true_value: f64) -> Result<Summary> {
    let mean = mean(samples)?;
    let n = samples.len() as f64;
    let variance = samples.iter().map(|x| (x - mean).powi(2)).collect::<NeumaierSum>().total() / n;
    let mse = samples.iter().map(|x| (x - true_value).powi(2)).collect::<NeumaierSum>().total() / n;
    Ok(Summary { mean, bias: mean - true_value, variance, mse })
}
