//! pass@k and geometric means.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("no values to aggregate")]
    EmptyInput,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// C(n, k) with intermediate reduction; `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        let num = n as u128 - i;
        let den = i + 1;
        // acc * num / den is an integer; divide by the common factor first
        let g = gcd(acc, den);
        acc = (acc / g).checked_mul(num / (den / g))?;
    }
    Some(acc)
}

/// pass@k as a reduced fraction `(numerator, denominator)`.
pub fn pass_at_k_ratio(n: u64, c: u64, k: u64) -> Result<(u128, u128), MetricError> {
    if c > n {
        return Err(MetricError::DomainError(format!("c = {c} exceeds n = {n}")));
    }
    if k == 0 || k > n {
        return Err(MetricError::DomainError(format!(
            "k = {k} must lie in 1..={n}"
        )));
    }
    let overflow = || MetricError::DomainError(format!("binomials overflow for n = {n}"));
    let total = binomial(n, k).ok_or_else(overflow)?;
    let failing = binomial(n - c, k).ok_or_else(overflow)?;
    let num = total - failing;
    let g = gcd(num, total).max(1);
    Ok((num / g, total / g))
}

/// Probability that at least one of `k` draws (without replacement) out of
/// `n` candidates, `c` of them good, is good.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricError> {
    let (num, den) = pass_at_k_ratio(n, c, k)?;
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMean {
    pub value: f64,
    /// Inputs that entered the mean.
    pub used: usize,
    /// Zero inputs left out.
    pub excluded_zeros: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// exp(mean(ln x)) over the positive inputs; zeros are left out and noted.
pub fn geometric_mean(values: &[f64]) -> Result<GeoMean, MetricError> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(MetricError::DomainError(format!(
            "{bad} is not a non-negative finite value"
        )));
    }
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    if positive.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let zeros = values.len() - positive.len();
    let note = (zeros > 0).then(|| {
        log::warn!("{zeros} zero value(s) excluded from the geometric mean");
        format!("{zeros} zero-coverage value(s) excluded; the geometric mean is undefined at 0")
    });
    let mean_ln = positive.iter().map(|v| v.ln()).sum::<f64>() / positive.len() as f64;
    Ok(GeoMean {
        value: mean_ln.exp(),
        used: positive.len(),
        excluded_zeros: zeros,
        note,
    })
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
