//! Analytic expectations and exact binomial acceptance regions.

use statrs::distribution::{Binomial, DiscreteCDF};

use super::fault::FaultModel;
use super::workload::WorkflowSpec;

/// Probability that a step succeeds within `retry_limit` retries.
pub fn step_success_prob(model: &FaultModel, retry_limit: u32) -> f64 {
    1.0 - model.attempt_failure_prob().powi(retry_limit as i32 + 1)
}

/// Expected completion rate: every step of a workflow must succeed, so a
/// `k`-step workflow completes with probability `p^k`.
pub fn expected_completion(workload: &[WorkflowSpec], model: &FaultModel, retry_limit: u32) -> f64 {
    if workload.is_empty() {
        return 0.0;
    }
    let p = step_success_prob(model, retry_limit);
    workload.iter().map(|w| p.powi(w.step_count() as i32)).sum::<f64>() / workload.len() as f64
}

/// Central acceptance region `[lo, hi]` for a Binomial(n, p) count at the
/// given confidence: `P(X < lo) <= a/2` and `P(X > hi) <= a/2`.
pub fn binomial_interval(n: u64, p: f64, confidence: f64) -> (u64, u64) {
    if p <= 0.0 {
        return (0, 0);
    }
    if p >= 1.0 {
        return (n, n);
    }
    let tail = (1.0 - confidence) / 2.0;
    let dist = Binomial::new(p, n).expect("valid binomial");
    // Smallest lo with P(X <= lo - 1) <= tail; smallest hi with P(X <= hi) >= 1 - tail.
    let lo = (0..=n).find(|&k| dist.cdf(k) > tail).unwrap_or(n);
    let hi = (0..=n).find(|&k| dist.cdf(k) >= 1.0 - tail).unwrap_or(n);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_intervals() {
        assert_eq!(binomial_interval(500, 1.0, 0.99), (500, 500));
        assert_eq!(binomial_interval(500, 0.0, 0.99), (0, 0));
    }

    #[test]
    fn interval_contains_mean() {
        for &(n, p) in &[(500u64, 0.973), (500, 0.5), (100, 0.1)] {
            let (lo, hi) = binomial_interval(n, p, 0.99);
            let mean = n as f64 * p;
            assert!((lo as f64) <= mean && mean <= hi as f64);
        }
    }
}
