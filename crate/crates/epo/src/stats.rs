//! Small-sample summary statistics for cross-seed aggregation.
//!
//! Runs are repeated over a handful of seeds (typically 3–10), so
//! confidence intervals use the Student-t quantile rather than the normal
//! approximation.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Arithmetic mean; 0.0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n−1 denominator); 0.0 when fewer than two
/// values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

/// Two-sided 95% Student-t quantile for the given degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .expect("degrees of freedom are positive by construction");
    dist.inverse_cdf(0.975)
}

/// Half-width of the 95% confidence interval of the mean,
/// `t(0.975, n−1) · s / √n`. Zero when fewer than two values (no spread
/// estimate exists).
pub fn ci95_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    t_quantile_975(n - 1) * sample_std(values) / (n as f64).sqrt()
}
