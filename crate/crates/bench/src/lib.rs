//! Benchmark harness: accuracy tables over datasets (flat start, neural
//! solver, Newton-Raphson) and runtime scaling over grid-size buckets, with
//! CSV and SVG outputs. Every aggregate is backed by persisted per-case
//! samples.

pub mod accuracy;
pub mod runtime;
pub mod svg;

pub use accuracy::{eval_accuracy, flat_baseline, AccuracyRow, CaseRecord, Method};
pub use runtime::{bench_runtime, standard_error, BenchConfig, BenchResult, RuntimeRow};

/// Mean and median of a sample set (empty-safe).
pub fn mean_median(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len();
    let median =
        if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    (mean, median)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_median_basics() {
        assert_eq!(mean_median(&[]), (0.0, 0.0));
        assert_eq!(mean_median(&[2.0]), (2.0, 2.0));
        let (mean, median) = mean_median(&[1.0, 10.0, 2.0, 3.0]);
        assert_eq!(median, 2.5);
        assert_eq!(mean, 4.0);
    }
}
