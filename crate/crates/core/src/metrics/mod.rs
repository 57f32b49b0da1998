//! Run statistics, derived rates and cross-run ratio reports.

mod report;
mod stats;

pub use report::{compare, format_divergence, RatioReport, RatioRow};
pub use stats::{read_stats, write_stats, RunStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("rate undefined: zero committed instructions")]
    DivisionByZero,
    #[error("non-positive value {0} in a ratio or mean")]
    NonPositiveValue(f64),
    #[error(
        "benchmark sets differ: missing from A {missing_in_a:?}, missing from B {missing_in_b:?}"
    )]
    BenchmarkMismatch {
        missing_in_a: Vec<String>,
        missing_in_b: Vec<String>,
    },
    #[error("empty input")]
    Empty,
    #[error("stats parse error: {0}")]
    Parse(String),
}

/// Branch mispredictions per thousand committed instructions.
pub fn mpki(mispredictions: u64, committed: u64) -> Result<f64, MetricsError> {
    per_kilo(mispredictions, committed)
}

/// Memory accesses (committed loads + stores) per thousand committed
/// instructions.
pub fn maki(memory_accesses: u64, committed: u64) -> Result<f64, MetricsError> {
    per_kilo(memory_accesses, committed)
}

fn per_kilo(events: u64, committed: u64) -> Result<f64, MetricsError> {
    if committed == 0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(events as f64 * 1000.0 / committed as f64)
}

/// Arithmetic, geometric and harmonic means of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub arithmetic: f64,
    pub geometric: f64,
    pub harmonic: f64,
}

/// Computes the three means of strictly positive values. The geometric mean
/// is taken in log space.
pub fn means(values: &[f64]) -> Result<Means, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&v) = values.iter().find(|&&v| v.is_nan() || v <= 0.0) {
        return Err(MetricsError::NonPositiveValue(v));
    }
    let n = values.len() as f64;
    let arithmetic = values.iter().sum::<f64>() / n;
    let geometric = (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp();
    let harmonic = n / values.iter().map(|v| v.recip()).sum::<f64>();
    Ok(Means {
        arithmetic,
        geometric,
        harmonic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert_eq!(mpki(10, 2000).unwrap(), 5.0);
        assert_eq!(mpki(0, 12345).unwrap(), 0.0);
        assert_eq!(maki(500, 1000).unwrap(), 500.0);
        assert_eq!(mpki(1, 0), Err(MetricsError::DivisionByZero));
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn closed_form_means() {
        let m = means(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((m.arithmetic, m.geometric, m.harmonic), (1.0, 1.0, 1.0));
        let m = means(&[4.0]).unwrap();
        assert!(close(m.arithmetic, 4.0) && close(m.geometric, 4.0) && close(m.harmonic, 4.0));
        let m = means(&[1.0, 2.0, 4.0]).unwrap();
        assert!(close(m.arithmetic, 7.0 / 3.0));
        assert!(close(m.geometric, 2.0));
        assert!(close(m.harmonic, 12.0 / 7.0));
        let m = means(&[2.0, 0.5]).unwrap();
        assert!(close(m.arithmetic, 1.25));
        assert!(close(m.geometric, 1.0));
        assert!(close(m.harmonic, 0.8));
    }

    #[test]
    fn rejects_non_positive() {
        assert_eq!(means(&[1.0, 0.0]), Err(MetricsError::NonPositiveValue(0.0)));
        assert!(means(&[-1.0]).is_err());
        assert_eq!(means(&[]), Err(MetricsError::Empty));
    }

    proptest::proptest! {
        #[test]
        fn mean_ordering(values in proptest::collection::vec(1e-6f64..1e6, 1..40)) {
            let m = means(&values).unwrap();
            proptest::prop_assert!(m.harmonic <= m.geometric * (1.0 + 1e-12));
            proptest::prop_assert!(m.geometric <= m.arithmetic * (1.0 + 1e-12));
        }
    }
}
