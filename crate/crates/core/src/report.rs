use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::critical_value;

/// Outcome of one test application.
///
/// The decision is `standardized > threshold`, with
/// `standardized = (statistic − centering) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub centering: f64,
    pub scale: f64,
    pub standardized: f64,
    pub threshold: f64,
    pub reject: bool,
    pub alpha: f64,
    /// Asymptotic type II error at the true alternative, when the caller
    /// supplied one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_type2: Option<f64>,
}

impl TestReport {
    /// Normal-calibrated report: threshold x_α with α = 1 − Φ(x_α).
    pub fn normal(statistic: f64, centering: f64, scale: f64, alpha: f64) -> Result<Self> {
        let threshold = critical_value(alpha)?;
        Ok(Self::with_threshold(statistic, centering, scale, threshold, alpha))
    }

    pub fn with_threshold(statistic: f64, centering: f64, scale: f64, threshold: f64, alpha: f64) -> Self {
        let standardized = (statistic - centering) / scale;
        TestReport {
            statistic,
            centering,
            scale,
            standardized,
            threshold,
            reject: standardized > threshold,
            alpha,
            predicted_type2: None,
        }
    }

    pub fn with_prediction(mut self, beta: f64) -> Self {
        self.predicted_type2 = Some(beta);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_uses_standardized_value() {
        let r = TestReport::normal(5.0, 1.0, 2.0, 0.05).unwrap();
        assert_eq!(r.standardized, 2.0);
        assert!(r.reject);
        let r = TestReport::normal(2.0, 1.0, 2.0, 0.05).unwrap();
        assert!(!r.reject);
        assert!(TestReport::normal(2.0, 1.0, 2.0, 1.5).is_err());
    }
}
