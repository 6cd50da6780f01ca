use super::NnError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub r2: f64,
    pub exp: f64,
}

/// MAE, MSE, R² = 1 − SS_res/SS_tot and explained variance
/// 1 − Var(residual)/Var(target).
pub fn evaluate(predictions: &[f64], targets: &[f64]) -> Result<MetricsReport, NnError> {
    if predictions.len() != targets.len() {
        return Err(NnError::ShapeMismatch { expected: targets.len(), got: predictions.len() });
    }
    let n = targets.len();
    if n < 2 {
        return Err(NnError::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let t_mean = targets.iter().sum::<f64>() / nf;
    let ss_tot: f64 = targets.iter().map(|t| (t - t_mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(NnError::ZeroTargetVariance);
    }
    let resid: Vec<f64> = predictions.iter().zip(targets).map(|(p, t)| t - p).collect();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let r_mean = resid.iter().sum::<f64>() / nf;
    let var_res: f64 = resid.iter().map(|r| (r - r_mean).powi(2)).sum();
    Ok(MetricsReport {
        mae: resid.iter().map(|r| r.abs()).sum::<f64>() / nf,
        mse: ss_res / nf,
        r2: 1.0 - ss_res / ss_tot,
        exp: 1.0 - var_res / ss_tot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// Mean ± std of each metric over folds/seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mae: MeanStd,
    pub mse: MeanStd,
    pub r2: MeanStd,
    pub exp: MeanStd,
    pub count: usize,
}

impl MetricsSummary {
    pub fn from_reports(reports: &[MetricsReport]) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self { mae: col(|r| r.mae), mse: col(|r| r.mse), r2: col(|r| r.r2), exp: col(|r| r.exp), count: reports.len() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let t = [0.1, -0.4, 0.3, 0.9];
        let m = evaluate(&t, &t).unwrap();
        assert_eq!((m.mae, m.mse, m.r2, m.exp), (0.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn mean_predictor_scores_zero() {
        let t = [1.0, 2.0, 3.0, 6.0];
        let m = evaluate(&[3.0; 4], &t).unwrap();
        assert!(m.r2.abs() < 1e-15);
    }

    #[test]
    fn constant_offset_separates_r2_and_exp() {
        let t = [1.0, 2.0, 3.0, 6.0];
        let p: Vec<f64> = t.iter().map(|v| v + 0.5).collect();
        let m = evaluate(&p, &t).unwrap();
        assert!((m.exp - 1.0).abs() < 1e-12);
        assert!(m.r2 < 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(evaluate(&[1.0, 1.0], &[2.0, 2.0]), Err(NnError::ZeroTargetVariance));
        assert!(matches!(evaluate(&[1.0], &[2.0]), Err(NnError::TooFewSamples { .. })));
        assert!(matches!(evaluate(&[1.0, 2.0], &[2.0]), Err(NnError::ShapeMismatch { .. })));
    }

    proptest! {
        #[test]
        fn r2_never_exceeds_exp(
            t in prop::collection::vec(-5.0..5.0f64, 3..40),
            noise in prop::collection::vec(-1.0..1.0f64, 40),
        ) {
            prop_assume!(t.iter().any(|v| (v - t[0]).abs() > 1e-6));
            let p: Vec<f64> = t.iter().zip(&noise).map(|(a, b)| a + b).collect();
            let m = evaluate(&p, &t).unwrap();
            prop_assert!(m.r2 <= m.exp + 1e-12);
        }
    }
}
